#include "levsim/magnetostatics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "levsim/constants.hpp"
#include "levsim/errors.hpp"

namespace levsim::magnetostatics {

namespace {

// K together with S' = sum_{n>=1} 2^(n-1) c_n^2, so that
//   E = K (1 - k^2/2 - S')   and   K - E = K (k^2/2 + S').
// c_1 and the recurrence c_{n+1} = c_n^2 / (4 a_{n+1}) are both free of
// subtraction, which keeps K - E accurate for small k.
struct AgmSeries {
  double K;
  double s_tail;
};

AgmSeries agm_series(double k2, double kp2) {
  const double kp = std::sqrt(kp2);
  double c = k2 / (2.0 * (1.0 + kp));
  double a = 0.5 * (1.0 + kp);
  double b = std::sqrt(kp);
  double weight = 1.0;
  double tail = c * c;
  for (int n = 0; n < 64; ++n) {
    if (c <= std::numeric_limits<double>::epsilon() * a) break;
    const double a_next = 0.5 * (a + b);
    b = std::sqrt(a * b);
    c = c * c / (4.0 * a_next);
    a = a_next;
    weight *= 2.0;
    tail += weight * c * c;
  }
  return {kPi / (2.0 * a), tail};
}

struct CoaxialTerms {
  double k2;
  double kp2;
  AgmSeries series;
};

CoaxialTerms coaxial_terms(double a, double b, double d) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("loop radii must be positive");
  }
  const double sum2 = (a + b) * (a + b) + d * d;
  const double diff2 = (a - b) * (a - b) + d * d;
  if (diff2 == 0.0) {
    throw SingularityError("coincident loops: mutual inductance is singular");
  }
  const double k2 = 4.0 * a * b / sum2;
  const double kp2 = diff2 / sum2;
  return {k2, kp2, agm_series(k2, kp2)};
}

}  // namespace

void Magnet::validate() const {
  if (!(radius > 0.0)) throw DomainError("magnet radius must be positive");
  if (!(height > 0.0)) throw DomainError("magnet height must be positive");
  if (!(mass > 0.0)) throw DomainError("magnet mass must be positive");
  if (!(remanence >= 0.0)) throw DomainError("remanence must be non-negative");
}

double Magnet::volume() const { return kPi * radius * radius * height; }

void Loop::validate() const {
  if (!(radius > 0.0)) throw DomainError("loop radius must be positive");
  if (!(lateral_offset >= 0.0)) {
    throw DomainError("lateral offset must be non-negative");
  }
}

EllipticKE ellip_KE(double k_squared) {
  if (!(k_squared >= 0.0) || !(k_squared < 1.0)) {
    throw DomainError("ellip_KE: k^2 must lie in [0, 1)");
  }
  const AgmSeries s = agm_series(k_squared, 1.0 - k_squared);
  return {s.K, s.K * (1.0 - 0.5 * k_squared - s.s_tail)};
}

double mutual_inductance_coaxial(double a, double b, double d) {
  const CoaxialTerms t = coaxial_terms(a, b, d);
  const double k = std::sqrt(t.k2);
  // (2/k - k) K - (2/k) E  ==  2 K S' / k
  return kMu0 * std::sqrt(a * b) * 2.0 * t.series.K * t.series.s_tail / k;
}

double mutual_inductance_coaxial_dd(double a, double b, double d) {
  const CoaxialTerms t = coaxial_terms(a, b, d);
  const double k = std::sqrt(t.k2);
  // (2 - k^2) E / (1 - k^2) - 2K  ==  K (k^4/2 - (2 - k^2) S') / (1 - k^2)
  const double bracket =
      t.series.K * (0.5 * t.k2 * t.k2 - (2.0 - t.k2) * t.series.s_tail) /
      t.kp2;
  return -kMu0 * k * d / (4.0 * std::sqrt(a * b)) * bracket;
}

QuadratureResult mutual_inductance_neumann_detailed(const Loop& loop1,
                                                    const Loop& loop2,
                                                    double rel_tol) {
  loop1.validate();
  loop2.validate();
  const double a = loop1.radius;
  const double b = loop2.radius;
  const double rho = std::abs(loop2.lateral_offset - loop1.lateral_offset);
  const double d = loop2.axial_position - loop1.axial_position;
  if (a == b && rho == 0.0 && d == 0.0) {
    throw SingularityError("coincident loops: mutual inductance is singular");
  }

  using boost::math::quadrature::gauss_kronrod;
  long evaluations = 0;

  auto integrand = [&](double phi1, double psi) {
    if (++evaluations > kNeumannMaxEvaluations) {
      throw NumericalError("Neumann quadrature exceeded the evaluation cap",
                           std::numeric_limits<double>::infinity());
    }
    const double phi2 = phi1 + psi;
    const double dx = rho + b * std::cos(phi2) - a * std::cos(phi1);
    const double dy = b * std::sin(phi2) - a * std::sin(phi1);
    return std::cos(psi) / std::sqrt(dx * dx + dy * dy + d * d);
  };
  const double scale = kMu0 / (4.0 * kPi) * a * b * 2.0;

  // Boost terminates on error <= tol * L1, while the contract is relative to
  // |M|, which is much smaller than L1 for distant or offset loops. Tighten
  // and retry until the combined estimate meets rel_tol.
  double tighten = 0.1;
  double achieved = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    double worst_inner_error = 0.0;
    const double inner_tol = 0.1 * tighten * rel_tol;
    // psi = phi2 - phi1 places the near-singular ridge at psi = 0, which the
    // bisection hits exactly.
    auto inner = [&](double phi1) {
      double err = 0.0;
      const double v = gauss_kronrod<double, 15>::integrate(
          [&](double psi) { return integrand(phi1, psi); }, -kPi, kPi, 20,
          inner_tol, &err);
      worst_inner_error = std::max(worst_inner_error, err);
      return v;
    };
    double outer_value = 0.0;
    double outer_error = 0.0;
    if (rho == 0.0) {
      // Coaxial: the inner integral does not depend on phi1.
      outer_value = kPi * inner(0.0);
    } else {
      // phi1 -> -phi1, psi -> -psi symmetry halves the outer range.
      outer_value = gauss_kronrod<double, 15>::integrate(
          inner, 0.0, kPi, 15, tighten * rel_tol, &outer_error);
    }
    const double value = scale * outer_value;
    const double error = scale * (outer_error + kPi * worst_inner_error);
    achieved = value != 0.0 ? error / std::abs(value) : 0.0;
    if (achieved <= rel_tol) return {value, error, evaluations};
    tighten *= std::min(1e-1, 0.5 * rel_tol / achieved);
  }
  std::ostringstream msg;
  msg << "Neumann quadrature did not converge: achieved relative tolerance "
      << achieved << " (requested " << rel_tol << ")";
  throw NumericalError(msg.str(), achieved);
}

double mutual_inductance_neumann(const Loop& loop1, const Loop& loop2) {
  return mutual_inductance_neumann_detailed(loop1, loop2).value;
}

double mutual_inductance(const Loop& loop1, const Loop& loop2) {
  if (loop1.lateral_offset == loop2.lateral_offset) {
    loop1.validate();
    loop2.validate();
    return mutual_inductance_coaxial(
        loop1.radius, loop2.radius,
        loop2.axial_position - loop1.axial_position);
  }
  // Finite differences downstream need more than the default tolerance.
  return mutual_inductance_neumann_detailed(loop1, loop2, 1e-11).value;
}

Gradient grad_mutual_inductance(const Loop& loop1, const Loop& loop2,
                                Axis axis) {
  const double dz = loop2.axial_position - loop1.axial_position;
  const double dx = loop2.lateral_offset - loop1.lateral_offset;
  const double separation = std::hypot(dz, dx);
  const double h = std::max(1e-6, 1e-4 * separation);

  // Offsets are reflected into the non-negative half-line, which makes the
  // lateral derivative of an aligned pair exactly zero.
  auto shifted = [&](double delta) {
    Loop moved = loop2;
    if (axis == Axis::axial) {
      moved.axial_position += delta;
      return mutual_inductance(loop1, moved);
    }
    Loop base = loop1;
    base.lateral_offset = 0.0;
    moved.lateral_offset = std::abs(dx + delta);
    return mutual_inductance(base, moved);
  };
  auto central = [&](double step) {
    return (shifted(step) - shifted(-step)) / (2.0 * step);
  };
  const double coarse = central(h);
  const double fine = central(0.5 * h);
  return {(4.0 * fine - coarse) / 3.0, h, std::abs(fine - coarse) / 3.0};
}

double self_inductance_loop(double a, double wire_radius) {
  if (!(wire_radius > 0.0) || !(wire_radius < a)) {
    throw DomainError("self_inductance_loop: need 0 < wire_radius < a");
  }
  return kMu0 * a * (std::log(8.0 * a / wire_radius) - 2.0);
}

double dipole_field(DipoleMoment m, double rho, double dz) {
  const double r2 = rho * rho + dz * dz;
  if (r2 == 0.0) {
    throw SingularityError("dipole field is singular at the origin");
  }
  const double r = std::sqrt(r2);
  const double cos2 = dz * dz / r2;
  return kMu0 * m.magnitude / (4.0 * kPi * r2 * r) * std::sqrt(3.0 * cos2 + 1.0);
}

DipoleMoment moment_from_remanence(const Magnet& magnet) {
  magnet.validate();
  return {magnet.remanence * magnet.volume() / kMu0};
}

}  // namespace levsim::magnetostatics
