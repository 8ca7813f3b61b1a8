#include "levsim/levitation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include <boost/math/tools/toms748_solve.hpp>

#include "levsim/constants.hpp"

namespace levsim::levitation {

namespace ms = magnetostatics;

namespace {

// Geometric mean distance of a thin flat strip of width w is w e^{-3/2}; a
// response loop stands for an annular strip one spacing wide.
const double kStripGmdFactor = std::exp(-1.5);

double weight(const Magnet& magnet) { return magnet.mass * kGravity; }

double loop_current(const Magnet& magnet, double loop_radius) {
  const double m = ms::moment_from_remanence(magnet).magnitude;
  return m / (kPi * loop_radius * loop_radius);
}

// Largest root of f on a sampled grid where f crosses from positive to
// non-positive, refined to ~1e-12 m.
struct RootScan {
  bool found = false;
  bool all_positive = false;
  double root = 0.0;
};

template <typename F>
RootScan largest_stable_root(F&& f, double lo, double hi, int samples) {
  std::vector<double> zs(samples);
  std::vector<double> fs(samples);
  for (int i = 0; i < samples; ++i) {
    zs[i] = lo + (hi - lo) * i / (samples - 1);
    fs[i] = f(zs[i]);
  }
  RootScan scan;
  scan.all_positive =
      std::all_of(fs.begin(), fs.end(), [](double v) { return v > 0.0; });
  for (int i = samples - 2; i >= 0; --i) {
    if (fs[i] > 0.0 && fs[i + 1] <= 0.0) {
      if (fs[i + 1] == 0.0) {
        scan.root = zs[i + 1];
      } else {
        std::uintmax_t max_iter = 200;
        auto tol = [](double a, double b) { return std::abs(b - a) < 1e-12; };
        const auto bracket = boost::math::tools::toms748_solve(
            f, zs[i], zs[i + 1], fs[i], fs[i + 1], tol, max_iter);
        scan.root = 0.5 * (bracket.first + bracket.second);
      }
      scan.found = true;
      break;
    }
  }
  return scan;
}

template <typename F>
Equilibrium finish_equilibrium(F&& force, double height, double mg) {
  Equilibrium eq;
  eq.height = height;
  eq.residual_force = force(height) - mg;
  const double h = 1e-7;
  eq.slope = (force(height + h) - force(height - h)) / (2.0 * h);
  eq.stable = eq.slope < 0.0;
  return eq;
}

template <typename F>
double solve_height(F&& force, const Magnet& magnet,
                    const SolverOptions& options) {
  const double mg = weight(magnet);
  const double lo = 0.5 * magnet.height;
  if (!(options.z_max > lo) || options.z_samples < 2) {
    throw ParameterError("invalid equilibrium search range");
  }
  const RootScan scan = largest_stable_root(
      [&](double z) { return force(z) - mg; }, lo, options.z_max,
      options.z_samples);
  if (!scan.found) {
    if (scan.all_positive) {
      throw ConvergenceError("magnetic force exceeds the weight over the whole "
                             "search range; raise z_max");
    }
    throw NoLevitationError(
        "magnetic force does not balance gravity anywhere above the resting "
        "position");
  }
  return scan.root;
}

std::vector<bool> superconducting_loops(const ResponseArray& array,
                                        DipoleMoment m, double z, double bc) {
  std::vector<bool> mask(array.size());
  for (std::size_t j = 0; j < array.size(); ++j) {
    mask[j] = ms::dipole_field(m, array.loops()[j].radius, z) <= bc;
  }
  return mask;
}

}  // namespace

void SuperconductorDisc::validate() const {
  if (!(radius > 0.0)) throw DomainError("disc radius must be positive");
  if (loop_count < 1) throw DomainError("loop_count must be at least 1");
  if (!(bc0 > 0.0)) throw DomainError("bc0 must be positive");
  if (!(tc > 0.0)) throw DomainError("tc must be positive");
}

ResponseArray ResponseArray::build(const SuperconductorDisc& disc) {
  disc.validate();
  const int n = disc.loop_count;
  ResponseArray array;
  array.spacing_ = disc.radius / n;
  array.loops_.resize(n);
  for (int j = 0; j < n; ++j) {
    array.loops_[j].radius = (j + 0.5) * array.spacing_;
  }
  const double wire = kStripGmdFactor * array.spacing_;
  array.inductance_.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const double ri = array.loops_[i].radius;
    array.inductance_(i, i) = ms::self_inductance_loop(ri, wire);
    for (int j = i + 1; j < n; ++j) {
      const double m =
          ms::mutual_inductance_coaxial(ri, array.loops_[j].radius, 0.0);
      array.inductance_(i, j) = m;
      array.inductance_(j, i) = m;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(array.inductance_);
  if (llt.info() != Eigen::Success) {
    throw DiscretizationError(
        "response-loop inductance matrix is not positive definite; use fewer "
        "loops");
  }
  array.active_.assign(n, true);
  return array;
}

std::size_t ResponseArray::active_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), true));
}

ResponseArray ResponseArray::with_mask(std::vector<bool> active) const {
  if (active.size() != loops_.size()) {
    throw ParameterError("mask length does not match the response array");
  }
  ResponseArray copy = *this;
  copy.active_ = std::move(active);
  return copy;
}

ResponseArray ResponseArray::with_normal_core(double radius) const {
  std::vector<bool> mask(loops_.size());
  for (std::size_t j = 0; j < loops_.size(); ++j) {
    mask[j] = loops_[j].radius > radius;
  }
  return with_mask(std::move(mask));
}

Loop magnet_loop(const Magnet& magnet, double z, double lateral_offset,
                 double loop_radius) {
  const double a = loop_radius > 0.0 ? loop_radius : magnet.radius;
  Loop loop;
  loop.radius = a;
  loop.axial_position = z;
  loop.lateral_offset = lateral_offset;
  loop.current = loop_current(magnet, a);
  return loop;
}

ScreeningSolver::ScreeningSolver(const ResponseArray& array) : array_(array) {
  const auto& mask = array_.active_mask();
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j]) active_index_.push_back(static_cast<int>(j));
  }
  const auto n = static_cast<Eigen::Index>(active_index_.size());
  Eigen::MatrixXd sub(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      sub(i, j) = array_.inductance()(active_index_[i], active_index_[j]);
    }
  }
  if (n > 0) {
    llt_.compute(sub);
    const double rcond = llt_.rcond();
    if (llt_.info() != Eigen::Success || !(rcond > 1e3 * 2.2e-16)) {
      std::ostringstream msg;
      msg << "active inductance sub-matrix is singular or ill-conditioned "
             "(reciprocal condition estimate "
          << rcond << ")";
      throw LinearAlgebraError(msg.str(), rcond);
    }
  }
}

Eigen::VectorXd ScreeningSolver::currents(const Eigen::VectorXd& flux) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(array_.size());
  if (active_index_.empty()) return out;
  Eigen::VectorXd rhs(active_index_.size());
  for (std::size_t i = 0; i < active_index_.size(); ++i) {
    rhs(i) = -flux(active_index_[i]);
  }
  const Eigen::VectorXd sol = llt_.solve(rhs);
  for (std::size_t i = 0; i < active_index_.size(); ++i) {
    out(active_index_[i]) = sol(i);
  }
  return out;
}

Eigen::VectorXd ScreeningSolver::active_flux(const Loop& magnet,
                                             bool derivative) const {
  if (magnet.lateral_offset != 0.0) {
    throw DomainError("ScreeningSolver handles coaxial magnets only");
  }
  Eigen::VectorXd out(active_index_.size());
  for (std::size_t i = 0; i < active_index_.size(); ++i) {
    const double r = array_.loops()[active_index_[i]].radius;
    out(i) = magnet.current *
             (derivative ? ms::mutual_inductance_coaxial_dd(
                               r, magnet.radius, magnet.axial_position)
                         : ms::mutual_inductance_coaxial(
                               r, magnet.radius, magnet.axial_position));
  }
  return out;
}

double ScreeningSolver::axial_force(const Loop& magnet) const {
  if (active_index_.empty()) return 0.0;
  const Eigen::VectorXd flux = active_flux(magnet, false);
  const Eigen::VectorXd dflux = active_flux(magnet, true);
  return -llt_.solve(flux).dot(dflux);
}

double ScreeningSolver::magnetic_energy(const Loop& magnet) const {
  if (active_index_.empty()) return 0.0;
  const Eigen::VectorXd flux = active_flux(magnet, false);
  return 0.5 * flux.dot(llt_.solve(flux));
}

ScreeningCurrents solve_screening_currents(const ResponseArray& array,
                                           const Loop& magnet) {
  const ScreeningSolver solver(array);
  ScreeningCurrents out;
  out.flux.resize(array.size());
  for (std::size_t j = 0; j < array.size(); ++j) {
    out.flux(j) = magnet.current * ms::mutual_inductance(array.loops()[j], magnet);
  }
  out.currents = solver.currents(out.flux);
  const Eigen::VectorXd r = array.inductance() * out.currents + out.flux;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < array.size(); ++j) {
    if (!array.active_mask()[j]) continue;
    num += r(j) * r(j);
    den += out.flux(j) * out.flux(j);
  }
  out.residual = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return out;
}

Force levitation_force(const ResponseArray& array, const Magnet& magnet,
                       double z, double lateral_offset, double loop_radius) {
  if (!(z > 0.0)) throw DomainError("levitation_force: z must be positive");
  if (!(lateral_offset >= 0.0)) {
    throw DomainError("levitation_force: lateral offset must be non-negative");
  }
  const Loop source = magnet_loop(magnet, z, lateral_offset, loop_radius);
  const ScreeningSolver solver(array);
  if (lateral_offset == 0.0) {
    return {solver.axial_force(source), 0.0};
  }
  const std::size_t n = array.size();
  Eigen::VectorXd flux = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd d_axial = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd d_lateral = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!array.active_mask()[j]) continue;
    const Loop& target = array.loops()[j];
    flux(j) = source.current * ms::mutual_inductance(target, source);
    d_axial(j) = source.current *
                 ms::grad_mutual_inductance(target, source, ms::Axis::axial).value;
    d_lateral(j) =
        source.current *
        ms::grad_mutual_inductance(target, source, ms::Axis::lateral).value;
  }
  const Eigen::VectorXd currents = solver.currents(flux);
  // F = I_m sum_j I_j dM_j/dx, with the source current folded into d_*.
  return {currents.dot(d_axial), currents.dot(d_lateral)};
}

double image_force(DipoleMoment m, double z) {
  if (!(z > 0.0)) throw DomainError("image_force: z must be positive");
  return 3.0 * kMu0 * m.magnitude * m.magnitude / (32.0 * kPi * std::pow(z, 4));
}

double image_potential(const Magnet& magnet, double z) {
  if (!(z > 0.0)) throw DomainError("image_potential: z must be positive");
  const double m = ms::moment_from_remanence(magnet).magnitude;
  return kMu0 * m * m / (32.0 * kPi * z * z * z) + weight(magnet) * z;
}

Equilibrium image_equilibrium_height(const Magnet& magnet) {
  const DipoleMoment m = ms::moment_from_remanence(magnet);
  if (!(m.magnitude > 0.0)) {
    throw NoLevitationError("zero magnetic moment cannot levitate");
  }
  const double mg = weight(magnet);
  const double z = std::pow(
      3.0 * kMu0 * m.magnitude * m.magnitude / (32.0 * kPi * mg), 0.25);
  Equilibrium eq;
  eq.height = z;
  eq.stable = true;
  eq.residual_force = image_force(m, z) - mg;
  eq.slope = -4.0 * image_force(m, z) / z;
  return eq;
}

Equilibrium equilibrium_height(Model model, const Magnet& magnet,
                               const ResponseArray& array,
                               const SuperconductorDisc& disc,
                               std::optional<double> temperature,
                               const SolverOptions& options) {
  magnet.validate();
  const DipoleMoment m = ms::moment_from_remanence(magnet);
  if (!(m.magnitude > 0.0)) {
    throw NoLevitationError("zero magnetic moment cannot levitate");
  }
  const double mg = weight(magnet);

  if (model == Model::image) {
    auto force = [&](double z) { return image_force(m, z); };
    Equilibrium eq =
        finish_equilibrium(force, solve_height(force, magnet, options), mg);
    eq.iterations = 1;
    return eq;
  }

  auto solve_with = [&](const ResponseArray& masked) {
    if (masked.active_count() == 0) {
      throw NoLevitationError("every response loop is normal conducting");
    }
    const ScreeningSolver solver(masked);
    auto force = [&](double z) {
      return solver.axial_force(
          magnet_loop(magnet, z, 0.0, options.loop_radius));
    };
    Equilibrium eq =
        finish_equilibrium(force, solve_height(force, magnet, options), mg);
    eq.active_loops = masked.active_count();
    return eq;
  };

  if (!temperature) {
    Equilibrium eq = solve_with(array);
    eq.iterations = 1;
    return eq;
  }

  const double bc = critical_field(*temperature, disc);
  double z = 0.5 * magnet.height;
  std::vector<bool> mask;
  Equilibrium target;
  for (int it = 1; it <= options.max_iterations; ++it) {
    std::vector<bool> next = superconducting_loops(array, m, z, bc);
    if (it == 1 || next != mask) {
      mask = std::move(next);
      target = solve_with(array.with_mask(mask));
    }
    if (std::abs(target.height - z) < options.tolerance) {
      target.iterations = it;
      return target;
    }
    z += options.damping * (target.height - z);
  }
  throw ConvergenceError("normal-region fixed point did not converge");
}

Equilibrium equilibrium_height(Model model, const Magnet& magnet,
                               const SuperconductorDisc& disc,
                               std::optional<double> temperature,
                               const SolverOptions& options) {
  if (model == Model::image) {
    return equilibrium_height(model, magnet, ResponseArray{}, disc,
                              temperature, options);
  }
  return equilibrium_height(model, magnet, ResponseArray::build(disc), disc,
                            temperature, options);
}

ForcePotentialCurve potential_curve(const ResponseArray& array,
                                    const Magnet& magnet, double z_lo,
                                    double z_hi, int samples, Spacing spacing,
                                    double loop_radius) {
  if (!(z_lo > 0.0) || !(z_hi > z_lo) || z_hi > 10e-3 + 1e-15) {
    throw DomainError("potential_curve: z range must lie within (0, 10 mm]");
  }
  if (samples < 16) throw ParameterError("potential_curve: need >= 16 samples");
  const ScreeningSolver solver(array);
  const double mg = weight(magnet);
  ForcePotentialCurve curve;
  curve.z.resize(samples);
  curve.force.resize(samples);
  curve.potential.resize(samples);
  for (int i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / (samples - 1);
    const double z = spacing == Spacing::linear
                         ? z_lo + (z_hi - z_lo) * t
                         : z_lo * std::pow(z_hi / z_lo, t);
    const Loop source = magnet_loop(magnet, z, 0.0, loop_radius);
    curve.z[i] = z;
    curve.force[i] = solver.axial_force(source);
    curve.potential[i] = solver.magnetic_energy(source) + mg * z;
  }
  return curve;
}

double critical_field(double temperature, const SuperconductorDisc& disc) {
  if (!(temperature >= 0.0)) {
    throw DomainError("temperature must be non-negative");
  }
  if (temperature >= disc.tc) return 0.0;
  const double t = temperature / disc.tc;
  return disc.bc0 * (1.0 - t * t);
}

double normal_region_radius(const Magnet& magnet, double dipole_height,
                            double temperature,
                            const SuperconductorDisc& disc) {
  if (!(dipole_height > 0.0)) {
    throw DomainError("normal_region_radius: dipole height must be positive");
  }
  const DipoleMoment m = ms::moment_from_remanence(magnet);
  const double bc = critical_field(temperature, disc);
  auto excess = [&](double rho) {
    return ms::dipole_field(m, rho, dipole_height) - bc;
  };
  // |B| falls monotonically with rho at fixed height.
  const double at_centre = excess(0.0);
  if (at_centre <= 0.0) return 0.0;
  const double at_edge = excess(disc.radius);
  if (at_edge >= 0.0) return disc.radius;
  std::uintmax_t max_iter = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) < 1e-13; };
  const auto bracket = boost::math::tools::toms748_solve(
      excess, 0.0, disc.radius, at_centre, at_edge, tol, max_iter);
  return 0.5 * (bracket.first + bracket.second);
}

double onset_temperature(const Magnet& magnet, const ResponseArray& array,
                         const SuperconductorDisc& disc, double loop_radius) {
  const double rest = 0.5 * magnet.height;
  const double mg = weight(magnet);
  const Loop source = magnet_loop(magnet, rest, 0.0, loop_radius);
  auto lifts = [&](double temperature) {
    const double rho_n = normal_region_radius(magnet, rest, temperature, disc);
    const ResponseArray masked = array.with_normal_core(rho_n);
    if (masked.active_count() == 0) return false;
    return ScreeningSolver(masked).axial_force(source) >= mg;
  };
  if (!lifts(0.0)) {
    throw NoOnsetError("magnet does not levitate at any temperature below tc");
  }
  double lo = 0.0;
  double hi = disc.tc;
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    (lifts(mid) ? lo : hi) = mid;
  }
  return lo;
}

double onset_temperature(const Magnet& magnet, const SuperconductorDisc& disc,
                         double loop_radius) {
  return onset_temperature(magnet, ResponseArray::build(disc), disc,
                           loop_radius);
}

}  // namespace levsim::levitation
