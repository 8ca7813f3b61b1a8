#pragma once

// Electromagnetic kernels: complete elliptic integrals, circular-loop
// inductances, point-dipole fields and the remanence-to-moment conversion.
// Everything is SI and every function is pure.

#include <string>

namespace levsim::magnetostatics {

/// Cylindrical permanent magnet, magnetized along its axis.
struct Magnet {
  double radius = 0.5e-3;    // m
  double height = 0.5e-3;    // m
  double mass = 2.75e-6;     // kg
  double remanence = 1.47;   // T
  std::string label;

  /// Throws DomainError when an invariant is violated.
  void validate() const;
  double volume() const;
};

/// Filamentary circular loop. The loop axis is parallel to z and passes
/// through (lateral_offset, 0); all loops share the same offset direction.
struct Loop {
  double radius = 1e-3;          // m
  double axial_position = 0.0;   // m
  double lateral_offset = 0.0;   // m, >= 0
  double current = 0.0;          // A

  void validate() const;
};

/// Vertical (+z) magnetic moment.
struct DipoleMoment {
  double magnitude = 0.0;  // A m^2
};

struct EllipticKE {
  double K;
  double E;
};

/// Complete elliptic integrals K and E by the arithmetic-geometric mean.
///
/// The argument is the *parameter* k^2 (not the modulus k):
///   K = int_0^{pi/2} dt / sqrt(1 - k^2 sin^2 t).
/// Throws DomainError unless 0 <= k2 < 1.
EllipticKE ellip_KE(double k_squared);

/// Maxwell's closed form for two coaxial loops of radii a and b separated
/// axially by d:
///   M = mu0 sqrt(ab) [(2/k - k) K - (2/k) E],  k^2 = 4ab / ((a+b)^2 + d^2).
/// Evaluated without the small-k cancellation of the textbook form.
/// Throws SingularityError for a == b && d == 0.
double mutual_inductance_coaxial(double a, double b, double d);

/// Exact derivative dM/dd of the coaxial closed form (H/m).
double mutual_inductance_coaxial_dd(double a, double b, double d);

struct QuadratureResult {
  double value;
  double error_estimate;  // absolute
  long evaluations;
};

inline constexpr double kNeumannRelTol = 1e-8;
inline constexpr long kNeumannMaxEvaluations = 1'000'000;

/// Neumann double line integral  M = mu0/4pi oint oint dl1.dl2 / |r1 - r2|
/// by nested adaptive Gauss-Kronrod quadrature. Valid for any relative
/// lateral offset. Throws SingularityError for coincident loops and
/// NumericalError when the tolerance or the evaluation cap is not met.
QuadratureResult mutual_inductance_neumann_detailed(
    const Loop& loop1, const Loop& loop2,
    double rel_tol = kNeumannRelTol);

double mutual_inductance_neumann(const Loop& loop1, const Loop& loop2);

enum class Axis { axial, lateral };

struct Gradient {
  double value;           // H/m
  double step;            // m, base finite-difference step
  double error_estimate;  // H/m, Richardson difference
};

/// dM/dx where x moves loop2 along `axis` (axial: +z, lateral: +offset).
/// Central differences, step = max(1 um, 1e-4 * separation), one Richardson
/// extrapolation.
Gradient grad_mutual_inductance(const Loop& loop1, const Loop& loop2, Axis axis);

/// Mutual inductance picking the closed form for coaxial pairs and the
/// Neumann quadrature otherwise.
double mutual_inductance(const Loop& loop1, const Loop& loop2);

/// Self inductance of a thin round-wire loop: mu0 a (ln(8a/w) - 2).
/// Requires 0 < wire_radius < a.
double self_inductance_loop(double a, double wire_radius);

/// |B| of a vertical point dipole at in-plane distance rho and height dz:
///   mu0 m / (4 pi r^3) sqrt(3 cos^2(theta) + 1).
double dipole_field(DipoleMoment m, double rho, double dz);

/// m = B_r V / mu0.
DipoleMoment moment_from_remanence(const Magnet& magnet);

}  // namespace levsim::magnetostatics
