#pragma once

// Meissner levitation of a permanent magnet above a superconducting disc.
//
// Two force models are provided. The image method mirrors the magnet's
// point dipole in an infinite superconducting plane. The response-loop model
// discretizes the disc into concentric superconducting filaments whose
// currents null the flux threading each of them; the magnet is represented
// by a single equivalent current loop at its mid-height.
//
// Heights `z` are measured from the disc surface to the magnet centre.

#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "levsim/errors.hpp"
#include "levsim/magnetostatics.hpp"

namespace levsim::levitation {

using magnetostatics::DipoleMoment;
using magnetostatics::Loop;
using magnetostatics::Magnet;

struct SuperconductorDisc {
  double radius = 2e-3;  // m, stub radius
  int loop_count = 400;
  double bc0 = 0.010;    // T, critical field at zero temperature
  double tc = 1.2;       // K

  void validate() const;
};

/// Raised by onset_temperature when the magnet never lifts below tc.
class NoOnsetError : public NoLevitationError {
 public:
  using NoLevitationError::NoLevitationError;
};

/// Concentric response loops in the plane z = 0 and their inductance matrix.
/// Immutable; `with_mask` returns a copy with a different superconducting set.
class ResponseArray {
 public:
  static ResponseArray build(const SuperconductorDisc& disc);

  const std::vector<Loop>& loops() const { return loops_; }
  const Eigen::MatrixXd& inductance() const { return inductance_; }
  const std::vector<bool>& active_mask() const { return active_; }
  std::size_t size() const { return loops_.size(); }
  std::size_t active_count() const;
  double spacing() const { return spacing_; }

  ResponseArray with_mask(std::vector<bool> active) const;
  /// Loops with radius strictly greater than `radius` stay superconducting.
  ResponseArray with_normal_core(double radius) const;

 private:
  std::vector<Loop> loops_;
  Eigen::MatrixXd inductance_;
  std::vector<bool> active_;
  double spacing_ = 0.0;
};

/// Equivalent current loop for the magnet: radius defaults to the magnet
/// radius, current I = m / (pi a^2), centre at height z.
Loop magnet_loop(const Magnet& magnet, double z, double lateral_offset = 0.0,
                 double loop_radius = 0.0);

/// Cholesky factorization of the active inductance sub-matrix, reused across
/// magnet positions.
class ScreeningSolver {
 public:
  explicit ScreeningSolver(const ResponseArray& array);

  const ResponseArray& array() const { return array_; }

  /// Currents for all loops (zero on normal loops) solving L I = -flux.
  Eigen::VectorXd currents(const Eigen::VectorXd& flux) const;

  /// Axial magnetic force on a coaxial magnet loop (N, positive = up).
  double axial_force(const Loop& magnet) const;
  /// Magnetic energy 1/2 flux^T L^-1 flux of a coaxial magnet loop (J).
  double magnetic_energy(const Loop& magnet) const;

 private:
  Eigen::VectorXd active_flux(const Loop& magnet, bool derivative) const;

  ResponseArray array_;
  std::vector<int> active_index_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct ScreeningCurrents {
  Eigen::VectorXd currents;  // A, one per loop, zero where masked
  Eigen::VectorXd flux;      // Wb, magnet flux through each loop
  double residual;           // ||L I + flux|| / ||flux|| on active loops
};

/// Flux-null currents for the active loops. Throws LinearAlgebraError with a
/// reciprocal-condition estimate when the sub-matrix cannot be factorized.
ScreeningCurrents solve_screening_currents(const ResponseArray& array,
                                           const Loop& magnet);

struct Force {
  double axial;    // N
  double lateral;  // N, along +offset
};

Force levitation_force(const ResponseArray& array, const Magnet& magnet,
                       double z, double lateral_offset = 0.0,
                       double loop_radius = 0.0);

// Image method.
double image_force(DipoleMoment m, double z);
double image_potential(const Magnet& magnet, double z);

struct Equilibrium {
  double height = 0.0;          // m
  bool stable = false;
  double residual_force = 0.0;  // N, F_magnetic - M g at height
  int iterations = 0;
  double slope = 0.0;           // dF/dz at height, N/m
  std::size_t active_loops = 0;
};

Equilibrium image_equilibrium_height(const Magnet& magnet);

enum class Model { image, two_loop };

struct SolverOptions {
  int z_samples = 200;
  double z_max = 10e-3;           // m
  double tolerance = 1e-6;        // m, fixed-point tolerance on z
  double damping = 0.5;
  int max_iterations = 100;
  double loop_radius = 0.0;       // m, 0 selects the magnet radius
};

/// Largest stable root of F(z) = M g in [magnet.height/2, z_max].
///
/// With a temperature, loops where the magnet's dipole field exceeds
/// critical_field(T) are switched normal. The mask depends on the height, so
/// the height is found by damped fixed-point iteration starting from the
/// resting position. The image model ignores the temperature and the disc.
Equilibrium equilibrium_height(Model model, const Magnet& magnet,
                               const ResponseArray& array,
                               const SuperconductorDisc& disc,
                               std::optional<double> temperature,
                               const SolverOptions& options = {});

Equilibrium equilibrium_height(Model model, const Magnet& magnet,
                               const SuperconductorDisc& disc,
                               std::optional<double> temperature,
                               const SolverOptions& options = {});

struct ForcePotentialCurve {
  std::vector<double> z;          // m, strictly increasing
  std::vector<double> force;      // N, magnetic axial force
  std::vector<double> potential;  // J, magnetic energy + M g z
};

enum class Spacing { linear, geometric };

ForcePotentialCurve potential_curve(const ResponseArray& array,
                                    const Magnet& magnet, double z_lo,
                                    double z_hi, int samples,
                                    Spacing spacing = Spacing::linear,
                                    double loop_radius = 0.0);

/// B_c(T) = bc0 (1 - (T/tc)^2), zero at and above tc.
double critical_field(double temperature, const SuperconductorDisc& disc);

/// Largest in-plane radius at which the magnet's dipole field at
/// `dipole_height` equals B_c(T); clamped to [0, disc.radius].
double normal_region_radius(const Magnet& magnet, double dipole_height,
                            double temperature,
                            const SuperconductorDisc& disc);

/// Highest temperature (1 mK resolution) at which the resting magnet is
/// lifted by the loops outside the normal region.
double onset_temperature(const Magnet& magnet, const ResponseArray& array,
                         const SuperconductorDisc& disc,
                         double loop_radius = 0.0);

double onset_temperature(const Magnet& magnet, const SuperconductorDisc& disc,
                         double loop_radius = 0.0);

}  // namespace levsim::levitation
