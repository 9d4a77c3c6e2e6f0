#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgfm/field.hpp"

namespace sgfm {

/// Forcing term f(u).
///
/// Analytic ids:
///   "kolmogorov"  params {amplitude, wavenumber}: f = (A sin(k y), 0[, 0])
///   "damping"     params {rate}: f = -rate * u
/// Prescribed holds a fixed field; Learned wraps a callable together with
/// its vector-Jacobian product (needed for residual gradients).
struct ForcingSpec {
  enum class Kind { Zero, Analytic, Prescribed, Learned };

  Kind kind = Kind::Zero;
  std::string expression;
  std::vector<double> params;
  std::optional<Field> field;
  std::function<Field(const Field&)> evaluate;
  /// (u, r) -> J_f(u)^T r
  std::function<Field(const Field&, const Field&)> vjp;

  static ForcingSpec zero();
  static ForcingSpec analytic(std::string id, std::vector<double> params);
  static ForcingSpec prescribed(Field f);
  static ForcingSpec learned(std::function<Field(const Field&)> evaluate,
                             std::function<Field(const Field&, const Field&)> vjp = {});

  bool state_dependent() const;
};

Field evaluate_forcing(const ForcingSpec& forcing, const Field& u);
/// J_f(u)^T r. Throws std::logic_error for learned forcing without a vjp.
Field forcing_vjp(const ForcingSpec& forcing, const Field& u, const Field& r);

/// Largest observed |f(u) - f(v)| / |u - v| over seeded random pairs.
double estimate_forcing_lipschitz(const ForcingSpec& forcing, const Grid& grid,
                                  int channels, int trials, std::uint64_t seed);

struct SpdeParams {
  double viscosity = 0.1;
  double noise_amplitude = 0.0;
  double dt = 1e-3;
  ForcingSpec forcing;
  bool project_each_step = true;

  /// Throws std::invalid_argument on nu <= 0, sigma < 0 or dt < 0.
  void validate() const;
};

/// (v . grad) v for every vector group of v.
Field advection(const Field& v);

/// P[-(u.grad)u + nu Lap u + f(u)], projection skipped when
/// project_each_step is false.
Field spde_rhs(const Field& u, const SpdeParams& p);

/// Discrete governing residual
///   R = (u_next - u_prev)/dt + (u.grad)u - nu Lap u - f(u),  u = u_next.
/// Throws std::invalid_argument when dt <= 0.
Field residual(const Field& u_prev, const Field& u_next, double dt,
               const SpdeParams& p);

/// |P R|^2 in the cell-weighted norm.
double residual_energy(const Field& u_prev, const Field& u_next, double dt,
                       const SpdeParams& p);

/// Gradient of residual_energy with respect to the samples of u_next, in the
/// grid-sum inner product (so that dE = <grad, du> summed over samples).
Field residual_energy_gradient(const Field& u_prev, const Field& u_next,
                               double dt, const SpdeParams& p);

/// Seed for the noise draw of one step.
std::uint64_t step_seed(std::uint64_t seed, long step_index);

/// u + dt * rhs(u) + sigma * sqrt(dt) * xi, xi projected when the constraint
/// is on. Throws InstabilityError naming step_index on non-finite output.
Field step_euler_maruyama(const Field& u, const SpdeParams& p, std::uint64_t seed,
                          long step_index);

/// steps + 1 snapshots starting at u0. Step k uses noise index
/// first_step_index + k, so a run can be resumed bit-exactly.
Trajectory simulate(const Field& u0, const SpdeParams& p, int steps,
                    std::uint64_t seed, long first_step_index = 0);

struct EnergyReport {
  std::vector<double> times;
  std::vector<double> kinetic_energy;
  std::vector<double> enstrophy;
  /// 2 nu * trapezoid integral of enstrophy up to each time.
  std::vector<double> dissipation;
  /// kinetic_energy + dissipation.
  std::vector<double> lhs;
  std::vector<double> bound_rhs;
  double forcing_constant = 0.0;
  double noise_hs2 = 0.0;
};

/// Energy balance terms. The bound uses C = 2 sup_t |f(u)| |u| and
/// |sigma|_HS^2 = sigma^2 * N * ndim * cell_volume.
EnergyReport energy_diagnostics(const Trajectory& traj, const SpdeParams& p);

/// Elementwise mean of several reports with identical time grids.
EnergyReport average_reports(const std::vector<EnergyReport>& reports);

/// Vorticity-equation residual at interior snapshot `index` of a 2D
/// trajectory: centred time difference of omega plus u.grad(omega)
/// - nu Lap(omega) - curl f, all spatial terms at the snapshot.
Field vorticity_residual(const Trajectory& traj, const SpdeParams& p,
                         std::size_t index);

struct SeparationFit {
  double rate = 0.0;       // lambda in |u_t - v_t| ~ C exp(lambda t) |u0 - v0|
  double log_prefactor = 0.0;
  std::vector<double> times;
  std::vector<double> distances;
};

/// Least-squares fit of log(|u_t - v_t| / |u_0 - v_0|) against t.
SeparationFit fit_separation(const Trajectory& a, const Trajectory& b);

}  // namespace sgfm
