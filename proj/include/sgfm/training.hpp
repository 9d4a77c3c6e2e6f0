#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgfm/diffusion.hpp"
#include "sgfm/field.hpp"
#include "sgfm/flow.hpp"
#include "sgfm/wavelet.hpp"

namespace sgfm {

struct LossWeights {
  double lambda_r = 0.1;
  double lambda_b = 1.0;

  void validate() const;
};

/// Prescribed values on a mask, applied either to field samples or to
/// wavelet coefficients. `snapshot` selects the trajectory entry the
/// condition refers to (0 = initial time).
struct BoundaryCondition {
  enum class Target { Field, Coefficients };

  Target target = Target::Field;
  std::vector<std::uint8_t> mask;
  std::vector<double> values;
  std::size_t snapshot = 0;

  std::size_t active() const;
};

/// Mask on the grid plane `index` along `axis` (all channels), with the
/// reference's values there.
BoundaryCondition plane_condition(const Field& reference, int axis = 0, int index = 0);
/// Mask on every coefficient of scale <= max_scale.
BoundaryCondition coefficient_condition(const WaveletCoefficients& reference,
                                        int max_scale);

/// Mean squared deviation over the mask.
double boundary_loss(const Field& u, const BoundaryCondition& bc);
double boundary_loss(const WaveletCoefficients& c, const BoundaryCondition& bc);
double boundary_loss(const Trajectory& traj, const BoundaryCondition& bc);

/// e^{-2 nu t} (sin x cos y, -cos x sin y) on a 2D grid.
Field taylor_green(const Grid& grid, double viscosity, double t);

/// One supervised pair: clean target u_next, its predecessor and the
/// forcing that makes the pair consistent.
struct TrainingItem {
  Field u_prev;
  Field u_next;
  double dt = 1.0;
  std::optional<Field> forcing;
  std::vector<double> params;
  std::optional<BoundaryCondition> bc;
};

/// Random smooth divergence-free pairs u(t0), u(t0 + dt) with Fourier
/// support |k_a| <= n/4, and forcing f := (u_next - u_prev)/dt + (u.grad)u
/// - nu Lap u at u_next, so the discrete residual vanishes. Each item
/// carries the x = 0 plane of u_next as its boundary condition.
std::vector<TrainingItem> manufactured_dataset(int count, const Grid& grid,
                                               double viscosity, std::uint64_t seed,
                                               double dt = 0.1);

/// `count` copies of a static pair (u_prev = u_next = target).
std::vector<TrainingItem> point_mass_dataset(int count, const Field& target);

struct DiffusionSetup {
  NoiseSchedule schedule;
  WaveletFamily family = WaveletFamily::haar();
  int levels = 2;
  int j_split = 1;
};

struct LossParts {
  double total = 0.0;
  double diff = 0.0;
  double phys = 0.0;
  double bc = 0.0;
};

DsmItem to_dsm_item(const TrainingItem& item, const DiffusionSetup& setup);

/// L = diff + lambda_R phys + lambda_B bc, each averaged over the batch.
/// diff is the denoising loss on the fine coefficients of u_next; phys and
/// bc are evaluated on the field rebuilt from the denoised estimate
/// c0_hat = (c_tau - sigma eps_hat) / sqrt(abar) with the true coarse
/// coefficients, each weighted per item by abar(tau)^2. When `grad` is
/// non-null it receives dL/dtheta.
LossParts composite_loss(const ScoreModel& model, std::span<const TrainingItem> batch,
                         const LossWeights& weights, const SpdeParams& p,
                         const DiffusionSetup& setup, std::uint64_t seed,
                         std::vector<double>* grad = nullptr);

struct TrainConfig {
  enum class Dataset { PointMass, Manufactured };

  int epochs = 50;
  int batch_size = 8;
  /// Step size per fine coefficient: theta -= lr * dL/dtheta / n_fine.
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  Dataset dataset = Dataset::PointMass;
  int dataset_size = 8;
  Grid grid{2, 16};
  double viscosity = 0.1;
  double data_dt = 0.1;
  LossWeights weights;
  DiffusionSetup diffusion;
  int hidden = 4;
  /// Diffuse every detail band (j_split forced to 0) instead of only the
  /// fine ones.
  bool diffuse_coarse = false;

  void validate() const;
};

struct LossRecord {
  int epoch = 0;
  double total = 0.0;
  double diff = 0.0;
  double phys = 0.0;
  double bc = 0.0;
};

struct TrainResult {
  LocalScoreNet model;
  std::vector<LossRecord> history;
  std::vector<TrainingItem> dataset;
  DiffusionSetup diffusion;
};

/// Point-mass target used by the PointMass dataset: a uniform mean flow.
Field point_mass_target(const Grid& grid);

std::vector<TrainingItem> make_dataset(const TrainConfig& cfg);

/// Plain SGD on composite_loss. Throws InstabilityError with the epoch
/// index if the loss becomes non-finite.
TrainResult train_toy(const TrainConfig& cfg);

}  // namespace sgfm
