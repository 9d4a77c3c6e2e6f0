#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sgfm/field.hpp"
#include "sgfm/flow.hpp"
#include "sgfm/wavelet.hpp"

namespace sgfm {

/// Variance-preserving schedule with linear beta on tau in [0, 1].
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  double beta(double tau) const { return beta_min + tau * (beta_max - beta_min); }
  /// exp(-integral_0^tau beta).
  double alpha_bar(double tau) const;
  /// sqrt(1 - alpha_bar(tau)).
  double sigma(double tau) const;
};

/// Everything a score model sees for one coefficient set.
struct ScoreInput {
  const CoefficientLayout* layout = nullptr;
  int j_split = 0;
  std::span<const double> fine;
  std::span<const double> coarse;
  std::span<const double> params;
  double tau = 0.0;
};

/// Maps (fine, coarse, lambda, tau) to an epsilon-prediction over the fine
/// coefficients.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual void predict(const ScoreInput& in, std::span<double> eps) const = 0;
  std::vector<double> predict(const ScoreInput& in) const;

  virtual std::size_t parameter_count() const { return 0; }
  virtual std::vector<double> parameters() const { return {}; }
  virtual void set_parameters(std::span<const double> theta);

  /// Adds d<upstream, eps(theta)>/d theta to `grad`.
  virtual void backward(const ScoreInput& in, std::span<const double> upstream,
                        std::span<double> grad) const;
};

/// Always predicts zero noise.
class ZeroScoreModel final : public ScoreModel {
 public:
  using ScoreModel::predict;
  void predict(const ScoreInput& in, std::span<double> eps) const override;
};

/// Exact epsilon-predictor for data concentrated at one coefficient vector:
/// eps = (c - sqrt(abar) c0) / sqrt(1 - abar). With the true c0 it recovers
/// the injected noise exactly.
class PointMassScoreModel final : public ScoreModel {
 public:
  PointMassScoreModel(NoiseSchedule schedule, std::vector<double> fine_target);
  using ScoreModel::predict;
  void predict(const ScoreInput& in, std::span<double> eps) const override;

 private:
  NoiseSchedule schedule_;
  std::vector<double> target_;
};

/// Small shift-invariant network over the fine wavelet bands. Each
/// (orientation, channel) group shares one set of weights across scales
/// and positions:
///
///   z_k = sum_f phi_f(tau) (A_kf * c) + p_k parent + L_k . lambda + a_k
///   eps = sum_f phi_f(tau) (B_f * c) + sum_k v_k tanh(z_k) + b
///
/// where * is a periodic 3^ndim stencil within the band, `parent` the
/// approximation coefficient above the location, and phi(tau) =
/// (1, sqrt(abar), 1/max(sigma, kSigmaFloor)) the noise-level embedding.
class LocalScoreNet final : public ScoreModel {
 public:
  struct Config {
    int ndim = 2;
    int channels = 2;
    int hidden = 4;
    int param_dim = 0;
    NoiseSchedule schedule;
  };

  LocalScoreNet(Config config, std::uint64_t seed);

  const Config& config() const { return config_; }

  using ScoreModel::predict;
  void predict(const ScoreInput& in, std::span<double> eps) const override;
  std::size_t parameter_count() const override { return theta_.size(); }
  std::vector<double> parameters() const override { return theta_; }
  void set_parameters(std::span<const double> theta) override;
  void backward(const ScoreInput& in, std::span<const double> upstream,
                std::span<double> grad) const override;

  static constexpr int kFeatures = 3;
  /// Lower bound on sigma inside the 1/sigma feature.
  static constexpr double kSigmaFloor = 0.05;
  std::vector<double> features(double tau) const;

 private:
  struct Offsets;
  Offsets group_offsets(int group) const;
  std::size_t group_size() const;
  int stencil_size() const;
  template <bool Backward>
  void run(const ScoreInput& in, std::span<double> eps,
           std::span<const double> upstream, std::span<double> grad) const;

  Config config_;
  std::vector<double> theta_;
};

// ---------------------------------------------------------------------------

struct NoisedCoefficients {
  WaveletCoefficients noisy;
  std::vector<double> noise;
};

/// sqrt(abar) c0 + sqrt(1 - abar) eps over every coefficient.
NoisedCoefficients forward_noise(const WaveletCoefficients& c0, double tau,
                                 std::uint64_t seed,
                                 const NoiseSchedule& schedule = {});

struct DsmItem {
  WaveletCoefficients c0;
  std::vector<double> params;
};

struct TauRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Per-item noise seeds derived from item content and the batch seed, so the
/// draw does not depend on batch order. Repeated identical items get
/// distinct streams by occurrence.
std::vector<std::uint64_t> item_seeds(std::span<const std::uint64_t> content_hashes,
                                      std::uint64_t seed);

/// Seeds of item_seeds() keyed by each item's coefficients and parameters.
std::vector<std::uint64_t> dsm_item_seeds(std::span<const DsmItem> batch,
                                          std::uint64_t seed);

struct NoisedFine {
  double tau = 0.0;
  std::vector<double> eps;
  std::vector<double> noisy;
};

/// Draws tau ~ U(range) and eps, then noises the fine coefficients of one
/// item. This is the sampling used by every denoising loss.
NoisedFine noise_fine(const DsmItem& item, std::uint64_t item_seed, int j_split,
                      const NoiseSchedule& schedule, TauRange range = {});

/// Mean over the batch of |eps - eps_theta(c_tau)|^2 on the fine
/// coefficients, with tau ~ U(range) and fresh eps per item.
double dsm_loss(const ScoreModel& model, std::span<const DsmItem> batch,
                const NoiseSchedule& schedule, std::uint64_t seed, int j_split,
                TauRange range = {});

/// Mean squared difference per fine coefficient between two predictors,
/// evaluated on noised batch items.
double prediction_mse(const ScoreModel& model, const ScoreModel& reference,
                      std::span<const DsmItem> batch, const NoiseSchedule& schedule,
                      std::uint64_t seed, int j_split, TauRange range = {});

/// score = -eps / sqrt(1 - abar(tau)); rejects tau <= 0.
std::vector<double> score_from_eps(std::span<const double> eps, double tau,
                                   const NoiseSchedule& schedule);

enum class ReverseMode { SDE, ODE };

struct ReverseContext {
  const CoefficientLayout* layout = nullptr;
  int j_split = 0;
  std::span<const double> coarse;
  std::span<const double> params;
  NoiseSchedule schedule;
};

/// One Euler(-Maruyama) step of the VP reverse dynamics from tau to tau - dtau:
///   SDE: c += (beta/2 c + beta s) dtau + sqrt(beta dtau) z
///   ODE: c += beta/2 (c + s) dtau
std::vector<double> reverse_step(std::span<const double> fine, double tau,
                                 double dtau, const ScoreModel& model,
                                 const ReverseContext& ctx, ReverseMode mode,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Physics-guided correction

/// E(c) = |P R(u_prev, W^-1 c, dt)|^2.
double coefficient_residual_energy(const WaveletCoefficients& c,
                                   const Field& u_prev, double dt,
                                   const SpdeParams& p);

/// Gradient of coefficient_residual_energy with respect to c.
WaveletCoefficients coefficient_residual_gradient(const WaveletCoefficients& c,
                                                  const Field& u_prev, double dt,
                                                  const SpdeParams& p);

/// c - eta * grad_c E.
WaveletCoefficients physics_correction(const WaveletCoefficients& c,
                                       const Field& u_prev, double dt,
                                       const SpdeParams& p, double eta);

struct CorrectionResult {
  WaveletCoefficients coeffs;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double eta_used = 0.0;
  int halvings = 0;
  bool accepted = false;
};

/// Tries eta, halving it until E decreases (at most max_halvings times).
/// A step that never decreases E is rejected and c returned unchanged.
CorrectionResult physics_correction_backtracking(const WaveletCoefficients& c,
                                                 const Field& u_prev, double dt,
                                                 const SpdeParams& p, double eta,
                                                 int max_halvings = 30);

// ---------------------------------------------------------------------------
// Hybrid sampler

struct SamplerConfig {
  int steps = 100;
  double correction_strength = 0.0;
  int corrections_per_step = 0;
  int j_split = 0;
  std::uint64_t seed = 0;
  ReverseMode mode = ReverseMode::ODE;
  NoiseSchedule schedule;

  void validate() const;
};

struct SamplingContext {
  /// Coarse coefficients are teacher-forced from here; its layout fixes the
  /// wavelet family, levels, grid and channels of the sample.
  WaveletCoefficients conditioning;
  /// Previous field for the physics residual; corrections need it.
  std::optional<Field> previous;
  double dt = 1.0;
  std::vector<double> params;
};

/// Reverse diffusion of the fine coefficients from unit noise at tau = 1,
/// interleaved with backtracking physics corrections, then W^-1 and a final
/// divergence-free projection.
Field hybrid_sample(const ScoreModel& model, const SamplerConfig& cfg,
                    const SpdeParams& p, const SamplingContext& ctx);

}  // namespace sgfm
