#include "sgfm/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sgfm/spectral.hpp"
#include "sgfm/util.hpp"

namespace sgfm {

double NoiseSchedule::alpha_bar(double tau) const {
  return std::exp(-(beta_min * tau + 0.5 * (beta_max - beta_min) * tau * tau));
}

double NoiseSchedule::sigma(double tau) const {
  return std::sqrt(-std::expm1(-(beta_min * tau + 0.5 * (beta_max - beta_min) * tau * tau)));
}

// ---------------------------------------------------------------------------
// Score models

std::vector<double> ScoreModel::predict(const ScoreInput& in) const {
  std::vector<double> eps(in.fine.size());
  predict(in, eps);
  return eps;
}

void ScoreModel::set_parameters(std::span<const double> theta) {
  if (!theta.empty()) throw std::logic_error("model has no parameters");
}

void ScoreModel::backward(const ScoreInput&, std::span<const double>,
                          std::span<double>) const {
  throw std::logic_error("model is not differentiable in its parameters");
}

void ZeroScoreModel::predict(const ScoreInput&, std::span<double> eps) const {
  std::fill(eps.begin(), eps.end(), 0.0);
}

PointMassScoreModel::PointMassScoreModel(NoiseSchedule schedule,
                                         std::vector<double> fine_target)
    : schedule_(schedule), target_(std::move(fine_target)) {}

void PointMassScoreModel::predict(const ScoreInput& in, std::span<double> eps) const {
  if (in.fine.size() != target_.size())
    throw std::invalid_argument("point-mass target size mismatch");
  const double sa = std::sqrt(schedule_.alpha_bar(in.tau));
  const double s = schedule_.sigma(in.tau);
  if (!(s > 0.0)) throw std::invalid_argument("point-mass predictor undefined at tau = 0");
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (in.fine[i] - sa * target_[i]) / s;
}

struct LocalScoreNet::Offsets {
  std::size_t A, P, L, a, B, V, b;
};

int LocalScoreNet::stencil_size() const { return config_.ndim == 2 ? 9 : 27; }

std::size_t LocalScoreNet::group_size() const {
  const std::size_t H = config_.hidden;
  const std::size_t S = stencil_size();
  const std::size_t M = config_.param_dim;
  return H * kFeatures * S + H + H * M + H + kFeatures * S + H + 1;
}

LocalScoreNet::Offsets LocalScoreNet::group_offsets(int group) const {
  const std::size_t H = config_.hidden;
  const std::size_t S = stencil_size();
  const std::size_t M = config_.param_dim;
  Offsets o{};
  o.A = group * group_size();
  o.P = o.A + H * kFeatures * S;
  o.L = o.P + H;
  o.a = o.L + H * M;
  o.B = o.a + H;
  o.V = o.B + kFeatures * S;
  o.b = o.V + H;
  return o;
}

LocalScoreNet::LocalScoreNet(Config config, std::uint64_t seed) : config_(config) {
  if (config_.ndim != 2 && config_.ndim != 3)
    throw std::invalid_argument("LocalScoreNet: ndim must be 2 or 3");
  if (config_.channels < 1 || config_.hidden < 0 || config_.param_dim < 0)
    throw std::invalid_argument("LocalScoreNet: bad configuration");
  const int groups = ((1 << config_.ndim) - 1) * config_.channels;
  theta_.assign(group_size() * groups, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  const std::size_t H = config_.hidden;
  const std::size_t S = stencil_size();
  for (int g = 0; g < groups; ++g) {
    const auto o = group_offsets(g);
    for (std::size_t i = 0; i < H * kFeatures * S; ++i) theta_[o.A + i] = normal(rng);
    for (std::size_t k = 0; k < H; ++k) theta_[o.V + k] = normal(rng);
  }
}

void LocalScoreNet::set_parameters(std::span<const double> theta) {
  if (theta.size() != theta_.size())
    throw std::invalid_argument("LocalScoreNet: parameter count mismatch");
  theta_.assign(theta.begin(), theta.end());
}

std::vector<double> LocalScoreNet::features(double tau) const {
  const auto& s = config_.schedule;
  return {1.0, std::sqrt(s.alpha_bar(tau)), 1.0 / std::max(s.sigma(tau), kSigmaFloor)};
}

void LocalScoreNet::predict(const ScoreInput& in, std::span<double> eps) const {
  run<false>(in, eps, {}, {});
}

void LocalScoreNet::backward(const ScoreInput& in, std::span<const double> upstream,
                             std::span<double> grad) const {
  if (grad.size() != theta_.size())
    throw std::invalid_argument("LocalScoreNet: gradient size mismatch");
  run<true>(in, {}, upstream, grad);
}

template <bool Backward>
void LocalScoreNet::run(const ScoreInput& in, std::span<double> eps,
                        std::span<const double> upstream,
                        std::span<double> grad) const {
  const auto& layout = *in.layout;
  const int d = layout.grid().ndim;
  if (d != config_.ndim || layout.channels() != config_.channels)
    throw std::invalid_argument("LocalScoreNet: layout does not match the model");
  if (static_cast<int>(in.params.size()) != config_.param_dim)
    throw std::invalid_argument("LocalScoreNet: physical parameter count mismatch");
  const std::size_t prefix = layout.prefix_size(in.j_split);
  if (in.fine.size() != layout.size() - prefix || in.coarse.size() != prefix)
    throw std::invalid_argument("LocalScoreNet: coefficient sizes do not match split");

  const int H = config_.hidden;
  const int S = stencil_size();
  const int M = config_.param_dim;
  const auto phi = features(in.tau);
  const auto bands = layout.bands();
  const int approx_extent = bands[0].extent;
  const std::size_t approx_size = bands[0].size;

  std::vector<double> Abar(H * S), Bbar(S), zconst(H);
  std::vector<double> dAbar, dBbar, dz_sum, dparent;
  std::vector<double> nb(S), h(H);
  double db = 0.0;

  for (std::size_t bi = 0; bi < bands.size(); ++bi) {
    const auto& info = bands[bi];
    if (info.scale <= in.j_split) continue;
    const int group = (info.orientation - 1) * config_.channels + info.channel;
    const auto o = group_offsets(group);
    const double* th = theta_.data();
    for (int k = 0; k < H; ++k) {
      for (int s = 0; s < S; ++s) {
        double v = 0.0;
        for (int f = 0; f < kFeatures; ++f) v += phi[f] * th[o.A + (k * kFeatures + f) * S + s];
        Abar[k * S + s] = v;
      }
      double zc = th[o.a + k];
      for (int m = 0; m < M; ++m) zc += th[o.L + k * M + m] * in.params[m];
      zconst[k] = zc;
    }
    for (int s = 0; s < S; ++s) {
      double v = 0.0;
      for (int f = 0; f < kFeatures; ++f) v += phi[f] * th[o.B + f * S + s];
      Bbar[s] = v;
    }
    if constexpr (Backward) {
      dAbar.assign(H * S, 0.0);
      dBbar.assign(S, 0.0);
      dz_sum.assign(H, 0.0);
      dparent.assign(H, 0.0);
      db = 0.0;
    }

    const int m = info.extent;
    const std::size_t base = info.offset - prefix;
    const auto band = in.fine.subspan(base, info.size);
    const auto parent_band = in.coarse.subspan(info.channel * approx_size, approx_size);
    const int ratio = m / approx_extent;
    auto wrap = [m](int i) { return (i + m) % m; };

    auto visit = [&](std::size_t idx, const int* pos) {
      // Gather the periodic 3^d neighbourhood.
      int s = 0;
      if (d == 2) {
        for (int a = -1; a <= 1; ++a)
          for (int b = -1; b <= 1; ++b)
            nb[s++] = band[wrap(pos[0] + a) * m + wrap(pos[1] + b)];
      } else {
        for (int a = -1; a <= 1; ++a)
          for (int b = -1; b <= 1; ++b)
            for (int c = -1; c <= 1; ++c)
              nb[s++] = band[(static_cast<std::size_t>(wrap(pos[0] + a)) * m +
                              wrap(pos[1] + b)) * m + wrap(pos[2] + c)];
      }
      std::size_t pidx = 0;
      for (int a = 0; a < d; ++a) pidx = pidx * approx_extent + pos[a] / ratio;
      const double parent = parent_band[pidx];

      double out = th[o.b];
      for (int t = 0; t < S; ++t) out += Bbar[t] * nb[t];
      for (int k = 0; k < H; ++k) {
        double z = zconst[k] + th[o.P + k] * parent;
        const double* row = &Abar[k * S];
        for (int t = 0; t < S; ++t) z += row[t] * nb[t];
        h[k] = std::tanh(z);
        out += th[o.V + k] * h[k];
      }
      if constexpr (!Backward) {
        eps[base + idx] = out;
      } else {
        const double g = upstream[base + idx];
        if (g == 0.0) return;
        db += g;
        for (int t = 0; t < S; ++t) dBbar[t] += g * nb[t];
        for (int k = 0; k < H; ++k) {
          grad[o.V + k] += g * h[k];
          const double dz = g * th[o.V + k] * (1.0 - h[k] * h[k]);
          dz_sum[k] += dz;
          dparent[k] += dz * parent;
          double* row = &dAbar[k * S];
          for (int t = 0; t < S; ++t) row[t] += dz * nb[t];
        }
      }
    };

    int pos[3] = {0, 0, 0};
    std::size_t idx = 0;
    if (d == 2) {
      for (pos[0] = 0; pos[0] < m; ++pos[0])
        for (pos[1] = 0; pos[1] < m; ++pos[1]) visit(idx++, pos);
    } else {
      for (pos[0] = 0; pos[0] < m; ++pos[0])
        for (pos[1] = 0; pos[1] < m; ++pos[1])
          for (pos[2] = 0; pos[2] < m; ++pos[2]) visit(idx++, pos);
    }

    if constexpr (Backward) {
      grad[o.b] += db;
      for (int f = 0; f < kFeatures; ++f)
        for (int s = 0; s < S; ++s) grad[o.B + f * S + s] += phi[f] * dBbar[s];
      for (int k = 0; k < H; ++k) {
        for (int f = 0; f < kFeatures; ++f)
          for (int s = 0; s < S; ++s)
            grad[o.A + (k * kFeatures + f) * S + s] += phi[f] * dAbar[k * S + s];
        grad[o.P + k] += dparent[k];
        grad[o.a + k] += dz_sum[k];
        for (int mm = 0; mm < M; ++mm) grad[o.L + k * M + mm] += dz_sum[k] * in.params[mm];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Forward process and losses

namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("diffusion time must lie in [0, 1]");
}

std::vector<double> normal_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

/// Sum in an order fixed by the seeds, independent of batch order.
double ordered_mean(std::vector<std::pair<std::uint64_t, double>> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (const auto& t : terms) s += t.second;
  return terms.empty() ? 0.0 : s / static_cast<double>(terms.size());
}

void check_range(TauRange range) {
  check_tau(range.lo);
  check_tau(range.hi);
  if (range.lo > range.hi) throw std::invalid_argument("empty tau range");
}

}  // namespace

NoisedCoefficients forward_noise(const WaveletCoefficients& c0, double tau,
                                 std::uint64_t seed, const NoiseSchedule& schedule) {
  check_tau(tau);
  std::mt19937_64 rng(seed);
  auto eps = normal_vector(c0.size(), rng);
  WaveletCoefficients noisy = c0;
  if (tau == 0.0) return {std::move(noisy), std::move(eps)};
  const double sa = std::sqrt(schedule.alpha_bar(tau));
  const double s = schedule.sigma(tau);
  auto v = noisy.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sa * v[i] + s * eps[i];
  return {std::move(noisy), std::move(eps)};
}

std::vector<std::uint64_t> item_seeds(std::span<const std::uint64_t> content_hashes,
                                      std::uint64_t seed) {
  // occurrence rank among identical items, counted in sorted order
  std::vector<std::size_t> order(content_hashes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return content_hashes[a] < content_hashes[b];
  });
  std::vector<std::uint64_t> seeds(content_hashes.size());
  std::uint64_t rank = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && content_hashes[order[i]] == content_hashes[order[i - 1]])
      ++rank;
    else
      rank = 0;
    seeds[order[i]] = derive_seed(seed, {content_hashes[order[i]], rank});
  }
  return seeds;
}

std::vector<std::uint64_t> dsm_item_seeds(std::span<const DsmItem> batch,
                                          std::uint64_t seed) {
  std::vector<std::uint64_t> hashes;
  hashes.reserve(batch.size());
  for (const auto& item : batch)
    hashes.push_back(hash_values(item.params, hash_values(item.c0.values())));
  return item_seeds(hashes, seed);
}

NoisedFine noise_fine(const DsmItem& item, std::uint64_t item_seed, int j_split,
                      const NoiseSchedule& schedule, TauRange range) {
  std::mt19937_64 rng(item_seed);
  std::uniform_real_distribution<double> uniform(range.lo, range.hi);
  NoisedFine out;
  out.tau = range.lo == range.hi ? range.lo : uniform(rng);
  const std::size_t prefix = item.c0.layout().prefix_size(j_split);
  const auto values = item.c0.values();
  out.eps = normal_vector(values.size() - prefix, rng);
  const double sa = std::sqrt(schedule.alpha_bar(out.tau));
  const double s = schedule.sigma(out.tau);
  out.noisy.resize(out.eps.size());
  for (std::size_t i = 0; i < out.eps.size(); ++i)
    out.noisy[i] = sa * values[prefix + i] + s * out.eps[i];
  return out;
}

double dsm_loss(const ScoreModel& model, std::span<const DsmItem> batch,
                const NoiseSchedule& schedule, std::uint64_t seed, int j_split,
                TauRange range) {
  if (batch.empty()) throw std::invalid_argument("dsm_loss: empty batch");
  check_range(range);
  const auto seeds = dsm_item_seeds(batch, seed);
  std::vector<std::pair<std::uint64_t, double>> terms(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const auto& item = batch[i];
    const auto noised = noise_fine(item, seeds[i], j_split, schedule, range);
    const std::size_t prefix = item.c0.layout().prefix_size(j_split);
    ScoreInput in{&item.c0.layout(), j_split, noised.noisy,
                  item.c0.values().first(prefix), item.params, noised.tau};
    const auto pred = model.predict(in);
    double loss = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double r = noised.eps[k] - pred[k];
      loss += r * r;
    }
    terms[i] = {seeds[i], loss};
  });
  return ordered_mean(std::move(terms));
}

double prediction_mse(const ScoreModel& model, const ScoreModel& reference,
                      std::span<const DsmItem> batch, const NoiseSchedule& schedule,
                      std::uint64_t seed, int j_split, TauRange range) {
  if (batch.empty()) throw std::invalid_argument("prediction_mse: empty batch");
  check_range(range);
  const auto seeds = dsm_item_seeds(batch, seed);
  std::vector<std::pair<std::uint64_t, double>> terms(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const auto& item = batch[i];
    const auto noised = noise_fine(item, seeds[i], j_split, schedule, range);
    const std::size_t prefix = item.c0.layout().prefix_size(j_split);
    ScoreInput in{&item.c0.layout(), j_split, noised.noisy,
                  item.c0.values().first(prefix), item.params, noised.tau};
    const auto a = model.predict(in);
    const auto b = reference.predict(in);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    terms[i] = {seeds[i], a.empty() ? 0.0 : s / static_cast<double>(a.size())};
  });
  return ordered_mean(std::move(terms));
}

std::vector<double> score_from_eps(std::span<const double> eps, double tau,
                                   const NoiseSchedule& schedule) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("score_from_eps: tau must lie in (0, 1]");
  const double s = schedule.sigma(tau);
  std::vector<double> score(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) score[i] = -eps[i] / s;
  return score;
}

std::vector<double> reverse_step(std::span<const double> fine, double tau,
                                 double dtau, const ScoreModel& model,
                                 const ReverseContext& ctx, ReverseMode mode,
                                 std::uint64_t seed) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("reverse_step: tau must lie in (0, 1]");
  if (!(dtau > 0.0)) throw std::invalid_argument("reverse_step: dtau must be > 0");
  if (dtau > tau * (1.0 + 1e-12))
    throw std::invalid_argument("reverse_step: dtau exceeds tau");
  ScoreInput in{ctx.layout, ctx.j_split, fine, ctx.coarse, ctx.params, tau};
  const auto score = score_from_eps(model.predict(in), tau, ctx.schedule);
  const double beta = ctx.schedule.beta(tau);
  std::vector<double> out(fine.size());
  if (mode == ReverseMode::ODE) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = fine[i] + 0.5 * beta * (fine[i] + score[i]) * dtau;
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const double amp = std::sqrt(beta * dtau);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = fine[i] + (0.5 * beta * fine[i] + beta * score[i]) * dtau +
               amp * normal(rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Physics correction

double coefficient_residual_energy(const WaveletCoefficients& c,
                                   const Field& u_prev, double dt,
                                   const SpdeParams& p) {
  return residual_energy(u_prev, inverse_dwt(c), dt, p);
}

WaveletCoefficients coefficient_residual_gradient(const WaveletCoefficients& c,
                                                  const Field& u_prev, double dt,
                                                  const SpdeParams& p) {
  // W is orthonormal, so the pull-back of a field gradient is W applied to it.
  const Field g = residual_energy_gradient(u_prev, inverse_dwt(c), dt, p);
  return forward_dwt(g, c.family(), c.levels());
}

WaveletCoefficients physics_correction(const WaveletCoefficients& c,
                                       const Field& u_prev, double dt,
                                       const SpdeParams& p, double eta) {
  if (!(eta >= 0.0)) throw std::invalid_argument("correction strength must be >= 0");
  if (eta == 0.0) return c;
  WaveletCoefficients g = coefficient_residual_gradient(c, u_prev, dt, p);
  g *= -eta;
  g += c;
  return g;
}

CorrectionResult physics_correction_backtracking(const WaveletCoefficients& c,
                                                 const Field& u_prev, double dt,
                                                 const SpdeParams& p, double eta,
                                                 int max_halvings) {
  if (!(eta >= 0.0)) throw std::invalid_argument("correction strength must be >= 0");
  CorrectionResult res{c, 0.0, 0.0, 0.0, 0, false};
  res.energy_before = coefficient_residual_energy(c, u_prev, dt, p);
  res.energy_after = res.energy_before;
  if (eta == 0.0) return res;
  const WaveletCoefficients g = coefficient_residual_gradient(c, u_prev, dt, p);
  double step = eta;
  for (int h = 0; h <= max_halvings; ++h, step *= 0.5) {
    WaveletCoefficients trial = g;
    trial *= -step;
    trial += c;
    const double e = coefficient_residual_energy(trial, u_prev, dt, p);
    if (std::isfinite(e) && e < res.energy_before) {
      res.coeffs = std::move(trial);
      res.energy_after = e;
      res.eta_used = step;
      res.halvings = h;
      res.accepted = true;
      return res;
    }
  }
  res.halvings = max_halvings;
  return res;
}

// ---------------------------------------------------------------------------
// Hybrid sampler

void SamplerConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("sampler steps must be >= 1");
  if (!(correction_strength >= 0.0))
    throw std::invalid_argument("correction strength must be >= 0");
  if (corrections_per_step < 0)
    throw std::invalid_argument("corrections per step must be >= 0");
}

Field hybrid_sample(const ScoreModel& model, const SamplerConfig& cfg,
                    const SpdeParams& p, const SamplingContext& ctx) {
  cfg.validate();
  const auto& layout = ctx.conditioning.layout();
  if (layout.channels() % layout.grid().ndim != 0)
    throw std::invalid_argument("hybrid_sample produces vector fields: channels must be a multiple of ndim");
  const bool correcting = cfg.corrections_per_step > 0 && cfg.correction_strength > 0.0;
  if (correcting && !ctx.previous)
    throw std::invalid_argument("physics corrections need a previous field");

  ScaleSplit split = split_scales(ctx.conditioning, cfg.j_split);
  std::mt19937_64 rng(derive_seed(cfg.seed, {0xf1e1dULL}));
  split.fine = normal_vector(split.fine.size(), rng);

  ReverseContext rctx{&layout, cfg.j_split, split.coarse, ctx.params, cfg.schedule};
  const double dtau = 1.0 / cfg.steps;
  for (int k = 0; k < cfg.steps; ++k) {
    const double tau = 1.0 - k * dtau;
    split.fine = reverse_step(split.fine, tau, std::min(dtau, tau), model, rctx,
                              cfg.mode, derive_seed(cfg.seed, {0x5ca1eULL, std::uint64_t(k)}));
    if (correcting) {
      for (int r = 0; r < cfg.corrections_per_step; ++r) {
        auto res = physics_correction_backtracking(merge_scales(split), *ctx.previous,
                                                   ctx.dt, p, cfg.correction_strength);
        if (!res.accepted) break;
        auto v = res.coeffs.values();
        const std::size_t prefix = split.coarse.size();
        std::copy(v.begin() + prefix, v.end(), split.fine.begin());
      }
    }
    for (double v : split.fine)
      if (!std::isfinite(v)) throw InstabilityError("hybrid sampler diverged", k);
  }
  return helmholtz_project(inverse_dwt(merge_scales(split)));
}

}  // namespace sgfm
