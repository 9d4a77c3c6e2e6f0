#include "sgfm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sgfm/spectral.hpp"
#include "sgfm/util.hpp"

namespace sgfm {

void LossWeights::validate() const {
  if (!(std::isfinite(lambda_r) && lambda_r >= 0.0) ||
      !(std::isfinite(lambda_b) && lambda_b >= 0.0))
    throw std::invalid_argument("loss weights must be finite and >= 0");
}

std::size_t BoundaryCondition::active() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

BoundaryCondition plane_condition(const Field& reference, int axis, int index) {
  const auto& grid = reference.grid();
  if (axis < 0 || axis >= grid.ndim || index < 0 || index >= grid.n)
    throw std::invalid_argument("plane_condition: plane outside the grid");
  BoundaryCondition bc;
  bc.target = BoundaryCondition::Target::Field;
  bc.values.assign(reference.data().begin(), reference.data().end());
  bc.mask.assign(reference.size(), 0);
  std::size_t stride = 1;
  for (int a = grid.ndim - 1; a > axis; --a) stride *= grid.n;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const std::size_t within = i % grid.size();
    if (static_cast<int>((within / stride) % grid.n) == index) bc.mask[i] = 1;
  }
  return bc;
}

BoundaryCondition coefficient_condition(const WaveletCoefficients& reference,
                                        int max_scale) {
  BoundaryCondition bc;
  bc.target = BoundaryCondition::Target::Coefficients;
  bc.values.assign(reference.values().begin(), reference.values().end());
  bc.mask.assign(reference.size(), 0);
  for (const auto& b : reference.layout().bands())
    if (b.scale <= max_scale)
      std::fill_n(bc.mask.begin() + b.offset, b.size, std::uint8_t{1});
  return bc;
}

namespace {

double masked_mse(std::span<const double> v, const BoundaryCondition& bc) {
  if (v.size() != bc.mask.size() || v.size() != bc.values.size())
    throw std::invalid_argument("boundary condition does not match the target shape");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!bc.mask[i]) continue;
    const double r = v[i] - bc.values[i];
    s += r * r;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("boundary condition mask is empty");
  return s / static_cast<double>(count);
}

/// d masked_mse / dv.
std::vector<double> masked_mse_gradient(std::span<const double> v,
                                        const BoundaryCondition& bc) {
  const double scale = 2.0 / static_cast<double>(bc.active());
  std::vector<double> g(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (bc.mask[i]) g[i] = scale * (v[i] - bc.values[i]);
  return g;
}

}  // namespace

double boundary_loss(const Field& u, const BoundaryCondition& bc) {
  if (bc.target != BoundaryCondition::Target::Field)
    throw std::invalid_argument("boundary condition targets coefficients, not a field");
  return masked_mse(u.data(), bc);
}

double boundary_loss(const WaveletCoefficients& c, const BoundaryCondition& bc) {
  if (bc.target != BoundaryCondition::Target::Coefficients)
    throw std::invalid_argument("boundary condition targets a field, not coefficients");
  return masked_mse(c.values(), bc);
}

double boundary_loss(const Trajectory& traj, const BoundaryCondition& bc) {
  if (bc.snapshot >= traj.size())
    throw std::invalid_argument("boundary condition refers to a missing snapshot");
  return boundary_loss(traj[bc.snapshot].field, bc);
}

Field taylor_green(const Grid& grid, double viscosity, double t) {
  if (grid.ndim != 2) throw std::invalid_argument("taylor_green needs a 2D grid");
  const double decay = std::exp(-2.0 * viscosity * t);
  return sample_field(grid, 2, [decay](std::span<const double> x, int c) {
    return c == 0 ? decay * std::sin(x[0]) * std::cos(x[1])
                  : -decay * std::cos(x[0]) * std::sin(x[1]);
  });
}

std::vector<TrainingItem> manufactured_dataset(int count, const Grid& grid,
                                               double viscosity, std::uint64_t seed,
                                               double dt) {
  if (count < 1) throw std::invalid_argument("dataset count must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("dataset dt must be > 0");
  const int d = grid.ndim;
  const double kmax = grid.n / 4;
  const double rms_target = std::sqrt(static_cast<double>(grid.size() * d));
  auto smooth = [&](std::uint64_t s) {
    Field f = helmholtz_project(band_limit(gaussian_field(grid, d, s), kmax));
    const double norm = grid_norm(f);
    if (norm > 0.0) f *= rms_target / norm;
    return f;
  };
  std::vector<TrainingItem> items;
  items.reserve(count);
  for (int i = 0; i < count; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    const Field a = smooth(derive_seed(seed, {ui, 0}));
    const Field b = smooth(derive_seed(seed, {ui, 1}));
    std::mt19937_64 rng(derive_seed(seed, {ui, 2}));
    const double t0 = std::uniform_real_distribution<double>(0.0, 6.283185307179586)(rng);
    // u(t) = cos(t) a + sin(t) b
    Field u_prev = std::cos(t0) * a;
    u_prev.axpy(std::sin(t0), b);
    Field u_next = std::cos(t0 + dt) * a;
    u_next.axpy(std::sin(t0 + dt), b);
    Field f = (1.0 / dt) * (u_next - u_prev);
    f += advection(u_next);
    f.axpy(-viscosity, laplacian(u_next));
    TrainingItem item{std::move(u_prev), u_next, dt, std::move(f), {}, {}};
    item.bc = plane_condition(u_next);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<TrainingItem> point_mass_dataset(int count, const Field& target) {
  if (count < 1) throw std::invalid_argument("dataset count must be >= 1");
  std::vector<TrainingItem> items;
  for (int i = 0; i < count; ++i) {
    TrainingItem item{target, target, 1.0, std::nullopt, {}, {}};
    item.bc = plane_condition(target);
    items.push_back(std::move(item));
  }
  return items;
}

DsmItem to_dsm_item(const TrainingItem& item, const DiffusionSetup& setup) {
  return {forward_dwt(item.u_next, setup.family, setup.levels), item.params};
}

// ---------------------------------------------------------------------------

namespace {

struct ItemResult {
  std::uint64_t seed = 0;
  double diff = 0.0;
  double phys = 0.0;
  double bc = 0.0;
  std::vector<double> grad;
};

}  // namespace

LossParts composite_loss(const ScoreModel& model, std::span<const TrainingItem> batch,
                         const LossWeights& weights, const SpdeParams& p,
                         const DiffusionSetup& setup, std::uint64_t seed,
                         std::vector<double>* grad) {
  if (batch.empty()) throw std::invalid_argument("composite_loss: empty batch");
  weights.validate();
  std::vector<DsmItem> dsm;
  dsm.reserve(batch.size());
  for (const auto& item : batch) dsm.push_back(to_dsm_item(item, setup));
  const auto seeds = dsm_item_seeds(dsm, seed);
  const std::size_t n_params = model.parameter_count();
  std::vector<ItemResult> results(batch.size());

  parallel_for(batch.size(), [&](std::size_t i) {
    const auto& item = batch[i];
    const auto& c0 = dsm[i].c0;
    const auto& layout = c0.layout();
    const std::size_t prefix = layout.prefix_size(setup.j_split);
    const auto coarse = c0.values().first(prefix);
    const auto noised = noise_fine(dsm[i], seeds[i], setup.j_split, setup.schedule);
    ScoreInput in{&layout, setup.j_split, noised.noisy, coarse, item.params, noised.tau};
    const auto eps_hat = model.predict(in);

    ItemResult& r = results[i];
    r.seed = seeds[i];
    for (std::size_t k = 0; k < eps_hat.size(); ++k) {
      const double e = noised.eps[k] - eps_hat[k];
      r.diff += e * e;
    }

    // Denoised estimate with teacher-forced coarse coefficients.
    const double sa = std::sqrt(setup.schedule.alpha_bar(noised.tau));
    const double s = setup.schedule.sigma(noised.tau);
    std::vector<double> values(coarse.begin(), coarse.end());
    values.reserve(layout.size());
    for (std::size_t k = 0; k < eps_hat.size(); ++k)
      values.push_back((noised.noisy[k] - s * eps_hat[k]) / sa);
    const WaveletCoefficients c_hat(layout, std::move(values));
    const Field u_hat = inverse_dwt(c_hat);

    SpdeParams pi = p;
    if (item.forcing) pi.forcing = ForcingSpec::prescribed(*item.forcing);
    // Penalties on the denoised estimate are weighted by abar^2. Its error is
    // (sigma / sqrt(abar)) W^-1 (eps - eps_hat) and the advection term is
    // quadratic in it, so the unweighted residual grows like abar^-2 as tau -> 1.
    const double weight = sa * sa * sa * sa;
    r.phys = weight * residual_energy(item.u_prev, u_hat, item.dt, pi);
    const bool bc_field =
        item.bc && item.bc->target == BoundaryCondition::Target::Field;
    if (item.bc)
      r.bc = weight * (bc_field ? boundary_loss(u_hat, *item.bc) : boundary_loss(c_hat, *item.bc));

    if (!grad) return;
    // dL/d eps_hat; the denoised coefficients move by -s/sa per unit of eps_hat.
    std::vector<double> upstream(eps_hat.size());
    for (std::size_t k = 0; k < eps_hat.size(); ++k)
      upstream[k] = 2.0 * (eps_hat[k] - noised.eps[k]);
    const double chain = -weight * s / sa;
    if (weights.lambda_r > 0.0) {
      const Field gu = residual_energy_gradient(item.u_prev, u_hat, item.dt, pi);
      const auto gc = forward_dwt(gu, setup.family, setup.levels);
      const auto v = gc.values();
      for (std::size_t k = 0; k < upstream.size(); ++k)
        upstream[k] += weights.lambda_r * chain * v[prefix + k];
    }
    if (item.bc && weights.lambda_b > 0.0) {
      std::vector<double> gc;
      if (bc_field) {
        const auto gu = masked_mse_gradient(u_hat.data(), *item.bc);
        const Field gfield(u_hat.grid(), u_hat.channels(), gu);
        const auto w = forward_dwt(gfield, setup.family, setup.levels);
        gc.assign(w.values().begin(), w.values().end());
      } else {
        gc = masked_mse_gradient(c_hat.values(), *item.bc);
      }
      for (std::size_t k = 0; k < upstream.size(); ++k)
        upstream[k] += weights.lambda_b * chain * gc[prefix + k];
    }
    r.grad.assign(n_params, 0.0);
    model.backward(in, upstream, r.grad);
  });

  std::sort(results.begin(), results.end(),
            [](const ItemResult& a, const ItemResult& b) { return a.seed < b.seed; });
  LossParts parts;
  for (const auto& r : results) {
    parts.diff += r.diff;
    parts.phys += r.phys;
    parts.bc += r.bc;
  }
  const double count = static_cast<double>(batch.size());
  parts.diff /= count;
  parts.phys /= count;
  parts.bc /= count;
  parts.total = parts.diff + weights.lambda_r * parts.phys + weights.lambda_b * parts.bc;
  if (grad) {
    grad->assign(n_params, 0.0);
    for (const auto& r : results)
      for (std::size_t k = 0; k < n_params; ++k) (*grad)[k] += r.grad[k] / count;
  }
  return parts;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 0 || batch_size < 1 || dataset_size < 1)
    throw std::invalid_argument("training counts must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(viscosity > 0.0)) throw std::invalid_argument("viscosity must be > 0");
  if (hidden < 0) throw std::invalid_argument("hidden width must be >= 0");
  weights.validate();
  make_grid(grid.ndim, grid.n);
  CoefficientLayout probe(diffusion.family, grid, grid.ndim, diffusion.levels);
  if (diffusion.j_split < 0 || diffusion.j_split >= probe.j_max())
    throw std::invalid_argument("j_split must leave at least one fine scale");
}

Field point_mass_target(const Grid& grid) {
  static constexpr double kFlow[3] = {1.0, 0.5, 0.25};
  return sample_field(grid, grid.ndim,
                      [](std::span<const double>, int c) { return kFlow[c]; });
}

std::vector<TrainingItem> make_dataset(const TrainConfig& cfg) {
  if (cfg.dataset == TrainConfig::Dataset::Manufactured)
    return manufactured_dataset(cfg.dataset_size, cfg.grid, cfg.viscosity, cfg.seed,
                                cfg.data_dt);
  return point_mass_dataset(cfg.dataset_size, point_mass_target(cfg.grid));
}

TrainResult train_toy(const TrainConfig& cfg) {
  cfg.validate();
  DiffusionSetup setup = cfg.diffusion;
  if (cfg.diffuse_coarse) setup.j_split = 0;
  auto dataset = make_dataset(cfg);
  LocalScoreNet::Config mc{cfg.grid.ndim, cfg.grid.ndim, cfg.hidden,
                           static_cast<int>(dataset.front().params.size()),
                           setup.schedule};
  LocalScoreNet model(mc, derive_seed(cfg.seed, {0x1217ULL}));

  const CoefficientLayout layout(setup.family, cfg.grid, cfg.grid.ndim, setup.levels);
  const double n_fine = static_cast<double>(layout.size() - layout.prefix_size(setup.j_split));
  SpdeParams p;
  p.viscosity = cfg.viscosity;

  std::vector<LossRecord> history;
  std::vector<std::size_t> order(dataset.size());
  std::vector<double> grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, {0xe90cULL, std::uint64_t(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    LossRecord rec{epoch, 0, 0, 0, 0};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<TrainingItem> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(dataset[order[k]]);
      const auto parts = composite_loss(
          model, batch, cfg.weights, p, setup,
          derive_seed(cfg.seed, {std::uint64_t(epoch), std::uint64_t(batches)}), &grad);
      if (!std::isfinite(parts.total))
        throw InstabilityError("training loss became non-finite", epoch);
      auto theta = model.parameters();
      for (std::size_t k = 0; k < theta.size(); ++k)
        theta[k] -= cfg.learning_rate * grad[k] / n_fine;
      model.set_parameters(theta);
      rec.total += parts.total;
      rec.diff += parts.diff;
      rec.phys += parts.phys;
      rec.bc += parts.bc;
      ++batches;
    }
    rec.total /= batches;
    rec.diff /= batches;
    rec.phys /= batches;
    rec.bc /= batches;
    history.push_back(rec);
  }
  return {std::move(model), std::move(history), std::move(dataset), setup};
}

}  // namespace sgfm
