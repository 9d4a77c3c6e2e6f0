#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "sgfm/spectral.hpp"
#include "sgfm/training.hpp"
#include "sgfm/util.hpp"
#include "support.hpp"

using namespace sgfm;
using sgfm::testing::max_diff;

namespace {

/// Recovers the injected noise exactly for every item whose coarse
/// coefficients it has seen.
class LookupOracle final : public ScoreModel {
 public:
  LookupOracle(std::span<const TrainingItem> items, const DiffusionSetup& setup)
      : schedule_(setup.schedule) {
    for (const auto& item : items) {
      const auto split = split_scales(to_dsm_item(item, setup).c0, setup.j_split);
      fine_[hash_values(split.coarse)] = split.fine;
    }
  }

  using ScoreModel::predict;
  void predict(const ScoreInput& in, std::span<double> eps) const override {
    const auto& target = fine_.at(hash_values(in.coarse));
    const double sa = std::sqrt(schedule_.alpha_bar(in.tau));
    const double s = schedule_.sigma(in.tau);
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (in.fine[i] - sa * target[i]) / s;
  }

 private:
  NoiseSchedule schedule_;
  std::map<std::uint64_t, std::vector<double>> fine_;
};

DiffusionSetup haar_setup(int levels = 2, int j_split = 1) {
  DiffusionSetup s;
  s.levels = levels;
  s.j_split = j_split;
  return s;
}

SpdeParams flow_params(double nu = 0.1) {
  SpdeParams p;
  p.viscosity = nu;
  return p;
}

LocalScoreNet jittered_net(const Grid& g, std::uint64_t seed) {
  LocalScoreNet net({g.ndim, g.ndim, 3, 0, NoiseSchedule{}}, seed);
  auto theta = net.parameters();
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, 0.05);
  for (auto& t : theta) t += normal(rng);
  net.set_parameters(theta);
  return net;
}

}  // namespace

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW((LossWeights{0.0, 0.0}.validate()));
  EXPECT_THROW((LossWeights{-1.0, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((LossWeights{0.0, std::nan("")}.validate()), std::invalid_argument);
  EXPECT_THROW((LossWeights{std::numeric_limits<double>::infinity(), 0.0}.validate()),
               std::invalid_argument);
}

TEST(BoundaryLoss, Examples) {
  const Grid g = make_grid(2, 8);
  const Field ref = gaussian_field(g, 2, 1);
  const auto bc = plane_condition(ref, 1, 3);
  EXPECT_EQ(bc.active(), 16u);
  EXPECT_EQ(boundary_loss(ref, bc), 0.0);
  Field shifted = ref;
  for (auto& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(boundary_loss(shifted, bc), 1.0, 1e-14);
  // Only the masked plane matters.
  Field off_plane = ref;
  off_plane[0] += 5.0;  // (x=0, y=0) lies outside the y=3 plane
  EXPECT_EQ(boundary_loss(off_plane, bc), 0.0);
}

TEST(BoundaryLoss, QuadraticScaling) {
  const Grid g = make_grid(2, 8);
  const Field ref = gaussian_field(g, 2, 1);
  const Field delta = gaussian_field(g, 2, 2);
  const auto bc = plane_condition(ref);
  const double base = boundary_loss(ref + delta, bc);
  for (double a : {0.0, 0.5, -2.0, 3.0})
    EXPECT_NEAR(boundary_loss(ref + a * delta, bc), a * a * base, 1e-12 * std::max(1.0, a * a * base));
}

TEST(BoundaryLoss, CoefficientsAndTrajectories) {
  const Grid g = make_grid(2, 8);
  const Field ref = gaussian_field(g, 2, 3);
  const auto c = forward_dwt(ref, WaveletFamily::haar(), 2);
  const auto bc = coefficient_condition(c, 1);
  EXPECT_EQ(bc.active(), c.layout().prefix_size(1));
  EXPECT_EQ(boundary_loss(c, bc), 0.0);
  auto moved = c;
  moved.values().back() += 3.0;  // finest band, outside the mask
  EXPECT_EQ(boundary_loss(moved, bc), 0.0);
  moved.values()[0] += 2.0;
  EXPECT_NEAR(boundary_loss(moved, bc), 4.0 / bc.active(), 1e-14);

  Trajectory traj(0.1);
  traj.push(ref);
  traj.push(ref + gaussian_field(g, 2, 4));
  auto tbc = plane_condition(ref);
  EXPECT_EQ(boundary_loss(traj, tbc), 0.0);
  tbc.snapshot = 1;
  EXPECT_GT(boundary_loss(traj, tbc), 0.0);
  tbc.snapshot = 2;
  EXPECT_THROW(boundary_loss(traj, tbc), std::invalid_argument);
}

TEST(BoundaryLoss, RejectsIncompatibleMasks) {
  const Grid g = make_grid(2, 8);
  const Field ref = gaussian_field(g, 2, 3);
  const auto c = forward_dwt(ref, WaveletFamily::haar(), 2);
  EXPECT_THROW(boundary_loss(gaussian_field(g, 1, 1), plane_condition(ref)), std::invalid_argument);
  EXPECT_THROW(boundary_loss(ref, coefficient_condition(c, 0)), std::invalid_argument);
  EXPECT_THROW(boundary_loss(c, plane_condition(ref)), std::invalid_argument);
  auto empty = plane_condition(ref);
  std::fill(empty.mask.begin(), empty.mask.end(), 0);
  EXPECT_THROW(boundary_loss(ref, empty), std::invalid_argument);
  EXPECT_THROW(plane_condition(ref, 2, 0), std::invalid_argument);
}

TEST(TaylorGreen, Oracle) {
  const Grid g = make_grid(2, 32);
  const Field u0 = taylor_green(g, 0.1, 0.0);
  EXPECT_LT(max_abs(divergence(u0)), 1e-10);
  for (double t : {0.5, 2.0}) {
    const Field u = taylor_green(g, 0.1, t);
    EXPECT_NEAR(l2_norm(u), std::exp(-0.2 * t) * l2_norm(u0), 1e-10);
    EXPECT_LT(max_abs(divergence(u)), 1e-10);
  }
  EXPECT_EQ(taylor_green(g, 0.1, 0.0), taylor_green(g, 3.0, 0.0));
  // Pressure-free steady balance: the projected advection vanishes.
  EXPECT_LT(max_abs(helmholtz_project(advection(u0))), 1e-10);
  EXPECT_THROW(taylor_green(make_grid(3, 8), 0.1, 0.0), std::invalid_argument);
}

TEST(ManufacturedDataset, ResidualVanishes) {
  for (int ndim : {2, 3}) {
    const Grid g = make_grid(ndim, ndim == 2 ? 16 : 8);
    const SpdeParams p = flow_params(0.05);
    for (const auto& item : manufactured_dataset(4, g, 0.05, 9)) {
      SpdeParams pi = p;
      pi.forcing = ForcingSpec::prescribed(*item.forcing);
      EXPECT_LT(residual_energy(item.u_prev, item.u_next, item.dt, pi), 1e-9);
      EXPECT_LT(max_abs(divergence(item.u_next)), 1e-10);
      EXPECT_EQ(boundary_loss(item.u_next, *item.bc), 0.0);
    }
  }
}

TEST(ManufacturedDataset, SeededAndBandLimited) {
  const Grid g = make_grid(2, 16);
  const auto a = manufactured_dataset(3, g, 0.1, 5);
  const auto b = manufactured_dataset(3, g, 0.1, 5);
  const auto c = manufactured_dataset(3, g, 0.1, 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].u_prev, b[i].u_prev);
    EXPECT_EQ(a[i].u_next, b[i].u_next);
    EXPECT_EQ(*a[i].forcing, *b[i].forcing);
    EXPECT_NE(a[i].u_next, c[i].u_next);
    EXPECT_LT(spectral_energy_fraction_above(a[i].u_prev, g.n / 4), 1e-28);
    EXPECT_LT(spectral_energy_fraction_above(a[i].u_next, g.n / 4), 1e-28);
  }
  EXPECT_THROW(manufactured_dataset(0, g, 0.1, 5), std::invalid_argument);
}

TEST(CompositeLoss, ReducesToDsm) {
  const Grid g = make_grid(2, 8);
  const auto data = manufactured_dataset(5, g, 0.1, 2);
  const auto setup = haar_setup();
  const auto net = jittered_net(g, 3);
  const auto parts = composite_loss(net, data, {0.0, 0.0}, flow_params(), setup, 17);
  std::vector<DsmItem> dsm;
  for (const auto& item : data) dsm.push_back(to_dsm_item(item, setup));
  EXPECT_EQ(parts.total, dsm_loss(net, dsm, setup.schedule, 17, setup.j_split));
  EXPECT_EQ(parts.total, parts.diff);
}

TEST(CompositeLoss, OracleOnManufacturedDataIsZero) {
  const Grid g = make_grid(2, 16);
  const auto data = manufactured_dataset(6, g, 0.1, 4);
  const auto setup = haar_setup(3, 1);
  const LookupOracle oracle(data, setup);
  const auto parts = composite_loss(oracle, data, {0.1, 1.0}, flow_params(), setup, 8);
  EXPECT_LT(parts.total, 1e-8);
  EXPECT_LT(parts.phys, 1e-9);
}

TEST(CompositeLoss, DecompositionAndLinearity) {
  const Grid g = make_grid(2, 8);
  const auto data = manufactured_dataset(4, g, 0.1, 6);
  const auto setup = haar_setup();
  const auto net = jittered_net(g, 5);
  for (double lr : {0.1, 1.0, 10.0}) {
    const auto a = composite_loss(net, data, {lr, 0.7}, flow_params(), setup, 3);
    const auto b = composite_loss(net, data, {2 * lr, 0.7}, flow_params(), setup, 3);
    EXPECT_GE(a.diff, 0.0);
    EXPECT_GE(a.phys, 0.0);
    EXPECT_GE(a.bc, 0.0);
    EXPECT_NEAR(a.total, a.diff + lr * a.phys + 0.7 * a.bc, 1e-12 * a.total);
    EXPECT_NEAR(b.total - a.total, lr * a.phys, 1e-12 * b.total);
  }
}

TEST(CompositeLoss, CoefficientConditionsAndErrors) {
  const Grid g = make_grid(2, 8);
  auto data = manufactured_dataset(2, g, 0.1, 6);
  const auto setup = haar_setup();
  for (auto& item : data)
    item.bc = coefficient_condition(to_dsm_item(item, setup).c0, setup.j_split);
  const auto net = jittered_net(g, 5);
  // The coarse part is teacher-forced, so a coarse-scale condition holds exactly.
  EXPECT_EQ(composite_loss(net, data, {0.1, 1.0}, flow_params(), setup, 1).bc, 0.0);
  EXPECT_THROW(composite_loss(net, std::span<const TrainingItem>{}, {}, flow_params(), setup, 1),
               std::invalid_argument);
  EXPECT_THROW(composite_loss(net, data, {-1.0, 0.0}, flow_params(), setup, 1),
               std::invalid_argument);
}

TEST(CompositeLoss, ParameterGradientMatchesFiniteDifferences) {
  const Grid g = make_grid(2, 8);
  auto data = manufactured_dataset(2, g, 0.1, 12);
  const auto pm = point_mass_dataset(1, point_mass_target(g));
  const auto setup = haar_setup();
  for (auto& item : data) item.bc = plane_condition(item.u_next + 0.3 * item.u_prev);
  data.push_back(pm.front());
  data.back().bc = coefficient_condition(forward_dwt(data.back().u_next, setup.family, setup.levels), 2);
  for (auto& v : data.back().bc->values) v += 0.1;
  const LossWeights w{0.3, 1.0};
  const auto net = jittered_net(g, 21);
  std::vector<double> grad;
  composite_loss(net, data, w, flow_params(), setup, 5, &grad);
  const auto theta = net.parameters();
  auto loss_at = [&](const std::vector<double>& th) {
    LocalScoreNet probe = net;
    probe.set_parameters(th);
    return composite_loss(probe, data, w, flow_params(), setup, 5).total;
  };
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = 1e-5;
    auto tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (loss_at(tp) - loss_at(tm)) / (2 * h);
    num += (fd - grad[i]) * (fd - grad[i]);
    den += fd * fd;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-4);
}

namespace {

TrainConfig point_mass_config() {
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.grid = make_grid(2, 16);
  cfg.epochs = 4;
  return cfg;
}

}  // namespace

TEST(TrainToy, ZeroEpochsReturnsInitialModel) {
  auto cfg = point_mass_config();
  cfg.epochs = 0;
  const auto res = train_toy(cfg);
  EXPECT_TRUE(res.history.empty());
  const LocalScoreNet fresh({2, 2, cfg.hidden, 0, cfg.diffusion.schedule},
                            derive_seed(cfg.seed, {0x1217ULL}));
  EXPECT_EQ(res.model.parameters(), fresh.parameters());
}

TEST(TrainToy, DeterministicHistory) {
  auto cfg = point_mass_config();
  cfg.dataset = TrainConfig::Dataset::Manufactured;
  cfg.grid = make_grid(2, 8);
  cfg.epochs = 3;
  cfg.batch_size = 3;
  const auto a = train_toy(cfg), b = train_toy(cfg);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].total, b.history[i].total);
    EXPECT_EQ(a.history[i].phys, b.history[i].phys);
  }
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
}

TEST(TrainToy, ValidatesConfig) {
  auto cfg = point_mass_config();
  cfg.batch_size = 0;
  EXPECT_THROW(train_toy(cfg), std::invalid_argument);
  cfg = point_mass_config();
  cfg.diffusion.j_split = cfg.diffusion.levels;
  EXPECT_THROW(train_toy(cfg), std::invalid_argument);
}

TEST(TrainToy, DivergenceReportsEpoch) {
  auto cfg = point_mass_config();
  cfg.learning_rate = 1e12;
  cfg.epochs = 50;
  try {
    train_toy(cfg);
    FAIL() << "expected divergence";
  } catch (const InstabilityError& e) {
    EXPECT_GE(e.step(), 0);
    EXPECT_LT(e.step(), 50);
  }
}

TEST(TrainToy, PointMassApproachesAnalyticPredictor) {
  auto cfg = point_mass_config();
  cfg.epochs = 60;
  const auto res = train_toy(cfg);
  // The target is a uniform flow, so its fine coefficients vanish and the
  // optimal predictor is c / sigma.
  std::vector<DsmItem> eval;
  for (const auto& item : res.dataset) eval.push_back(to_dsm_item(item, res.diffusion));
  const auto fine = split_scales(eval.front().c0, res.diffusion.j_split).fine;
  for (double v : fine) ASSERT_NEAR(v, 0.0, 1e-12);
  const PointMassScoreModel optimum(res.diffusion.schedule, fine);
  const double before = prediction_mse(
      LocalScoreNet(res.model.config(), derive_seed(cfg.seed, {0x1217ULL})), optimum, eval,
      res.diffusion.schedule, 99, res.diffusion.j_split);
  const double after =
      prediction_mse(res.model, optimum, eval, res.diffusion.schedule, 99, res.diffusion.j_split);
  EXPECT_LT(after, 0.1);
  EXPECT_LT(after, before);
  EXPECT_LT(res.history.back().diff, res.history.front().diff);
}

TEST(TrainToy, PhysicsTermConsistentWithDenoising) {
  // On manufactured data the residual vanishes at the denoising optimum, so
  // the physics gradient must not pull the denoising loss upward.
  auto cfg = point_mass_config();
  cfg.dataset = TrainConfig::Dataset::Manufactured;
  cfg.grid = make_grid(2, 8);
  cfg.epochs = 30;
  cfg.learning_rate = 0.005;
  cfg.weights.lambda_r = 0.0;
  const auto a = train_toy(cfg);
  cfg.weights.lambda_r = 10.0;
  const auto b = train_toy(cfg);
  const double da = a.history.back().diff, db = b.history.back().diff;
  EXPECT_LT(da, a.history.front().diff);
  EXPECT_LT(db, b.history.front().diff);
  EXPECT_LT(db, 1.05 * da);
}
