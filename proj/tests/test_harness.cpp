#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sgfm/bench.hpp"
#include "sgfm/config.hpp"
#include "sgfm/io.hpp"
#include "sgfm/util.hpp"

using namespace sgfm;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("sgfm_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST(FieldFile, RoundTripIsBitExact) {
  for (int ndim : {2, 3}) {
    const Field f = gaussian_field(make_grid(ndim, 8), 3, 17);
    const std::string bytes = encode_field(f);
    EXPECT_EQ(bytes.size(), 4 + 4 + 1 + 4u * ndim + 4 + 8 * f.size());
    const Field back = decode_field(bytes);
    EXPECT_EQ(back, f);
    EXPECT_EQ(encode_field(back), bytes);
  }
}

TEST(FieldFile, HeaderLayout) {
  Field f(make_grid(2, 4), 2);
  f[0] = 1.0;
  const std::string b = encode_field(f);
  EXPECT_EQ(b.substr(0, 4), "SGFF");
  EXPECT_EQ(b[4], 1);  // version, little-endian
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[8], 2);  // ndim
  EXPECT_EQ(b[9], 4);  // dims[0]
  EXPECT_EQ(b[17], 2);  // channels
  // 1.0 = 0x3ff0000000000000, little-endian payload
  EXPECT_EQ(static_cast<unsigned char>(b[21 + 7]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(b[21 + 6]), 0xf0);
}

TEST(FieldFile, DistinctErrors) {
  const std::string good = encode_field(gaussian_field(make_grid(2, 4), 1, 1));
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_field(magic), MagicMismatchError);
  std::string version = good;
  version[4] = 2;
  EXPECT_THROW(decode_field(version), VersionMismatchError);
  EXPECT_THROW(decode_field(good.substr(0, good.size() - 8)), TruncatedPayloadError);
  EXPECT_THROW(decode_field(good.substr(0, 6)), TruncatedPayloadError);
  EXPECT_THROW(decode_field(good + "x"), TruncatedPayloadError);
  EXPECT_THROW(decode_field(""), MagicMismatchError);
  std::string ndim = good;
  ndim[8] = 4;
  EXPECT_THROW(decode_field(ndim), FormatError);
}

TEST(FieldFile, FilesOnDisk) {
  TempDir dir;
  const Field f = gaussian_field(make_grid(3, 4), 3, 2);
  write_field(dir.path() / "f.sgff", f);
  EXPECT_EQ(read_field(dir.path() / "f.sgff"), f);
  EXPECT_THROW(read_field(dir.path() / "missing.sgff"), std::runtime_error);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  DiffusionSetup setup;
  setup.family = WaveletFamily::daubechies4();
  setup.levels = 3;
  setup.j_split = 1;
  setup.schedule = {0.2, 15.0};
  LocalScoreNet net({2, 2, 3, 1, setup.schedule}, 9);
  auto theta = net.parameters();
  theta[5] = 0.123456789;
  net.set_parameters(theta);

  const auto ck = make_checkpoint(net, setup);
  const auto back = decode_checkpoint(encode_checkpoint(ck));
  EXPECT_EQ(back.parameters, theta);
  EXPECT_EQ(back.diffusion.family, setup.family);
  EXPECT_EQ(back.diffusion.levels, 3);
  EXPECT_EQ(back.diffusion.j_split, 1);
  EXPECT_EQ(back.diffusion.schedule.beta_max, 15.0);
  EXPECT_EQ(back.model.param_dim, 1);

  const Grid g = make_grid(2, 16);
  const CoefficientLayout layout(setup.family, g, 2, 3);
  const auto c = forward_dwt(gaussian_field(g, 2, 3), setup.family, 3);
  const auto split = split_scales(c, 1);
  const std::vector<double> lam{0.4};
  const ScoreInput in{&layout, 1, split.fine, split.coarse, lam, 0.6};
  EXPECT_EQ(back.make_model().predict(in), net.predict(in));

  std::string bad = encode_checkpoint(ck);
  EXPECT_THROW(decode_checkpoint(bad.substr(0, bad.size() - 3)), TruncatedPayloadError);
  bad[0] = 'Q';
  EXPECT_THROW(decode_checkpoint(bad), MagicMismatchError);
  EXPECT_THROW(decode_checkpoint(encode_field(Field(g, 1))), MagicMismatchError);
}

TEST(TrajectoryDir, RoundTrip) {
  TempDir dir;
  Trajectory t(0.25);
  const Grid g = make_grid(2, 8);
  t.push(gaussian_field(g, 2, 1), 1.5);
  t.push(gaussian_field(g, 2, 2));
  t.push(gaussian_field(g, 2, 3));
  write_trajectory(dir.path() / "traj", t);
  EXPECT_TRUE(fs::exists(dir.path() / "traj" / "snap_00002.sgff"));
  const auto back = read_trajectory(dir.path() / "traj");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.dt(), 0.25);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].field, t[i].field);
    EXPECT_EQ(back[i].time, t[i].time);
  }
  EXPECT_THROW(read_trajectory(dir.path() / "nothing"), std::runtime_error);
}

TEST(Csv, Headers) {
  TempDir dir;
  write_loss_csv(dir.path() / "loss.csv", {{0, 1.0, 0.5, 2.0, 0.3}});
  EXPECT_EQ(first_line(dir.path() / "loss.csv"), "epoch,total,diff,phys,bc");
  EnergyReport rep;
  rep.times = {0.0};
  rep.kinetic_energy = rep.enstrophy = rep.dissipation = rep.lhs = rep.bound_rhs = {1.0};
  write_energy_csv(dir.path() / "energy.csv", rep);
  EXPECT_EQ(first_line(dir.path() / "energy.csv"),
            "time,kinetic_energy,enstrophy,dissipation,lhs,bound_rhs");
}

TEST(Config, DefaultsFromMinimalDocument) {
  const auto cfg = parse_config(R"({"version": 1})");
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.grid.n, 32);
  EXPECT_EQ(cfg.flow.viscosity, 0.1);
  EXPECT_EQ(cfg.flow.dt, 1e-3);
  EXPECT_EQ(cfg.train.weights.lambda_r, 0.1);
  EXPECT_EQ(cfg.train.weights.lambda_b, 1.0);
  EXPECT_EQ(cfg.bench.repetitions, 7);
}

TEST(Config, FullDocument) {
  const auto cfg = parse_config(R"({
    "version": 1, "seed": 42,
    "grid": {"ndim": 2, "n": 16},
    "flow": {"viscosity": 0.2, "noise_amplitude": 0.01, "dt": 0.002,
             "forcing": {"kind": "kolmogorov", "params": [1.0, 4.0]}},
    "simulate": {"steps": 10, "save_every": 2, "initial": {"kind": "random", "amplitude": 0.5}},
    "sample": {"steps": 20, "mode": "sde", "j_split": 2, "correction_strength": 0.001,
               "corrections_per_step": 1},
    "train": {"epochs": 3, "dataset": "manufactured", "lambda_r": 0.0, "family": "db4",
              "grid": {"ndim": 2, "n": 8}},
    "bench": {"operations": ["dwt"], "resolutions": [8, 16, 32, 64, 128], "repetitions": 9}
  })");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.grid.n, 16);
  EXPECT_EQ(cfg.flow.forcing.kind, ForcingSpec::Kind::Analytic);
  EXPECT_EQ(cfg.flow.forcing.params[1], 4.0);
  EXPECT_EQ(cfg.simulate.save_every, 2);
  EXPECT_EQ(cfg.simulate.initial.kind, "random");
  EXPECT_EQ(cfg.sample.sampler.mode, ReverseMode::SDE);
  EXPECT_EQ(cfg.sample.j_split.value(), 2);
  EXPECT_EQ(cfg.train.dataset, TrainConfig::Dataset::Manufactured);
  EXPECT_EQ(cfg.train.diffusion.family, WaveletFamily::daubechies4());
  EXPECT_EQ(cfg.train.grid.n, 8);
  EXPECT_EQ(cfg.bench.repetitions, 9);
}

TEST(Config, RejectsUnknownKeysAndVersions) {
  EXPECT_THROW(parse_config(R"({})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 2})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "colour": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "flow": {"viscocity": 0.1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "flow": {"forcing": {"kind": "zero", "amp": 1}}})"),
               ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "simulate": {"initial": {"shape": "x"}}})"),
               ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "grid": {"n": 12}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "flow": {"viscosity": "thick"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "flow": {"viscosity": -1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 1, "sample": {"mode": "both"}})"), ConfigError);
  EXPECT_THROW(parse_config("not json"), ConfigError);
}

TEST(Config, FlowParamsRoundTrip) {
  SpdeParams p;
  p.viscosity = 0.3;
  p.noise_amplitude = 0.02;
  p.dt = 5e-4;
  p.forcing = ForcingSpec::analytic("damping", {0.5});
  const auto back = parse_flow_params(flow_params_json(p));
  EXPECT_EQ(back.viscosity, 0.3);
  EXPECT_EQ(back.noise_amplitude, 0.02);
  EXPECT_EQ(back.dt, 5e-4);
  EXPECT_EQ(back.forcing.expression, "damping");
  EXPECT_EQ(back.forcing.params, std::vector<double>{0.5});
  SpdeParams prescribed;
  prescribed.forcing = ForcingSpec::prescribed(Field(make_grid(2, 4), 2));
  EXPECT_THROW(flow_params_json(prescribed), ConfigError);
}

TEST(Bench, SlopeFitRecoversPowerLaw) {
  const std::vector<std::size_t> sizes{64, 256, 1024, 4096, 16384};
  std::vector<double> t;
  for (auto n : sizes) t.push_back(3e-9 * std::pow(static_cast<double>(n), 1.5));
  EXPECT_NEAR(fit_loglog_slope(sizes, t, std::vector<bool>(5, false)), 1.5, 1e-12);
  // Excluded entries do not influence the fit.
  t[0] = 1.0;
  EXPECT_NEAR(fit_loglog_slope(sizes, t, {true, false, false, false, false}), 1.5, 1e-12);
  EXPECT_THROW(fit_loglog_slope(sizes, t, {true, true, true, true, false}), std::runtime_error);
}

TEST(Bench, Median) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Bench, ValidatesRequests) {
  const std::vector<int> ok{8, 16, 32, 64, 128};
  EXPECT_THROW(bench_scaling("fft", ok, 0), std::invalid_argument);
  EXPECT_THROW(bench_scaling("dwt", {8, 16, 32, 64}, 0), std::invalid_argument);
  EXPECT_THROW(bench_scaling("dwt", {8, 16, 32, 128, 64}, 0), std::invalid_argument);
  EXPECT_THROW(bench_scaling("dwt", {8, 16, 32, 64, 96}, 0), std::invalid_argument);
  BenchOptions few;
  few.repetitions = 5;
  EXPECT_THROW(bench_scaling("dwt", ok, 0, few), std::invalid_argument);
  for (const auto& op : bench_operations()) EXPECT_GE(default_bench_resolutions(op).size(), 5u);
}

TEST(Bench, ReportStructureAndFiles) {
  TempDir dir;
  const auto rep = bench_scaling("dwt", {8, 16, 32, 64, 128}, 1);
  EXPECT_EQ(rep.operation, "dwt");
  ASSERT_EQ(rep.sizes.size(), 5u);
  EXPECT_EQ(rep.sizes.back(), 128u * 128u);
  EXPECT_EQ(rep.repetitions, 7);
  EXPECT_EQ(rep.warmup, 2);
  for (std::size_t i = 0; i < rep.sizes.size(); ++i) {
    ASSERT_EQ(rep.samples[i].size(), 7u);
    EXPECT_EQ(rep.medians[i], median(rep.samples[i]));
    EXPECT_EQ(rep.excluded[i], rep.medians[i] < 50e-6);
  }
  write_bench_csv(dir.path() / "bench.csv", {rep});
  write_bench_json(dir.path() / "bench.json", {rep});
  EXPECT_EQ(first_line(dir.path() / "bench.csv").substr(0, 10), "operation,");
  std::ifstream in(dir.path() / "bench.json");
  const auto j = nlohmann::json::parse(in);
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0]["operation"], "dwt");
  EXPECT_EQ(j[0]["samples"].size(), 5u);
}

TEST(ThreadLimit, ScopedCap) {
  const int before = max_threads();
  {
    ScopedThreadLimit one(1);
    EXPECT_EQ(max_threads(), 1);
  }
  EXPECT_EQ(max_threads(), before);
}
