// Command-line front end: transform, project, simulate, sample, train,
// bench, diag.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgfm/bench.hpp"
#include "sgfm/config.hpp"
#include "sgfm/diffusion.hpp"
#include "sgfm/flow.hpp"
#include "sgfm/io.hpp"
#include "sgfm/spectral.hpp"
#include "sgfm/training.hpp"
#include "sgfm/util.hpp"
#include "sgfm/wavelet.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sgfm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInstability = 3;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "sgfm_out";
};

RunConfig resolve(const Common& common) {
  RunConfig cfg = common.config.empty() ? parse_config(R"({"version": 1})")
                                        : load_config(common.config);
  if (common.seed) {
    cfg.seed = *common.seed;
    cfg.train.seed = cfg.seed;
    cfg.sample.sampler.seed = cfg.seed;
  }
  return cfg;
}

fs::path out_dir(const Common& common) {
  fs::path dir(common.out);
  fs::create_directories(dir);
  return dir;
}

void emit(const ordered_json& j) { std::cout << j.dump(2) << std::endl; }

double relative_error(const Field& a, const Field& b) {
  if (!a.same_shape(b)) throw FormatError("reference has a different shape");
  const double ref = grid_norm(b);
  const double diff = grid_norm(a - b);
  return ref > 0.0 ? diff / ref : diff;
}

// ---------------------------------------------------------------------------

struct TransformArgs {
  std::string input;
  std::string family = "haar";
  int levels = -1;
  bool inverse = false;
  std::string reference;
};

int run_transform(const Common& common, const TransformArgs& a) {
  (void)resolve(common);
  const Field in = read_field(a.input);
  WaveletFamily family = WaveletFamily::haar();
  try {
    family = WaveletFamily::from_name(a.family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const int levels = a.levels < 0 ? ilog2(in.grid().n) : a.levels;
  Field out = a.inverse ? inverse_dwt(from_packed_field(in, family, levels))
                        : to_packed_field(forward_dwt(in, family, levels));
  const fs::path path = out_dir(common) / (a.inverse ? "reconstructed.sgff" : "coefficients.sgff");
  write_field(path, out);
  ordered_json j;
  j["output"] = path.string();
  j["direction"] = a.inverse ? "inverse" : "forward";
  j["family"] = family.name();
  j["levels"] = levels;
  j["input_norm"] = grid_norm(in);
  j["output_norm"] = grid_norm(out);
  if (!a.reference.empty()) j["relative_error"] = relative_error(out, read_field(a.reference));
  emit(j);
  return kExitOk;
}

int run_project(const Common& common, const std::string& input) {
  (void)resolve(common);
  const Field in = read_field(input);
  if (in.channels() % in.grid().ndim != 0)
    throw ConfigError("project needs a vector field (channels a multiple of ndim)");
  const Field out = helmholtz_project(in);
  const fs::path path = out_dir(common) / "projected.sgff";
  write_field(path, out);
  ordered_json j;
  j["output"] = path.string();
  j["max_divergence_before"] = max_abs(divergence(in));
  j["max_divergence_after"] = max_abs(divergence(out));
  j["input_norm"] = grid_norm(in);
  j["output_norm"] = grid_norm(out);
  emit(j);
  return kExitOk;
}

Field initial_field(const RunConfig& cfg) {
  const auto& init = cfg.simulate.initial;
  const Grid& grid = cfg.grid;
  if (init.kind == "file") {
    Field f = read_field(init.path);
    if (f.grid() != grid || f.channels() != grid.ndim)
      throw ConfigError("initial field does not match the configured grid");
    return f;
  }
  if (init.kind == "taylor_green") {
    if (grid.ndim != 2) throw ConfigError("taylor_green initial condition needs ndim = 2");
    return init.amplitude * taylor_green(grid, cfg.flow.viscosity, 0.0);
  }
  Field f = helmholtz_project(band_limit(
      gaussian_field(grid, grid.ndim, derive_seed(cfg.seed, {0x1417ULL})), grid.n / 4));
  const double rms = l2_norm(f) / std::sqrt(std::pow(2.0 * M_PI, grid.ndim));
  if (rms > 0.0) f *= init.amplitude / rms;
  return f;
}

int run_simulate(const Common& common) {
  const RunConfig cfg = resolve(common);
  const Field u0 = initial_field(cfg);
  const Trajectory full = simulate(u0, cfg.flow, cfg.simulate.steps, cfg.seed);
  const int every = cfg.simulate.save_every;
  Trajectory kept(full.dt() * every);
  for (std::size_t i = 0; i < full.size(); i += every) kept.push(full[i].field);
  const fs::path dir = out_dir(common);
  write_trajectory(dir / "trajectory", kept);
  write_file(dir / "trajectory" / "flow.json", flow_params_json(cfg.flow));
  ordered_json j;
  j["trajectory"] = (dir / "trajectory").string();
  j["steps"] = cfg.simulate.steps;
  j["snapshots"] = kept.size();
  j["final_time"] = kept.back().time;
  j["initial_energy"] = std::pow(l2_norm(full.front().field), 2);
  j["final_energy"] = std::pow(l2_norm(full.back().field), 2);
  emit(j);
  return kExitOk;
}

int run_diag(const Common& common, const std::string& input) {
  const RunConfig cfg = resolve(common);
  const fs::path dir(input);
  const Trajectory traj = read_trajectory(dir);
  SpdeParams p = cfg.flow;
  if (common.config.empty() && fs::exists(dir / "flow.json"))
    p = parse_flow_params(read_file(dir / "flow.json"));
  const EnergyReport rep = energy_diagnostics(traj, p);
  const fs::path out = out_dir(common);
  write_energy_csv(out / "energy.csv", rep);

  const double T = traj.back().time - traj.front().time;
  ordered_json j;
  j["snapshots"] = traj.size();
  j["final_time"] = traj.back().time;
  j["initial_energy"] = rep.kinetic_energy.front();
  j["final_energy"] = rep.kinetic_energy.back();
  j["energy_ratio"] = rep.kinetic_energy.back() / rep.kinetic_energy.front();
  j["taylor_green_energy_ratio"] = std::exp(-4.0 * p.viscosity * T);
  bool bound_holds = true;
  for (std::size_t i = 0; i < rep.lhs.size(); ++i)
    bound_holds = bound_holds && rep.lhs[i] <= rep.bound_rhs[i];
  j["energy_bound_holds"] = bound_holds;
  if (traj.front().field.grid().ndim == 2 && traj.front().field.channels() == 2 &&
      traj.size() >= 3) {
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < traj.size(); ++i)
      worst = std::max(worst, max_abs(vorticity_residual(traj, p, i)));
    j["max_vorticity_residual"] = worst;
  }
  j["energy_csv"] = (out / "energy.csv").string();
  emit(j);
  return kExitOk;
}

int run_train(const Common& common) {
  const RunConfig cfg = resolve(common);
  const TrainResult result = train_toy(cfg.train);
  const fs::path dir = out_dir(common);
  write_checkpoint(dir / "checkpoint.sgfc", make_checkpoint(result.model, result.diffusion));
  write_loss_csv(dir / "loss.csv", result.history);
  ordered_json j;
  j["checkpoint"] = (dir / "checkpoint.sgfc").string();
  j["epochs"] = result.history.size();
  j["parameters"] = result.model.parameter_count();
  if (!result.history.empty()) {
    j["initial_loss"] = result.history.front().total;
    j["final_loss"] = result.history.back().total;
  }
  emit(j);
  return kExitOk;
}

int run_sample(const Common& common, std::string checkpoint) {
  RunConfig cfg = resolve(common);
  if (checkpoint.empty()) checkpoint = cfg.sample.checkpoint;
  if (checkpoint.empty()) throw ConfigError("sample needs a checkpoint (--checkpoint or sample.checkpoint)");
  const Checkpoint ck = read_checkpoint(checkpoint);
  const LocalScoreNet model = ck.make_model();
  const Grid grid = cfg.sample.conditioning.empty()
                        ? cfg.grid
                        : read_field(cfg.sample.conditioning).grid();
  if (grid.ndim != ck.model.ndim)
    throw ConfigError("checkpoint dimension does not match the sampling grid");
  const Field cond_field = cfg.sample.conditioning.empty()
                               ? point_mass_target(grid)
                               : read_field(cfg.sample.conditioning);
  SamplingContext ctx{forward_dwt(cond_field, ck.diffusion.family, ck.diffusion.levels),
                      std::nullopt, cfg.sample.dt, {}};
  if (!cfg.sample.previous.empty()) ctx.previous = read_field(cfg.sample.previous);
  if (ck.model.param_dim > 0) ctx.params.assign(ck.model.param_dim, 0.0);
  SamplerConfig sc = cfg.sample.sampler;
  sc.j_split = cfg.sample.j_split.value_or(ck.diffusion.j_split);
  sc.schedule = ck.model.schedule;
  const Field out = hybrid_sample(model, sc, cfg.flow, ctx);
  const fs::path path = out_dir(common) / "sample.sgff";
  write_field(path, out);
  ordered_json j;
  j["output"] = path.string();
  j["norm"] = l2_norm(out);
  j["conditioning_norm"] = l2_norm(cond_field);
  j["max_divergence"] = max_abs(divergence(out));
  emit(j);
  return kExitOk;
}

int run_bench(const Common& common, const std::vector<std::string>& ops_arg) {
  const RunConfig cfg = resolve(common);
  std::vector<std::string> ops = ops_arg.empty() ? cfg.bench.operations : ops_arg;
  if (ops.empty()) ops = bench_operations();
  BenchOptions opt;
  opt.ndim = cfg.bench.ndim;
  opt.repetitions = cfg.bench.repetitions;
  opt.warmup = cfg.bench.warmup;
  std::vector<BenchReport> reports;
  ordered_json summary = ordered_json::object();
  for (const auto& op : ops) {
    const auto res = cfg.bench.resolutions.empty() || op == "quadratic"
                         ? default_bench_resolutions(op)
                         : cfg.bench.resolutions;
    try {
      reports.push_back(bench_scaling(op, res, cfg.seed, opt));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    summary[op] = reports.back().slope;
    std::cerr << op << ": slope " << reports.back().slope << std::endl;
  }
  const fs::path dir = out_dir(common);
  write_bench_csv(dir / "bench.csv", reports);
  write_bench_json(dir / "bench.json", reports);
  emit({{"slopes", summary}, {"csv", (dir / "bench.csv").string()},
        {"json", (dir / "bench.json").string()}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral generative flow engine"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed (overrides the config)");
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  };

  TransformArgs targs;
  auto* transform = app.add_subcommand("transform", "Wavelet transform of a field file");
  add_common(transform);
  transform->add_option("input", targs.input, "Input field file")->required();
  transform->add_option("--family", targs.family, "haar or db4")->capture_default_str();
  transform->add_option("--levels", targs.levels, "Decomposition levels (default log2 n)");
  transform->add_flag("--inverse", targs.inverse, "Input is a packed coefficient image");
  transform->add_option("--reference", targs.reference,
                        "Field file to compare the output against");

  std::string project_input;
  auto* project = app.add_subcommand("project", "Divergence-free projection of a field file");
  add_common(project);
  project->add_option("input", project_input, "Input field file")->required();

  auto* sim = app.add_subcommand("simulate", "Integrate the stochastic flow");
  add_common(sim);

  std::string checkpoint;
  auto* sample = app.add_subcommand("sample", "Hybrid sampling from a checkpoint");
  add_common(sample);
  sample->add_option("--checkpoint", checkpoint, "Checkpoint file");

  auto* train = app.add_subcommand("train", "Train the toy score model");
  add_common(train);

  std::vector<std::string> bench_ops;
  auto* bench = app.add_subcommand("bench", "Complexity scaling benchmarks");
  add_common(bench);
  bench->add_option("--op", bench_ops, "Operation(s) to benchmark");

  std::string diag_input;
  auto* diag = app.add_subcommand("diag", "Energy and vorticity diagnostics");
  add_common(diag);
  diag->add_option("input", diag_input, "Trajectory directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*transform) return run_transform(common, targs);
    if (*project) return run_project(common, project_input);
    if (*sim) return run_simulate(common);
    if (*sample) return run_sample(common, checkpoint);
    if (*train) return run_train(common);
    if (*bench) return run_bench(common, bench_ops);
    if (*diag) return run_diag(common, diag_input);
  } catch (const InstabilityError& e) {
    std::cerr << "error: numerical instability: " << e.what() << std::endl;
    return kExitInstability;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitConfig;
}
