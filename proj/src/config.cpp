#include "sgfm/config.hpp"

#include <algorithm>
#include <initializer_list>

#include <json.hpp>

#include "sgfm/bench.hpp"
#include "sgfm/io.hpp"

namespace sgfm {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

Grid parse_grid(const json& j, const std::string& where) {
  check_keys(j, {"ndim", "n"}, where);
  int ndim = 2, n = 0;
  read(j, "ndim", ndim, where);
  read(j, "n", n, where);
  try {
    return make_grid(ndim, n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

ForcingSpec parse_forcing(const json& j) {
  check_keys(j, {"kind", "params"}, "flow.forcing");
  std::string kind = "zero";
  std::vector<double> params;
  read(j, "kind", kind, "flow.forcing");
  read(j, "params", params, "flow.forcing");
  if (kind == "zero") {
    if (!params.empty()) throw ConfigError("zero forcing takes no params");
    return ForcingSpec::zero();
  }
  try {
    return ForcingSpec::analytic(kind, params);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("flow.forcing: ") + e.what());
  }
}

SpdeParams parse_flow(const json& j) {
  check_keys(j, {"viscosity", "noise_amplitude", "dt", "project_each_step", "forcing"},
             "flow");
  SpdeParams p;
  read(j, "viscosity", p.viscosity, "flow");
  read(j, "noise_amplitude", p.noise_amplitude, "flow");
  read(j, "dt", p.dt, "flow");
  read(j, "project_each_step", p.project_each_step, "flow");
  if (j.contains("forcing")) p.forcing = parse_forcing(j.at("forcing"));
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("flow: ") + e.what());
  }
  return p;
}

json flow_to_json(const SpdeParams& p) {
  json forcing;
  switch (p.forcing.kind) {
    case ForcingSpec::Kind::Zero:
      forcing["kind"] = "zero";
      break;
    case ForcingSpec::Kind::Analytic:
      forcing["kind"] = p.forcing.expression;
      forcing["params"] = p.forcing.params;
      break;
    default:
      throw ConfigError("only zero and analytic forcings can be serialized");
  }
  return {{"viscosity", p.viscosity},
          {"noise_amplitude", p.noise_amplitude},
          {"dt", p.dt},
          {"project_each_step", p.project_each_step},
          {"forcing", forcing}};
}

ReverseMode parse_mode(const std::string& s) {
  if (s == "ode") return ReverseMode::ODE;
  if (s == "sde") return ReverseMode::SDE;
  throw ConfigError("sample.mode must be 'ode' or 'sde'");
}

void parse_simulate(const json& j, SimulateConfig& s) {
  check_keys(j, {"steps", "save_every", "initial"}, "simulate");
  read(j, "steps", s.steps, "simulate");
  read(j, "save_every", s.save_every, "simulate");
  if (s.steps < 0) throw ConfigError("simulate.steps must be >= 0");
  if (s.save_every < 1) throw ConfigError("simulate.save_every must be >= 1");
  if (j.contains("initial")) {
    const auto& i = j.at("initial");
    check_keys(i, {"kind", "path", "amplitude"}, "simulate.initial");
    read(i, "kind", s.initial.kind, "simulate.initial");
    read(i, "path", s.initial.path, "simulate.initial");
    read(i, "amplitude", s.initial.amplitude, "simulate.initial");
  }
  const auto& k = s.initial.kind;
  if (k != "taylor_green" && k != "random" && k != "file")
    throw ConfigError("simulate.initial.kind must be taylor_green, random or file");
  if (k == "file" && s.initial.path.empty())
    throw ConfigError("simulate.initial.path is required for kind 'file'");
}

void parse_sample(const json& j, SampleConfig& s) {
  const std::string w = "sample";
  check_keys(j,
             {"steps", "correction_strength", "corrections_per_step", "j_split", "mode",
              "checkpoint", "conditioning", "previous", "dt"},
             w);
  read(j, "steps", s.sampler.steps, w);
  read(j, "correction_strength", s.sampler.correction_strength, w);
  read(j, "corrections_per_step", s.sampler.corrections_per_step, w);
  if (j.contains("j_split")) {
    int v = 0;
    read(j, "j_split", v, w);
    s.j_split = v;
  }
  std::string mode = "ode";
  read(j, "mode", mode, w);
  s.sampler.mode = parse_mode(mode);
  read(j, "checkpoint", s.checkpoint, w);
  read(j, "conditioning", s.conditioning, w);
  read(j, "previous", s.previous, w);
  read(j, "dt", s.dt, w);
  try {
    s.sampler.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sample: ") + e.what());
  }
  if (!(s.dt > 0.0)) throw ConfigError("sample.dt must be > 0");
}

void parse_train(const json& j, TrainConfig& t) {
  const std::string w = "train";
  check_keys(j,
             {"epochs", "batch_size", "learning_rate", "dataset", "dataset_size",
              "grid", "viscosity", "data_dt", "lambda_r", "lambda_b", "family",
              "levels", "j_split", "hidden", "diffuse_coarse", "beta_min", "beta_max"},
             w);
  read(j, "epochs", t.epochs, w);
  read(j, "batch_size", t.batch_size, w);
  read(j, "learning_rate", t.learning_rate, w);
  std::string dataset = "point_mass";
  read(j, "dataset", dataset, w);
  if (dataset == "point_mass")
    t.dataset = TrainConfig::Dataset::PointMass;
  else if (dataset == "manufactured")
    t.dataset = TrainConfig::Dataset::Manufactured;
  else
    throw ConfigError("train.dataset must be 'point_mass' or 'manufactured'");
  read(j, "dataset_size", t.dataset_size, w);
  if (j.contains("grid")) t.grid = parse_grid(j.at("grid"), "train.grid");
  read(j, "viscosity", t.viscosity, w);
  read(j, "data_dt", t.data_dt, w);
  read(j, "lambda_r", t.weights.lambda_r, w);
  read(j, "lambda_b", t.weights.lambda_b, w);
  if (j.contains("family")) {
    std::string family;
    read(j, "family", family, w);
    try {
      t.diffusion.family = WaveletFamily::from_name(family);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train.family: ") + e.what());
    }
  }
  read(j, "levels", t.diffusion.levels, w);
  read(j, "j_split", t.diffusion.j_split, w);
  read(j, "hidden", t.hidden, w);
  read(j, "diffuse_coarse", t.diffuse_coarse, w);
  read(j, "beta_min", t.diffusion.schedule.beta_min, w);
  read(j, "beta_max", t.diffusion.schedule.beta_max, w);
  if (!(t.diffusion.schedule.beta_min > 0.0 &&
        t.diffusion.schedule.beta_max >= t.diffusion.schedule.beta_min))
    throw ConfigError("train: need 0 < beta_min <= beta_max");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

void parse_bench(const json& j, BenchConfig& b) {
  const std::string w = "bench";
  check_keys(j, {"operations", "resolutions", "repetitions", "warmup", "ndim"}, w);
  read(j, "operations", b.operations, w);
  read(j, "resolutions", b.resolutions, w);
  read(j, "repetitions", b.repetitions, w);
  read(j, "warmup", b.warmup, w);
  read(j, "ndim", b.ndim, w);
  const auto& known = bench_operations();
  for (const auto& op : b.operations)
    if (std::find(known.begin(), known.end(), op) == known.end())
      throw ConfigError("unknown bench operation '" + op + "'");
  if (b.repetitions < 7) throw ConfigError("bench.repetitions must be >= 7");
  if (b.warmup < 2) throw ConfigError("bench.warmup must be >= 2");
  if (b.ndim != 2 && b.ndim != 3) throw ConfigError("bench.ndim must be 2 or 3");
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_config(std::string_view json_text) {
  const json j = parse_json(json_text);
  check_keys(j,
             {"version", "seed", "grid", "flow", "simulate", "sample", "train", "bench"},
             "config");
  if (!j.contains("version")) throw ConfigError("config is missing 'version'");
  int version = 0;
  read(j, "version", version, "config");
  if (version != 1) throw ConfigError("unsupported config version " + std::to_string(version));
  RunConfig c;
  read(j, "seed", c.seed, "config");
  if (j.contains("grid")) c.grid = parse_grid(j.at("grid"), "grid");
  if (j.contains("flow")) c.flow = parse_flow(j.at("flow"));
  if (j.contains("simulate")) parse_simulate(j.at("simulate"), c.simulate);
  if (j.contains("sample")) parse_sample(j.at("sample"), c.sample);
  if (j.contains("train")) parse_train(j.at("train"), c.train);
  if (j.contains("bench")) parse_bench(j.at("bench"), c.bench);
  c.train.seed = c.seed;
  c.sample.sampler.seed = c.seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string flow_params_json(const SpdeParams& p) { return flow_to_json(p).dump(2) + "\n"; }

SpdeParams parse_flow_params(std::string_view json_text) {
  return parse_flow(parse_json(json_text));
}

}  // namespace sgfm
