#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgfm/diffusion.hpp"
#include "sgfm/field.hpp"
#include "sgfm/flow.hpp"
#include "sgfm/training.hpp"

namespace sgfm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InitialCondition {
  /// "taylor_green", "random" (projected, band-limited Gaussian) or "file".
  std::string kind = "taylor_green";
  std::string path;
  double amplitude = 1.0;
};

struct SimulateConfig {
  int steps = 100;
  int save_every = 1;
  InitialCondition initial;
};

struct SampleConfig {
  SamplerConfig sampler;
  std::optional<int> j_split;  // defaults to the checkpoint's split
  std::string checkpoint;
  std::string conditioning;    // field file; point-mass target when empty
  std::string previous;        // field file; needed for corrections
  double dt = 0.1;
};

struct BenchConfig {
  std::vector<std::string> operations;  // empty selects every operation
  std::vector<int> resolutions;         // empty selects the defaults
  int repetitions = 7;
  int warmup = 2;
  int ndim = 2;
};

/// Top-level run configuration. Every section is optional; unknown keys at
/// any level are rejected and "version" must be 1.
struct RunConfig {
  std::uint64_t seed = 0;
  Grid grid{2, 32};
  SpdeParams flow;
  SimulateConfig simulate;
  SampleConfig sample;
  TrainConfig train;
  BenchConfig bench;
};

RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Flow parameters as stored next to a trajectory. Only zero and analytic
/// forcings are representable.
std::string flow_params_json(const SpdeParams& p);
SpdeParams parse_flow_params(std::string_view json_text);

}  // namespace sgfm
