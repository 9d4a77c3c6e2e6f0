#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgfm/field.hpp"
#include "sgfm/flow.hpp"
#include "sgfm/training.hpp"

namespace sgfm {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedPayloadError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Field file layout (all integers little-endian):
///   "SGFF" | u32 version = 1 | u8 ndim | u32 dims[ndim] | u32 channels |
///   f64 payload, channel-major, row-major per channel
std::string encode_field(const Field& f);
Field decode_field(std::string_view bytes);

void write_field(const std::filesystem::path& path, const Field& f);
Field read_field(const std::filesystem::path& path);

/// Score-model checkpoint, same header style as field files:
///   "SGFC" | u32 version = 1 | u8 ndim | u32 channels | u32 hidden |
///   u32 param_dim | u8 family | u32 levels | u32 j_split |
///   f64 beta_min | f64 beta_max | u32 count | f64 parameters[count]
struct Checkpoint {
  LocalScoreNet::Config model;
  DiffusionSetup diffusion;
  std::vector<double> parameters;

  LocalScoreNet make_model() const;
};

Checkpoint make_checkpoint(const LocalScoreNet& model, const DiffusionSetup& setup);
std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Trajectory directory: trajectory.json {"version", "dt", "time0",
/// "snapshots"} plus snap_00000.sgff, snap_00001.sgff, ...
void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& dir);

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<LossRecord>& history);
void write_energy_csv(const std::filesystem::path& path, const EnergyReport& report);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sgfm
