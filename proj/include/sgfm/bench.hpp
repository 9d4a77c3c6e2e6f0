#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sgfm {

/// Operations known to bench_scaling. "quadratic" is an all-pairs
/// coefficient interaction kept as an O(N^2) reference.
const std::vector<std::string>& bench_operations();

struct BenchOptions {
  int ndim = 2;
  int repetitions = 7;
  int warmup = 2;
  /// Medians below this many seconds are excluded from the fit.
  double timing_floor = 50e-6;
};

struct BenchReport {
  std::string operation;
  int ndim = 2;
  std::vector<int> resolutions;         // n per axis
  std::vector<std::size_t> sizes;       // N = n^ndim
  std::vector<std::vector<double>> samples;  // seconds, per size
  std::vector<double> medians;
  std::vector<bool> excluded;
  double slope = 0.0;
  int repetitions = 0;
  int warmup = 0;
};

/// Default resolutions: n = 64..1024 for the field operations, 8..128 for
/// the quadratic reference.
std::vector<int> default_bench_resolutions(const std::string& op);

/// Times `op` at each resolution on one thread. Resolutions must be strictly
/// increasing powers of two; at least 5 sizes spanning 16x in N and at least
/// 7 repetitions are required.
BenchReport bench_scaling(const std::string& op, const std::vector<int>& resolutions,
                          std::uint64_t seed, const BenchOptions& options = {});

/// Least-squares slope of log(median) against log(N) over non-excluded
/// entries. Throws if fewer than two remain.
double fit_loglog_slope(const std::vector<std::size_t>& sizes,
                        const std::vector<double>& medians,
                        const std::vector<bool>& excluded);

double median(std::vector<double> values);

void write_bench_csv(const std::filesystem::path& path,
                     const std::vector<BenchReport>& reports);
void write_bench_json(const std::filesystem::path& path,
                      const std::vector<BenchReport>& reports);

}  // namespace sgfm
