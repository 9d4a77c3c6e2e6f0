#include "sgfm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sgfm/diffusion.hpp"
#include "sgfm/field.hpp"
#include "sgfm/flow.hpp"
#include "sgfm/io.hpp"
#include "sgfm/spectral.hpp"
#include "sgfm/util.hpp"
#include "sgfm/wavelet.hpp"

namespace sgfm {

const std::vector<std::string>& bench_operations() {
  static const std::vector<std::string> ops = {
      "dwt", "projection", "advection", "spde_step", "diffusion_step", "sgfm_step",
      "quadratic"};
  return ops;
}

std::vector<int> default_bench_resolutions(const std::string& op) {
  if (op == "quadratic") return {8, 16, 32, 64, 128};
  return {64, 128, 256, 512, 1024};
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

double fit_loglog_slope(const std::vector<std::size_t>& sizes,
                        const std::vector<double>& medians,
                        const std::vector<bool>& excluded) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (excluded[i]) continue;
    const double x = std::log(static_cast<double>(sizes[i]));
    const double y = std::log(medians[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) throw std::runtime_error("fewer than two sizes above the timing floor");
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

namespace {

volatile double sink = 0.0;

void consume(const Field& f) { sink = sink + f.data()[0]; }

/// Builds the timed closure for one operation at one resolution. Setup
/// (inputs, models, plans) happens here, outside the timed region.
std::function<void()> prepare(const std::string& op, const Grid& grid,
                              std::uint64_t seed) {
  const int d = grid.ndim;
  if (op == "quadratic") {
    const Field c = gaussian_field(grid, 1, seed);
    return [c] {
      const auto v = c.data();
      double total = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
          const double diff = v[i] - v[j];
          acc += v[j] / (1.0 + diff * diff);
        }
        total += v[i] * acc;
      }
      sink = sink + total;
    };
  }

  auto u = std::make_shared<Field>(helmholtz_project(gaussian_field(grid, d, seed)));
  const auto family = WaveletFamily::haar();
  const int levels = ilog2(grid.n);
  if (op == "dwt")
    return [u, family, levels] {
      const auto c = forward_dwt(*u, family, levels);
      sink = sink + c.values()[0];
    };
  if (op == "projection") return [u] { consume(helmholtz_project(*u)); };
  if (op == "advection") return [u] { consume(advection(*u)); };
  if (op == "spde_step") {
    SpdeParams p;
    p.noise_amplitude = 0.01;
    return [u, p] { consume(step_euler_maruyama(*u, p, 1, 0)); };
  }

  // Diffusion-side operations act on the finest detail scale.
  auto c = std::make_shared<WaveletCoefficients>(forward_dwt(*u, family, levels));
  const int j_split = levels - 1;
  const std::size_t prefix = c->layout().prefix_size(j_split);
  auto net = std::make_shared<LocalScoreNet>(
      LocalScoreNet::Config{d, d, 4, 0, NoiseSchedule{}}, seed);
  auto fine = std::make_shared<std::vector<double>>(c->values().begin() + prefix,
                                                    c->values().end());
  auto coarse = std::make_shared<std::vector<double>>(c->values().begin(),
                                                      c->values().begin() + prefix);
  const ReverseContext rctx{&c->layout(), j_split, *coarse, {}, NoiseSchedule{}};
  if (op == "diffusion_step")
    return [net, fine, coarse, c, rctx] {
      const auto out = reverse_step(*fine, 0.5, 0.01, *net, rctx, ReverseMode::ODE, 0);
      sink = sink + out[0];
    };
  if (op == "sgfm_step") {
    SpdeParams p;
    return [net, fine, coarse, c, rctx, u, p, prefix] {
      const auto out = reverse_step(*fine, 0.5, 0.01, *net, rctx, ReverseMode::ODE, 0);
      std::vector<double> values(coarse->begin(), coarse->end());
      values.insert(values.end(), out.begin(), out.end());
      const WaveletCoefficients merged(c->layout(), std::move(values));
      const auto corrected = physics_correction(merged, *u, 0.1, p, 1e-3);
      sink = sink + corrected.values()[prefix];
    };
  }
  throw std::invalid_argument("unknown bench operation: " + op);
}

}  // namespace

BenchReport bench_scaling(const std::string& op, const std::vector<int>& resolutions,
                          std::uint64_t seed, const BenchOptions& options) {
  if (std::find(bench_operations().begin(), bench_operations().end(), op) ==
      bench_operations().end())
    throw std::invalid_argument("unknown bench operation: " + op);
  if (options.repetitions < 7) throw std::invalid_argument("bench needs >= 7 repetitions");
  if (options.warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  if (resolutions.size() < 5) throw std::invalid_argument("bench needs >= 5 sizes");
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    if (!is_power_of_two(resolutions[i]))
      throw std::invalid_argument("bench resolutions must be powers of two");
    if (i > 0 && resolutions[i] <= resolutions[i - 1])
      throw std::invalid_argument("bench resolutions must be strictly increasing");
  }

  BenchReport report;
  report.operation = op;
  report.ndim = options.ndim;
  report.repetitions = options.repetitions;
  report.warmup = options.warmup;
  for (int n : resolutions) {
    const Grid grid = make_grid(options.ndim, n);
    report.resolutions.push_back(n);
    report.sizes.push_back(grid.size());
  }
  if (report.sizes.back() < 16 * report.sizes.front())
    throw std::invalid_argument("bench sizes must span at least 16x in N");

  const ScopedThreadLimit single_thread(1);
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    const Grid grid = make_grid(options.ndim, resolutions[i]);
    const auto run = prepare(op, grid, derive_seed(seed, {i}));
    for (int w = 0; w < options.warmup; ++w) run();
    std::vector<double> samples;
    for (int r = 0; r < options.repetitions; ++r) {
      const auto t0 = clock::now();
      run();
      samples.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    const double m = median(samples);
    report.samples.push_back(std::move(samples));
    report.medians.push_back(m);
    report.excluded.push_back(m < options.timing_floor);
  }
  report.slope = fit_loglog_slope(report.sizes, report.medians, report.excluded);
  return report;
}

void write_bench_csv(const std::filesystem::path& path,
                     const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  out << std::setprecision(9) << "operation,ndim,n,N,median_s,excluded,slope\n";
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.sizes.size(); ++i)
      out << r.operation << ',' << r.ndim << ',' << r.resolutions[i] << ',' << r.sizes[i]
          << ',' << r.medians[i] << ',' << (r.excluded[i] ? 1 : 0) << ',' << r.slope
          << '\n';
  write_file(path, out.str());
}

void write_bench_json(const std::filesystem::path& path,
                      const std::vector<BenchReport>& reports) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["operation"] = r.operation;
    j["ndim"] = r.ndim;
    j["resolutions"] = r.resolutions;
    j["sizes"] = r.sizes;
    j["medians"] = r.medians;
    j["excluded"] = r.excluded;
    j["samples"] = r.samples;
    j["slope"] = r.slope;
    j["repetitions"] = r.repetitions;
    j["warmup"] = r.warmup;
    doc.push_back(std::move(j));
  }
  write_file(path, doc.dump(2) + "\n");
}

}  // namespace sgfm
