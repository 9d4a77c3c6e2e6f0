#include "sgfm/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <utility>

namespace sgfm {

namespace {

// FFTW's planner is not thread-safe; plan execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

using cplx = std::complex<double>;

}  // namespace

SpectralWorkspace::SpectralWorkspace(const Grid& grid) : grid_(grid) {
  const int n = grid.n;
  spectrum_size_ = grid.size() / n * (n / 2 + 1);
  full_k_.resize(n);
  deriv_k_.resize(n);
  for (int i = 0; i < n; ++i) {
    full_k_[i] = i < n / 2 ? i : i - n;
    deriv_k_[i] = (i == n / 2) ? 0.0 : full_k_[i];
  }
  real_buf_ = fftw_alloc_real(grid.size());
  complex_buf_ = fftw_alloc_complex(spectrum_size_);
  auto* cbuf = static_cast<fftw_complex*>(complex_buf_);
  int dims[3] = {n, n, n};
  std::lock_guard lock(planner_mutex());
  forward_plan_ = fftw_plan_dft_r2c(grid.ndim, dims, real_buf_, cbuf, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r(grid.ndim, dims, cbuf, real_buf_, FFTW_ESTIMATE);
  if (!forward_plan_ || !inverse_plan_)
    throw std::runtime_error("FFTW planning failed");
}

SpectralWorkspace::~SpectralWorkspace() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_buf_);
  fftw_free(complex_buf_);
}

void SpectralWorkspace::forward(std::span<const double> in,
                                std::span<std::complex<double>> out) {
  std::copy(in.begin(), in.end(), real_buf_);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  const auto* c = reinterpret_cast<const cplx*>(complex_buf_);
  std::copy(c, c + spectrum_size_, out.begin());
}

void SpectralWorkspace::inverse(std::span<const std::complex<double>> in,
                                std::span<double> out) {
  auto* c = reinterpret_cast<cplx*>(complex_buf_);
  std::copy(in.begin(), in.end(), c);
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  const double scale = 1.0 / static_cast<double>(grid_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = real_buf_[i] * scale;
}

SpectralWorkspace& workspace_for(const Grid& grid) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<SpectralWorkspace>>
      cache;
  auto& slot = cache[{grid.ndim, grid.n}];
  if (!slot) slot = std::make_unique<SpectralWorkspace>(grid);
  return *slot;
}

// ---------------------------------------------------------------------------

namespace {

void require_vector(const Field& v, const char* op) {
  if (v.channels() % v.grid().ndim != 0)
    throw std::invalid_argument(std::string(op) +
                                ": channel count is not a multiple of ndim");
}

}  // namespace

Field partial(const Field& f, int axis) {
  const auto& grid = f.grid();
  if (axis < 0 || axis >= grid.ndim) throw std::invalid_argument("bad axis");
  auto& ws = workspace_for(grid);
  std::vector<cplx> spec(ws.spectrum_size());
  Field out(grid, f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    ws.forward(f.channel(c), spec);
    ws.for_each_mode([&](std::size_t i, const double*, const double* kd) {
      spec[i] *= cplx(0.0, kd[axis]);
    });
    ws.inverse(spec, out.channel(c));
  }
  return out;
}

Field gradient(const Field& f) {
  const auto& grid = f.grid();
  const int d = grid.ndim;
  auto& ws = workspace_for(grid);
  std::vector<cplx> spec(ws.spectrum_size());
  std::vector<cplx> work(ws.spectrum_size());
  Field out(grid, f.channels() * d);
  for (int c = 0; c < f.channels(); ++c) {
    ws.forward(f.channel(c), spec);
    for (int a = 0; a < d; ++a) {
      ws.for_each_mode([&](std::size_t i, const double*, const double* kd) {
        work[i] = spec[i] * cplx(0.0, kd[a]);
      });
      ws.inverse(work, out.channel(c * d + a));
    }
  }
  return out;
}

Field laplacian(const Field& f) {
  const auto& grid = f.grid();
  auto& ws = workspace_for(grid);
  std::vector<cplx> spec(ws.spectrum_size());
  Field out(grid, f.channels());
  const int d = grid.ndim;
  for (int c = 0; c < f.channels(); ++c) {
    ws.forward(f.channel(c), spec);
    ws.for_each_mode([&](std::size_t i, const double* k, const double*) {
      double k2 = 0.0;
      for (int a = 0; a < d; ++a) k2 += k[a] * k[a];
      spec[i] *= -k2;
    });
    ws.inverse(spec, out.channel(c));
  }
  return out;
}

Field divergence(const Field& v) {
  require_vector(v, "divergence");
  const auto& grid = v.grid();
  const int d = grid.ndim;
  const int groups = v.channels() / d;
  auto& ws = workspace_for(grid);
  std::vector<cplx> spec(ws.spectrum_size());
  std::vector<cplx> acc(ws.spectrum_size());
  Field out(grid, groups);
  for (int g = 0; g < groups; ++g) {
    std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
    for (int a = 0; a < d; ++a) {
      ws.forward(v.channel(g * d + a), spec);
      ws.for_each_mode([&](std::size_t i, const double*, const double* kd) {
        acc[i] += spec[i] * cplx(0.0, kd[a]);
      });
    }
    ws.inverse(acc, out.channel(g));
  }
  return out;
}

Field vorticity2d(const Field& v) {
  const auto& grid = v.grid();
  if (grid.ndim != 2) throw std::invalid_argument("vorticity2d needs a 2D grid");
  require_vector(v, "vorticity2d");
  const int groups = v.channels() / 2;
  auto& ws = workspace_for(grid);
  std::vector<cplx> sx(ws.spectrum_size());
  std::vector<cplx> sy(ws.spectrum_size());
  Field out(grid, groups);
  for (int g = 0; g < groups; ++g) {
    ws.forward(v.channel(2 * g), sx);
    ws.forward(v.channel(2 * g + 1), sy);
    ws.for_each_mode([&](std::size_t i, const double*, const double* kd) {
      sx[i] = cplx(0.0, kd[0]) * sy[i] - cplx(0.0, kd[1]) * sx[i];
    });
    ws.inverse(sx, out.channel(g));
  }
  return out;
}

Field helmholtz_project(const Field& v) {
  require_vector(v, "helmholtz_project");
  const auto& grid = v.grid();
  const int d = grid.ndim;
  const int groups = v.channels() / d;
  auto& ws = workspace_for(grid);
  std::vector<std::vector<cplx>> spec(d, std::vector<cplx>(ws.spectrum_size()));
  Field out(grid, v.channels());
  for (int g = 0; g < groups; ++g) {
    for (int a = 0; a < d; ++a) ws.forward(v.channel(g * d + a), spec[a]);
    ws.for_each_mode([&](std::size_t i, const double*, const double* kd) {
      double k2 = 0.0;
      cplx kv(0.0, 0.0);
      for (int a = 0; a < d; ++a) {
        k2 += kd[a] * kd[a];
        kv += kd[a] * spec[a][i];
      }
      if (k2 == 0.0) return;
      const cplx s = kv / k2;
      for (int a = 0; a < d; ++a) spec[a][i] -= kd[a] * s;
    });
    for (int a = 0; a < d; ++a) ws.inverse(spec[a], out.channel(g * d + a));
  }
  return out;
}

Field band_limit(const Field& f, double kmax) {
  const auto& grid = f.grid();
  auto& ws = workspace_for(grid);
  std::vector<cplx> spec(ws.spectrum_size());
  Field out(grid, f.channels());
  const int d = grid.ndim;
  for (int c = 0; c < f.channels(); ++c) {
    ws.forward(f.channel(c), spec);
    ws.for_each_mode([&](std::size_t i, const double* k, const double*) {
      for (int a = 0; a < d; ++a)
        if (std::abs(k[a]) > kmax) spec[i] = 0.0;
    });
    ws.inverse(spec, out.channel(c));
  }
  return out;
}

double spectral_energy_fraction_above(const Field& f, double kmax) {
  const auto& grid = f.grid();
  auto& ws = workspace_for(grid);
  std::vector<cplx> spec(ws.spectrum_size());
  const int d = grid.ndim;
  double above = 0.0;
  double total = 0.0;
  for (int c = 0; c < f.channels(); ++c) {
    ws.forward(f.channel(c), spec);
    ws.for_each_mode([&](std::size_t i, const double* k, const double*) {
      // Interior modes of the half axis stand for a conjugate pair.
      const double last = k[d - 1];
      const double weight = (last == 0.0 || last == grid.n / 2) ? 1.0 : 2.0;
      const double e = weight * std::norm(spec[i]);
      total += e;
      bool high = false;
      for (int a = 0; a < d; ++a) high = high || std::abs(k[a]) > kmax;
      if (high) above += e;
    });
  }
  return total > 0.0 ? above / total : 0.0;
}

std::vector<double> fourier_magnitudes(const Field& f, int channel) {
  auto& ws = workspace_for(f.grid());
  std::vector<cplx> spec(ws.spectrum_size());
  ws.forward(f.channel(channel), spec);
  const double scale = 1.0 / std::sqrt(static_cast<double>(f.grid().size()));
  std::vector<double> mags(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) mags[i] = std::abs(spec[i]) * scale;
  return mags;
}

// ---------------------------------------------------------------------------
// Operator norms

LinearOperator gradient_operator(int channels) {
  return {"gradient", channels, [](const Field& f) { return gradient(f); },
          [](const Field& g) { return -1.0 * divergence(g); }};
}

LinearOperator laplacian_operator(int channels) {
  return {"laplacian", channels, [](const Field& f) { return laplacian(f); },
          [](const Field& f) { return laplacian(f); }};
}

LinearOperator projection_operator(int ndim) {
  return {"projection", ndim, [](const Field& f) { return helmholtz_project(f); },
          [](const Field& f) { return helmholtz_project(f); }};
}

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

NormEstimate estimate_operator_norm(const LinearOperator& op, const Grid& grid,
                                    std::uint64_t seed,
                                    const NormEstimateOptions& options) {
  const int levels = options.levels < 0 ? ilog2(grid.n) : options.levels;
  const CoefficientLayout in_layout(options.family, grid, op.in_channels, levels);
  std::mt19937_64 rng(seed);

  auto field_of = [&](std::vector<double> coeffs) {
    return inverse_dwt(WaveletCoefficients(in_layout, std::move(coeffs)));
  };

  for (int p = 0; p < options.linearity_probes; ++p) {
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    const double a = coef(rng);
    const double b = coef(rng);
    const Field x = field_of(random_vector(in_layout.size(), rng));
    const Field y = field_of(random_vector(in_layout.size(), rng));
    const Field ox = op.apply(x);
    const Field oy = op.apply(y);
    Field combo = op.apply(a * x + b * y);
    const double scale = std::abs(a) * grid_norm(ox) + std::abs(b) * grid_norm(oy);
    combo.axpy(-a, ox).axpy(-b, oy);
    if (grid_norm(combo) > 1e-9 * scale + 1e-300)
      throw std::invalid_argument("operator '" + op.name +
                                  "' failed the linearity probe");
  }

  std::vector<double> x = random_vector(in_layout.size(), rng);
  NormEstimate est;
  double previous = 0.0;
  for (int it = 1; it <= options.iterations; ++it) {
    const double xn = norm2(x);
    if (xn == 0.0) break;
    for (auto& v : x) v /= xn;
    const Field u = field_of(x);
    const Field y = op.apply(u);
    // W is orthonormal, so the coefficient norm equals the grid-sum norm.
    est.value = grid_norm(y);
    est.iterations = it;
    if (it > 1 && std::abs(est.value - previous) <= options.tolerance * est.value) {
      est.converged = true;
      break;
    }
    previous = est.value;
    const Field back = op.adjoint(y);
    auto coeffs = forward_dwt(back, options.family, levels);
    x.assign(coeffs.values().begin(), coeffs.values().end());
  }
  return est;
}

}  // namespace sgfm
