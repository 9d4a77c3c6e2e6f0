#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgfm/field.hpp"
#include "sgfm/wavelet.hpp"

namespace sgfm {

/// FFT plans and scratch buffers for one grid.
///
/// Wavenumbers along the full axes are i for i < n/2 and i - n otherwise;
/// the last (half-spectrum) axis holds 0..n/2. Odd-order derivatives use a
/// copy of the lattice with the Nyquist entry (|k| = n/2) zeroed so that
/// real fields stay real.
///
/// A workspace owns mutable buffers: one instance must not be used from two
/// threads at once. `workspace_for` hands out a per-thread instance.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(const Grid& grid);
  ~SpectralWorkspace();
  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  const Grid& grid() const { return grid_; }
  std::size_t spectrum_size() const { return spectrum_size_; }

  /// Unnormalized real-to-complex transform of one channel.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Complex-to-real transform including the 1/N normalization.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

  /// Calls fn(index, k, kd) for every half-spectrum mode, where `k` is the
  /// full integer wavenumber and `kd` the derivative wavenumber (Nyquist
  /// zeroed); both point at ndim doubles.
  template <typename Fn>
  void for_each_mode(Fn&& fn) const {
    const int n = grid_.n;
    const int nh = n / 2 + 1;
    double k[3] = {0, 0, 0};
    double kd[3] = {0, 0, 0};
    std::size_t idx = 0;
    if (grid_.ndim == 2) {
      for (int i = 0; i < n; ++i) {
        k[0] = full_k_[i];
        kd[0] = deriv_k_[i];
        for (int j = 0; j < nh; ++j, ++idx) {
          k[1] = j;
          kd[1] = deriv_k_[j];
          fn(idx, k, kd);
        }
      }
    } else {
      for (int i = 0; i < n; ++i) {
        k[0] = full_k_[i];
        kd[0] = deriv_k_[i];
        for (int j = 0; j < n; ++j) {
          k[1] = full_k_[j];
          kd[1] = deriv_k_[j];
          for (int l = 0; l < nh; ++l, ++idx) {
            k[2] = l;
            kd[2] = deriv_k_[l];
            fn(idx, k, kd);
          }
        }
      }
    }
  }

 private:
  Grid grid_;
  std::size_t spectrum_size_;
  std::vector<double> full_k_;
  std::vector<double> deriv_k_;
  double* real_buf_;
  void* complex_buf_;
  void* forward_plan_;
  void* inverse_plan_;
};

/// Per-thread cached workspace for `grid`.
SpectralWorkspace& workspace_for(const Grid& grid);

/// Per-channel gradient; channel c of `f` yields channels c*ndim .. c*ndim+ndim-1.
Field gradient(const Field& f);
Field partial(const Field& f, int axis);
Field laplacian(const Field& f);
/// One scalar channel per vector group. Throws if channels % ndim != 0.
Field divergence(const Field& v);
/// dv_y/dx - dv_x/dy per vector group; 2D only.
Field vorticity2d(const Field& v);
/// Leray projection (I - k k^T / |k|^2) per mode and vector group, using the
/// derivative wavenumbers; modes whose derivative wavenumber vanishes pass
/// through unchanged.
Field helmholtz_project(const Field& v);

/// Zeroes every Fourier mode with |k_a| > kmax on some axis.
Field band_limit(const Field& f, double kmax);

/// Fraction of the spectral energy carried by modes with |k_a| > kmax on
/// some axis.
double spectral_energy_fraction_above(const Field& f, double kmax);

/// Fourier coefficient magnitudes of one channel scaled by 1/sqrt(N)
/// (unitary normalization), half spectrum.
std::vector<double> fourier_magnitudes(const Field& f, int channel);

// ---------------------------------------------------------------------------
// Operator norms

/// Linear map between fields together with its adjoint in the grid-sum
/// inner product.
struct LinearOperator {
  std::string name;
  int in_channels = 1;
  std::function<Field(const Field&)> apply;
  std::function<Field(const Field&)> adjoint;
};

LinearOperator gradient_operator(int channels = 1);
LinearOperator laplacian_operator(int channels = 1);
LinearOperator projection_operator(int ndim);

struct NormEstimateOptions {
  int iterations = 200;
  double tolerance = 1e-6;
  WaveletFamily family = WaveletFamily::haar();
  /// Negative selects log2(n).
  int levels = -1;
  int linearity_probes = 3;
};

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value of W * op * W^-1 by power iteration on the normal
/// operator, starting from a seeded random coefficient vector. Throws
/// std::invalid_argument if random probes show the operator is not linear.
NormEstimate estimate_operator_norm(const LinearOperator& op, const Grid& grid,
                                    std::uint64_t seed,
                                    const NormEstimateOptions& options = {});

}  // namespace sgfm
