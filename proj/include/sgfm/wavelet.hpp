#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sgfm/field.hpp"

namespace sgfm {

enum class WaveletKind { Haar, Daubechies4 };

/// Orthonormal two-channel filter bank. The high-pass taps are the
/// quadrature mirror of the low-pass taps: g[i] = (-1)^i h[L-1-i].
class WaveletFamily {
 public:
  static WaveletFamily haar();
  static WaveletFamily daubechies4();
  static WaveletFamily from_kind(WaveletKind kind);
  /// Accepts "haar", "db4" / "daubechies4" (case-sensitive).
  static WaveletFamily from_name(const std::string& name);

  WaveletKind kind() const { return kind_; }
  std::string name() const;
  std::span<const double> lowpass() const { return lowpass_; }
  std::span<const double> highpass() const { return highpass_; }

  friend bool operator==(const WaveletFamily& a, const WaveletFamily& b) {
    return a.kind_ == b.kind_;
  }

 private:
  WaveletFamily(WaveletKind kind, std::vector<double> lowpass);

  WaveletKind kind_;
  std::vector<double> lowpass_;
  std::vector<double> highpass_;
};

/// One level of the periodic 1D analysis filter bank. `signal` has even
/// length m; `approx` and `detail` receive m/2 values each.
void analysis_step(const WaveletFamily& family, std::span<const double> signal,
                   std::span<double> approx, std::span<double> detail);

/// Inverse of analysis_step; overwrites `signal`.
void synthesis_step(const WaveletFamily& family, std::span<const double> approx,
                    std::span<const double> detail, std::span<double> signal);

/// A band holds every coefficient of one (scale, orientation, channel)
/// triple. Scale 0 is the deepest approximation (orientation 0); detail
/// scales run 1..levels from coarse to fine, orientation is a bitmask in
/// 1..2^ndim-1 of the axes that received the high-pass filter.
struct BandInfo {
  int scale = 0;
  int orientation = 0;
  int channel = 0;
  int extent = 0;  // points per axis
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Band bookkeeping shared by coefficient sets of one shape. Bands are
/// stored in canonical order: approximation bands first (by channel), then
/// ascending scale, orientation, channel.
class CoefficientLayout {
 public:
  CoefficientLayout(WaveletFamily family, Grid grid, int channels, int levels);

  const WaveletFamily& family() const { return family_; }
  const Grid& grid() const { return grid_; }
  int channels() const { return channels_; }
  int levels() const { return levels_; }
  int j_max() const { return levels_; }
  std::size_t size() const { return total_; }
  std::span<const BandInfo> bands() const { return bands_; }

  /// Number of leading coefficients with scale <= j.
  std::size_t prefix_size(int j) const;

  friend bool operator==(const CoefficientLayout& a, const CoefficientLayout& b) {
    return a.family_ == b.family_ && a.grid_ == b.grid_ &&
           a.channels_ == b.channels_ && a.levels_ == b.levels_;
  }

 private:
  WaveletFamily family_;
  Grid grid_;
  int channels_;
  int levels_;
  std::vector<BandInfo> bands_;
  std::size_t total_ = 0;
};

/// Critically sampled multiscale coefficients, flattened in canonical order.
class WaveletCoefficients {
 public:
  explicit WaveletCoefficients(CoefficientLayout layout);
  WaveletCoefficients(CoefficientLayout layout, std::vector<double> values);

  const CoefficientLayout& layout() const { return layout_; }
  const WaveletFamily& family() const { return layout_.family(); }
  int levels() const { return layout_.levels(); }
  int j_max() const { return layout_.j_max(); }
  const Grid& grid() const { return layout_.grid(); }
  int channels() const { return layout_.channels(); }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> band(std::size_t b);
  std::span<const double> band(std::size_t b) const;

  double norm() const;

  WaveletCoefficients& operator+=(const WaveletCoefficients& other);
  WaveletCoefficients& operator*=(double a);

  friend bool operator==(const WaveletCoefficients& a,
                         const WaveletCoefficients& b) {
    return a.layout_ == b.layout_ && a.values_ == b.values_;
  }

 private:
  CoefficientLayout layout_;
  std::vector<double> values_;
};

/// Separable multilevel DWT with periodic wraparound, applied per channel.
/// Throws std::invalid_argument if levels is outside [0, log2(n)].
WaveletCoefficients forward_dwt(const Field& f, const WaveletFamily& family,
                                int levels);

Field inverse_dwt(const WaveletCoefficients& c);

/// In-place (Mallat) arrangement of the coefficients as a field of the
/// source shape: the deepest approximation occupies the low corner and each
/// level's detail bands fill the remaining blocks of its sub-cube.
Field to_packed_field(const WaveletCoefficients& c);
WaveletCoefficients from_packed_field(const Field& packed,
                                      const WaveletFamily& family, int levels);

/// Coarse part holds scales <= j_split, fine part the rest. Both are
/// contiguous runs of the canonical flattening.
struct ScaleSplit {
  CoefficientLayout layout;
  int j_split = 0;
  std::vector<double> coarse;
  std::vector<double> fine;
};

ScaleSplit split_scales(const WaveletCoefficients& c, int j_split);
WaveletCoefficients merge_scales(const ScaleSplit& s);

}  // namespace sgfm
