#include "sgfm/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sgfm {

WaveletFamily::WaveletFamily(WaveletKind kind, std::vector<double> lowpass)
    : kind_(kind), lowpass_(std::move(lowpass)) {
  const auto len = lowpass_.size();
  highpass_.resize(len);
  for (std::size_t i = 0; i < len; ++i)
    highpass_[i] = (i % 2 == 0 ? 1.0 : -1.0) * lowpass_[len - 1 - i];
}

WaveletFamily WaveletFamily::haar() {
  const double r = 1.0 / std::numbers::sqrt2;
  return WaveletFamily(WaveletKind::Haar, {r, r});
}

WaveletFamily WaveletFamily::daubechies4() {
  const double s3 = std::sqrt(3.0);
  const double d = 4.0 * std::numbers::sqrt2;
  return WaveletFamily(WaveletKind::Daubechies4,
                       {(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d,
                        (1.0 - s3) / d});
}

WaveletFamily WaveletFamily::from_kind(WaveletKind kind) {
  return kind == WaveletKind::Haar ? haar() : daubechies4();
}

WaveletFamily WaveletFamily::from_name(const std::string& name) {
  if (name == "haar") return haar();
  if (name == "db4" || name == "daubechies4") return daubechies4();
  throw std::invalid_argument("unknown wavelet family '" + name + "'");
}

std::string WaveletFamily::name() const {
  return kind_ == WaveletKind::Haar ? "haar" : "db4";
}

void analysis_step(const WaveletFamily& family, std::span<const double> signal,
                   std::span<double> approx, std::span<double> detail) {
  const auto h = family.lowpass();
  const auto g = family.highpass();
  const std::size_t m = signal.size();
  const std::size_t half = m / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double a = 0.0;
    double d = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const double x = signal[(2 * i + k) % m];
      a += h[k] * x;
      d += g[k] * x;
    }
    approx[i] = a;
    detail[i] = d;
  }
}

void synthesis_step(const WaveletFamily& family, std::span<const double> approx,
                    std::span<const double> detail, std::span<double> signal) {
  const auto h = family.lowpass();
  const auto g = family.highpass();
  const std::size_t m = signal.size();
  const std::size_t half = m / 2;
  std::fill(signal.begin(), signal.end(), 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t k = 0; k < h.size(); ++k)
      signal[(2 * i + k) % m] += h[k] * approx[i] + g[k] * detail[i];
  }
}

// ---------------------------------------------------------------------------
// Layout

namespace {

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

CoefficientLayout::CoefficientLayout(WaveletFamily family, Grid grid,
                                     int channels, int levels)
    : family_(std::move(family)), grid_(grid), channels_(channels),
      levels_(levels) {
  if (levels < 0 || levels > ilog2(grid.n))
    throw std::invalid_argument("wavelet levels " + std::to_string(levels) +
                                " outside [0, log2(n)=" +
                                std::to_string(ilog2(grid.n)) + "]");
  const int approx_extent = grid.n >> levels;
  std::size_t offset = 0;
  auto add = [&](int scale, int orientation, int channel, int extent) {
    const std::size_t size = ipow(extent, grid.ndim);
    bands_.push_back({scale, orientation, channel, extent, offset, size});
    offset += size;
  };
  for (int c = 0; c < channels; ++c) add(0, 0, c, approx_extent);
  const int orientations = (1 << grid.ndim) - 1;
  for (int j = 1; j <= levels; ++j) {
    const int extent = grid.n >> (levels - j + 1);
    for (int o = 1; o <= orientations; ++o)
      for (int c = 0; c < channels; ++c) add(j, o, c, extent);
  }
  total_ = offset;
}

std::size_t CoefficientLayout::prefix_size(int j) const {
  std::size_t s = 0;
  for (const auto& b : bands_)
    if (b.scale <= j) s += b.size;
  return s;
}

// ---------------------------------------------------------------------------
// Coefficients

WaveletCoefficients::WaveletCoefficients(CoefficientLayout layout)
    : layout_(std::move(layout)), values_(layout_.size(), 0.0) {}

WaveletCoefficients::WaveletCoefficients(CoefficientLayout layout,
                                         std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size())
    throw std::invalid_argument("coefficient count does not match layout");
}

std::span<double> WaveletCoefficients::band(std::size_t b) {
  const auto& info = layout_.bands()[b];
  return std::span<double>(values_).subspan(info.offset, info.size);
}

std::span<const double> WaveletCoefficients::band(std::size_t b) const {
  const auto& info = layout_.bands()[b];
  return std::span<const double>(values_).subspan(info.offset, info.size);
}

double WaveletCoefficients::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

WaveletCoefficients& WaveletCoefficients::operator+=(
    const WaveletCoefficients& other) {
  if (!(layout_ == other.layout_))
    throw std::invalid_argument("coefficient layout mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

WaveletCoefficients& WaveletCoefficients::operator*=(double a) {
  for (auto& v : values_) v *= a;
  return *this;
}

// ---------------------------------------------------------------------------
// Transforms

namespace {

constexpr int kLineBlock = 16;

/// Calls fn(base, stride, width) for every group of lines along `axis`
/// inside the sub-cube [0, m)^ndim of an array with n points per axis.
/// Lines base, base + 1, ..., base + width - 1 are processed together so
/// strided passes read contiguous memory; width is 1 along the last axis.
template <typename Fn>
void for_each_line_block(int ndim, int n, int m, int axis, Fn&& fn) {
  std::size_t strides[3] = {1, 1, 1};
  for (int a = ndim - 2; a >= 0; --a) strides[a] = strides[a + 1] * n;
  int others[2] = {0, 0};
  int count = 0;
  for (int a = 0; a < ndim; ++a)
    if (a != axis) others[count++] = a;
  const std::size_t stride = strides[axis];
  const int inner = others[ndim - 2];
  const int width = inner == ndim - 1 ? std::min(kLineBlock, m) : 1;
  if (ndim == 2) {
    for (int i = 0; i < m; i += width) fn(i * strides[inner], stride, width);
  } else {
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; k += width)
        fn(i * strides[others[0]] + k * strides[inner], stride, width);
  }
}

void forward_inplace(std::span<double> data, int ndim, int n, int levels,
                     const WaveletFamily& family) {
  std::vector<double> lines(std::size_t(kLineBlock) * n), lo(n / 2), hi(n / 2);
  int m = n;
  for (int level = 0; level < levels; ++level, m /= 2) {
    const int half = m / 2;
    for (int axis = 0; axis < ndim; ++axis) {
      for_each_line_block(ndim, n, m, axis, [&](std::size_t base, std::size_t stride, int width) {
        for (int i = 0; i < m; ++i)
          for (int b = 0; b < width; ++b) lines[b * m + i] = data[base + b + i * stride];
        for (int b = 0; b < width; ++b) {
          analysis_step(family, std::span<const double>(lines.data() + b * m, m),
                        std::span<double>(lo.data(), half),
                        std::span<double>(hi.data(), half));
          std::copy(lo.begin(), lo.begin() + half, lines.begin() + b * m);
          std::copy(hi.begin(), hi.begin() + half, lines.begin() + b * m + half);
        }
        for (int i = 0; i < m; ++i)
          for (int b = 0; b < width; ++b) data[base + b + i * stride] = lines[b * m + i];
      });
    }
  }
}

void inverse_inplace(std::span<double> data, int ndim, int n, int levels,
                     const WaveletFamily& family) {
  std::vector<double> lines(std::size_t(kLineBlock) * n), out(n);
  for (int level = levels - 1; level >= 0; --level) {
    const int m = n >> level;
    const int half = m / 2;
    for (int axis = ndim - 1; axis >= 0; --axis) {
      for_each_line_block(ndim, n, m, axis, [&](std::size_t base, std::size_t stride, int width) {
        for (int i = 0; i < m; ++i)
          for (int b = 0; b < width; ++b) lines[b * m + i] = data[base + b + i * stride];
        for (int b = 0; b < width; ++b) {
          synthesis_step(family, std::span<const double>(lines.data() + b * m, half),
                         std::span<const double>(lines.data() + b * m + half, half),
                         std::span<double>(out.data(), m));
          std::copy(out.begin(), out.begin() + m, lines.begin() + b * m);
        }
        for (int i = 0; i < m; ++i)
          for (int b = 0; b < width; ++b) data[base + b + i * stride] = lines[b * m + i];
      });
    }
  }
}

/// Visits the packed-image indices of the block for (extent, orientation)
/// in band order. The block sits at offset `extent` along every axis whose
/// bit is set in the orientation.
template <typename Fn>
void for_each_block_index(int ndim, int n, int extent, int orientation, Fn&& fn) {
  std::size_t origin[3] = {0, 0, 0};
  for (int a = 0; a < ndim; ++a)
    origin[a] = ((orientation >> a) & 1) ? static_cast<std::size_t>(extent) : 0;
  const auto nn = static_cast<std::size_t>(n);
  std::size_t k = 0;
  if (ndim == 2) {
    for (int i = 0; i < extent; ++i)
      for (int j = 0; j < extent; ++j)
        fn(k++, (origin[0] + i) * nn + origin[1] + j);
  } else {
    for (int i = 0; i < extent; ++i)
      for (int j = 0; j < extent; ++j)
        for (int l = 0; l < extent; ++l)
          fn(k++, ((origin[0] + i) * nn + origin[1] + j) * nn + origin[2] + l);
  }
}

WaveletCoefficients unpack(const Field& packed, CoefficientLayout layout) {
  WaveletCoefficients c(std::move(layout));
  const auto& grid = c.grid();
  const auto bands = c.layout().bands();
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto& info = bands[b];
    auto src = packed.channel(info.channel);
    auto dst = c.band(b);
    for_each_block_index(grid.ndim, grid.n, info.extent, info.orientation,
                         [&](std::size_t k, std::size_t idx) { dst[k] = src[idx]; });
  }
  return c;
}

}  // namespace

Field to_packed_field(const WaveletCoefficients& c) {
  const auto& grid = c.grid();
  Field packed(grid, c.channels());
  const auto bands = c.layout().bands();
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto& info = bands[b];
    auto src = c.band(b);
    auto dst = packed.channel(info.channel);
    for_each_block_index(grid.ndim, grid.n, info.extent, info.orientation,
                         [&](std::size_t k, std::size_t idx) { dst[idx] = src[k]; });
  }
  return packed;
}

WaveletCoefficients from_packed_field(const Field& packed,
                                      const WaveletFamily& family, int levels) {
  return unpack(packed,
                CoefficientLayout(family, packed.grid(), packed.channels(), levels));
}

WaveletCoefficients forward_dwt(const Field& f, const WaveletFamily& family,
                                int levels) {
  CoefficientLayout layout(family, f.grid(), f.channels(), levels);
  Field work = f;
  const auto& grid = f.grid();
  for (int c = 0; c < f.channels(); ++c)
    forward_inplace(work.channel(c), grid.ndim, grid.n, levels, family);
  return unpack(work, std::move(layout));
}

Field inverse_dwt(const WaveletCoefficients& c) {
  Field work = to_packed_field(c);
  const auto& grid = c.grid();
  for (int ch = 0; ch < c.channels(); ++ch)
    inverse_inplace(work.channel(ch), grid.ndim, grid.n, c.levels(), c.family());
  return work;
}

ScaleSplit split_scales(const WaveletCoefficients& c, int j_split) {
  if (j_split < 0 || j_split > c.j_max())
    throw std::invalid_argument("j_split " + std::to_string(j_split) +
                                " outside [0, " + std::to_string(c.j_max()) + "]");
  const auto cut = c.layout().prefix_size(j_split);
  const auto v = c.values();
  return ScaleSplit{c.layout(), j_split,
                    std::vector<double>(v.begin(), v.begin() + cut),
                    std::vector<double>(v.begin() + cut, v.end())};
}

WaveletCoefficients merge_scales(const ScaleSplit& s) {
  if (s.j_split < 0 || s.j_split > s.layout.j_max())
    throw std::invalid_argument("split scale index out of range");
  const auto cut = s.layout.prefix_size(s.j_split);
  if (s.coarse.size() != cut || s.fine.size() != s.layout.size() - cut)
    throw std::invalid_argument("coarse/fine sizes do not match the layout");
  std::vector<double> values;
  values.reserve(s.layout.size());
  values.insert(values.end(), s.coarse.begin(), s.coarse.end());
  values.insert(values.end(), s.fine.begin(), s.fine.end());
  return WaveletCoefficients(s.layout, std::move(values));
}

}  // namespace sgfm
