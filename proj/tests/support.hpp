#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "sgfm/field.hpp"
#include "sgfm/spectral.hpp"

namespace sgfm::testing {

inline double max_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(const Field& a, const Field& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double euclid(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Scalar field from fn(x, y) on a 2D grid.
template <typename Fn>
Field scalar2d(const Grid& g, Fn fn) {
  return sample_field(g, 1, [&](std::span<const double> x, int) { return fn(x[0], x[1]); });
}

/// Two-component field from fx(x, y), fy(x, y) on a 2D grid.
template <typename Fx, typename Fy>
Field vector2d(const Grid& g, Fx fx, Fy fy) {
  return sample_field(g, 2, [&](std::span<const double> x, int c) {
    return c == 0 ? fx(x[0], x[1]) : fy(x[0], x[1]);
  });
}

/// Divergence-free vector field with Fourier support |k_a| <= kmax.
inline Field smooth_solenoidal(const Grid& g, std::uint64_t seed, int kmax) {
  return helmholtz_project(band_limit(gaussian_field(g, g.ndim, seed), kmax));
}

}  // namespace sgfm::testing
