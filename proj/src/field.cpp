#include "sgfm/field.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace sgfm {

double Grid::spacing() const { return 2.0 * std::numbers::pi / n; }

double Grid::cell_volume() const { return std::pow(spacing(), ndim); }

std::size_t Grid::size() const {
  std::size_t s = 1;
  for (int a = 0; a < ndim; ++a) s *= static_cast<std::size_t>(n);
  return s;
}

bool is_power_of_two(long long v) { return v > 0 && (v & (v - 1)) == 0; }

int ilog2(long long v) {
  int r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

Grid make_grid(int ndim, int n) {
  if (ndim != 2 && ndim != 3)
    throw std::invalid_argument("grid dimension must be 2 or 3, got " +
                                std::to_string(ndim));
  if (!is_power_of_two(n) || n < 4)
    throw std::invalid_argument(
        "points per axis must be a power of two >= 4, got " +
        std::to_string(n));
  return Grid{ndim, n};
}

Field::Field(const Grid& grid, int channels)
    : grid_(grid), channels_(channels), data_(grid.size() * channels, 0.0) {
  if (channels < 1) throw std::invalid_argument("field needs >= 1 channel");
}

Field::Field(const Grid& grid, int channels, std::vector<double> data)
    : grid_(grid), channels_(channels), data_(std::move(data)) {
  if (channels < 1) throw std::invalid_argument("field needs >= 1 channel");
  if (data_.size() != grid.size() * channels)
    throw std::invalid_argument("field data size does not match grid");
}

std::span<double> Field::channel(int c) {
  const auto n = grid_.size();
  return std::span<double>(data_).subspan(n * c, n);
}

std::span<const double> Field::channel(int c) const {
  const auto n = grid_.size();
  return std::span<const double>(data_).subspan(n * c, n);
}

bool Field::same_shape(const Field& other) const {
  return grid_ == other.grid_ && channels_ == other.channels_;
}

static void require_same_shape(const Field& a, const Field& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("field shape mismatch");
}

Field& Field::operator+=(const Field& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Field& Field::operator*=(double a) {
  for (auto& v : data_) v *= a;
  return *this;
}

Field& Field::axpy(double a, const Field& x) {
  require_same_shape(*this, x);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
  return *this;
}

bool Field::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double a, Field f) { return f *= a; }

Field sample_field(const Grid& grid, int channels,
                   const std::function<double(std::span<const double>, int)>& fn) {
  Field f(grid, channels);
  const double h = grid.spacing();
  const std::size_t n = grid.size();
  double x[3] = {0.0, 0.0, 0.0};
  for (int c = 0; c < channels; ++c) {
    auto out = f.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t rem = i;
      for (int a = grid.ndim - 1; a >= 0; --a) {
        x[a] = h * static_cast<double>(rem % grid.n);
        rem /= grid.n;
      }
      out[i] = fn(std::span<const double>(x, grid.ndim), c);
    }
  }
  return f;
}

double l2_inner(const Field& a, const Field& b) {
  require_same_shape(a, b);
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += da[i] * db[i];
  return s * a.grid().cell_volume();
}

double l2_norm(const Field& f) {
  return grid_norm(f) * std::sqrt(f.grid().cell_volume());
}

double grid_norm(const Field& f) {
  double s = 0.0;
  for (double v : f.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f.data()) m = std::max(m, std::abs(v));
  return m;
}

Field gaussian_field(const Grid& grid, int channels, std::uint64_t seed) {
  Field f(grid, channels);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : f.data()) v = normal(rng);
  return f;
}

Trajectory::Trajectory(double dt) : dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("trajectory dt must be > 0");
}

void Trajectory::push(Field f, double time0) {
  if (!snapshots_.empty() && !snapshots_.front().field.same_shape(f))
    throw std::invalid_argument("snapshot shape differs from trajectory");
  const double t = snapshots_.empty()
                       ? time0
                       : snapshots_.front().time +
                             dt_ * static_cast<double>(snapshots_.size());
  snapshots_.push_back({t, std::move(f)});
}

}  // namespace sgfm
