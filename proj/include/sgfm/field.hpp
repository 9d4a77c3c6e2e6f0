#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sgfm {

/// Periodic uniform grid on [0, 2*pi)^ndim with n points per axis.
struct Grid {
  int ndim = 2;
  int n = 0;

  double spacing() const;
  double cell_volume() const;
  /// Points per channel, n^ndim.
  std::size_t size() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Validates `ndim` in {2, 3} and `n` a power of two with n >= 4.
/// Throws std::invalid_argument otherwise.
Grid make_grid(int ndim, int n);

bool is_power_of_two(long long v);
int ilog2(long long v);

/// Multi-channel real field, channel-major and row-major within a channel
/// (axis 0 slowest). Vector fields store their components as consecutive
/// channels: channel `g * ndim + a` is component `a` of vector group `g`.
class Field {
 public:
  Field() = default;
  Field(const Grid& grid, int channels);
  Field(const Grid& grid, int channels, std::vector<double> data);

  const Grid& grid() const { return grid_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double a);
  /// this += a * x
  Field& axpy(double a, const Field& x);

  bool all_finite() const;
  bool same_shape(const Field& other) const;

  friend bool operator==(const Field&, const Field&) = default;

 private:
  Grid grid_{};
  int channels_ = 0;
  std::vector<double> data_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double a, Field f);

/// Samples `fn(x, channel)` at every grid point; `x` holds ndim coordinates.
Field sample_field(const Grid& grid, int channels,
                   const std::function<double(std::span<const double>, int)>& fn);

/// Cell-volume weighted L2 norm, the discrete analogue of the H inner product.
double l2_norm(const Field& f);
double l2_inner(const Field& a, const Field& b);
/// Plain Euclidean norm of the samples.
double grid_norm(const Field& f);
double max_abs(const Field& f);

/// I.i.d. standard-normal samples, bit-reproducible for a fixed seed.
Field gaussian_field(const Grid& grid, int channels, std::uint64_t seed);

struct Snapshot {
  double time = 0.0;
  Field field;
};

/// Uniformly spaced sequence of snapshots sharing grid and channel count.
class Trajectory {
 public:
  explicit Trajectory(double dt);

  double dt() const { return dt_; }
  std::size_t size() const { return snapshots_.size(); }
  bool empty() const { return snapshots_.empty(); }

  /// Appends at `front().time + size() * dt`, or at `time0` when empty.
  void push(Field f, double time0 = 0.0);

  const Snapshot& operator[](std::size_t i) const { return snapshots_[i]; }
  const Snapshot& front() const { return snapshots_.front(); }
  const Snapshot& back() const { return snapshots_.back(); }
  auto begin() const { return snapshots_.begin(); }
  auto end() const { return snapshots_.end(); }

 private:
  double dt_;
  std::vector<Snapshot> snapshots_;
};

}  // namespace sgfm
