#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace myolo {

/// Raised when operand dimensions do not agree with an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed files, manifests and configuration text.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for argument values outside an operation's domain.
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Rank is arbitrary, but every network-level routine works on rank-4
/// (batch, channel, height, width) tensors; the n()/c()/h()/w() accessors
/// enforce that layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t n() const;
  std::size_t c() const;
  std::size_t h() const;
  std::size_t w() const;

  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  /// Same data, new dims; the element count must be preserved.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void require_rank4() const;

  Shape shape_;
  std::vector<double> data_;
};

/// Rank-4 (n, c, h, w) tensor; the carrier of all neck computation.
using FeatureMap = Tensor;

/// Largest absolute elementwise difference. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Concatenates rank-4 tensors along the batch axis.
Tensor concat_batch(std::span<const Tensor> parts);

/// Extracts sample `index` of a rank-4 tensor as a batch of one.
Tensor slice_batch(const Tensor& x, std::size_t index);

}  // namespace myolo
