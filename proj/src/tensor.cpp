#include "myolo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace myolo {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor dims " + to_string(shape_) + " hold " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape_));
  }
  return shape_[axis];
}

void Tensor::require_rank4() const {
  if (shape_.size() != 4) {
    throw ShapeError("expected a rank-4 (n,c,h,w) tensor, got " +
                     to_string(shape_));
  }
}

std::size_t Tensor::n() const { require_rank4(); return shape_[0]; }
std::size_t Tensor::c() const { require_rank4(); return shape_[1]; }
std::size_t Tensor::h() const { require_rank4(); return shape_[2]; }
std::size_t Tensor::w() const { require_rank4(); return shape_[3]; }

double& Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t y,
                  std::size_t x) const {
  return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " +
                     to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no parts");
  Shape shape = parts.front().shape();
  if (shape.size() != 4) throw ShapeError("concat_batch: rank-4 tensors only");
  std::vector<double> data;
  std::size_t batch = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.c() != shape[1] || p.h() != shape[2] ||
        p.w() != shape[3]) {
      throw ShapeError("concat_batch: " + to_string(p.shape()) +
                       " does not match " + to_string(shape));
    }
    batch += p.n();
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  shape[0] = batch;
  return Tensor(std::move(shape), std::move(data));
}

Tensor slice_batch(const Tensor& x, std::size_t index) {
  if (index >= x.n()) throw ShapeError("slice_batch: index out of range");
  const std::size_t stride = x.c() * x.h() * x.w();
  auto first = x.values().begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Tensor({1, x.c(), x.h(), x.w()},
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

}  // namespace myolo
