#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "myolo/tensor.hpp"

namespace myolo {

/// Two-dimensional {0,1} grid, row-major.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, bool fill = false);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator()(std::size_t y, std::size_t x) const { return bits_[y * width_ + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v) { bits_[y * width_ + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  std::size_t count() const noexcept;
  BinaryMask complement() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Real-valued map with every value clamped into [0, 1] on construction.
class PredictionMap {
 public:
  PredictionMap() = default;
  PredictionMap(std::size_t height, std::size_t width, double fill = 0.0);
  PredictionMap(std::size_t height, std::size_t width, std::vector<double> values);
  static PredictionMap from_mask(const BinaryMask& mask);
  /// Accepts (h, w) or (1, 1, h, w) tensors.
  static PredictionMap from_tensor(const Tensor& t);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator()(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }

  double mean() const;
  /// Pixels with value >= threshold become foreground.
  BinaryMask binarize(double threshold) const;
  PredictionMap inverted() const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// Bilinear resampling (align-corners = false) to an arbitrary size.
PredictionMap resize_bilinear(const PredictionMap& src, std::size_t height,
                              std::size_t width);

namespace pgm {

/// Greyscale image as read from disk: raw samples and their maxval.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint32_t> samples;
};

/// Binary PGM (P5), maxval up to 65535; comments in the header are skipped.
Image read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Image& image);

/// value / maxval.
PredictionMap read_prediction(const std::filesystem::path& path);
/// Samples >= (maxval + 1) / 2 (i.e. >= 128 at maxval 255) are foreground.
BinaryMask read_mask(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const BinaryMask& mask);
/// Rounds value * 255 to the nearest sample.
void write_prediction(const std::filesystem::path& path, const PredictionMap& map);

}  // namespace pgm
}  // namespace myolo
