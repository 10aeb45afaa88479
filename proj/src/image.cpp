#include "myolo/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <tuple>

namespace myolo {

BinaryMask::BinaryMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {
  if (height == 0 || width == 0) throw ShapeError("mask dims must be >= 1x1");
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& b : out.bits_) b = b ? 0 : 1;
  return out;
}

PredictionMap::PredictionMap(std::size_t height, std::size_t width, double fill)
    : PredictionMap(height, width, std::vector<double>(height * width, fill)) {}

PredictionMap::PredictionMap(std::size_t height, std::size_t width,
                             std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height == 0 || width == 0) throw ShapeError("prediction dims must be >= 1x1");
  if (values_.size() != height * width) {
    throw ShapeError("prediction map: " + std::to_string(values_.size()) +
                     " values for " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (double& v : values_) {
    if (std::isnan(v)) throw ValueError("prediction map contains NaN");
    v = std::clamp(v, 0.0, 1.0);
  }
}

PredictionMap PredictionMap::from_mask(const BinaryMask& mask) {
  std::vector<double> v(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) v[i] = mask[i] ? 1.0 : 0.0;
  return PredictionMap(mask.height(), mask.width(), std::move(v));
}

PredictionMap PredictionMap::from_tensor(const Tensor& t) {
  if (t.rank() == 2) return PredictionMap(t.dim(0), t.dim(1), t.values());
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) {
    return PredictionMap(t.dim(2), t.dim(3), t.values());
  }
  throw ShapeError("prediction tensor must be (h,w) or (1,1,h,w), got " +
                   to_string(t.shape()));
}

double PredictionMap::mean() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) /
         static_cast<double>(values_.size());
}

BinaryMask PredictionMap::binarize(double threshold) const {
  BinaryMask m(height_, width_);
  for (std::size_t y = 0; y < height_; ++y) {
    for (std::size_t x = 0; x < width_; ++x) m.set(y, x, (*this)(y, x) >= threshold);
  }
  return m;
}

PredictionMap PredictionMap::inverted() const {
  std::vector<double> v(values_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 - values_[i];
  return PredictionMap(height_, width_, std::move(v));
}

PredictionMap resize_bilinear(const PredictionMap& src, std::size_t height,
                              std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resize: empty target");
  if (src.height() == height && src.width() == width) return src;
  auto taps = [](std::size_t dst, std::size_t out, std::size_t in) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(out) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  std::vector<double> out(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto [y0, y1, fy] = taps(y, height, src.height());
    for (std::size_t x = 0; x < width; ++x) {
      const auto [x0, x1, fx] = taps(x, width, src.width());
      const double top = (1.0 - fx) * src(y0, x0) + fx * src(y0, x1);
      const double bot = (1.0 - fx) * src(y1, x0) + fx * src(y1, x1);
      out[y * width + x] = (1.0 - fy) * top + fy * bot;
    }
  }
  return PredictionMap(height, width, std::move(out));
}

namespace pgm {
namespace {

std::size_t header_number(std::istream& is, const std::filesystem::path& path) {
  int ch = is.peek();
  while (is && (std::isspace(ch) || ch == '#')) {
    if (ch == '#') {
      std::string comment;
      std::getline(is, comment);
    } else {
      is.get();
    }
    ch = is.peek();
  }
  std::size_t v = 0;
  if (!(is >> v)) throw FormatError(path.string() + ": malformed PGM header");
  return v;
}

}  // namespace

Image read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  char magic[2] = {};
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || magic[1] != '5') {
    throw FormatError(path.string() + ": not a binary PGM (P5)");
  }
  Image img;
  img.width = header_number(is, path);
  img.height = header_number(is, path);
  const std::size_t maxval = header_number(is, path);
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
    throw FormatError(path.string() + ": invalid PGM dims or maxval");
  }
  img.maxval = static_cast<std::uint32_t>(maxval);
  if (!std::isspace(is.get())) throw FormatError(path.string() + ": malformed PGM header");
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(img.width * img.height * bytes_per);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw FormatError(path.string() + ": truncated PGM payload");
  }
  img.samples.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    img.samples[i] = bytes_per == 1 ? raw[i]
                                    : (static_cast<std::uint32_t>(raw[2 * i]) << 8) | raw[2 * i + 1];
    if (img.samples[i] > img.maxval) {
      throw FormatError(path.string() + ": sample exceeds maxval");
    }
  }
  return img;
}

void write(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << "P5\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
  for (std::uint32_t s : image.samples) {
    if (image.maxval > 255) os.put(static_cast<char>(s >> 8));
    os.put(static_cast<char>(s & 0xff));
  }
  if (!os) throw FormatError("failed writing " + path.string());
}

PredictionMap read_prediction(const std::filesystem::path& path) {
  const Image img = read(path);
  std::vector<double> v(img.samples.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<double>(img.samples[i]) / static_cast<double>(img.maxval);
  }
  return PredictionMap(img.height, img.width, std::move(v));
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const Image img = read(path);
  const std::uint32_t cut = (img.maxval + 1) / 2;
  BinaryMask m(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      m.set(y, x, img.samples[y * img.width + x] >= cut);
    }
  }
  return m;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  Image img{mask.height(), mask.width(), 255, {}};
  img.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img.samples[i] = mask[i] ? 255 : 0;
  write(path, img);
}

void write_prediction(const std::filesystem::path& path, const PredictionMap& map) {
  Image img{map.height(), map.width(), 255, {}};
  img.samples.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    img.samples[i] = static_cast<std::uint32_t>(std::lround(map[i] * 255.0));
  }
  write(path, img);
}

}  // namespace pgm
}  // namespace myolo
