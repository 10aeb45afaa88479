#include "myolo/polygon.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace myolo {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_boundary(const BinaryMask& m, std::size_t y, std::size_t x) {
  if (y == 0 || x == 0 || y + 1 == m.height() || x + 1 == m.width()) return true;
  return !m(y - 1, x) || !m(y + 1, x) || !m(y, x - 1) || !m(y, x + 1);
}

double diagonal(std::size_t height, std::size_t width) {
  return std::hypot(static_cast<double>(height), static_cast<double>(width));
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

void PolygonDetection::validate() const {
  if (bins < 3) throw ValueError("polygon: bins must be >= 3");
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const PolygonVertex& v = vertices[i];
    if (v.angle_bin >= bins) throw ValueError("polygon: angle bin out of range");
    if (i > 0 && v.angle_bin <= vertices[i - 1].angle_bin) {
      throw ValueError("polygon: angle bins must be strictly increasing");
    }
    if (!(v.distance >= 0.0)) throw ValueError("polygon: negative distance");
    if (!(v.confidence >= 0.0 && v.confidence <= 1.0)) {
      throw ValueError("polygon: confidence outside [0,1]");
    }
  }
}

PolygonDetection encode_mask_to_polygon(const BinaryMask& mask, std::size_t bins) {
  if (bins < 3) throw ValueError("encode: bins must be >= 3");
  const std::size_t H = mask.height(), W = mask.width();
  double sx = 0.0, sy = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (!mask(y, x)) continue;
      sx += static_cast<double>(x) + 0.5;
      sy += static_cast<double>(y) + 0.5;
      ++count;
    }
  }
  if (count == 0) throw ValueError("encode: mask has no foreground pixels");
  const double px = sx / static_cast<double>(count);
  const double py = sy / static_cast<double>(count);

  std::vector<double> radius(bins, -1.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (!mask(y, x) || !is_boundary(mask, y, x)) continue;
      const double dx = static_cast<double>(x) + 0.5 - px;
      const double dy = py - (static_cast<double>(y) + 0.5);
      const double r = std::hypot(dx, dy);
      if (r == 0.0) {
        for (double& best : radius) best = std::max(best, 0.0);
        continue;
      }
      double theta = std::atan2(dy, dx);
      if (theta < 0.0) theta += kTwoPi;
      auto b = static_cast<std::size_t>(theta / kTwoPi * static_cast<double>(bins));
      if (b >= bins) b = bins - 1;
      radius[b] = std::max(radius[b], r);
    }
  }

  PolygonDetection poly;
  poly.cx = px / static_cast<double>(W);
  poly.cy = py / static_cast<double>(H);
  poly.bins = bins;
  const double diag = diagonal(H, W);
  for (std::size_t b = 0; b < bins; ++b) {
    const bool hit = radius[b] >= 0.0;
    poly.vertices.push_back({b, hit ? radius[b] / diag : 0.0, hit ? 1.0 : 0.0});
  }
  return poly;
}

PolygonDetection decode_vertices(const PolygonDetection& raw, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValueError("decode: threshold must lie in [0,1]");
  }
  PolygonDetection out = raw;
  out.threshold = threshold;
  out.vertices.clear();
  for (const PolygonVertex& v : raw.vertices) {
    if (v.confidence > threshold) out.vertices.push_back(v);
  }
  return out;
}

std::vector<Point> polygon_points(const PolygonDetection& poly,
                                  std::size_t height, std::size_t width) {
  poly.validate();
  const double diag = diagonal(height, width);
  const double px = poly.cx * static_cast<double>(width);
  const double py = poly.cy * static_cast<double>(height);
  std::vector<Point> pts;
  pts.reserve(poly.vertices.size());
  for (const PolygonVertex& v : poly.vertices) {
    const double theta =
        (static_cast<double>(v.angle_bin) + 0.5) * kTwoPi / static_cast<double>(poly.bins);
    const double r = v.distance * diag;
    pts.push_back({px + r * std::cos(theta), py - r * std::sin(theta)});
  }
  return pts;
}

RasterResult rasterize_points(std::span<const Point> points, std::size_t height,
                              std::size_t width) {
  RasterResult out{BinaryMask(height, width), points.size() < 3};
  if (out.degenerate) return out;
  std::vector<double> xs;
  const std::size_t n = points.size();
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = static_cast<double>(y) + 0.5;
    xs.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point& a = points[i];
      const Point& b = points[j];
      if ((a.y > sy) != (b.y > sy)) {
        xs.push_back(a.x + (sy - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    // A centre is inside when an odd number of crossings lie to its right,
    // i.e. when it falls in [xs[2k], xs[2k+1]).
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const double lo = xs[k];
      const double hi = xs[k + 1];
      if (hi <= 0.0) continue;
      const double first = std::max(0.0, std::floor(lo - 0.5));
      for (auto x = static_cast<std::size_t>(first); x < width; ++x) {
        const double sx = static_cast<double>(x) + 0.5;
        if (sx >= hi) break;
        if (sx >= lo) out.mask.set(y, x, true);
      }
    }
  }
  return out;
}

RasterResult rasterize_polygon(const PolygonDetection& poly, std::size_t height,
                               std::size_t width) {
  const auto pts = polygon_points(poly, height, width);
  return rasterize_points(pts, height, width);
}

double polygon_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("iou: mask dims differ");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double polygon_area(std::span<const Point> points) {
  double twice = 0.0;
  for (std::size_t i = 0, j = points.size() - 1; i < points.size(); j = i++) {
    twice += points[j].x * points[i].y - points[i].x * points[j].y;
  }
  return points.empty() ? 0.0 : std::abs(twice) / 2.0;
}

std::string format_label(const PolygonDetection& poly) {
  std::string out;
  append_number(out, poly.cx);
  out += ' ';
  append_number(out, poly.cy);
  for (const PolygonVertex& v : poly.vertices) {
    out += ' ';
    out += std::to_string(v.angle_bin);
    out += ' ';
    append_number(out, v.distance);
    out += ' ';
    append_number(out, v.confidence);
  }
  return out;
}

PolygonDetection parse_label(std::string_view line, std::size_t bins) {
  std::istringstream is{std::string(line)};
  PolygonDetection poly;
  poly.bins = bins;
  if (!(is >> poly.cx >> poly.cy)) throw FormatError("polygon label: missing centre");
  PolygonVertex v;
  while (is >> v.angle_bin) {
    if (!(is >> v.distance >> v.confidence)) {
      throw FormatError("polygon label: incomplete vertex triple");
    }
    poly.vertices.push_back(v);
  }
  if (!is.eof()) throw FormatError("polygon label: unexpected token");
  try {
    poly.validate();
  } catch (const ValueError& e) {
    throw FormatError(std::string("polygon label: ") + e.what());
  }
  return poly;
}

HeadParameterReport head_parameter_report(std::size_t in_channels,
                                          std::size_t anchors,
                                          std::size_t classes, std::size_t bins) {
  HeadParameterReport r;
  r.box_parameters = (in_channels + 1) * anchors * (5 + classes);
  r.polygon_parameters = (in_channels + 1) * anchors * 2 * bins;
  r.overhead_ratio = static_cast<double>(r.polygon_parameters) /
                     static_cast<double>(r.box_parameters);
  return r;
}

}  // namespace myolo
