#pragma once

// Bounding polygons in polar form around a detection centre.
//
// The full turn is split into `bins` equal sectors; sector b spans angles
// [b, b+1) * 2pi / bins, measured counter-clockwise from +x with the image
// y axis pointing down (so angles increase towards the top of the image).
// A vertex in sector b sits on the sector's bisector at `distance` times the
// image diagonal from the centre. Pixel (row y, col x) has its centre at
// (x + 0.5, y + 0.5).

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "myolo/image.hpp"

namespace myolo {

inline constexpr std::size_t kDefaultBins = 36;
inline constexpr double kDefaultVertexThreshold = 0.5;

struct PolygonVertex {
  std::size_t angle_bin = 0;
  double distance = 0.0;    // fraction of the image diagonal
  double confidence = 0.0;  // [0, 1]

  friend bool operator==(const PolygonVertex&, const PolygonVertex&) = default;
};

struct PolygonDetection {
  double cx = 0.0;  // centre, normalised by image width
  double cy = 0.0;  // centre, normalised by image height
  std::size_t bins = kDefaultBins;
  std::vector<PolygonVertex> vertices;  // strictly increasing angle_bin
  double threshold = 0.0;               // confidence cut that produced the list

  /// Throws ValueError when bins are unordered or out of range, or a
  /// distance / confidence is outside its domain.
  void validate() const;

  friend bool operator==(const PolygonDetection&, const PolygonDetection&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Ground-truth polygon label from a segmentation mask: centre at the
/// foreground centroid, one vertex per sector at the largest radius of a
/// boundary pixel in it (confidence 1), or confidence 0 for empty sectors.
/// Pixels exactly at the centre count towards every sector with radius 0.
PolygonDetection encode_mask_to_polygon(const BinaryMask& mask,
                                        std::size_t bins = kDefaultBins);

/// Keeps vertices whose confidence is strictly above `threshold`.
PolygonDetection decode_vertices(const PolygonDetection& raw, double threshold);

/// Vertex positions in pixel coordinates for an image of the given size.
std::vector<Point> polygon_points(const PolygonDetection& poly,
                                  std::size_t height, std::size_t width);

struct RasterResult {
  BinaryMask mask;
  bool degenerate = false;  // fewer than three vertices; mask is empty
};

/// Even-odd scanline fill, sampling at pixel centres.
RasterResult rasterize_polygon(const PolygonDetection& poly, std::size_t height,
                               std::size_t width);
RasterResult rasterize_points(std::span<const Point> points, std::size_t height,
                              std::size_t width);

/// |a & b| / |a | b|, and 1 when both masks are empty.
double polygon_iou(const BinaryMask& a, const BinaryMask& b);

/// Shoelace area in squared pixels.
double polygon_area(std::span<const Point> points);

/// Text label: `cx cy (angle_bin distance confidence)*`.
std::string format_label(const PolygonDetection& poly);
PolygonDetection parse_label(std::string_view line, std::size_t bins);

/// Extra 1x1-conv outputs a polygon head adds per detection layer, next to
/// the box head it extends.
struct HeadParameterReport {
  std::size_t box_parameters = 0;
  std::size_t polygon_parameters = 0;
  double overhead_ratio = 0.0;  // polygon / box
};
HeadParameterReport head_parameter_report(std::size_t in_channels,
                                          std::size_t anchors,
                                          std::size_t classes, std::size_t bins);

}  // namespace myolo
