#pragma once

#include <optional>
#include <span>
#include <vector>

namespace skeyspot {

/// Axis-aligned box in pixel coordinates. Origin top-left, x to the right,
/// y downward. Half-open: a box covering pixel columns 10..49 has
/// x_min = 10, x_max = 50.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  /// Throws `Error(InvalidArgument)` unless finite and ordered.
  static BoundingBox checked(double x_min, double y_min, double x_max, double y_max);

  bool valid() const noexcept;
  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
  BoundingBox box;
  int class_id = 0;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

double box_area(const BoundingBox& b) noexcept;

/// Intersection over union; 0 when the union has zero area.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Intersection with [0,width]x[0,height]; nullopt when that has zero area.
std::optional<BoundingBox> clip_box(const BoundingBox& b, double width, double height);

/// Greedy class-aware non-maximum suppression.
///
/// Candidates are visited by descending confidence, ties by ascending input
/// index. A candidate is kept iff its IoU with every already-kept detection
/// of the same class is strictly below `iou_threshold`. The result is in
/// visit order, so it is sorted by descending confidence.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

/// Indices (into `dets`) of the detections `nms` keeps, in visit order.
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold);

}  // namespace skeyspot
