#include "skeyspot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skeyspot/error.hpp"

namespace skeyspot {

BoundingBox BoundingBox::checked(double x_min, double y_min, double x_max, double y_max) {
  BoundingBox b{x_min, y_min, x_max, y_max};
  if (!b.valid()) {
    throw Error(ErrorCode::InvalidArgument, "invalid bounding box: coordinates must be finite with min <= max");
  }
  return b;
}

bool BoundingBox::valid() const noexcept {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
}

double box_area(const BoundingBox& b) noexcept {
  const double w = b.x_max - b.x_min;
  const double h = b.y_max - b.y_min;
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::optional<BoundingBox> clip_box(const BoundingBox& b, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "clip_box: width and height must be positive");
  }
  BoundingBox c{std::clamp(b.x_min, 0.0, width), std::clamp(b.y_min, 0.0, height),
                std::clamp(b.x_max, 0.0, width), std::clamp(b.y_max, 0.0, height)};
  if (box_area(c) <= 0.0) return std::nullopt;
  return c;
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::vector<std::size_t> kept;
  kept.reserve(dets.size());
  for (std::size_t idx : order) {
    const Detection& cand = dets[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return dets[k].class_id == cand.class_id && iou(dets[k].box, cand.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
  return out;
}

}  // namespace skeyspot
