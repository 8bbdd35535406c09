#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "skeyspot/money.hpp"
#include "skeyspot/predictions.hpp"
#include "skeyspot/registry.hpp"

#include <opencv2/core.hpp>

namespace skeyspot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr double kPaletteSaturation = 0.85;
inline constexpr double kPaletteValue = 0.9;

/// Hue class_id * 360 / class_count degrees at fixed saturation and value.
/// Throws OutOfRangeClass.
Rgb class_color(int class_id, std::size_t class_count = 34);
/// "#rrggbb".
std::string to_hex(Rgb c);

struct RenderOptions {
  std::optional<std::set<int>> visible_classes;  // all when unset
  bool show_confidence = true;
};

/// Copy of `image` (8-bit, 1/3/4 channels; output is BGR) with each visible
/// detection drawn as a class-colored rectangle and an "id:name conf%"
/// caption. Stroke is max(2, min(W,H)/500) px.
cv::Mat render_annotations(const cv::Mat& image, std::span<const Detection> detections, const ClassRegistry& registry,
                           const RenderOptions& options = {});

/// Throws ImageDecodeError if OpenCV cannot encode.
std::string encode_png(const cv::Mat& image);

struct ImageSummary {
  std::string image_id;
  std::map<int, std::size_t> counts;  // only classes with detections
  std::size_t total = 0;
};

struct DetectionSummary {
  std::vector<ImageSummary> images;  // input order; failed images skipped
  std::map<int, std::size_t> rollup;
  std::size_t total = 0;
};

DetectionSummary summarize(std::span<const ImagePredictions> predictions);

struct CostLine {
  std::string image_id;
  int class_id = 0;
  std::size_t count = 0;
  std::optional<Money> rate;        // unset: unpriced
  std::optional<Money> line_total;  // count * rate
};

struct ImageCost {
  std::string image_id;
  std::vector<CostLine> lines;  // class id order
  std::size_t count = 0;
  Money subtotal;               // sum of priced line totals
};

struct CostBreakdown {
  std::vector<ImageCost> images;
  std::size_t count = 0;
  Money grand_total;
};

CostBreakdown cost_breakdown(const DetectionSummary& summary, const RateCard& rates);

/// image_id,class_id,class_name,count
std::string summary_to_csv(const DetectionSummary& summary, const ClassRegistry& registry);
std::string summary_to_json(const DetectionSummary& summary, const ClassRegistry& registry);
/// image_id,class_id,class_name,count,rate,line_total; then one SUBTOTAL row
/// per image and a final GRAND_TOTAL row.
std::string costs_to_csv(const CostBreakdown& costs, const ClassRegistry& registry);
std::string costs_to_json(const CostBreakdown& costs, const ClassRegistry& registry);

struct AnnotatedImage {
  std::string image_id;
  std::string png;
};

/// Zip with annotated/<image_id>.png (sorted by name), costs.csv when costs
/// are given, detections.json, summary.csv, summary.json and finally
/// MANIFEST.json listing every other entry's byte length and SHA-256.
/// Throws EmptyReport when `images` is empty.
std::string package_report(std::span<const AnnotatedImage> images, const DetectionSummary& summary,
                           const std::optional<CostBreakdown>& costs, std::span<const ImagePredictions> detections,
                           const ClassRegistry& registry);

struct SourceImage {
  std::string image_id;
  cv::Mat image;
};

/// Render, summarize, price and package in one go. Images with no
/// predictions entry are rendered clean; failed predictions are skipped.
std::string build_report(std::span<const SourceImage> images, std::span<const ImagePredictions> predictions,
                         const ClassRegistry& registry, const std::optional<RateCard>& rates);

}  // namespace skeyspot
