#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skeyspot/error.hpp"
#include "skeyspot/geometry.hpp"
#include "skeyspot/registry.hpp"

namespace skeyspot {

/// Detections for one image, or the error that prevented producing them.
struct ImagePredictions {
  std::string image_id;
  std::vector<Detection> detections;
  std::optional<ErrorCode> error;
  std::string error_message;

  bool ok() const noexcept { return !error.has_value(); }
};

/// JSON array of {image_id, detections:[{class_id, name, confidence,
/// box:[x_min,y_min,x_max,y_max]}]}; failed images carry
/// {image_id, error:{code, message}} instead of detections.
std::string write_predictions_json(std::span<const ImagePredictions> predictions, const ClassRegistry& registry);
/// Accepts the array form above, or a single per-image object. Throws
/// MalformedAnnotation and OutOfRangeClass.
std::vector<ImagePredictions> parse_predictions_json(std::string_view json_text, const ClassRegistry& registry);

/// image_id,class_id,name,confidence,x_min,y_min,x_max,y_max
std::string write_predictions_csv(std::span<const ImagePredictions> predictions, const ClassRegistry& registry);

/// RFC 4180 quoting for one CSV field.
std::string csv_field(std::string_view value);

}  // namespace skeyspot
