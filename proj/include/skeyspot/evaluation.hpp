#pragma once

// COCO-style detection evaluation: greedy IoU matching, 101-point
// interpolated average precision, mAP@50 / mAP@75 / mAP@[50:95].

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skeyspot/dataset.hpp"
#include "skeyspot/kernels.hpp"
#include "skeyspot/predictions.hpp"

namespace skeyspot {

/// 0.50, 0.55, ..., 0.95.
std::vector<double> default_iou_thresholds();

struct DetectionMatch {
  std::size_t det_index = 0;  // index into the input detections
  int class_id = 0;
  double confidence = 0.0;
  std::optional<std::size_t> gt_index;  // matched ground truth, if any
};

struct MatchResult {
  double iou_threshold = 0.5;
  std::vector<DetectionMatch> matches;  // by descending confidence, ties by input index
  std::vector<bool> gt_matched;         // parallel to the ground-truth input
};

/// Each detection, in confidence order, claims the unclaimed same-class
/// ground truth with the highest IoU >= threshold (ties: lowest index);
/// otherwise it is a false positive.
MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                             double iou_threshold);

struct ScoredMatch {
  double confidence = 0.0;
  bool true_positive = false;
};

/// 101-point interpolated AP. `matches` is one class's detections across all
/// images in a fixed image order; they are stably sorted by descending
/// confidence here. Throws UndefinedAP when gt_count == 0.
double average_precision(std::span<const ScoredMatch> matches, std::size_t gt_count);

struct ClassReport {
  int class_id = 0;
  std::string name;
  std::size_t gt_count = 0;
  bool present = false;            // false: no ground truth, excluded from means
  std::vector<double> ap;          // per threshold; empty when absent
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> ap50_95;
};

struct EvaluationReport {
  std::vector<double> thresholds;
  std::vector<ClassReport> classes;  // one per registry class, id order
  std::vector<double> map_per_threshold;
  double map50 = 0.0;
  double map75 = 0.0;
  double map50_95 = 0.0;
  std::size_t image_count = 0;

  std::vector<int> evaluated_classes() const;
};

struct EvaluationOptions {
  std::vector<double> thresholds = default_iou_thresholds();  // must contain 0.50 and 0.75
  std::optional<Split> split;                   // evaluate only these images; all when unset
  std::optional<std::size_t> max_detections;    // per image, highest confidence first
  Exec exec = Exec::parallel;
};

/// Evaluates `predictions` against the manifest's ground truth. Images
/// without a predictions entry count as silent. Classes without ground truth
/// in the evaluated images are reported absent and excluded from every mean.
/// Throws UnknownImageId, EmptyGroundTruth, InvalidArgument.
EvaluationReport evaluate(std::span<const ImagePredictions> predictions, const DatasetManifest& manifest,
                          const EvaluationOptions& options = {});

/// Cross-fold mean. A class's APs average over the folds where it has
/// ground truth; it is absent only if absent in every fold. Each mAP field
/// is the mean of the per-fold values. gt_count and image_count are summed.
/// Throws MismatchedReports when the reports disagree on thresholds or
/// class lists, or when there are none.
EvaluationReport aggregate_folds(std::span<const EvaluationReport> reports);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(std::string_view json_text);
/// id,name,gt_count,AP50,AP75,AP50_95 per class ("-" when absent), then
/// mAP50 / mAP75 / mAP50_95 footer rows.
std::string report_to_csv(const EvaluationReport& report);

}  // namespace skeyspot
