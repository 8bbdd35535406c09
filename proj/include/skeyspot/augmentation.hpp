#pragma once

// Label-preserving augmentation: flip, rotation, random crop and brightness.
// Every transform moves the ground-truth boxes exactly along with the pixels
// and never changes a class label.

#include <cstdint>
#include <functional>
#include <opencv2/core.hpp>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skeyspot/dataset.hpp"
#include "skeyspot/kernels.hpp"
#include "skeyspot/rng.hpp"

namespace skeyspot {

struct AugmentationConfig {
  bool flip = true;
  bool rotate = true;
  bool crop = true;
  bool brightness = true;
  double rotation_range_degrees = 15.0;  // angles drawn from [-r, r]
  std::pair<double, double> crop_scale_range{0.8, 1.0};
  std::pair<double, double> brightness_factor_range{0.8, 1.2};
  double min_box_visibility = 0.3;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
  int enabled_count() const noexcept;
};

/// Every key optional; missing keys keep their defaults. Throws InvalidConfig.
AugmentationConfig parse_augmentation_config(std::string_view json_text);

enum class FlipAxis { horizontal, vertical };

struct AugmentedSample {
  cv::Mat image;
  std::vector<GroundTruthBox> boxes;
  Provenance provenance;
};

// ---------------------------------------------------------------------------
// Box geometry

std::vector<GroundTruthBox> flip_boxes(std::span<const GroundTruthBox> boxes, int width, int height,
                                       FlipAxis axis);

/// Counter-clockwise rotation (as seen on screen) about the image centre onto
/// a canvas enlarged to hold the whole rotated image. Multiples of 90 degrees
/// use exact sines and cosines.
struct RotationGeometry {
  double cos_a = 1.0;
  double sin_a = 0.0;
  int in_width = 0;
  int in_height = 0;
  int out_width = 0;
  int out_height = 0;

  static RotationGeometry make(int width, int height, double angle_degrees);
  /// Maps a point in input pixel coordinates to output pixel coordinates.
  std::pair<double, double> map(double x, double y) const noexcept;
};

/// Each box becomes the axis-aligned hull of its rotated corners, clipped to
/// the canvas; hulls whose visible fraction is below `min_visibility` are
/// dropped.
std::vector<GroundTruthBox> rotate_boxes(std::span<const GroundTruthBox> boxes,
                                         const RotationGeometry& geometry, double min_visibility);

struct CropWindow {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

/// Window of round(scale*W) x round(scale*H) at a uniform integer offset.
CropWindow sample_crop_window(int width, int height, double scale, Rng& rng);

/// Boxes translated into window coordinates and clipped; a box survives iff
/// clipped area / original area >= min_visibility.
std::vector<GroundTruthBox> crop_boxes(std::span<const GroundTruthBox> boxes, const CropWindow& window,
                                       double min_visibility);

// ---------------------------------------------------------------------------
// Image + box transforms

AugmentedSample flip(const cv::Mat& image, std::span<const GroundTruthBox> boxes, FlipAxis axis);
/// Padding is white.
AugmentedSample rotate(const cv::Mat& image, std::span<const GroundTruthBox> boxes, double angle_degrees,
                       double min_visibility);
AugmentedSample random_crop(const cv::Mat& image, std::span<const GroundTruthBox> boxes,
                            const CropWindow& window, double min_visibility);
/// 8-bit images only; every channel value scaled and clamped to [0,255].
AugmentedSample adjust_brightness(const cv::Mat& image, std::span<const GroundTruthBox> boxes, double factor,
                                  Exec exec = Exec::parallel);

// ---------------------------------------------------------------------------
// Manifest-level driver

using ImageLoader = std::function<cv::Mat(const ImageRecord&)>;
/// Persists a derived image and returns the path to record in the manifest.
/// Called concurrently from worker threads for distinct records.
using ImageWriter = std::function<std::string(const ImageRecord& derived, const cv::Mat& image)>;

struct AugmentOutcome {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

/// For every train-split image and every enabled transform, emits one derived
/// record with id "<source>__<transform>" right after its source record.
/// Parameters come from a per-image seed derived from (config.seed, image id),
/// so results do not depend on thread scheduling. Per-image failures become
/// warnings.
AugmentOutcome augment_manifest(const DatasetManifest& manifest, const AugmentationConfig& config,
                                const ImageLoader& load, const ImageWriter& write,
                                Exec exec = Exec::parallel);

}  // namespace skeyspot
