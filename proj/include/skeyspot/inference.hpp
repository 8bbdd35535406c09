#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skeyspot/dataset.hpp"
#include "skeyspot/geometry.hpp"
#include "skeyspot/kernels.hpp"
#include "skeyspot/predictions.hpp"
#include "skeyspot/registry.hpp"

#include <opencv2/core.hpp>

namespace skeyspot {

struct InferenceParams {
  double confidence_threshold = 0.25;
  double nms_iou_threshold = 0.45;
  std::optional<std::size_t> max_detections;

  /// Throws InvalidArgument.
  void validate() const;
};

inline constexpr int kDefaultInputSize = 640;

/// Aspect-preserving fit of a width x height image into an S x S square.
/// model = original * scale + pad.
struct LetterboxTransform {
  double scale = 1.0;
  double pad_x = 0.0;
  double pad_y = 0.0;
  int input_size = kDefaultInputSize;
  int source_width = 0;
  int source_height = 0;

  cv::Point2d to_model(cv::Point2d p) const { return {p.x * scale + pad_x, p.y * scale + pad_y}; }
  cv::Point2d to_original(cv::Point2d p) const { return {(p.x - pad_x) / scale, (p.y - pad_y) / scale}; }
  BoundingBox to_model(const BoundingBox& b) const;
  BoundingBox to_original(const BoundingBox& b) const;
};

/// Throws InvalidArgument for non-positive sizes.
LetterboxTransform make_letterbox(int width, int height, int input_size);

/// Decodes PNG/JPEG bytes to 8-bit BGR. Throws ImageDecodeError.
cv::Mat decode_image(std::span<const std::uint8_t> bytes);

struct PreprocessResult {
  cv::Mat tensor;  // float32, 4-d (1,3,S,S), RGB in [0,1]
  LetterboxTransform transform;
};

/// Resize into the letterbox, pad with gray 114, convert to planar RGB / 255.
/// Accepts 8-bit gray, BGR or BGRA. Throws ImageDecodeError on an empty image.
PreprocessResult preprocess(const cv::Mat& image, int input_size, Exec exec = Exec::parallel);

/// Dense float32 tensor as produced by a model.
struct RawTensor {
  std::vector<int> shape;
  std::vector<float> data;  // row-major
};

/// Decodes center-format rows (cx, cy, w, h, score_0..score_{C-1}) laid out
/// as (1, 4+C, N) or (1, N, 4+C). A row becomes a candidate when its best
/// class score is >= the confidence threshold (ties: lowest class id).
/// Boxes are mapped back through the letterbox, clipped to the source image,
/// suppressed with class-aware NMS, sorted by descending confidence and
/// capped. Throws AdapterShapeError.
std::vector<Detection> postprocess(const RawTensor& raw, const LetterboxTransform& transform,
                                   const InferenceParams& params, std::size_t class_count);

/// Output-decoding scheme of a loaded model.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  /// Raw output for one preprocessed image. The stub uses `image_id` and
  /// `transform`; a real network only looks at the tensor.
  virtual RawTensor forward(const cv::Mat& tensor, const std::string& image_id, const LetterboxTransform& transform) = 0;
};

/// A loaded model bound to a registry. Serves one request at a time; use
/// one session per worker for parallel throughput.
class ModelSession {
 public:
  ModelSession(std::unique_ptr<ModelBackend> backend, int input_size, const ClassRegistry& registry,
               std::string adapter_id);

  int input_size() const noexcept { return input_size_; }
  const ClassRegistry& registry() const noexcept { return registry_; }
  const std::string& adapter_id() const noexcept { return adapter_id_; }

  std::vector<Detection> detect(const cv::Mat& image, const std::string& image_id, const InferenceParams& params,
                                Exec exec = Exec::parallel);

 private:
  std::unique_ptr<ModelBackend> backend_;
  int input_size_;
  ClassRegistry registry_;
  std::string adapter_id_;
  std::mutex mutex_;
};

/// Adapters: "yolov8" (ONNX file, anchor-free center-format output) and
/// "gt-stub" (the path is a dataset manifest; the model emits each image's
/// ground truth with score 1.0). `input_size` overrides the size read from
/// the model signature; it is required when the signature is dynamic and
/// defaults to 640 for the stub. Throws ModelLoadError, ClassCountMismatch,
/// InvalidArgument.
std::unique_ptr<ModelSession> load_model(const std::filesystem::path& path, const ClassRegistry& registry,
                                         const std::string& adapter_id,
                                         std::optional<int> input_size = std::nullopt);

struct ImageInput {
  std::string image_id;
  std::vector<std::uint8_t> bytes;  // encoded PNG/JPEG
};

/// Image id used for a file: its stem.
std::string image_id_for(const std::filesystem::path& path);

/// Per-image results in input order. Decode and adapter failures become
/// error entries; other images are unaffected.
std::vector<ImagePredictions> detect_batch(ModelSession& session, std::span<const ImageInput> images,
                                           const InferenceParams& params);

}  // namespace skeyspot
