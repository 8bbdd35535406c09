#include "skeyspot/inference.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/dnn.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <unordered_map>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"
#include "skeyspot/onnx_signature.hpp"

namespace skeyspot {

void InferenceParams::validate() const {
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence threshold must be in [0,1]");
  }
  if (!(nms_iou_threshold >= 0.0 && nms_iou_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "NMS IoU threshold must be in [0,1]");
  }
}

BoundingBox LetterboxTransform::to_model(const BoundingBox& b) const {
  const auto p0 = to_model(cv::Point2d{b.x_min, b.y_min});
  const auto p1 = to_model(cv::Point2d{b.x_max, b.y_max});
  return {p0.x, p0.y, p1.x, p1.y};
}

BoundingBox LetterboxTransform::to_original(const BoundingBox& b) const {
  const auto p0 = to_original(cv::Point2d{b.x_min, b.y_min});
  const auto p1 = to_original(cv::Point2d{b.x_max, b.y_max});
  return {p0.x, p0.y, p1.x, p1.y};
}

LetterboxTransform make_letterbox(int width, int height, int input_size) {
  if (width <= 0 || height <= 0 || input_size <= 0) {
    throw Error(ErrorCode::InvalidArgument, "letterbox: sizes must be positive");
  }
  LetterboxTransform t;
  t.input_size = input_size;
  t.source_width = width;
  t.source_height = height;
  const double s = input_size;
  t.scale = std::min(s / width, s / height);
  // Same rounding as the detector family's reference implementation.
  t.pad_x = std::round((s - width * t.scale) / 2.0 - 0.1);
  t.pad_y = std::round((s - height * t.scale) / 2.0 - 0.1);
  return t;
}

cv::Mat decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::ImageDecodeError, "empty image data");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat img;
  try {
    img = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::ImageDecodeError, std::string("image decode failed: ") + e.what());
  }
  if (img.empty()) throw Error(ErrorCode::ImageDecodeError, "not a decodable PNG/JPEG image");
  return img;
}

PreprocessResult preprocess(const cv::Mat& image, int input_size, Exec exec) {
  if (image.empty()) throw Error(ErrorCode::ImageDecodeError, "empty image");
  if (image.depth() != CV_8U) throw Error(ErrorCode::ImageDecodeError, "only 8-bit images are supported");
  cv::Mat bgr;
  switch (image.channels()) {
    case 1: cv::cvtColor(image, bgr, cv::COLOR_GRAY2BGR); break;
    case 3: bgr = image; break;
    case 4: cv::cvtColor(image, bgr, cv::COLOR_BGRA2BGR); break;
    default: throw Error(ErrorCode::ImageDecodeError, "unsupported channel count");
  }

  PreprocessResult out;
  out.transform = make_letterbox(bgr.cols, bgr.rows, input_size);
  const auto& t = out.transform;
  const int new_w = static_cast<int>(std::round(bgr.cols * t.scale));
  const int new_h = static_cast<int>(std::round(bgr.rows * t.scale));
  cv::Mat resized;
  if (new_w == bgr.cols && new_h == bgr.rows) {
    resized = bgr;
  } else {
    cv::resize(bgr, resized, cv::Size(new_w, new_h), 0, 0, cv::INTER_LINEAR);
  }
  const int left = static_cast<int>(t.pad_x);
  const int top = static_cast<int>(t.pad_y);
  cv::Mat boxed;
  cv::copyMakeBorder(resized, boxed, top, input_size - new_h - top, left, input_size - new_w - left,
                     cv::BORDER_CONSTANT, cv::Scalar(114, 114, 114));
  if (!boxed.isContinuous()) boxed = boxed.clone();

  const int sizes[] = {1, 3, input_size, input_size};
  out.tensor.create(4, sizes, CV_32F);
  const auto pixels = static_cast<std::size_t>(input_size) * static_cast<std::size_t>(input_size);
  kernels::bgr_to_planar_rgb({boxed.data, pixels * 3}, static_cast<std::size_t>(input_size),
                             static_cast<std::size_t>(input_size), {out.tensor.ptr<float>(), pixels * 3}, exec);
  return out;
}

std::vector<Detection> postprocess(const RawTensor& raw, const LetterboxTransform& transform,
                                   const InferenceParams& params, std::size_t class_count) {
  params.validate();
  const auto& s = raw.shape;
  const int channels = static_cast<int>(class_count) + 4;
  if (s.size() != 3 || s[0] != 1 || s[1] < 0 || s[2] < 0) {
    throw Error(ErrorCode::AdapterShapeError, "expected a (1, 4+C, N) or (1, N, 4+C) output");
  }
  bool channels_first = false;
  if (s[1] == channels) {
    channels_first = true;
  } else if (s[2] != channels) {
    throw Error(ErrorCode::AdapterShapeError, "output shape (1, " + std::to_string(s[1]) + ", " + std::to_string(s[2]) +
                                                  ") does not carry " + std::to_string(channels) + " channels");
  }
  const auto rows = static_cast<std::size_t>(channels_first ? s[2] : s[1]);
  if (raw.data.size() != rows * static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::AdapterShapeError, "output data length does not match its shape");
  }
  auto at = [&](std::size_t row, std::size_t ch) -> double {
    return channels_first ? raw.data[ch * rows + row] : raw.data[row * static_cast<std::size_t>(channels) + ch];
  };

  std::vector<Detection> candidates;
  for (std::size_t r = 0; r < rows; ++r) {
    int best = 0;
    double best_score = at(r, 4);
    for (std::size_t c = 1; c < class_count; ++c) {
      const double v = at(r, 4 + c);
      if (v > best_score) {
        best_score = v;
        best = static_cast<int>(c);
      }
    }
    if (!(best_score >= params.confidence_threshold)) continue;
    const double cx = at(r, 0), cy = at(r, 1), w = at(r, 2), h = at(r, 3);
    const BoundingBox model_box{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
    if (!model_box.valid()) continue;
    const auto clipped = clip_box(transform.to_original(model_box), transform.source_width, transform.source_height);
    if (!clipped) continue;
    candidates.push_back({*clipped, best, std::clamp(best_score, 0.0, 1.0)});
  }

  auto kept = nms(candidates, params.nms_iou_threshold);
  if (params.max_detections && kept.size() > *params.max_detections) kept.resize(*params.max_detections);
  return kept;
}

// ---------------------------------------------------------------------------

namespace {

class OnnxBackend final : public ModelBackend {
 public:
  explicit OnnxBackend(cv::dnn::Net net) : net_(std::move(net)) {}

  RawTensor forward(const cv::Mat& tensor, const std::string&, const LetterboxTransform&) override {
    cv::Mat out;
    try {
      net_.setInput(tensor);
      out = net_.forward();
    } catch (const cv::Exception& e) {
      throw Error(ErrorCode::AdapterShapeError, std::string("model forward failed: ") + e.what());
    }
    RawTensor raw;
    for (int i = 0; i < out.dims; ++i) raw.shape.push_back(out.size[i]);
    if (out.depth() != CV_32F) out.convertTo(out, CV_32F);
    if (!out.isContinuous()) out = out.clone();
    raw.data.assign(out.ptr<float>(), out.ptr<float>() + out.total() * static_cast<std::size_t>(out.channels()));
    return raw;
  }

 private:
  cv::dnn::Net net_;
};

// Emits each known image's ground truth as one-hot rows, channels first.
class GroundTruthStub final : public ModelBackend {
 public:
  GroundTruthStub(const DatasetManifest& manifest, std::size_t class_count) : class_count_(class_count) {
    for (const auto& img : manifest.images) boxes_[img.image_id] = img.ground_truth;
  }

  RawTensor forward(const cv::Mat&, const std::string& image_id, const LetterboxTransform& transform) override {
    const auto it = boxes_.find(image_id);
    if (it == boxes_.end()) {
      throw Error(ErrorCode::UnknownImageId, "ground-truth stub has no image '" + image_id + "'");
    }
    const auto& gts = it->second;
    const std::size_t n = gts.size();
    const std::size_t channels = class_count_ + 4;
    RawTensor raw{{1, static_cast<int>(channels), static_cast<int>(n)}, std::vector<float>(channels * n, 0.0f)};
    for (std::size_t i = 0; i < n; ++i) {
      const auto m = transform.to_model(gts[i].box);
      raw.data[0 * n + i] = static_cast<float>((m.x_min + m.x_max) / 2.0);
      raw.data[1 * n + i] = static_cast<float>((m.y_min + m.y_max) / 2.0);
      raw.data[2 * n + i] = static_cast<float>(m.x_max - m.x_min);
      raw.data[3 * n + i] = static_cast<float>(m.y_max - m.y_min);
      raw.data[(4 + static_cast<std::size_t>(gts[i].class_id)) * n + i] = 1.0f;
    }
    return raw;
  }

 private:
  std::size_t class_count_;
  std::unordered_map<std::string, std::vector<GroundTruthBox>> boxes_;
};

void check_input_size(int s) {
  if (s <= 0 || s % 32 != 0) {
    throw Error(ErrorCode::InvalidArgument, "input size must be a positive multiple of 32, got " + std::to_string(s));
  }
}

std::unique_ptr<ModelSession> load_onnx(const std::filesystem::path& path, const ClassRegistry& registry,
                                        std::optional<int> input_size) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ModelLoadError, e.what());
  }
  const auto sig = read_onnx_input_signature(bytes);
  if (!sig) throw Error(ErrorCode::ModelLoadError, "'" + path.string() + "' is not an ONNX model with a tensor input");
  const auto& d = sig->dims;
  if (d.size() != 4 || (d[0] != 1 && d[0] != -1) || (d[1] != 3 && d[1] != -1)) {
    throw Error(ErrorCode::ModelLoadError, "model input must be (1,3,S,S)");
  }
  if (d[2] != d[3]) throw Error(ErrorCode::ModelLoadError, "model input must be square");
  int s = 0;
  if (input_size) {
    s = *input_size;
    if (d[2] > 0 && d[2] != s) {
      throw Error(ErrorCode::InvalidArgument, "model input is fixed at " + std::to_string(d[2]) + " px");
    }
  } else if (d[2] > 0) {
    s = static_cast<int>(d[2]);
  } else {
    s = kDefaultInputSize;
  }
  check_input_size(s);

  cv::dnn::Net net;
  try {
    net = cv::dnn::readNetFromONNX(bytes.data(), bytes.size());
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::ModelLoadError, std::string("cannot load ONNX graph: ") + e.what());
  }
  if (net.empty()) throw Error(ErrorCode::ModelLoadError, "cannot load ONNX graph");
  net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

  auto backend = std::make_unique<OnnxBackend>(std::move(net));
  const int sizes[] = {1, 3, s, s};
  const cv::Mat probe(4, sizes, CV_32F, cv::Scalar(0));
  RawTensor raw;
  try {
    raw = backend->forward(probe, {}, make_letterbox(s, s, s));
  } catch (const Error& e) {
    throw Error(ErrorCode::ModelLoadError, e.what());
  }
  if (raw.shape.size() != 3 || raw.shape[0] != 1) {
    throw Error(ErrorCode::ModelLoadError, "model output must be 3-d with batch 1");
  }
  const int want = static_cast<int>(registry.size()) + 4;
  if (raw.shape[1] != want && raw.shape[2] != want) {
    // Detector exports put the smaller axis first: (1, 4+C, anchors).
    const int channels = std::min(raw.shape[1], raw.shape[2]);
    throw Error(ErrorCode::ClassCountMismatch, "model predicts " + std::to_string(channels - 4) +
                                                   " classes, registry has " + std::to_string(registry.size()));
  }
  return std::make_unique<ModelSession>(std::move(backend), s, registry, "yolov8");
}

std::unique_ptr<ModelSession> load_stub(const std::filesystem::path& path, const ClassRegistry& registry,
                                        std::optional<int> input_size) {
  DatasetManifest manifest;
  try {
    manifest = load_manifest(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ModelLoadError, std::string("ground-truth stub: ") + e.what());
  }
  if (manifest.registry.size() != registry.size()) {
    throw Error(ErrorCode::ClassCountMismatch, "stub manifest has " + std::to_string(manifest.registry.size()) +
                                                   " classes, registry has " + std::to_string(registry.size()));
  }
  const int s = input_size.value_or(kDefaultInputSize);
  check_input_size(s);
  return std::make_unique<ModelSession>(std::make_unique<GroundTruthStub>(manifest, registry.size()), s, registry,
                                        "gt-stub");
}

}  // namespace

ModelSession::ModelSession(std::unique_ptr<ModelBackend> backend, int input_size, const ClassRegistry& registry,
                           std::string adapter_id)
    : backend_(std::move(backend)), input_size_(input_size), registry_(registry), adapter_id_(std::move(adapter_id)) {
  check_input_size(input_size);
}

std::vector<Detection> ModelSession::detect(const cv::Mat& image, const std::string& image_id,
                                            const InferenceParams& params, Exec exec) {
  params.validate();
  auto pre = preprocess(image, input_size_, exec);
  RawTensor raw;
  {
    std::lock_guard lock(mutex_);
    raw = backend_->forward(pre.tensor, image_id, pre.transform);
  }
  return postprocess(raw, pre.transform, params, registry_.size());
}

std::unique_ptr<ModelSession> load_model(const std::filesystem::path& path, const ClassRegistry& registry,
                                         const std::string& adapter_id, std::optional<int> input_size) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::ModelLoadError, "model file not found: " + path.string());
  }
  if (adapter_id == "yolov8") return load_onnx(path, registry, input_size);
  if (adapter_id == "gt-stub") return load_stub(path, registry, input_size);
  throw Error(ErrorCode::InvalidArgument, "unknown adapter '" + adapter_id + "' (expected yolov8 or gt-stub)");
}

std::string image_id_for(const std::filesystem::path& path) { return path.stem().string(); }

std::vector<ImagePredictions> detect_batch(ModelSession& session, std::span<const ImageInput> images,
                                           const InferenceParams& params) {
  params.validate();
  std::vector<ImagePredictions> out;
  out.reserve(images.size());
  for (const auto& in : images) {
    ImagePredictions p;
    p.image_id = in.image_id;
    try {
      p.detections = session.detect(decode_image(in.bytes), in.image_id, params);
    } catch (const Error& e) {
      p.error = e.code();
      p.error_message = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace skeyspot
