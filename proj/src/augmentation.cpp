#include "skeyspot/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>
#include <opencv2/imgproc.hpp>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"

namespace skeyspot {

using json = nlohmann::json;

void AugmentationConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "augmentation config: " + what); };
  if (!std::isfinite(rotation_range_degrees) || rotation_range_degrees < 0 || rotation_range_degrees > 180) {
    fail("rotation_range_degrees must be in [0,180]");
  }
  const auto [clo, chi] = crop_scale_range;
  if (!(clo > 0.0 && clo <= chi && chi <= 1.0)) fail("crop_scale_range must satisfy 0 < lo <= hi <= 1");
  const auto [blo, bhi] = brightness_factor_range;
  if (!(std::isfinite(blo) && std::isfinite(bhi) && blo >= 0.0 && blo <= bhi)) {
    fail("brightness_factor_range must satisfy 0 <= lo <= hi");
  }
  if (!(min_box_visibility > 0.0 && min_box_visibility <= 1.0)) fail("min_box_visibility must be in (0,1]");
}

int AugmentationConfig::enabled_count() const noexcept {
  return int{flip} + int{rotate} + int{crop} + int{brightness};
}

AugmentationConfig parse_augmentation_config(std::string_view json_text) {
  AugmentationConfig cfg;
  try {
    const json doc = json::parse(json_text);
    cfg.flip = doc.value("flip", cfg.flip);
    cfg.rotate = doc.value("rotate", cfg.rotate);
    cfg.crop = doc.value("crop", cfg.crop);
    cfg.brightness = doc.value("brightness", cfg.brightness);
    cfg.rotation_range_degrees = doc.value("rotation_range_degrees", cfg.rotation_range_degrees);
    if (doc.contains("crop_scale_range")) cfg.crop_scale_range = doc["crop_scale_range"].get<std::pair<double, double>>();
    if (doc.contains("brightness_factor_range")) {
      cfg.brightness_factor_range = doc["brightness_factor_range"].get<std::pair<double, double>>();
    }
    cfg.min_box_visibility = doc.value("min_box_visibility", cfg.min_box_visibility);
    cfg.seed = doc.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("augmentation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

std::vector<GroundTruthBox> flip_boxes(std::span<const GroundTruthBox> boxes, int width, int height,
                                       FlipAxis axis) {
  std::vector<GroundTruthBox> out;
  out.reserve(boxes.size());
  for (const auto& gt : boxes) {
    BoundingBox b = gt.box;
    if (axis == FlipAxis::horizontal) {
      b.x_min = width - gt.box.x_max;
      b.x_max = width - gt.box.x_min;
    } else {
      b.y_min = height - gt.box.y_max;
      b.y_max = height - gt.box.y_min;
    }
    out.push_back({gt.class_id, b});
  }
  return out;
}

RotationGeometry RotationGeometry::make(int width, int height, double angle_degrees) {
  RotationGeometry g;
  g.in_width = width;
  g.in_height = height;
  const double quarter = angle_degrees / 90.0;
  if (quarter == std::round(quarter)) {
    static constexpr double kCos[] = {1, 0, -1, 0};
    static constexpr double kSin[] = {0, 1, 0, -1};
    const auto q = static_cast<std::size_t>(((static_cast<long long>(quarter) % 4) + 4) % 4);
    g.cos_a = kCos[q];
    g.sin_a = kSin[q];
  } else {
    const double rad = angle_degrees * std::numbers::pi / 180.0;
    g.cos_a = std::cos(rad);
    g.sin_a = std::sin(rad);
  }
  const double ac = std::abs(g.cos_a), as = std::abs(g.sin_a);
  g.out_width = static_cast<int>(std::ceil(width * ac + height * as - 1e-9));
  g.out_height = static_cast<int>(std::ceil(width * as + height * ac - 1e-9));
  return g;
}

std::pair<double, double> RotationGeometry::map(double x, double y) const noexcept {
  const double dx = x - in_width / 2.0;
  const double dy = y - in_height / 2.0;
  return {out_width / 2.0 + cos_a * dx + sin_a * dy, out_height / 2.0 - sin_a * dx + cos_a * dy};
}

std::vector<GroundTruthBox> rotate_boxes(std::span<const GroundTruthBox> boxes, const RotationGeometry& geometry,
                                         double min_visibility) {
  std::vector<GroundTruthBox> out;
  const bool identity = geometry.cos_a == 1.0 && geometry.sin_a == 0.0;
  for (const auto& gt : boxes) {
    const auto& b = gt.box;
    if (identity) {
      if (box_area(b) > 0.0) out.push_back(gt);
      continue;
    }
    double xs[4], ys[4];
    std::tie(xs[0], ys[0]) = geometry.map(b.x_min, b.y_min);
    std::tie(xs[1], ys[1]) = geometry.map(b.x_max, b.y_min);
    std::tie(xs[2], ys[2]) = geometry.map(b.x_min, b.y_max);
    std::tie(xs[3], ys[3]) = geometry.map(b.x_max, b.y_max);
    const BoundingBox hull{*std::min_element(xs, xs + 4), *std::min_element(ys, ys + 4),
                           *std::max_element(xs, xs + 4), *std::max_element(ys, ys + 4)};
    const double hull_area = box_area(hull);
    if (hull_area <= 0.0) continue;
    auto clipped = clip_box(hull, geometry.out_width, geometry.out_height);
    if (!clipped || box_area(*clipped) / hull_area < min_visibility) continue;
    out.push_back({gt.class_id, *clipped});
  }
  return out;
}

CropWindow sample_crop_window(int width, int height, double scale, Rng& rng) {
  CropWindow w;
  w.width = std::clamp(static_cast<int>(std::lround(scale * width)), 1, width);
  w.height = std::clamp(static_cast<int>(std::lround(scale * height)), 1, height);
  w.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - w.width) + 1));
  w.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - w.height) + 1));
  return w;
}

std::vector<GroundTruthBox> crop_boxes(std::span<const GroundTruthBox> boxes, const CropWindow& window,
                                       double min_visibility) {
  std::vector<GroundTruthBox> out;
  for (const auto& gt : boxes) {
    const double area = box_area(gt.box);
    if (area <= 0.0) continue;
    const BoundingBox moved{gt.box.x_min - window.x, gt.box.y_min - window.y, gt.box.x_max - window.x,
                            gt.box.y_max - window.y};
    auto clipped = clip_box(moved, window.width, window.height);
    if (!clipped || box_area(*clipped) / area < min_visibility) continue;
    out.push_back({gt.class_id, *clipped});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string describe(const char* kind, double value) {
  std::ostringstream s;
  s << kind << ':' << format_number(value);
  return s.str();
}

}  // namespace

AugmentedSample flip(const cv::Mat& image, std::span<const GroundTruthBox> boxes, FlipAxis axis) {
  AugmentedSample s;
  cv::flip(image, s.image, axis == FlipAxis::horizontal ? 1 : 0);
  s.boxes = flip_boxes(boxes, image.cols, image.rows, axis);
  s.provenance.transform = axis == FlipAxis::horizontal ? "flip:horizontal" : "flip:vertical";
  return s;
}

AugmentedSample rotate(const cv::Mat& image, std::span<const GroundTruthBox> boxes, double angle_degrees,
                       double min_visibility) {
  const auto g = RotationGeometry::make(image.cols, image.rows, angle_degrees);
  AugmentedSample s;
  if (g.cos_a == 1.0 && g.sin_a == 0.0) {
    s.image = image.clone();
  } else if (g.cos_a == 0.0 && g.sin_a == 1.0) {
    cv::rotate(image, s.image, cv::ROTATE_90_COUNTERCLOCKWISE);
  } else if (g.cos_a == -1.0 && g.sin_a == 0.0) {
    cv::rotate(image, s.image, cv::ROTATE_180);
  } else if (g.cos_a == 0.0 && g.sin_a == -1.0) {
    cv::rotate(image, s.image, cv::ROTATE_90_CLOCKWISE);
  } else {
    // Forward map in pixel-index coordinates (pixel i spans [i, i+1)).
    const double c = g.cos_a, sn = g.sin_a;
    const double tx = g.out_width / 2.0 - c * (g.in_width / 2.0) - sn * (g.in_height / 2.0);
    const double ty = g.out_height / 2.0 + sn * (g.in_width / 2.0) - c * (g.in_height / 2.0);
    cv::Mat m = (cv::Mat_<double>(2, 3) << c, sn, tx + 0.5 * (c + sn) - 0.5,  //
                 -sn, c, ty + 0.5 * (c - sn) - 0.5);
    cv::warpAffine(image, s.image, m, cv::Size(g.out_width, g.out_height), cv::INTER_LINEAR,
                   cv::BORDER_CONSTANT, cv::Scalar::all(255));
  }
  s.boxes = rotate_boxes(boxes, g, min_visibility);
  s.provenance.transform = describe("rotate", angle_degrees);
  return s;
}

AugmentedSample random_crop(const cv::Mat& image, std::span<const GroundTruthBox> boxes, const CropWindow& window,
                            double min_visibility) {
  if (window.x < 0 || window.y < 0 || window.width <= 0 || window.height <= 0 ||
      window.x + window.width > image.cols || window.y + window.height > image.rows) {
    throw Error(ErrorCode::InvalidArgument, "random_crop: window outside image");
  }
  AugmentedSample s;
  s.image = image(cv::Rect(window.x, window.y, window.width, window.height)).clone();
  s.boxes = crop_boxes(boxes, window, min_visibility);
  std::ostringstream d;
  d << "crop:" << window.width << 'x' << window.height << '@' << window.x << ',' << window.y;
  s.provenance.transform = d.str();
  return s;
}

AugmentedSample adjust_brightness(const cv::Mat& image, std::span<const GroundTruthBox> boxes, double factor,
                                  Exec exec) {
  if (image.depth() != CV_8U) throw Error(ErrorCode::InvalidArgument, "adjust_brightness: 8-bit images only");
  const cv::Mat src = image.isContinuous() ? image : image.clone();
  AugmentedSample s;
  s.image.create(src.rows, src.cols, src.type());
  const std::size_t n = src.total() * src.elemSize();
  kernels::scale_u8({src.ptr<std::uint8_t>(), n}, {s.image.ptr<std::uint8_t>(), n}, factor, exec);
  s.boxes.assign(boxes.begin(), boxes.end());
  s.provenance.transform = describe("brightness", factor);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct Slot {
  std::vector<ImageRecord> derived;
  std::vector<std::string> warnings;
};

Slot augment_one(const ImageRecord& rec, const AugmentationConfig& cfg, const ImageLoader& load,
                 const ImageWriter& write, const std::unordered_set<std::string>& taken) {
  Slot slot;
  cv::Mat image;
  try {
    image = load(rec);
    if (image.empty()) throw Error(ErrorCode::ImageDecodeError, "empty image");
    if (image.cols != rec.width || image.rows != rec.height) {
      throw Error(ErrorCode::ImageDecodeError, "decoded size " + std::to_string(image.cols) + "x" +
                                                   std::to_string(image.rows) + " differs from manifest");
    }
  } catch (const std::exception& e) {
    slot.warnings.push_back(rec.image_id + ": cannot load image: " + e.what());
    return slot;
  }

  const std::uint64_t image_seed = derive_seed(cfg.seed, rec.image_id);
  auto emit = [&](const char* kind, auto&& make) {
    const std::uint64_t seed = derive_seed(image_seed, kind);
    ImageRecord out;
    out.image_id = rec.image_id + "__" + kind;
    if (taken.count(out.image_id)) {
      slot.warnings.push_back(rec.image_id + ": derived id '" + out.image_id + "' already exists; skipped");
      return;
    }
    try {
      Rng rng(seed);
      AugmentedSample s = make(rng);
      out.width = s.image.cols;
      out.height = s.image.rows;
      out.split = rec.split;
      out.ground_truth = std::move(s.boxes);
      out.provenance = Provenance{rec.image_id, s.provenance.transform, seed};
      out.path = write(out, s.image);
      slot.derived.push_back(std::move(out));
    } catch (const std::exception& e) {
      slot.warnings.push_back(rec.image_id + ": " + kind + " failed: " + e.what());
    }
  };

  const auto& gts = rec.ground_truth;
  if (cfg.flip) {
    emit("flip", [&](Rng& rng) { return flip(image, gts, rng.coin() ? FlipAxis::horizontal : FlipAxis::vertical); });
  }
  if (cfg.rotate) {
    emit("rotate", [&](Rng& rng) {
      const double r = cfg.rotation_range_degrees;
      return rotate(image, gts, rng.uniform(-r, r), cfg.min_box_visibility);
    });
  }
  if (cfg.crop) {
    emit("crop", [&](Rng& rng) {
      const double scale = rng.uniform(cfg.crop_scale_range.first, cfg.crop_scale_range.second);
      return random_crop(image, gts, sample_crop_window(image.cols, image.rows, scale, rng), cfg.min_box_visibility);
    });
  }
  if (cfg.brightness) {
    emit("brightness", [&](Rng& rng) {
      return adjust_brightness(image, gts,
                               rng.uniform(cfg.brightness_factor_range.first, cfg.brightness_factor_range.second),
                               Exec::serial);
    });
  }
  return slot;
}

}  // namespace

AugmentOutcome augment_manifest(const DatasetManifest& manifest, const AugmentationConfig& config,
                                const ImageLoader& load, const ImageWriter& write, Exec exec) {
  config.validate();
  std::unordered_set<std::string> taken;
  for (const auto& img : manifest.images) taken.insert(img.image_id);

  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    if (manifest.images[i].split == Split::train) train.push_back(i);
  }
  std::vector<Slot> slots(manifest.images.size());
  const auto n = static_cast<std::ptrdiff_t>(train.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      slots[train[t]] = augment_one(manifest.images[train[t]], config, load, write, taken);
    }
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      slots[train[t]] = augment_one(manifest.images[train[t]], config, load, write, taken);
    }
  }

  AugmentOutcome outcome{DatasetManifest{manifest.registry, {}}, {}};
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    outcome.manifest.images.push_back(manifest.images[i]);
    for (auto& d : slots[i].derived) outcome.manifest.images.push_back(std::move(d));
    for (auto& w : slots[i].warnings) outcome.warnings.push_back(std::move(w));
  }
  return outcome;
}

}  // namespace skeyspot
