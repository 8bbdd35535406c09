#include "skeyspot/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <unordered_map>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"
#include "skeyspot/zip.hpp"

namespace skeyspot {

using json = nlohmann::ordered_json;

Rgb class_color(int class_id, std::size_t class_count) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= class_count) {
    throw Error(ErrorCode::OutOfRangeClass, "no color for class " + std::to_string(class_id));
  }
  const double hue = class_id * 360.0 / static_cast<double>(class_count);
  const double c = kPaletteValue * kPaletteSaturation;
  const double x = c * (1.0 - std::abs(std::fmod(hue / 60.0, 2.0) - 1.0));
  const double m = kPaletteValue - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hue / 60.0)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  auto to8 = [&](double v) { return static_cast<std::uint8_t>(std::lround((v + m) * 255.0)); };
  return {to8(r), to8(g), to8(b)};
}

std::string to_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

cv::Mat render_annotations(const cv::Mat& image, std::span<const Detection> detections, const ClassRegistry& registry,
                           const RenderOptions& options) {
  if (image.empty() || image.depth() != CV_8U) throw Error(ErrorCode::ImageDecodeError, "render: need an 8-bit image");
  cv::Mat out;
  switch (image.channels()) {
    case 1: cv::cvtColor(image, out, cv::COLOR_GRAY2BGR); break;
    case 3: out = image.clone(); break;
    case 4: cv::cvtColor(image, out, cv::COLOR_BGRA2BGR); break;
    default: throw Error(ErrorCode::ImageDecodeError, "render: unsupported channel count");
  }

  const int stroke = std::max(2, std::min(out.cols, out.rows) / 500);
  const double font_scale = std::max(0.4, stroke * 0.25);
  const int font_thickness = std::max(1, stroke / 2);
  for (const auto& d : detections) {
    const auto& cls = registry.at(d.class_id);
    if (options.visible_classes && !options.visible_classes->contains(d.class_id)) continue;
    const Rgb rgb = class_color(d.class_id, registry.size());
    const cv::Scalar color(rgb.b, rgb.g, rgb.r);
    const cv::Point p0(static_cast<int>(std::floor(d.box.x_min)), static_cast<int>(std::floor(d.box.y_min)));
    const cv::Point p1(static_cast<int>(std::ceil(d.box.x_max)) - 1, static_cast<int>(std::ceil(d.box.y_max)) - 1);
    cv::rectangle(out, p0, p1, color, stroke, cv::LINE_8);

    std::string caption = std::to_string(d.class_id) + ":" + cls.name;
    if (options.show_confidence) caption += " " + std::to_string(std::lround(d.confidence * 100.0)) + "%";
    int baseline = 0;
    const auto size = cv::getTextSize(caption, cv::FONT_HERSHEY_SIMPLEX, font_scale, font_thickness, &baseline);
    const int label_h = size.height + baseline + 2;
    const int top = p0.y - label_h >= 0 ? p0.y - label_h : p0.y;
    cv::rectangle(out, cv::Point(p0.x, top), cv::Point(p0.x + size.width + 2, top + label_h - 1), color, cv::FILLED);
    cv::putText(out, caption, cv::Point(p0.x + 1, top + size.height + 1), cv::FONT_HERSHEY_SIMPLEX, font_scale,
                cv::Scalar(255, 255, 255), font_thickness, cv::LINE_8);
  }
  return out;
}

std::string encode_png(const cv::Mat& image) {
  std::vector<std::uint8_t> buf;
  bool ok = false;
  try {
    ok = cv::imencode(".png", image, buf);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::ImageDecodeError, std::string("PNG encode failed: ") + e.what());
  }
  if (!ok) throw Error(ErrorCode::ImageDecodeError, "PNG encode failed");
  return {buf.begin(), buf.end()};
}

DetectionSummary summarize(std::span<const ImagePredictions> predictions) {
  DetectionSummary s;
  for (const auto& p : predictions) {
    if (!p.ok()) continue;
    ImageSummary img{p.image_id, {}, p.detections.size()};
    for (const auto& d : p.detections) {
      ++img.counts[d.class_id];
      ++s.rollup[d.class_id];
    }
    s.total += img.total;
    s.images.push_back(std::move(img));
  }
  return s;
}

CostBreakdown cost_breakdown(const DetectionSummary& summary, const RateCard& rates) {
  CostBreakdown out;
  for (const auto& img : summary.images) {
    ImageCost ic;
    ic.image_id = img.image_id;
    for (const auto& [cls, count] : img.counts) {
      CostLine line{img.image_id, cls, count, rates.rate(cls), std::nullopt};
      if (line.rate) {
        line.line_total = line.rate->times(static_cast<std::int64_t>(count));
        ic.subtotal += *line.line_total;
      }
      ic.count += count;
      ic.lines.push_back(std::move(line));
    }
    out.count += ic.count;
    out.grand_total += ic.subtotal;
    out.images.push_back(std::move(ic));
  }
  return out;
}

namespace {

json counts_json(const std::map<int, std::size_t>& counts, const ClassRegistry& registry) {
  json arr = json::array();
  for (const auto& [cls, n] : counts) {
    arr.push_back({{"class_id", cls}, {"class_name", registry.at(cls).name}, {"count", n}});
  }
  return arr;
}

std::string safe_entry_name(std::string id) {
  for (char& c : id) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  if (id.empty() || id == "." || id == "..") id = "_" + id;
  return id;
}

}  // namespace

std::string summary_to_csv(const DetectionSummary& summary, const ClassRegistry& registry) {
  std::string out = "image_id,class_id,class_name,count\n";
  for (const auto& img : summary.images) {
    for (const auto& [cls, n] : img.counts) {
      out += csv_field(img.image_id) + ',' + std::to_string(cls) + ',' + csv_field(registry.at(cls).name) + ',' +
             std::to_string(n) + '\n';
    }
  }
  return out;
}

std::string summary_to_json(const DetectionSummary& summary, const ClassRegistry& registry) {
  json images = json::array();
  for (const auto& img : summary.images) {
    images.push_back({{"image_id", img.image_id}, {"total", img.total}, {"counts", counts_json(img.counts, registry)}});
  }
  json doc{{"images", std::move(images)},
           {"rollup", counts_json(summary.rollup, registry)},
           {"total", summary.total}};
  return doc.dump(2) + "\n";
}

std::string costs_to_csv(const CostBreakdown& costs, const ClassRegistry& registry) {
  std::string out = "image_id,class_id,class_name,count,rate,line_total\n";
  for (const auto& img : costs.images) {
    for (const auto& l : img.lines) {
      out += csv_field(l.image_id) + ',' + std::to_string(l.class_id) + ',' + csv_field(registry.at(l.class_id).name) +
             ',' + std::to_string(l.count) + ',' + (l.rate ? l.rate->to_string() : "") + ',' +
             (l.line_total ? l.line_total->to_string() : "") + '\n';
    }
  }
  for (const auto& img : costs.images) {
    out += csv_field(img.image_id) + ",SUBTOTAL,," + std::to_string(img.count) + ",," + img.subtotal.to_string() + '\n';
  }
  out += "GRAND_TOTAL,,," + std::to_string(costs.count) + ",," + costs.grand_total.to_string() + '\n';
  return out;
}

std::string costs_to_json(const CostBreakdown& costs, const ClassRegistry& registry) {
  json images = json::array();
  for (const auto& img : costs.images) {
    json lines = json::array();
    for (const auto& l : img.lines) {
      lines.push_back({{"class_id", l.class_id},
                       {"class_name", registry.at(l.class_id).name},
                       {"count", l.count},
                       {"rate", l.rate ? json(l.rate->to_string()) : json(nullptr)},
                       {"line_total", l.line_total ? json(l.line_total->to_string()) : json(nullptr)}});
    }
    images.push_back({{"image_id", img.image_id},
                      {"lines", std::move(lines)},
                      {"count", img.count},
                      {"subtotal", img.subtotal.to_string()}});
  }
  json doc{{"images", std::move(images)}, {"count", costs.count}, {"grand_total", costs.grand_total.to_string()}};
  return doc.dump(2) + "\n";
}

std::string package_report(std::span<const AnnotatedImage> images, const DetectionSummary& summary,
                           const std::optional<CostBreakdown>& costs, std::span<const ImagePredictions> detections,
                           const ClassRegistry& registry) {
  if (images.empty()) throw Error(ErrorCode::EmptyReport, "report needs at least one processed image");
  std::vector<ZipEntry> entries;
  for (const auto& img : images) entries.push_back({"annotated/" + safe_entry_name(img.image_id) + ".png", img.png});
  std::sort(entries.begin(), entries.end(), [](const ZipEntry& a, const ZipEntry& b) { return a.name < b.name; });
  if (costs) entries.push_back({"costs.csv", costs_to_csv(*costs, registry)});
  entries.push_back({"detections.json", write_predictions_json(detections, registry)});
  entries.push_back({"summary.csv", summary_to_csv(summary, registry)});
  entries.push_back({"summary.json", summary_to_json(summary, registry)});

  json files = json::array();
  for (const auto& e : entries) {
    files.push_back({{"name", e.name}, {"bytes", e.data.size()}, {"sha256", sha256_hex(e.data)}});
  }
  entries.push_back({"MANIFEST.json", json{{"files", std::move(files)}}.dump(2) + "\n"});
  return write_zip(entries);
}

std::string build_report(std::span<const SourceImage> images, std::span<const ImagePredictions> predictions,
                         const ClassRegistry& registry, const std::optional<RateCard>& rates) {
  std::unordered_map<std::string, const ImagePredictions*> by_id;
  for (const auto& p : predictions) by_id[p.image_id] = &p;

  std::vector<AnnotatedImage> annotated(images.size());
  std::vector<std::exception_ptr> failures(images.size());
  const auto n = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& src = images[static_cast<std::size_t>(i)];
    std::span<const Detection> dets;
    if (const auto it = by_id.find(src.image_id); it != by_id.end() && it->second->ok()) dets = it->second->detections;
    try {
      annotated[static_cast<std::size_t>(i)] = {src.image_id, encode_png(render_annotations(src.image, dets, registry))};
    } catch (...) {
      failures[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  const auto summary = summarize(predictions);
  std::optional<CostBreakdown> costs;
  if (rates) costs = cost_breakdown(summary, *rates);
  return package_report(annotated, summary, costs, predictions, registry);
}

}  // namespace skeyspot
