#include "skeyspot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <unordered_map>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"

namespace skeyspot {

using json = nlohmann::ordered_json;

std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

namespace {

std::vector<std::size_t> confidence_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  return order;
}

// `ious` is the row-major |dets| x |gts| matrix. Result is parallel to `order`.
std::vector<std::optional<std::size_t>> greedy_match(std::span<const Detection> dets,
                                                     std::span<const GroundTruthBox> gts,
                                                     std::span<const std::size_t> order,
                                                     std::span<const double> ious, double threshold) {
  std::vector<bool> claimed(gts.size(), false);
  std::vector<std::optional<std::size_t>> out;
  out.reserve(order.size());
  for (std::size_t d : order) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g] || gts[g].class_id != dets[d].class_id) continue;
      const double v = ious[d * gts.size() + g];
      if (v >= threshold && v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (best) claimed[*best] = true;
    out.push_back(best);
  }
  return out;
}

std::vector<BoundingBox> boxes_of(std::span<const Detection> dets) {
  std::vector<BoundingBox> out;
  out.reserve(dets.size());
  for (const auto& d : dets) out.push_back(d.box);
  return out;
}

std::vector<BoundingBox> boxes_of(std::span<const GroundTruthBox> gts) {
  std::vector<BoundingBox> out;
  out.reserve(gts.size());
  for (const auto& g : gts) out.push_back(g.box);
  return out;
}

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

std::optional<std::size_t> threshold_index(const std::vector<double>& thresholds, double t) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (near(thresholds[i], t)) return i;
  }
  return std::nullopt;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                             double iou_threshold) {
  const auto order = confidence_order(dets);
  const auto det_boxes = boxes_of(dets);
  const auto gt_boxes = boxes_of(gts);
  const auto ious = kernels::iou_matrix(det_boxes, gt_boxes, Exec::serial);
  const auto assigned = greedy_match(dets, gts, order, ious, iou_threshold);

  MatchResult r;
  r.iou_threshold = iou_threshold;
  r.gt_matched.assign(gts.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& d = dets[order[k]];
    r.matches.push_back({order[k], d.class_id, d.confidence, assigned[k]});
    if (assigned[k]) r.gt_matched[*assigned[k]] = true;
  }
  return r;
}

double average_precision(std::span<const ScoredMatch> matches, std::size_t gt_count) {
  if (gt_count == 0) throw Error(ErrorCode::UndefinedAP, "average precision undefined without ground truth");
  std::vector<ScoredMatch> sorted(matches.begin(), matches.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.confidence > b.confidence; });

  const std::size_t n = sorted.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sorted[i].true_positive) ++tp;
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

std::vector<int> EvaluationReport::evaluated_classes() const {
  std::vector<int> out;
  for (const auto& c : classes) {
    if (c.present) out.push_back(c.class_id);
  }
  return out;
}

EvaluationReport evaluate(std::span<const ImagePredictions> predictions, const DatasetManifest& manifest,
                          const EvaluationOptions& options) {
  const auto& thresholds = options.thresholds;
  if (thresholds.empty()) throw Error(ErrorCode::InvalidArgument, "evaluate: no IoU thresholds");
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "evaluate: thresholds must be in (0,1]");
  }
  const auto i50 = threshold_index(thresholds, 0.5);
  const auto i75 = threshold_index(thresholds, 0.75);
  if (!i50 || !i75) throw Error(ErrorCode::InvalidArgument, "evaluate: thresholds must include 0.50 and 0.75");

  std::unordered_map<std::string, const ImagePredictions*> by_id;
  for (const auto& p : predictions) {
    if (!manifest.find(p.image_id)) {
      throw Error(ErrorCode::UnknownImageId, "predictions reference unknown image '" + p.image_id + "'");
    }
    if (!by_id.emplace(p.image_id, &p).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate predictions for image '" + p.image_id + "'");
    }
    for (const auto& d : p.detections) manifest.registry.at(d.class_id);
  }

  std::vector<const ImageRecord*> images;
  for (const auto& img : manifest.images) {
    if (!options.split || img.split == *options.split) images.push_back(&img);
  }

  const std::size_t num_classes = manifest.registry.size();
  std::vector<std::size_t> gt_count(num_classes, 0);
  for (const auto* img : images) {
    for (const auto& gt : img->ground_truth) ++gt_count[static_cast<std::size_t>(gt.class_id)];
  }
  if (std::all_of(gt_count.begin(), gt_count.end(), [](std::size_t c) { return c == 0; })) {
    throw Error(ErrorCode::EmptyGroundTruth, "evaluate: no ground-truth instances in the evaluated images");
  }

  // Per image, per threshold: the ordered detections with their TP flags.
  struct ImageMatches {
    std::vector<Detection> dets;              // in confidence order
    std::vector<std::vector<bool>> tp;        // [threshold][rank]
  };
  std::vector<ImageMatches> per_image(images.size());

  auto process = [&](std::size_t i) {
    const ImageRecord& img = *images[i];
    std::vector<Detection> dets;
    if (auto it = by_id.find(img.image_id); it != by_id.end()) dets = it->second->detections;
    auto order = confidence_order(dets);
    if (options.max_detections && order.size() > *options.max_detections) order.resize(*options.max_detections);
    std::vector<Detection> ranked;
    ranked.reserve(order.size());
    for (std::size_t k : order) ranked.push_back(dets[k]);
    std::vector<std::size_t> identity(ranked.size());
    std::iota(identity.begin(), identity.end(), std::size_t{0});

    const auto ious = kernels::iou_matrix(boxes_of(ranked), boxes_of(img.ground_truth), Exec::serial);
    ImageMatches m;
    m.tp.resize(thresholds.size());
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      const auto assigned = greedy_match(ranked, img.ground_truth, identity, ious, thresholds[t]);
      m.tp[t].reserve(assigned.size());
      for (const auto& a : assigned) m.tp[t].push_back(a.has_value());
    }
    m.dets = std::move(ranked);
    per_image[i] = std::move(m);
  };

  const auto n_images = static_cast<std::ptrdiff_t>(images.size());
  if (options.exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < n_images; ++i) process(static_cast<std::size_t>(i));
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n_images; ++i) process(static_cast<std::size_t>(i));
  }

  EvaluationReport report;
  report.thresholds = thresholds;
  report.image_count = images.size();
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassReport cr;
    cr.class_id = static_cast<int>(c);
    cr.name = manifest.registry.classes()[c].name;
    cr.gt_count = gt_count[c];
    cr.present = gt_count[c] > 0;
    if (cr.present) {
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        std::vector<ScoredMatch> scored;
        for (const auto& m : per_image) {
          for (std::size_t k = 0; k < m.dets.size(); ++k) {
            if (m.dets[k].class_id == cr.class_id) scored.push_back({m.dets[k].confidence, m.tp[t][k]});
          }
        }
        cr.ap.push_back(average_precision(scored, gt_count[c]));
      }
      cr.ap50 = cr.ap[*i50];
      cr.ap75 = cr.ap[*i75];
      cr.ap50_95 = mean(cr.ap);
    }
    report.classes.push_back(std::move(cr));
  }

  std::vector<double> ap50s, ap75s, ap_all;
  report.map_per_threshold.assign(thresholds.size(), 0.0);
  std::size_t present = 0;
  for (const auto& cr : report.classes) {
    if (!cr.present) continue;
    ++present;
    ap50s.push_back(*cr.ap50);
    ap75s.push_back(*cr.ap75);
    ap_all.push_back(*cr.ap50_95);
    for (std::size_t t = 0; t < thresholds.size(); ++t) report.map_per_threshold[t] += cr.ap[t];
  }
  for (double& v : report.map_per_threshold) v /= static_cast<double>(present);
  report.map50 = mean(ap50s);
  report.map75 = mean(ap75s);
  report.map50_95 = mean(ap_all);
  return report;
}

EvaluationReport aggregate_folds(std::span<const EvaluationReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::MismatchedReports, "aggregate_folds: no reports");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    bool same = r.thresholds.size() == first.thresholds.size() && r.classes.size() == first.classes.size();
    for (std::size_t t = 0; same && t < r.thresholds.size(); ++t) same = near(r.thresholds[t], first.thresholds[t]);
    for (std::size_t c = 0; same && c < r.classes.size(); ++c) {
      same = r.classes[c].class_id == first.classes[c].class_id && r.classes[c].name == first.classes[c].name;
    }
    if (!same) throw Error(ErrorCode::MismatchedReports, "aggregate_folds: reports differ in thresholds or classes");
  }

  const std::size_t nt = first.thresholds.size();
  EvaluationReport out;
  out.thresholds = first.thresholds;
  out.map_per_threshold.assign(nt, 0.0);
  for (std::size_t c = 0; c < first.classes.size(); ++c) {
    ClassReport cr;
    cr.class_id = first.classes[c].class_id;
    cr.name = first.classes[c].name;
    std::size_t folds = 0;
    std::vector<double> ap(nt, 0.0);
    double ap50 = 0, ap75 = 0, ap50_95 = 0;
    for (const auto& r : reports) {
      const auto& rc = r.classes[c];
      cr.gt_count += rc.gt_count;
      if (!rc.present) continue;
      ++folds;
      for (std::size_t t = 0; t < nt; ++t) ap[t] += rc.ap[t];
      ap50 += *rc.ap50;
      ap75 += *rc.ap75;
      ap50_95 += *rc.ap50_95;
    }
    if (folds > 0) {
      const double n = static_cast<double>(folds);
      cr.present = true;
      for (double& v : ap) v /= n;
      cr.ap = std::move(ap);
      cr.ap50 = ap50 / n;
      cr.ap75 = ap75 / n;
      cr.ap50_95 = ap50_95 / n;
    }
    out.classes.push_back(std::move(cr));
  }
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    out.image_count += r.image_count;
    out.map50 += r.map50 / n;
    out.map75 += r.map75 / n;
    out.map50_95 += r.map50_95 / n;
    for (std::size_t t = 0; t < nt; ++t) out.map_per_threshold[t] += r.map_per_threshold[t] / n;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string report_to_json(const EvaluationReport& report) {
  json doc;
  doc["thresholds"] = report.thresholds;
  doc["image_count"] = report.image_count;
  doc["mAP50"] = report.map50;
  doc["mAP75"] = report.map75;
  doc["mAP50_95"] = report.map50_95;
  doc["mAP_per_threshold"] = report.map_per_threshold;
  json classes = json::array();
  for (const auto& c : report.classes) {
    json j{{"id", c.class_id}, {"name", c.name}, {"gt_count", c.gt_count}, {"present", c.present}};
    if (c.present) {
      j["AP"] = c.ap;
      j["AP50"] = *c.ap50;
      j["AP75"] = *c.ap75;
      j["AP50_95"] = *c.ap50_95;
    } else {
      j["AP"] = nullptr;
      j["AP50"] = nullptr;
      j["AP75"] = nullptr;
      j["AP50_95"] = nullptr;
    }
    classes.push_back(std::move(j));
  }
  doc["classes"] = std::move(classes);
  return doc.dump(2) + "\n";
}

EvaluationReport report_from_json(std::string_view json_text) {
  try {
    const json doc = json::parse(json_text);
    EvaluationReport r;
    r.thresholds = doc.at("thresholds").get<std::vector<double>>();
    r.image_count = doc.value("image_count", std::size_t{0});
    r.map50 = doc.at("mAP50").get<double>();
    r.map75 = doc.at("mAP75").get<double>();
    r.map50_95 = doc.at("mAP50_95").get<double>();
    r.map_per_threshold = doc.at("mAP_per_threshold").get<std::vector<double>>();
    for (const auto& j : doc.at("classes")) {
      ClassReport c;
      c.class_id = j.at("id").get<int>();
      c.name = j.at("name").get<std::string>();
      c.gt_count = j.at("gt_count").get<std::size_t>();
      c.present = j.at("present").get<bool>();
      if (c.present) {
        c.ap = j.at("AP").get<std::vector<double>>();
        c.ap50 = j.at("AP50").get<double>();
        c.ap75 = j.at("AP75").get<double>();
        c.ap50_95 = j.at("AP50_95").get<double>();
      }
      r.classes.push_back(std::move(c));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("evaluation report JSON: ") + e.what());
  }
}

std::string report_to_csv(const EvaluationReport& report) {
  auto num = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("-"); };
  std::string out = "id,name,gt_count,AP50,AP75,AP50_95\n";
  for (const auto& c : report.classes) {
    out += std::to_string(c.class_id) + ',' + csv_field(c.name) + ',' + std::to_string(c.gt_count) + ',' +
           num(c.ap50) + ',' + num(c.ap75) + ',' + num(c.ap50_95) + '\n';
  }
  out += "mAP50,,," + format_number(report.map50) + ",,\n";
  out += "mAP75,,,," + format_number(report.map75) + ",\n";
  out += "mAP50_95,,,,," + format_number(report.map50_95) + "\n";
  return out;
}

}  // namespace skeyspot
