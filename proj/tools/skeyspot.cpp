// skeyspot command-line front end. Exit codes: 0 success, 1 domain error
// (JSON on stderr), 2 usage error.

#include <CLI11.hpp>
#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "skeyspot/annotation.hpp"
#include "skeyspot/augmentation.hpp"
#include "skeyspot/dataset.hpp"
#include "skeyspot/error.hpp"
#include "skeyspot/evaluation.hpp"
#include "skeyspot/inference.hpp"
#include "skeyspot/io.hpp"
#include "skeyspot/reporting.hpp"
#include "skeyspot/service.hpp"

namespace fs = std::filesystem;
using namespace skeyspot;
using json = nlohmann::ordered_json;

namespace {

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_file(out, text);
  }
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& input) {
  if (!fs::exists(input)) throw Error(ErrorCode::IoError, "no such file or directory: " + input.string());
  if (!fs::is_directory(input)) return {input};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string manifest;
  std::string format = "table";
  std::string out;
};

int run_stats(const StatsArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  const auto stats = dataset_stats(manifest);
  const auto& reg = manifest.registry;
  constexpr Split splits[] = {Split::train, Split::val, Split::test, Split::none};
  std::string text;
  if (a.format == "json") {
    json classes = json::array();
    for (const auto& c : stats.classes) {
      json row{{"id", c.class_id}, {"name", reg.at(c.class_id).name}};
      for (auto s : splits) row[std::string(to_string(s))] = c.by_split[static_cast<std::size_t>(s)];
      row["total"] = c.total;
      classes.push_back(std::move(row));
    }
    json images, instances;
    for (auto s : splits) {
      images[std::string(to_string(s))] = stats.images_by_split[static_cast<std::size_t>(s)];
      instances[std::string(to_string(s))] = stats.instances_by_split[static_cast<std::size_t>(s)];
    }
    text = json{{"classes", classes}, {"images", images}, {"instances", instances}, {"total_instances",
                                                                                      stats.total_instances}}
               .dump(2) +
           "\n";
  } else if (a.format == "csv") {
    text = "id,name,train,val,test,none,total\n";
    for (const auto& c : stats.classes) {
      text += std::to_string(c.class_id) + ',' + csv_field(reg.at(c.class_id).name);
      for (auto n : c.by_split) text += ',' + std::to_string(n);
      text += ',' + std::to_string(c.total) + '\n';
    }
  } else {
    char line[160];
    std::snprintf(line, sizeof line, "%-3s %-32s %7s %7s %7s %7s %7s\n", "id", "name", "train", "val", "test", "none",
                  "total");
    text += line;
    for (const auto& c : stats.classes) {
      // A dash marks a class with no test instances.
      const auto test = c.by_split[static_cast<std::size_t>(Split::test)];
      std::snprintf(line, sizeof line, "%-3d %-32s %7zu %7zu %7s %7zu %7zu\n", c.class_id,
                    reg.at(c.class_id).name.c_str(), c.by_split[0], c.by_split[1],
                    test == 0 ? "-" : std::to_string(test).c_str(), c.by_split[3], c.total);
      text += line;
    }
    std::snprintf(line, sizeof line, "%-36s %7zu %7zu %7zu %7zu %7zu\n", "instances", stats.instances_by_split[0],
                  stats.instances_by_split[1], stats.instances_by_split[2], stats.instances_by_split[3],
                  stats.total_instances);
    text += line;
    const auto& im = stats.images_by_split;
    std::snprintf(line, sizeof line, "%-36s %7zu %7zu %7zu %7zu %7zu\n", "images", im[0], im[1], im[2], im[3],
                  im[0] + im[1] + im[2] + im[3]);
    text += line;
  }
  emit(text, a.out);
  return 0;
}

struct SplitArgs {
  std::string manifest;
  int k = 5;
  double val_frac = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

int run_split(const SplitArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  emit(write_folds_json(kfold_split(manifest, a.k, a.val_frac, a.seed)), a.out);
  return 0;
}

struct AugmentArgs {
  std::string manifest;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool serial = false;
};

int run_augment(const AugmentArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  AugmentationConfig cfg = a.config.empty() ? AugmentationConfig{} : parse_augmentation_config(read_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const fs::path src_dir = fs::path(a.manifest).parent_path();
  const fs::path out_path = a.out;
  const fs::path out_dir = out_path.parent_path();
  const fs::path image_dir = out_dir / "augmented";
  fs::create_directories(image_dir);

  auto load = [&](const ImageRecord& rec) {
    const auto p = src_dir / rec.path;
    cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw Error(ErrorCode::ImageDecodeError, "cannot read " + p.string());
    return img;
  };
  auto write = [&](const ImageRecord& derived, const cv::Mat& img) {
    const auto p = image_dir / (derived.image_id + ".png");
    write_file(p, encode_png(img));
    return fs::relative(p, out_dir.empty() ? fs::path(".") : out_dir).generic_string();
  };
  auto outcome = augment_manifest(manifest, cfg, load, write, a.serial ? Exec::serial : Exec::parallel);

  // Source paths stay valid relative to the new manifest location.
  for (auto& img : outcome.manifest.images) {
    if (!manifest.find(img.image_id)) continue;
    const auto abs = fs::absolute(src_dir / img.path).lexically_normal();
    img.path = fs::absolute(abs).lexically_relative(fs::absolute(out_dir.empty() ? "." : out_dir)).generic_string();
  }
  save_manifest(outcome.manifest, out_path);
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

struct InferArgs {
  std::string model;
  std::string input;
  std::string adapter = "yolov8";
  std::optional<int> imgsz;
  double conf = 0.25;
  double nms_iou = 0.45;
  std::optional<std::size_t> max_det;
  std::string format = "json";
  std::string out;
};

int run_infer(const InferArgs& a) {
  InferenceParams params{a.conf, a.nms_iou, a.max_det};
  params.validate();
  const auto& registry = ClassRegistry::delp();
  auto session = load_model(a.model, registry, a.adapter, a.imgsz);
  std::vector<ImageInput> inputs;
  for (const auto& p : list_images(a.input)) {
    ImageInput in{image_id_for(p), {}};
    try {
      in.bytes = read_bytes(p);
    } catch (const Error&) {
      // Left empty; reported as a per-image decode error.
    }
    inputs.push_back(std::move(in));
  }
  const auto preds = detect_batch(*session, inputs, params);
  emit(a.format == "csv" ? write_predictions_csv(preds, registry) : write_predictions_json(preds, registry), a.out);
  return 0;
}

struct EvalArgs {
  std::string predictions;
  std::string manifest;
  std::string folds;
  std::string split;
  std::string format = "json";
  std::optional<std::size_t> max_det;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  EvaluationOptions opts;
  if (!a.split.empty() && a.split != "all") opts.split = parse_split(a.split);
  opts.max_detections = a.max_det;
  const std::string text = read_file(a.predictions);

  EvaluationReport report;
  if (a.folds.empty()) {
    report = evaluate(parse_predictions_json(text, manifest.registry), manifest, opts);
  } else {
    // predictions: one array per fold, in fold order; each fold is scored on its validation ids.
    const auto folds = parse_folds_json(read_file(a.folds));
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedAnnotation, std::string("predictions JSON: ") + e.what());
    }
    if (!doc.is_array() || doc.size() != folds.size()) {
      throw Error(ErrorCode::MismatchedReports, "--folds expects one predictions array per fold (" +
                                                    std::to_string(folds.size()) + ")");
    }
    std::vector<EvaluationReport> reports;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      DatasetManifest sub{manifest.registry, {}};
      for (const auto& id : folds[i].val) {
        const auto* rec = manifest.find(id);
        if (!rec) throw Error(ErrorCode::UnknownImageId, "fold references unknown image '" + id + "'");
        sub.images.push_back(*rec);
      }
      auto preds = parse_predictions_json(doc[i].dump(), manifest.registry);
      std::erase_if(preds, [&](const ImagePredictions& p) { return !sub.find(p.image_id); });
      EvaluationOptions fold_opts = opts;
      fold_opts.split.reset();
      reports.push_back(evaluate(preds, sub, fold_opts));
    }
    report = aggregate_folds(reports);
  }
  emit(a.format == "csv" ? report_to_csv(report) : report_to_json(report), a.out);
  return 0;
}

struct ReportArgs {
  std::string detections;
  std::string images;
  std::string rates;
  std::string out;
};

int run_report(const ReportArgs& a) {
  const auto& registry = ClassRegistry::delp();
  const auto preds = parse_predictions_json(read_file(a.detections), registry);
  std::optional<RateCard> rates;
  if (!a.rates.empty()) rates = parse_rate_card(read_file(a.rates), registry);

  std::vector<SourceImage> sources;
  for (const auto& p : preds) {
    if (!p.ok()) continue;
    std::optional<fs::path> found;
    for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
      const auto candidate = fs::path(a.images) / (p.image_id + ext);
      if (fs::is_regular_file(candidate)) {
        found = candidate;
        break;
      }
    }
    if (!found) throw Error(ErrorCode::IoError, "no image for '" + p.image_id + "' in " + a.images);
    sources.push_back({p.image_id, decode_image(read_bytes(*found))});
  }
  write_file(a.out, build_report(sources, preds, registry, rates));
  return 0;
}

struct ServeArgs {
  std::string model;
  std::string adapter = "yolov8";
  std::optional<int> imgsz;
  std::optional<int> port;
  std::string host = "0.0.0.0";
  std::string spool;
  int workers = 2;
  std::optional<std::size_t> max_upload_mb;
  std::size_t max_images = 50;
  double retention_hours = 24.0;
};

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a) {
  ServiceConfig cfg;
  cfg.apply_env();
  if (!a.model.empty()) cfg.model_path = a.model;
  if (a.port) cfg.port = *a.port;
  if (!a.spool.empty()) cfg.spool_dir = a.spool;
  if (a.max_upload_mb) cfg.max_upload_bytes = *a.max_upload_mb * 1024u * 1024u;
  cfg.adapter = a.adapter;
  cfg.input_size = a.imgsz;
  cfg.host = a.host;
  cfg.workers = a.workers;
  cfg.max_images = a.max_images;
  cfg.retention = std::chrono::seconds(static_cast<long long>(a.retention_hours * 3600.0));
  cfg.validate();
  if (cfg.model_path.empty()) throw Error(ErrorCode::InvalidConfig, "no model: pass --model or set SKEYSPOT_MODEL_PATH");

  const auto& registry = ClassRegistry::delp();
  JobService service(cfg, registry, [&] { return load_model(cfg.model_path, registry, cfg.adapter, cfg.input_size); });
  if (!service.model_loaded()) std::cerr << "warning: model not loaded: " << service.model_error() << '\n';
  HttpServer server(service);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  int port = cfg.port;
  if (port == 0) {
    port = server.bind_to_any_port(cfg.host);
    if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + cfg.host);
    std::cout << "listening on " << cfg.host << ':' << port << std::endl;
    server.listen_after_bind();
  } else {
    std::cout << "listening on " << cfg.host << ':' << port << std::endl;
    if (!server.listen(cfg.host, port)) throw Error(ErrorCode::IoError, "cannot listen on port " + std::to_string(port));
  }
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skeyspot: floor-plan service-key detection toolkit"};
  app.require_subcommand(1);

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Per-class instance counts by split");
  c_stats->add_option("manifest", stats.manifest, "Dataset manifest JSON")->required();
  c_stats->add_option("--format", stats.format)->check(CLI::IsMember({"table", "json", "csv"}));
  c_stats->add_option("--out", stats.out, "Output file (default stdout)");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Image-level k-fold split of the non-test images");
  c_split->add_option("manifest", split.manifest)->required();
  c_split->add_option("--k", split.k)->capture_default_str();
  c_split->add_option("--val-frac", split.val_frac)->capture_default_str();
  c_split->add_option("--seed", split.seed)->capture_default_str();
  c_split->add_option("--out", split.out);

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "Augment the train split; writes images and a new manifest");
  c_aug->add_option("manifest", aug.manifest)->required();
  c_aug->add_option("--config", aug.config, "Augmentation config JSON");
  c_aug->add_option("--seed", aug.seed, "Overrides the config seed");
  c_aug->add_option("--out", aug.out, "Output manifest path")->required();
  c_aug->add_flag("--serial", aug.serial, "Disable OpenMP");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Detect service keys in an image or a directory of images");
  c_infer->add_option("model", infer.model, "ONNX model (or manifest for --adapter gt-stub)")->required();
  c_infer->add_option("input", infer.input, "Image file or directory")->required();
  c_infer->add_option("--adapter", infer.adapter)->check(CLI::IsMember({"yolov8", "gt-stub"}))->capture_default_str();
  c_infer->add_option("--imgsz", infer.imgsz, "Model input size (default: from the model, else 640)");
  c_infer->add_option("--conf", infer.conf)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_infer->add_option("--nms-iou", infer.nms_iou)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_infer->add_option("--max-det", infer.max_det);
  c_infer->add_option("--format", infer.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  c_infer->add_option("--out", infer.out);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against a manifest (mAP50, mAP75, mAP50-95)");
  c_eval->add_option("predictions", eval.predictions)->required();
  c_eval->add_option("manifest", eval.manifest)->required();
  c_eval->add_option("--folds", eval.folds, "Folds JSON from `split`; predictions then hold one array per fold");
  c_eval->add_option("--split", eval.split, "Only evaluate images of this split (train|val|test|none|all)");
  c_eval->add_option("--max-det", eval.max_det);
  c_eval->add_option("--format", eval.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  c_eval->add_option("--out", eval.out);

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Build a zip bundle of annotated images, summaries and costs");
  c_report->add_option("detections", report.detections)->required();
  c_report->add_option("images", report.images, "Directory holding <image_id>.png|jpg")->required();
  c_report->add_option("--rates", report.rates, "Rate card JSON");
  c_report->add_option("--out", report.out)->required();

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP API");
  c_serve->add_option("--model", serve.model);
  c_serve->add_option("--adapter", serve.adapter)->check(CLI::IsMember({"yolov8", "gt-stub"}))->capture_default_str();
  c_serve->add_option("--imgsz", serve.imgsz);
  c_serve->add_option("--port", serve.port, "0 picks a free port");
  c_serve->add_option("--host", serve.host)->capture_default_str();
  c_serve->add_option("--spool", serve.spool);
  c_serve->add_option("--workers", serve.workers)->capture_default_str();
  c_serve->add_option("--max-upload-mb", serve.max_upload_mb);
  c_serve->add_option("--max-images", serve.max_images)->capture_default_str();
  c_serve->add_option("--retention-hours", serve.retention_hours)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*c_stats) return run_stats(stats);
    if (*c_split) return run_split(split);
    if (*c_aug) return run_augment(aug);
    if (*c_infer) return run_infer(infer);
    if (*c_eval) return run_eval(eval);
    if (*c_report) return run_report(report);
    if (*c_serve) return run_serve(serve);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 2;
}
