#include "skeyspot/service.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "httplib.h"
#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"
#include "skeyspot/reporting.hpp"

namespace skeyspot {

using json = nlohmann::ordered_json;

void ServiceConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "service config: " + m); };
  if (workers < 1) fail("worker pool size must be >= 1");
  if (retention.count() <= 0) fail("retention must be positive");
  if (port < 0 || port > 65535) fail("port must be in [0,65535]");
  if (max_upload_bytes == 0) fail("max upload size must be positive");
  if (max_images == 0) fail("max images must be positive");
  if (!(candidate_floor >= 0.0 && candidate_floor <= 1.0)) fail("candidate floor must be in [0,1]");
}

namespace {

long parse_env_int(const char* name, const char* value) {
  long v = 0;
  const std::string_view s(value);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 0) {
    throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be a non-negative integer");
  }
  return v;
}

}  // namespace

void ServiceConfig::apply_env() {
  if (const char* v = std::getenv("SKEYSPOT_MODEL_PATH"); v && *v) model_path = v;
  if (const char* v = std::getenv("SKEYSPOT_PORT"); v && *v) port = static_cast<int>(parse_env_int("SKEYSPOT_PORT", v));
  if (const char* v = std::getenv("SKEYSPOT_SPOOL_DIR"); v && *v) spool_dir = v;
  if (const char* v = std::getenv("SKEYSPOT_MAX_UPLOAD_MB"); v && *v) {
    max_upload_bytes = static_cast<std::size_t>(parse_env_int("SKEYSPOT_MAX_UPLOAD_MB", v)) * 1024u * 1024u;
  }
}

std::vector<ImagePredictions> refilter(const std::vector<ImagePredictions>& predictions, double confidence,
                                       std::optional<std::size_t> max_detections) {
  std::vector<ImagePredictions> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) {
    ImagePredictions q = p;
    q.detections.clear();
    for (const auto& d : p.detections) {
      if (d.confidence >= confidence) q.detections.push_back(d);
    }
    if (max_detections && q.detections.size() > *max_detections) q.detections.resize(*max_detections);
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

std::string sanitize_id(const std::string& filename) {
  std::string stem = std::filesystem::path(filename).filename().stem().string();
  for (char& c : stem) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) c = '_';
  }
  if (stem.empty() || stem == "." || stem == "..") stem = "image";
  return stem;
}

}  // namespace

JobService::JobService(ServiceConfig config, const ClassRegistry& registry, SessionFactory factory, Clock clock)
    : config_(std::move(config)), registry_(registry), store_(config_.spool_dir, registry_, std::move(clock)) {
  config_.validate();
  try {
    for (int i = 0; i < config_.workers; ++i) sessions_.push_back(factory());
  } catch (const std::exception& e) {
    sessions_.clear();
    load_error_ = e.what();
  }

  for (const auto& id : store_.recovered_ids()) {
    const auto job = store_.get(id);
    if (job && (job->state == JobState::queued || job->state == JobState::running)) {
      store_.update(id, [](Job& j) { j.state = JobState::queued; });
      queue_.push_back(id);
    }
  }
  for (int i = 0; i < config_.workers; ++i) {
    threads_.emplace_back([this, i] { worker_loop(static_cast<std::size_t>(i)); });
  }
}

JobService::~JobService() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void JobService::worker_loop(std::size_t worker) {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      ++running_;
    }
    ModelSession* session = worker < sessions_.size() ? sessions_[worker].get() : nullptr;
    try {
      if (!session) throw Error(ErrorCode::ModelLoadError, "model not loaded: " + load_error_);
      run_job(id, *session);
    } catch (const std::exception& e) {
      try {
        store_.update(id, [&](Job& j) {
          j.state = JobState::failed;
          j.error = e.what();
          j.predictions.clear();
        });
      } catch (const std::exception&) {
        // Job expired or vanished meanwhile.
      }
    }
    {
      std::lock_guard lock(queue_mutex_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

void JobService::run_job(const std::string& job_id, ModelSession& session) {
  const Job job = store_.update(job_id, [](Job& j) { j.state = JobState::running; });
  const auto dir = store_.job_dir(job_id);

  InferenceParams candidate = job.params;
  candidate.confidence_threshold = job.candidate_confidence;
  candidate.max_detections.reset();

  std::vector<ImagePredictions> predictions;
  std::vector<SourceImage> sources;
  for (const auto& img : job.images) {
    ImagePredictions p;
    p.image_id = img.image_id;
    try {
      cv::Mat decoded = decode_image(read_bytes(dir / img.file));
      p.detections = session.detect(decoded, img.image_id, candidate);
      sources.push_back({img.image_id, std::move(decoded)});
    } catch (const Error& e) {
      p.error = e.code();
      p.error_message = e.what();
    }
    predictions.push_back(std::move(p));
  }

  const auto visible = refilter(predictions, job.params.confidence_threshold, job.params.max_detections);
  if (sources.empty()) throw Error(ErrorCode::NoValidImages, "no image in the job could be processed");
  write_file(dir / "bundle.zip", build_report(sources, visible, registry_, job.rates));

  store_.update(job_id, [&](Job& j) {
    j.state = JobState::done;
    j.predictions = predictions;
  });
}

SubmitResult JobService::submit(const std::vector<Upload>& files, const InferenceParams& params,
                                const std::optional<RateCard>& rates) {
  collect_expired();
  params.validate();
  if (files.size() > config_.max_images) {
    throw Error(ErrorCode::PayloadTooLarge, "at most " + std::to_string(config_.max_images) + " images per job");
  }
  std::size_t total = 0;
  for (const auto& f : files) total += f.content.size();
  if (total > config_.max_upload_bytes) {
    throw Error(ErrorCode::PayloadTooLarge, "upload exceeds " + std::to_string(config_.max_upload_bytes) + " bytes");
  }

  Job job;
  job.job_id = store_.new_job_id();
  job.created_at = job.updated_at = store_.now();
  job.params = params;
  job.candidate_confidence = std::min(params.confidence_threshold, config_.candidate_floor);
  job.rates = rates;

  std::set<std::string> used;
  std::vector<std::pair<std::string, const Upload*>> accepted;
  for (const auto& f : files) {
    cv::Mat probe;
    if (!f.content.empty()) {
      try {
        probe = cv::imdecode(
            cv::Mat(1, static_cast<int>(f.content.size()), CV_8UC1, const_cast<char*>(f.content.data())),
            cv::IMREAD_UNCHANGED);
      } catch (const cv::Exception&) {
        probe.release();
      }
    }
    if (probe.empty()) {
      job.rejected.push_back({f.filename, "not a decodable PNG/JPEG image"});
      continue;
    }
    std::string id = sanitize_id(f.filename);
    for (int n = 2; used.contains(id); ++n) id = sanitize_id(f.filename) + "_" + std::to_string(n);
    used.insert(id);
    accepted.emplace_back(id, &f);
  }
  if (accepted.empty()) throw Error(ErrorCode::NoValidImages, "no decodable image in the upload");

  const auto dir = store_.job_dir(job.job_id);
  std::filesystem::create_directories(dir / "inputs");
  for (const auto& [id, f] : accepted) {
    const auto ext = std::filesystem::path(f->filename).extension().string();
    const std::string file = "inputs/" + id + (ext.empty() ? ".img" : sanitize_id("x" + ext).substr(1));
    write_file(dir / file, f->content);
    job.images.push_back({id, file});
  }
  store_.put(job);
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(job.job_id);
  }
  queue_cv_.notify_one();
  return {job.job_id, job.rejected};
}

Job JobService::get_job(const std::string& job_id) {
  collect_expired();
  auto job = store_.get(job_id);
  if (!job) throw Error(ErrorCode::UnknownJob, "unknown job '" + job_id + "'");
  return *job;
}

namespace {

double applied_confidence(const Job& job, std::optional<double> confidence) {
  const double c = confidence.value_or(job.params.confidence_threshold);
  if (!(c >= 0.0 && c <= 1.0)) throw Error(ErrorCode::InvalidArgument, "confidence must be in [0,1]");
  if (c < job.candidate_confidence) {
    throw Error(ErrorCode::InvalidArgument, "confidence below " + format_number(job.candidate_confidence) +
                                                " is not available for this job");
  }
  return c;
}

}  // namespace

std::string JobService::job_view(const std::string& job_id, std::optional<double> confidence) {
  const Job job = get_job(job_id);
  json doc;
  doc["job_id"] = job.job_id;
  doc["state"] = to_string(job.state);
  doc["created_at"] = job.created_at;
  doc["updated_at"] = job.updated_at;
  json params{{"confidence", job.params.confidence_threshold}, {"nms_iou", job.params.nms_iou_threshold}};
  params["max_detections"] = job.params.max_detections ? json(*job.params.max_detections) : json(nullptr);
  doc["params"] = std::move(params);
  json rejected = json::array();
  for (const auto& r : job.rejected) rejected.push_back({{"filename", r.filename}, {"reason", r.reason}});
  doc["rejected"] = std::move(rejected);
  doc["error"] = job.error ? json(*job.error) : json(nullptr);

  const std::string base = "/api/jobs/" + job.job_id;
  if (job.state == JobState::done) {
    const double c = applied_confidence(job, confidence);
    const auto preds = refilter(job.predictions, c, job.params.max_detections);
    doc["confidence"] = c;
    json images = json::parse(write_predictions_json(preds, registry_));
    for (auto& img : images) {
      img["annotated_url"] = base + "/images/" + img["image_id"].get<std::string>() + "/annotated";
    }
    doc["images"] = std::move(images);
    const auto summary = summarize(preds);
    doc["summary"] = json::parse(summary_to_json(summary, registry_));
    doc["costs"] = job.rates ? json::parse(costs_to_json(cost_breakdown(summary, *job.rates), registry_)) : json(nullptr);
    doc["bundle_url"] = base + "/bundle.zip";
  } else {
    json images = json::array();
    for (const auto& i : job.images) images.push_back({{"image_id", i.image_id}});
    doc["images"] = std::move(images);
  }
  return doc.dump(2) + "\n";
}

std::string JobService::bundle(const std::string& job_id) {
  const Job job = get_job(job_id);
  if (job.state != JobState::done) {
    throw Error(ErrorCode::JobNotDone, "job '" + job_id + "' is " + std::string(to_string(job.state)));
  }
  return read_file(store_.job_dir(job_id) / "bundle.zip");
}

std::string JobService::annotated(const std::string& job_id, const std::string& image_id,
                                  const std::optional<std::set<int>>& classes, std::optional<double> confidence) {
  const Job job = get_job(job_id);
  if (job.state != JobState::done) {
    throw Error(ErrorCode::JobNotDone, "job '" + job_id + "' is " + std::string(to_string(job.state)));
  }
  if (classes) {
    for (int c : *classes) registry_.at(c);
  }
  const auto img = std::find_if(job.images.begin(), job.images.end(),
                                [&](const JobImage& i) { return i.image_id == image_id; });
  if (img == job.images.end()) throw Error(ErrorCode::UnknownImageId, "job has no image '" + image_id + "'");
  const double c = applied_confidence(job, confidence);
  const auto preds = refilter(job.predictions, c, job.params.max_detections);
  const auto p = std::find_if(preds.begin(), preds.end(), [&](const ImagePredictions& q) { return q.image_id == image_id; });
  std::span<const Detection> dets;
  if (p != preds.end() && p->ok()) dets = p->detections;
  const cv::Mat source = decode_image(read_bytes(store_.job_dir(job_id) / img->file));
  return encode_png(render_annotations(source, dets, registry_, RenderOptions{classes, true}));
}

std::string JobService::classes_json() const {
  json classes = json::array();
  for (const auto& c : registry_.classes()) {
    classes.push_back({{"id", c.class_id},
                       {"name", c.name},
                       {"slug", c.slug},
                       {"color", to_hex(class_color(c.class_id, registry_.size()))}});
  }
  return json{{"version", registry_.version()}, {"classes", std::move(classes)}}.dump(2) + "\n";
}

std::string JobService::health_json() const {
  json doc{{"status", "ok"}, {"model_loaded", model_loaded()}, {"adapter", config_.adapter}};
  if (!model_loaded()) doc["model_error"] = load_error_;
  return doc.dump() + "\n";
}

void JobService::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
}

std::vector<std::string> JobService::collect_expired() { return store_.collect_expired(config_.retention); }

// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownJob:
    case ErrorCode::UnknownImageId: return 404;
    case ErrorCode::JobNotDone: return 409;
    case ErrorCode::PayloadTooLarge: return 413;
    case ErrorCode::NoValidImages: return 422;
    case ErrorCode::InvalidArgument:
    case ErrorCode::NegativeRate:
    case ErrorCode::UnknownClass:
    case ErrorCode::OutOfRangeClass:
    case ErrorCode::InvalidConfig: return 400;
    default: return 500;
  }
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  res.status = http_status(code);
  res.set_content(json{{"error", {{"code", to_string(code)}, {"message", message}}}}.dump() + "\n",
                  "application/json");
}

std::optional<double> number_param(const std::string& name, const std::string& text) {
  if (text.empty()) return std::nullopt;
  double v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, name + " must be a number");
  }
  return v;
}

std::optional<double> query_number(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) return std::nullopt;
  return number_param(name, req.get_param_value(name));
}

std::optional<std::set<int>> parse_classes(const httplib::Request& req) {
  if (!req.has_param("classes")) return std::nullopt;
  std::set<int> out;
  const std::string text = req.get_param_value("classes");
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    if (!item.empty()) {
      int v = 0;
      const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size()) {
        throw Error(ErrorCode::InvalidArgument, "classes must be a comma-separated list of class ids");
      }
      out.insert(v);
    }
    start = end + 1;
  }
  return out;
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() + "\n", "application/json");
  }
}

}  // namespace

struct HttpServer::Impl {
  JobService& service;
  httplib::Server server;

  explicit Impl(JobService& s) : service(s) {
    // Multipart framing overhead on top of the file bytes.
    server.set_payload_max_length(service.config().max_upload_bytes + 1024u * 1024u);

    server.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::vector<Upload> files;
        for (const char* key : {"files[]", "files"}) {
          for (const auto& f : req.get_file_values(key)) files.push_back({f.filename, f.content});
        }
        auto field = [&](const char* key) -> std::string {
          if (req.has_file(key)) return req.get_file_value(key).content;
          if (req.has_param(key)) return req.get_param_value(key);
          return {};
        };
        InferenceParams params;
        if (auto v = number_param("confidence", field("confidence"))) params.confidence_threshold = *v;
        if (auto v = number_param("nms_iou", field("nms_iou"))) params.nms_iou_threshold = *v;
        if (auto v = number_param("max_detections", field("max_detections"))) {
          if (*v < 0 || *v != static_cast<double>(static_cast<std::size_t>(*v))) {
            throw Error(ErrorCode::InvalidArgument, "max_detections must be a non-negative integer");
          }
          params.max_detections = static_cast<std::size_t>(*v);
        }
        std::optional<RateCard> rates;
        if (const auto text = field("rates"); !text.empty()) rates = parse_rate_card(text, service.registry());
        const auto result = service.submit(files, params, rates);
        json rejected = json::array();
        for (const auto& r : result.rejected) rejected.push_back({{"filename", r.filename}, {"reason", r.reason}});
        res.status = 201;
        res.set_content(json{{"job_id", result.job_id}, {"state", "queued"}, {"rejected", std::move(rejected)}}.dump() +
                            "\n",
                        "application/json");
      });
    });

    server.Get(R"(/api/jobs/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        res.set_content(service.job_view(req.matches[1], query_number(req, "confidence")), "application/json");
      });
    });

    server.Get(R"(/api/jobs/([A-Za-z0-9]+)/bundle\.zip)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        res.set_content(service.bundle(id), "application/zip");
        res.set_header("Content-Disposition", "attachment; filename=\"skeyspot-" + id + ".zip\"");
      });
    });

    server.Get(R"(/api/jobs/([A-Za-z0-9]+)/images/([A-Za-z0-9._-]+)/annotated)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   res.set_content(service.annotated(req.matches[1], req.matches[2], parse_classes(req),
                                                     query_number(req, "confidence")),
                                   "image/png");
                 });
               });

    server.Get("/api/classes", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(service.classes_json(), "application/json");
    });

    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(service.health_json(), "application/json");
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 413) {
        send_error(res, ErrorCode::PayloadTooLarge, "request body too large");
      } else if (res.status == 404) {
        send_error(res, ErrorCode::InvalidArgument, "no such endpoint");
        res.status = 404;
      }
    });
  }
};

HttpServer::HttpServer(JobService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace skeyspot
