#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "skeyspot/inference.hpp"
#include "skeyspot/job_store.hpp"
#include "skeyspot/money.hpp"

namespace skeyspot {

struct ServiceConfig {
  std::filesystem::path model_path;
  std::string adapter = "yolov8";
  std::optional<int> input_size;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::size_t max_upload_bytes = 50u * 1024u * 1024u;
  std::size_t max_images = 50;
  int workers = 2;
  std::chrono::seconds retention = std::chrono::hours(24);
  std::filesystem::path spool_dir = "skeyspot-spool";
  /// Detections are stored down to min(job confidence, this) so views can
  /// lower the confidence after the fact.
  double candidate_floor = 0.05;

  /// Throws InvalidConfig.
  void validate() const;
  /// Overrides from SKEYSPOT_MODEL_PATH, SKEYSPOT_PORT, SKEYSPOT_SPOOL_DIR
  /// and SKEYSPOT_MAX_UPLOAD_MB when they are set. Throws InvalidConfig.
  void apply_env();
};

struct Upload {
  std::string filename;
  std::string content;
};

struct SubmitResult {
  std::string job_id;
  std::vector<RejectedFile> rejected;
};

using SessionFactory = std::function<std::unique_ptr<ModelSession>()>;

/// Job orchestration behind the HTTP API: validation, FIFO worker pool with
/// one model session per worker, views, bundles and renders.
class JobService {
 public:
  JobService(ServiceConfig config, const ClassRegistry& registry, SessionFactory factory,
             Clock clock = [] { return std::chrono::system_clock::now(); });
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }
  const ClassRegistry& registry() const noexcept { return registry_; }
  bool model_loaded() const noexcept { return load_error_.empty(); }
  const std::string& model_error() const noexcept { return load_error_; }

  /// Throws PayloadTooLarge, NoValidImages, InvalidArgument.
  SubmitResult submit(const std::vector<Upload>& files, const InferenceParams& params,
                      const std::optional<RateCard>& rates);
  /// Job view JSON; `confidence` re-filters stored detections. Throws
  /// UnknownJob, InvalidArgument.
  std::string job_view(const std::string& job_id, std::optional<double> confidence = std::nullopt);
  /// Throws UnknownJob, JobNotDone.
  std::string bundle(const std::string& job_id);
  /// PNG. Throws UnknownJob, JobNotDone, UnknownImageId, InvalidArgument.
  std::string annotated(const std::string& job_id, const std::string& image_id,
                        const std::optional<std::set<int>>& classes, std::optional<double> confidence);
  std::string classes_json() const;
  std::string health_json() const;

  /// Blocks until the queue is empty and no job is running.
  void wait_idle();
  std::vector<std::string> collect_expired();

 private:
  void worker_loop(std::size_t worker);
  void run_job(const std::string& job_id, ModelSession& session);
  Job get_job(const std::string& job_id);

  ServiceConfig config_;
  ClassRegistry registry_;
  JobStore store_;
  std::string load_error_;
  std::vector<std::unique_ptr<ModelSession>> sessions_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::size_t running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

/// Detections at or above `confidence`, order kept, then capped. Equal to
/// re-running NMS at that threshold because greedy NMS only lets
/// higher-confidence boxes suppress lower ones.
std::vector<ImagePredictions> refilter(const std::vector<ImagePredictions>& predictions, double confidence,
                                       std::optional<std::size_t> max_detections);

/// HTTP front end for a JobService.
class HttpServer {
 public:
  explicit HttpServer(JobService& service);
  ~HttpServer();
  /// Blocks until stop(). Returns false if the port cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it (or -1); then call listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace skeyspot
