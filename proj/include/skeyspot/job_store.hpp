#pragma once

// Jobs persisted as JSON records under a spool directory:
//   <spool>/<job_id>/job.json
//   <spool>/<job_id>/inputs/<image_id><ext>
//   <spool>/<job_id>/bundle.zip

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skeyspot/inference.hpp"
#include "skeyspot/money.hpp"
#include "skeyspot/predictions.hpp"

namespace skeyspot {

enum class JobState { queued, running, done, failed };
std::string_view to_string(JobState s) noexcept;
/// Throws InvalidArgument.
JobState parse_job_state(std::string_view text);

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct JobImage {
  std::string image_id;
  std::string file;  // relative to the job directory
};

struct RejectedFile {
  std::string filename;
  std::string reason;
};

struct Job {
  std::string job_id;
  JobState state = JobState::queued;
  std::int64_t created_at = 0;  // unix seconds
  std::int64_t updated_at = 0;
  InferenceParams params;
  double candidate_confidence = 0.0;  // threshold the stored detections were produced at
  std::optional<RateCard> rates;
  std::vector<JobImage> images;
  std::vector<RejectedFile> rejected;
  std::vector<ImagePredictions> predictions;  // set iff done
  std::optional<std::string> error;           // set iff failed
};

std::string job_to_json(const Job& job, const ClassRegistry& registry);
Job job_from_json(std::string_view text, const ClassRegistry& registry);

/// Thread-safe job table with write-through persistence. Reads return
/// copies; each update rewrites the record atomically.
class JobStore {
 public:
  JobStore(std::filesystem::path spool_dir, const ClassRegistry& registry, Clock clock);

  const std::filesystem::path& spool_dir() const noexcept { return spool_dir_; }
  std::filesystem::path job_dir(const std::string& job_id) const { return spool_dir_ / job_id; }
  std::int64_t now() const;

  /// Fresh unique id, not yet present in the store or on disk.
  std::string new_job_id();
  void put(const Job& job);
  std::optional<Job> get(const std::string& job_id) const;
  /// Applies `update` under the store lock, stamps updated_at and persists.
  /// Throws UnknownJob.
  Job update(const std::string& job_id, const std::function<void(Job&)>& update);
  std::vector<std::string> ids() const;
  /// Removes terminal jobs whose last update is older than `retention`,
  /// along with their directories. Returns the removed ids.
  std::vector<std::string> collect_expired(std::chrono::seconds retention);

  /// Records loaded from disk at construction, in creation order.
  std::vector<std::string> recovered_ids() const;

 private:
  void persist(const Job& job) const;

  std::filesystem::path spool_dir_;
  ClassRegistry registry_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, Job> jobs_;
  std::vector<std::string> recovered_;
  std::uint64_t counter_ = 0;
};

}  // namespace skeyspot
