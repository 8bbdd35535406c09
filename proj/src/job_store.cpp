#include "skeyspot/job_store.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <random>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"

namespace skeyspot {

using json = nlohmann::ordered_json;

std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "failed";
}

JobState parse_job_state(std::string_view text) {
  for (auto s : {JobState::queued, JobState::running, JobState::done, JobState::failed}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown job state '" + std::string(text) + "'");
}

std::string job_to_json(const Job& job, const ClassRegistry& registry) {
  json doc;
  doc["job_id"] = job.job_id;
  doc["state"] = to_string(job.state);
  doc["created_at"] = job.created_at;
  doc["updated_at"] = job.updated_at;
  json params{{"confidence", job.params.confidence_threshold}, {"nms_iou", job.params.nms_iou_threshold}};
  params["max_detections"] = job.params.max_detections ? json(*job.params.max_detections) : json(nullptr);
  doc["params"] = std::move(params);
  doc["candidate_confidence"] = job.candidate_confidence;
  doc["rates"] = job.rates ? json::parse(write_rate_card(*job.rates)) : json(nullptr);
  json images = json::array();
  for (const auto& i : job.images) images.push_back({{"image_id", i.image_id}, {"file", i.file}});
  doc["images"] = std::move(images);
  json rejected = json::array();
  for (const auto& r : job.rejected) rejected.push_back({{"filename", r.filename}, {"reason", r.reason}});
  doc["rejected"] = std::move(rejected);
  doc["predictions"] =
      job.state == JobState::done ? json::parse(write_predictions_json(job.predictions, registry)) : json(nullptr);
  doc["error"] = job.error ? json(*job.error) : json(nullptr);
  return doc.dump(2) + "\n";
}

Job job_from_json(std::string_view text, const ClassRegistry& registry) {
  try {
    const json doc = json::parse(text);
    Job job;
    job.job_id = doc.at("job_id").get<std::string>();
    job.state = parse_job_state(doc.at("state").get<std::string>());
    job.created_at = doc.at("created_at").get<std::int64_t>();
    job.updated_at = doc.at("updated_at").get<std::int64_t>();
    const auto& p = doc.at("params");
    job.params.confidence_threshold = p.at("confidence").get<double>();
    job.params.nms_iou_threshold = p.at("nms_iou").get<double>();
    if (!p.at("max_detections").is_null()) job.params.max_detections = p["max_detections"].get<std::size_t>();
    job.candidate_confidence = doc.at("candidate_confidence").get<double>();
    if (!doc.at("rates").is_null()) job.rates = parse_rate_card(doc["rates"].dump(), registry);
    for (const auto& i : doc.at("images")) {
      job.images.push_back({i.at("image_id").get<std::string>(), i.at("file").get<std::string>()});
    }
    for (const auto& r : doc.at("rejected")) {
      job.rejected.push_back({r.at("filename").get<std::string>(), r.at("reason").get<std::string>()});
    }
    if (!doc.at("predictions").is_null()) job.predictions = parse_predictions_json(doc["predictions"].dump(), registry);
    if (!doc.at("error").is_null()) job.error = doc["error"].get<std::string>();
    return job;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("job record: ") + e.what());
  }
}

JobStore::JobStore(std::filesystem::path spool_dir, const ClassRegistry& registry, Clock clock)
    : spool_dir_(std::move(spool_dir)), registry_(registry), clock_(std::move(clock)) {
  std::error_code ec;
  std::filesystem::create_directories(spool_dir_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create spool directory " + spool_dir_.string() + ": " + ec.message());
  std::vector<Job> found;
  for (const auto& entry : std::filesystem::directory_iterator(spool_dir_)) {
    const auto record = entry.path() / "job.json";
    if (!entry.is_directory() || !std::filesystem::exists(record)) continue;
    try {
      found.push_back(job_from_json(read_file(record), registry_));
    } catch (const Error&) {
      // Unreadable records are left on disk and ignored.
    }
  }
  std::sort(found.begin(), found.end(), [](const Job& a, const Job& b) {
    return std::tie(a.created_at, a.job_id) < std::tie(b.created_at, b.job_id);
  });
  for (auto& j : found) {
    recovered_.push_back(j.job_id);
    jobs_.emplace(j.job_id, std::move(j));
  }
}

std::int64_t JobStore::now() const {
  return std::chrono::duration_cast<std::chrono::seconds>(clock_().time_since_epoch()).count();
}

std::string JobStore::new_job_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mutex_);
  for (;;) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%016llx%04llx", static_cast<unsigned long long>(gen()),
                  static_cast<unsigned long long>(++counter_ & 0xffff));
    std::string id(buf);
    if (!jobs_.contains(id) && !std::filesystem::exists(job_dir(id))) return id;
  }
}

void JobStore::persist(const Job& job) const {
  std::filesystem::create_directories(job_dir(job.job_id));
  write_file(job_dir(job.job_id) / "job.json", job_to_json(job, registry_));
}

void JobStore::put(const Job& job) {
  std::lock_guard lock(mutex_);
  persist(job);
  jobs_[job.job_id] = job;
}

std::optional<Job> JobStore::get(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

Job JobStore::update(const std::string& job_id, const std::function<void(Job&)>& update) {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, "unknown job '" + job_id + "'");
  Job next = it->second;
  update(next);
  next.updated_at = now();
  persist(next);
  it->second = next;
  return next;
}

std::vector<std::string> JobStore::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : jobs_) out.push_back(id);
  return out;
}

std::vector<std::string> JobStore::collect_expired(std::chrono::seconds retention) {
  std::vector<std::string> removed;
  std::lock_guard lock(mutex_);
  const auto cutoff = now() - retention.count();
  for (auto it = jobs_.begin(); it != jobs_.end();) {
    const auto& j = it->second;
    const bool terminal = j.state == JobState::done || j.state == JobState::failed;
    if (terminal && j.updated_at <= cutoff) {
      std::error_code ec;
      std::filesystem::remove_all(job_dir(j.job_id), ec);
      removed.push_back(j.job_id);
      it = jobs_.erase(it);
    } else {
      ++it;
    }
  }
  return removed;
}

std::vector<std::string> JobStore::recovered_ids() const {
  std::lock_guard lock(mutex_);
  return recovered_;
}

}  // namespace skeyspot
