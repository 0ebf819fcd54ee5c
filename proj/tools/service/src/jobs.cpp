#include "stylecore/service/jobs.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "stylecore/error.hpp"
#include "stylecore/imageio.hpp"

namespace stylecore::service {

const char* to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "?";
}

json JobStatus::to_json() const {
  json j{{"id", id}, {"kind", service::to_string(kind)}, {"status", service::to_string(state)}, {"config", config}};
  if (state == JobState::Running || finished()) {
    j["progress"] = {{"scale", scale}, {"scales", scales}, {"step", step}, {"steps", steps}, {"loss", loss}};
  }
  if (state == JobState::Failed) j["reason"] = reason;
  if (!stats.is_null()) j["stats"] = stats;
  return j;
}

JobManager::JobManager(JobManagerOptions opts) : opts_(std::move(opts)) {
  if (opts_.result_dir.empty()) opts_.result_dir = std::filesystem::temp_directory_path() / "stylecore-results";
  std::filesystem::create_directories(opts_.result_dir);
  int n = opts_.workers;
  if (n <= 0) n = std::max(1, static_cast<int>(std::thread::hardware_concurrency()) / 2);
  id_state_ = std::random_device{}();
  id_state_ = (id_state_ << 32) ^ std::random_device{}();
  for (int i = 0; i < n; ++i) threads_.emplace_back([this] { worker_loop(); });
}

JobManager::~JobManager() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    for (auto& [id, job] : jobs_) job->cancel = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

std::string JobManager::new_id() {
  // splitmix64 step; ids only need to be unique and unguessable-ish
  id_state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = id_state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
  return buf;
}

std::string JobManager::submit(JobRequest request, JobInputs inputs) {
  validate_inputs(request, inputs);
  auto job = std::make_shared<Job>();
  job->request = std::move(request);
  job->inputs = std::move(inputs);
  job->status.kind = job->request.kind;
  job->status.config = job->request.to_json();
  std::string id;
  {
    std::lock_guard lock(mu_);
    do {
      id = new_id();
    } while (jobs_.count(id));
    job->status.id = id;
    jobs_[id] = job;
    queue_.push_back(job);
  }
  cv_.notify_one();
  return id;
}

std::optional<JobStatus> JobManager::status(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second->status;
}

JobManager::CancelOutcome JobManager::cancel(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return CancelOutcome::NotFound;
  auto& job = it->second;
  if (job->status.finished()) return CancelOutcome::AlreadyFinished;
  job->cancel = true;
  if (job->status.state == JobState::Queued) {
    std::erase(queue_, job);
    job->status.state = JobState::Failed;
    job->status.reason = "cancelled";
    done_cv_.notify_all();
  }
  return CancelOutcome::Cancelled;
}

std::optional<std::vector<std::uint8_t>> JobManager::preview(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second->preview;
}

std::optional<JobStatus> JobManager::wait(const std::string& id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  auto job = it->second;
  done_cv_.wait_for(lock, timeout, [&] { return job->status.finished(); });
  return job->status;
}

void JobManager::worker_loop() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = queue_.front();
      queue_.pop_front();
      job->status.state = JobState::Running;
    }
    execute(job);
  }
}

void JobManager::execute(const std::shared_ptr<Job>& job) {
  RunControl control;
  control.cancel = &job->cancel;
  control.on_progress = [this, &job](const ProgressEvent& ev) {
    std::vector<std::uint8_t> png;
    if (ev.preview) png = encode_png(*ev.preview);
    std::lock_guard lock(mu_);
    auto& s = job->status;
    s.scale = ev.scale;
    s.scales = ev.scales;
    s.steps = ev.steps;
    s.step = std::min(ev.step, ev.steps);
    s.loss = ev.loss;
    if (!png.empty()) job->preview = std::move(png);
  };
  try {
    JobOutput out = run_job(job->request, job->inputs, &control);
    const auto path = opts_.result_dir / (job->status.id + ".png");
    write_image(out.image, path);
    std::lock_guard lock(mu_);
    job->status.state = JobState::Done;
    job->status.stats = std::move(out.stats);
    job->status.result = path;
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    job->status.state = JobState::Failed;
    job->status.reason = e.kind() == ErrorKind::Cancelled ? "cancelled" : e.what();
  } catch (const std::exception& e) {
    std::lock_guard lock(mu_);
    job->status.state = JobState::Failed;
    job->status.reason = e.what();
  }
  {
    std::lock_guard lock(mu_);
    job->inputs = {};
  }
  done_cv_.notify_all();
}

}  // namespace stylecore::service
