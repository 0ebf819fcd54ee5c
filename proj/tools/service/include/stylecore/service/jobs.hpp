#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stylecore/service/job_request.hpp"

namespace stylecore::service {

enum class JobState { Queued, Running, Done, Failed };

const char* to_string(JobState s);

struct JobStatus {
  std::string id;
  JobKind kind = JobKind::Strotss;
  JobState state = JobState::Queued;
  int scale = 0;
  int scales = 0;
  int step = 0;
  int steps = 0;
  double loss = 0.0;
  std::string reason;
  json stats;
  json config;
  std::filesystem::path result;

  bool finished() const { return state == JobState::Done || state == JobState::Failed; }
  json to_json() const;
};

struct JobManagerOptions {
  int workers = 0;  // 0 = max(1, hardware threads / 2)
  std::filesystem::path result_dir;
};

/// In-memory job table with a fixed pool of worker threads. Each job runs
/// single-threaded; cancellation is cooperative at optimizer step boundaries.
class JobManager {
 public:
  explicit JobManager(JobManagerOptions opts);
  ~JobManager();
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  /// Validates the inputs (throws InvalidArgument) and queues the job.
  std::string submit(JobRequest request, JobInputs inputs);

  std::optional<JobStatus> status(const std::string& id) const;

  enum class CancelOutcome { Cancelled, NotFound, AlreadyFinished };
  CancelOutcome cancel(const std::string& id);

  /// Encoded PNG of the latest preview; empty when there is none yet.
  std::optional<std::vector<std::uint8_t>> preview(const std::string& id) const;

  /// Blocks until the job finishes or the timeout passes.
  std::optional<JobStatus> wait(const std::string& id, std::chrono::milliseconds timeout) const;

  int workers() const { return static_cast<int>(threads_.size()); }
  const std::filesystem::path& result_dir() const { return opts_.result_dir; }

 private:
  struct Job {
    JobRequest request;
    JobInputs inputs;
    std::atomic<bool> cancel{false};
    JobStatus status;
    std::vector<std::uint8_t> preview;
  };

  void worker_loop();
  void execute(const std::shared_ptr<Job>& job);
  std::string new_id();

  JobManagerOptions opts_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;        // queue and shutdown
  mutable std::condition_variable done_cv_;  // job completion
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::deque<std::shared_ptr<Job>> queue_;
  bool stopping_ = false;
  std::uint64_t id_state_ = 0;
  std::vector<std::thread> threads_;
};

}  // namespace stylecore::service
