#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace gmap {

enum class JobKind { train, dba, variance, cluster_run, density };
enum class JobStatus { queued, running, done, failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobStatus status);

struct Job {
    std::string id;
    JobKind kind = JobKind::train;
    JobStatus status = JobStatus::queued;
    double progress = 0.0;
    /// Where the result can be fetched; set exactly when status is done.
    std::optional<std::string> result_ref;
    std::optional<std::string> error;
};

/// Reports progress in [0, 1] from inside a running job.
using ProgressFn = std::function<void(double)>;
/// Work item; returns the result reference on success and throws on failure.
using JobFn = std::function<std::string(const ProgressFn&)>;

/// Bounded worker pool with a job table. Jobs move queued -> running ->
/// done | failed and are kept for polling after they finish.
class JobQueue {
public:
    explicit JobQueue(unsigned workers = 2);
    ~JobQueue();
    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    Job submit(JobKind kind, JobFn fn);
    std::optional<Job> find(const std::string& id) const;
    std::vector<Job> list() const;

    /// Blocks until the job has finished or the timeout expires.
    std::optional<Job> wait(const std::string& id,
                            std::chrono::milliseconds timeout = std::chrono::minutes(10)) const;

private:
    void worker_loop(std::stop_token stop);

    mutable std::mutex mutex_;
    mutable std::condition_variable_any changed_;
    std::map<std::string, Job> jobs_;
    std::deque<std::pair<std::string, JobFn>> pending_;
    unsigned long next_id_ = 1;
    std::vector<std::jthread> workers_;
};

}  // namespace gmap
