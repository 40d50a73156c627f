#include "gesturemap/jobs.hpp"

#include "gesturemap/error.hpp"

#include <algorithm>

namespace gmap {

std::string_view to_string(JobKind kind) {
    switch (kind) {
        case JobKind::train: return "train";
        case JobKind::dba: return "dba";
        case JobKind::variance: return "variance";
        case JobKind::cluster_run: return "cluster-run";
        case JobKind::density: return "density";
    }
    return "unknown";
}

std::string_view to_string(JobStatus status) {
    switch (status) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "unknown";
}

JobQueue::JobQueue(unsigned workers) {
    if (workers == 0) workers = 1;
    for (unsigned i = 0; i < workers; ++i)
        workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
}

JobQueue::~JobQueue() {
    for (auto& w : workers_) w.request_stop();
    changed_.notify_all();
    workers_.clear();
}

Job JobQueue::submit(JobKind kind, JobFn fn) {
    std::lock_guard lock(mutex_);
    Job job;
    job.id = "job-" + std::to_string(next_id_++);
    job.kind = kind;
    jobs_[job.id] = job;
    pending_.emplace_back(job.id, std::move(fn));
    changed_.notify_all();
    return job;
}

std::optional<Job> JobQueue::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

std::vector<Job> JobQueue::list() const {
    std::lock_guard lock(mutex_);
    std::vector<Job> out;
    for (const auto& [id, job] : jobs_) out.push_back(job);
    return out;
}

std::optional<Job> JobQueue::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    auto finished = [&] {
        auto it = jobs_.find(id);
        return it == jobs_.end() || it->second.status == JobStatus::done || it->second.status == JobStatus::failed;
    };
    changed_.wait_for(lock, timeout, finished);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

void JobQueue::worker_loop(std::stop_token stop) {
    while (true) {
        std::pair<std::string, JobFn> item;
        {
            std::unique_lock lock(mutex_);
            if (!changed_.wait(lock, stop, [&] { return !pending_.empty(); })) return;
            item = std::move(pending_.front());
            pending_.pop_front();
            jobs_[item.first].status = JobStatus::running;
            changed_.notify_all();
        }
        const std::string& id = item.first;
        auto progress = [&](double p) {
            std::lock_guard lock(mutex_);
            jobs_[id].progress = std::clamp(p, 0.0, 1.0);
        };
        std::optional<std::string> ref, error;
        try {
            ref = item.second(progress);
        } catch (const Error& e) {
            error = std::string(to_string(e.code())) + ": " + e.what();
        } catch (const std::exception& e) {
            error = std::string("internal_error: ") + e.what();
        }
        std::lock_guard lock(mutex_);
        Job& job = jobs_[id];
        if (ref) {
            job.status = JobStatus::done;
            job.progress = 1.0;
            job.result_ref = std::move(ref);
        } else {
            job.status = JobStatus::failed;
            job.error = std::move(error);
        }
        changed_.notify_all();
    }
}

}  // namespace gmap
