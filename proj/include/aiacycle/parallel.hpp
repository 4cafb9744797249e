#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace aiacycle {

/// Persistent worker pool for data-parallel loops. Work is split into one
/// contiguous block per worker, so each output element is always produced by
/// exactly one thread in a fixed order and results are bitwise independent
/// of the thread count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int threads() const { return n_threads_; }

    /// fn(begin, end) over [0, total) split into stable contiguous ranges.
    void parallel_for(std::int64_t total, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        if (total <= 0) return;
        int parts = n_threads_;
        if (total < parts) parts = static_cast<int>(total);
        if (parts <= 1) {
            fn(0, total);
            return;
        }
        std::int64_t chunk = (total + parts - 1) / parts;
        {
            std::unique_lock<std::mutex> lock(mu_);
            task_ = &fn;
            task_total_ = total;
            task_chunk_ = chunk;
            task_parts_ = parts;
            remaining_ = parts - 1;  // worker 0 is this thread
            ++generation_;
        }
        cv_.notify_all();
        fn(0, std::min<std::int64_t>(chunk, total));
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return remaining_ == 0; });
        task_ = nullptr;
    }

private:
    ThreadPool() {
        n_threads_ = detect_threads();
        for (int i = 1; i < n_threads_; ++i)
            workers_.emplace_back([this, i] { worker_loop(i); });
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    static int detect_threads() {
        if (const char* env = std::getenv("AIACYCLE_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }

    void worker_loop(int index) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::int64_t, std::int64_t)>* task = nullptr;
            std::int64_t begin = 0, end = 0;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [this, &seen] { return stop_ || generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                if (!task_ || index >= task_parts_) continue;  // not part of this launch
                task = task_;
                begin = task_chunk_ * index;
                end = std::min<std::int64_t>(begin + task_chunk_, task_total_);
            }
            if (begin < end) (*task)(begin, end);
            {
                std::unique_lock<std::mutex> lock(mu_);
                if (--remaining_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* task_ = nullptr;
    std::int64_t task_total_ = 0;
    std::int64_t task_chunk_ = 0;
    int task_parts_ = 0;
    int remaining_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    int n_threads_ = 1;
};

inline void parallel_for(std::int64_t total, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    ThreadPool::instance().parallel_for(total, fn);
}

}  // namespace aiacycle
