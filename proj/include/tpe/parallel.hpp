#ifndef TPE_PARALLEL_HPP
#define TPE_PARALLEL_HPP

#include <functional>
#include <thread>
#include <vector>

namespace tpe {

/// Chunked parallel loop over [0, n). Each index is processed exactly once by
/// a pure function writing to its own output slot, so results do not depend
/// on the worker count; callers merge slots in fixed index order afterwards.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n < 2 * jobs) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (int t = 0; t < jobs; ++t) {
        const int lo = static_cast<int>(static_cast<long long>(n) * t / jobs);
        const int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / jobs);
        workers.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace tpe

#endif
