#include "difform/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace difform {

namespace {
constexpr int64_t kBlock = 4096;
}

int worker_count() {
    int n = 0;
    if (const char* env = std::getenv("DIFFORM_THREADS"))
        n = std::atoi(env);
    if (n <= 0)
        n = static_cast<int>(std::thread::hardware_concurrency());
    return n > 0 ? n : 1;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0)
        return;
    const int64_t blocks = (n + kBlock - 1) / kBlock;
    const int workers = static_cast<int>(std::min<int64_t>(worker_count(), blocks));
    if (workers <= 1) {
        // same per-block granularity as the threaded path so float
        // accumulation order never depends on the worker count
        for (int64_t b = 0; b < blocks; ++b) {
            const int64_t lo = b * kBlock;
            fn(lo, std::min(lo + kBlock, n));
        }
        return;
    }
    std::atomic<int64_t> next{0};
    auto run = [&]() {
        for (;;) {
            const int64_t b = next.fetch_add(1);
            if (b >= blocks)
                return;
            const int64_t lo = b * kBlock;
            fn(lo, std::min(lo + kBlock, n));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int i = 0; i < workers - 1; ++i)
        pool.emplace_back(run);
    run();
    for (auto& t : pool)
        t.join();
}

double parallel_sum(int64_t n, const std::function<double(int64_t)>& term) {
    if (n <= 0)
        return 0.0;
    const int64_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<size_t>(blocks), 0.0);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        // one fixed block per call; serial accumulation inside it
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i)
            acc += term(i);
        partial[static_cast<size_t>(lo / kBlock)] = acc;
    });
    double total = 0.0;
    for (double p : partial)
        total += p;
    return total;
}

}  // namespace difform
