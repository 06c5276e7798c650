#include "heatprobe/parallel.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "heatprobe/error.hpp"

namespace heatprobe {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HEATPROBE_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("HEATPROBE_THREADS must be a positive integer, got '") + env + "'");
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::size_t failed_at = std::numeric_limits<std::size_t>::max();
    std::exception_ptr failure;

    const auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(guard);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

SampleSummary summarize(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw ContractError("summarize needs at least two samples");
    SampleSummary s;
    s.n = n;
    s.mean = pairwise_sum(values) / n;
    std::vector<double> c2(n), c4(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = values[i] - s.mean;
        c2[i] = c * c;
        c4[i] = c2[i] * c2[i];
    }
    const double m2 = pairwise_sum(c2) / n;
    const double m4 = pairwise_sum(c4) / n;
    s.variance = m2 * n / (n - 1.0);
    s.stderr_mean = std::sqrt(s.variance / n);
    s.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
    // large-sample standard errors of the variance and kurtosis estimators
    s.stderr_variance = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    s.stderr_kurtosis = std::sqrt(24.0 / n);
    return s;
}

}  // namespace heatprobe
