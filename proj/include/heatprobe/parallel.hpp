#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace heatprobe {

/// requested > 0 wins; otherwise HEATPROBE_THREADS, otherwise the hardware count.
int resolve_threads(int requested = 0);

/// Runs fn(i) for i in [0, n) on `threads` workers. Work is pulled from a
/// shared counter, so results must be written to per-index slots. If any
/// call throws, the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Fixed-shape pairwise summation; the result depends only on the values
/// and their order, never on the thread count.
double pairwise_sum(std::span<const double> values);

struct SampleSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double stderr_mean = 0.0;
    double kurtosis = 0.0;  // m4 / m2^2 (3 for a normal)
    double stderr_variance = 0.0;
    double stderr_kurtosis = 0.0;
};

/// Moments by pairwise reduction; needs at least two samples.
SampleSummary summarize(std::span<const double> values);

}  // namespace heatprobe
