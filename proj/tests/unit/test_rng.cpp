#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "heatprobe/parallel.hpp"
#include "heatprobe/rng.hpp"

using namespace heatprobe;

TEST_CASE("philox known-answer vectors") {
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                            {0xffffffff, 0xffffffff}) ==
          C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                            {0xa4093822, 0x299f31d0}) ==
          C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
    static_assert(Philox4x32::block({0, 0, 0, 0}, {0, 0})[0] == 0x6627e8d5);
}

TEST_CASE("increments are a pure function of their address") {
    const NoiseField a(42), b(42), c(43);
    CHECK(a.normal(3, 10, 5, 1, 2) == b.normal(3, 10, 5, 1, 2));
    CHECK(a.normal(3, 10, 5, 1, 2) != c.normal(3, 10, 5, 1, 2));
    CHECK(a.normal(3, 10, 5, 1, 2) != a.normal(4, 10, 5, 1, 2));
    CHECK(a.normal(3, 10, 5, 0, 2) != a.normal(3, 10, 5, 1, 2));

    std::vector<double> slice(7 * 3);
    a.fill_step(9, 2, 7, 3, slice);
    for (int m = 0; m < 7; ++m)
        for (int j = 0; j < 3; ++j) CHECK(slice[m * 3 + j] == a.normal(9, 2, m, j, 3));
}

TEST_CASE("box-muller output is standard normal") {
    const NoiseField f(7);
    std::vector<double> z;
    for (std::uint32_t s = 0; s < 50000; ++s) z.push_back(f.normal(0, s, 0, s % 2, 1));
    const auto sum = summarize(z);
    CHECK(std::abs(sum.mean) < 4 * sum.stderr_mean);
    CHECK(std::abs(sum.variance - 1.0) < 4 * sum.stderr_variance);
    CHECK(std::abs(sum.kurtosis - 3.0) < 4 * sum.stderr_kurtosis);
    for (double v : z) CHECK(std::isfinite(v));
}

TEST_CASE("pairwise reduction and summaries") {
    std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    CHECK(pairwise_sum(v) == 78.0);
    const auto s = summarize(v);
    CHECK(s.mean == doctest::Approx(6.5));
    CHECK(s.variance == doctest::Approx(13.0));
    CHECK_THROWS(summarize(std::vector<double>{1.0}));
}

TEST_CASE("parallel_for fills every slot and reports the lowest failure") {
    std::vector<int> out(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
    for (int i = 0; i < 100; ++i) CHECK(out[i] == 2 * i);
    try {
        parallel_for(50, 3, [&](std::size_t i) {
            if (i == 17 || i == 40) throw std::runtime_error(std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "17");
    }
    CHECK(resolve_threads(3) == 3);
}
