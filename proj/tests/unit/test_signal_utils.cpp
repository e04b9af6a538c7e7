#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "twakit/rng.hpp"
#include "twakit/signal_utils.hpp"

using namespace twakit;

namespace {

// Brute force sliding median with reflection padding, the oracle for the
// incremental implementation.
std::vector<double> median_brute(const std::vector<double>& x, std::size_t window) {
    if (x.empty() || window <= 1) return x;
    if (window % 2 == 0) ++window;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    auto reflect = [n](std::ptrdiff_t i) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * (n - 1) - i;
        }
        return static_cast<std::size_t>(i);
    };
    std::vector<double> out(x.size());
    for (std::ptrdiff_t c = 0; c < n; ++c) {
        std::vector<double> w;
        for (std::ptrdiff_t k = -half; k <= half; ++k) w.push_back(x[reflect(c + k)]);
        std::sort(w.begin(), w.end());
        out[static_cast<std::size_t>(c)] = w[w.size() / 2];
    }
    return out;
}

std::vector<double> moving_average_brute(const std::vector<double>& x, std::size_t window) {
    if (x.empty() || window <= 1) return x;
    if (window % 2 == 0) ++window;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    auto reflect = [n](std::ptrdiff_t i) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * (n - 1) - i;
        }
        return static_cast<std::size_t>(i);
    };
    std::vector<double> out(x.size());
    for (std::ptrdiff_t c = 0; c < n; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -half; k <= half; ++k) acc += x[reflect(c + k)];
        out[static_cast<std::size_t>(c)] = acc / static_cast<double>(window);
    }
    return out;
}

}  // namespace

TEST_CASE("wrap_phase lands in (-pi, pi]") {
    CHECK(sig::wrap_phase(0.0) == doctest::Approx(0.0));
    CHECK(sig::wrap_phase(sig::kPi) == doctest::Approx(sig::kPi));
    CHECK(sig::wrap_phase(-sig::kPi) == doctest::Approx(sig::kPi));
    CHECK(sig::wrap_phase(3.0 * sig::kPi) == doctest::Approx(sig::kPi));
    CHECK(sig::wrap_phase(sig::kTwoPi) == doctest::Approx(0.0));
    CHECK(sig::wrap_phase(-1.5 * sig::kPi) == doctest::Approx(0.5 * sig::kPi));
    CHECK(sig::wrap_phase(7.5) == doctest::Approx(7.5 - sig::kTwoPi));
    for (double v : {-20.0, -3.2, -0.1, 0.1, 3.2, 20.0}) {
        const double w = sig::wrap_phase(v);
        CHECK(w > -sig::kPi);
        CHECK(w <= sig::kPi);
        CHECK(std::fmod(std::fabs(v - w), sig::kTwoPi) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("cubic interpolation is exact on quadratics and at the nodes") {
    std::vector<double> q(9);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double t = static_cast<double>(i);
        q[i] = 0.5 * t * t - 1.5 * t + 2.0;
    }
    CHECK(sig::cubic_interp(q, 3.0) == doctest::Approx(q[3]).epsilon(1e-14));
    // Interior evaluation (>= one node from each edge) reproduces the parabola.
    for (double pos : {2.25, 3.5, 4.75, 6.0}) {
        const double want = 0.5 * pos * pos - 1.5 * pos + 2.0;
        CHECK(sig::cubic_interp(q, pos) == doctest::Approx(want).epsilon(1e-12));
    }
    // Linear data stays linear away from the clamped edges.
    std::vector<double> lin = {0.0, 1.0, 2.0, 3.0, 4.0};
    CHECK(sig::cubic_interp(lin, 1.5) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(sig::cubic_interp(lin, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sig::cubic_interp(lin, 4.0) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("mean and power") {
    const std::vector<double> x = {1.0, -1.0, 3.0, -3.0};
    CHECK(sig::mean(x) == doctest::Approx(0.0));
    CHECK(sig::power(x) == doctest::Approx(5.0));
}

TEST_CASE("sliding median matches the brute force oracle") {
    Rng rng(1234);
    std::vector<double> x(257);
    for (double& v : x) v = rng.uniform(-5.0, 5.0);
    for (std::size_t w : {1u, 2u, 3u, 5u, 9u, 41u}) {
        const auto got = sig::median_filter(x, w);
        const auto want = median_brute(x, w);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    }
}

TEST_CASE("median filter passes constants and kills isolated spikes") {
    std::vector<double> x(101, 2.5);
    x[50] = 100.0;
    const auto y = sig::median_filter(x, 5);
    for (double v : y) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("moving average matches the brute force oracle") {
    Rng rng(99);
    std::vector<double> x(173);
    for (double& v : x) v = rng.normal();
    for (std::size_t w : {3u, 7u, 25u}) {
        const auto got = sig::moving_average(x, w);
        const auto want = moving_average_brute(x, w);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
}

TEST_CASE("two stage baseline equals composed sliding medians") {
    Rng rng(7);
    const double fs = 100.0;
    std::vector<double> x(400);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);

    const auto got = sig::ecg_baseline(x, fs);
    const auto m1 = median_brute(x, 20);  // 0.2 s
    const auto want = median_brute(m1, 60);  // 0.6 s
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("baseline of a constant record is that constant") {
    const std::vector<double> x(500, -0.75);
    for (double v : sig::ecg_baseline(x, 250.0)) CHECK(v == doctest::Approx(-0.75));
}

TEST_CASE("decimated baseline tracks the exact one on slow drift") {
    const double fs = 500.0;
    std::vector<double> x(5000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = static_cast<double>(i) / fs;
        x[i] = 0.4 * std::sin(2.0 * sig::kPi * 0.2 * t);
        if (i % 400 == 200) x[i] += 1.5;  // sparse spikes, like QRS
    }
    const auto exact = sig::ecg_baseline(x, fs);
    const auto fast = sig::ecg_baseline(x, fs, 4);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, std::fabs(exact[i] - fast[i]));
    CHECK(worst < 0.02);
}

TEST_CASE("biquad frequency response") {
    const double fs = 500.0;

    SUBCASE("lowpass passes DC") {
        const auto lp = sig::Biquad::lowpass(20.0, fs);
        const std::vector<double> ones(2000, 1.0);
        const auto y = lp.apply(ones);
        CHECK(y.back() == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("highpass rejects DC") {
        const auto hp = sig::Biquad::highpass(5.0, fs);
        const std::vector<double> ones(4000, 1.0);
        const auto y = hp.apply(ones);
        CHECK(std::fabs(y.back()) < 1e-4);
    }
    SUBCASE("butterworth corner sits near -3 dB") {
        const double fc = 25.0;
        const auto lp = sig::Biquad::lowpass(fc, fs);
        std::vector<double> x(8000);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = std::sin(2.0 * sig::kPi * fc * static_cast<double>(i) / fs);
        const auto y = lp.apply(x);
        double amp = 0.0;
        for (std::size_t i = x.size() / 2; i < x.size(); ++i)
            amp = std::max(amp, std::fabs(y[i]));
        CHECK(amp == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.03));
    }
}

TEST_CASE("periodogram bin recovers a pure cosine") {
    const std::size_t n = 256;
    const std::size_t k = 12;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::cos(sig::kTwoPi * static_cast<double>(k * i) / static_cast<double>(n));
    const double at_k = sig::periodogram_bin(x, k);
    CHECK(at_k == doctest::Approx(static_cast<double>(n) * static_cast<double>(n) / 4.0)
                      .epsilon(1e-9));
    CHECK(sig::periodogram_bin(x, k + 3) < 1e-15 * at_k);
}
