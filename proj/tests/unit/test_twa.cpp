#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "twakit/errors.hpp"
#include "twakit/preprocess.hpp"
#include "twakit/rng.hpp"
#include "twakit/synthesizer.hpp"
#include "twakit/template_bank.hpp"
#include "twakit/twa.hpp"

using namespace twakit;

namespace {

// Beat matrix of constant valued beats: even indices +amp, odd indices -amp.
twa::BeatMatrix alternating_matrix(std::size_t n_beats, double amp_mv) {
    twa::BeatMatrix m;
    m.fs_hz = 500.0;
    m.r_offset = 125;
    m.st_t_begin = 175;
    m.st_t_end = 376;
    for (std::size_t k = 0; k < n_beats; ++k) {
        m.beats.emplace_back(376, k % 2 == 0 ? amp_mv : -amp_mv);
        m.rr_s.push_back(1.0);
    }
    return m;
}

}  // namespace

TEST_CASE("beat matrix geometry at 500 Hz and one second beats") {
    std::vector<double> signal(3000);
    for (std::size_t i = 0; i < signal.size(); ++i)
        signal[i] = static_cast<double>(i) * 1e-4;
    const std::vector<std::size_t> peaks = {500, 1000, 1500, 2000, 2500};

    const auto m = twa::build_beat_matrix(signal, 500.0, peaks);
    CHECK(m.r_offset == 125);
    REQUIRE(m.beats.size() == 5);
    for (const auto& b : m.beats) CHECK(b.size() == 376);
    CHECK(m.st_t_begin == 175);
    CHECK(m.st_t_end == 376);
    REQUIRE(m.rr_s.size() == 5);
    for (double rr : m.rr_s) CHECK(rr == doctest::Approx(1.0));

    // Beats are windows [-125, +250] around each peak.
    CHECK(m.beats[0][0] == signal[500 - 125]);
    CHECK(m.beats[0][125] == signal[500]);
    CHECK(m.beats[0][375] == signal[500 + 250]);
    CHECK(m.beats[3][125] == signal[2000]);
}

TEST_CASE("beats clipped by the record edges are dropped") {
    std::vector<double> signal(3000, 0.0);
    const std::vector<std::size_t> peaks = {100, 500, 1000, 1500, 2000, 2500, 2800};
    const auto m = twa::build_beat_matrix(signal, 500.0, peaks);
    // 100 lacks the 125 pre-R samples, 2800 the 250 post-R samples.
    CHECK(m.beats.size() == 5);
}

TEST_CASE("beat matrix input validation") {
    std::vector<double> signal(3000, 0.0);
    const std::vector<std::size_t> one = {500};
    CHECK_THROWS_AS(twa::build_beat_matrix(signal, 500.0, one), insufficient_data_error);

    const std::vector<std::size_t> backwards = {1000, 500};
    CHECK_THROWS_AS(twa::build_beat_matrix(signal, 500.0, backwards), std::invalid_argument);

    // All peaks clipped.
    const std::vector<std::size_t> edges = {10, 2990};
    CHECK_THROWS_AS(twa::build_beat_matrix(signal, 500.0, edges), insufficient_data_error);

    CHECK_THROWS_AS(twa::build_beat_matrix(signal, 0.0, one), std::invalid_argument);
}

TEST_CASE("the recursive average recovers a pure alternation exactly") {
    const auto m = alternating_matrix(40, 0.05);
    // Averages start on the first two beats and every later beat matches its
    // parity average, so the even odd gap is the full 100 uV swing.
    CHECK(twa::mma_twa(m) == doctest::Approx(100.0).epsilon(1e-12));

    SUBCASE("identical beats give zero") {
        const auto flat = alternating_matrix(40, 0.0);
        CHECK(twa::mma_twa(flat) == 0.0);
    }
    SUBCASE("update factor bounds") {
        CHECK_THROWS_AS(twa::mma_twa(m, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(twa::mma_twa(m, 1.5), std::invalid_argument);
    }
    SUBCASE("too few beats") {
        auto small = m;
        small.beats.resize(1);
        small.rr_s.resize(1);
        CHECK_THROWS_AS(twa::mma_twa(small), insufficient_data_error);
    }
}

TEST_CASE("large steps are clamped to 32 uV per beat") {
    // Third beat jumps 1 mV above the even average; one update may move the
    // average by at most 0.032 mV.
    twa::BeatMatrix m;
    m.fs_hz = 500.0;
    m.st_t_begin = 0;
    m.st_t_end = 1;
    m.beats = {{0.0}, {0.0}, {1.0}};
    m.rr_s = {1.0, 1.0, 1.0};
    CHECK(twa::mma_twa(m) == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("beat order surrogates separate alternans from identical beats") {
    SUBCASE("no alternation cannot beat its surrogates") {
        const auto flat = alternating_matrix(40, 0.0);
        Rng rng(3);
        CHECK(twa::surrogate_test(flat, 99, rng) == 1.0);
    }
    SUBCASE("a clean alternation is significant") {
        const auto m = alternating_matrix(40, 0.05);
        Rng rng(3);
        CHECK(twa::surrogate_test(m, 99, rng) <= 0.05);
    }
    SUBCASE("surrogate count floor") {
        const auto m = alternating_matrix(10, 0.05);
        Rng rng(3);
        CHECK_THROWS_AS(twa::surrogate_test(m, 10, rng), std::invalid_argument);
    }
}

TEST_CASE("sliding analysis windows sixty beats with half overlap") {
    const auto m = alternating_matrix(150, 0.05);
    const auto res = twa::sliding_twa(m, 42);
    CHECK_FALSE(res.shortage);
    REQUIRE(res.measurements.size() == 4);  // starts 0, 30, 60, 90
    for (std::size_t w = 0; w < res.measurements.size(); ++w) {
        const auto& meas = res.measurements[w];
        CHECK(meas.window_index == w);
        CHECK(meas.amplitude_uv == doctest::Approx(100.0).epsilon(1e-12));
        CHECK(meas.p_value <= 0.05);
        CHECK(meas.mean_hr_bpm == doctest::Approx(60.0));
    }

    SUBCASE("short records report a shortage") {
        const auto small = alternating_matrix(59, 0.05);
        const auto r = twa::sliding_twa(small, 42);
        CHECK(r.shortage);
        CHECK(r.measurements.empty());
    }
    SUBCASE("same seed, same p values") {
        const auto again = twa::sliding_twa(m, 42);
        REQUIRE(again.measurements.size() == res.measurements.size());
        for (std::size_t w = 0; w < res.measurements.size(); ++w)
            CHECK(again.measurements[w].p_value == res.measurements[w].p_value);
    }
    SUBCASE("window parameter validation") {
        CHECK_THROWS_AS(twa::sliding_twa(m, 42, 1), std::invalid_argument);
        CHECK_THROWS_AS(twa::sliding_twa(m, 42, 60, 1.0), std::invalid_argument);
    }
}

TEST_CASE("heart rate bins cover 30 to 110 with decade steps above 60") {
    CHECK_FALSE(twa::hr_bin_index(29.99).has_value());
    CHECK(twa::hr_bin_index(30.0).value() == 0);
    CHECK(twa::hr_bin_index(59.99).value() == 0);
    CHECK(twa::hr_bin_index(60.0).value() == 1);
    CHECK(twa::hr_bin_index(69.99).value() == 1);
    CHECK(twa::hr_bin_index(70.0).value() == 2);
    CHECK(twa::hr_bin_index(89.99).value() == 3);
    CHECK(twa::hr_bin_index(99.99).value() == 4);
    CHECK(twa::hr_bin_index(100.0).value() == 5);
    CHECK(twa::hr_bin_index(110.0).value() == 5);
    CHECK_FALSE(twa::hr_bin_index(110.01).has_value());
}

TEST_CASE("feature binning keeps the largest significant amplitude per bin") {
    std::vector<twa::TwaMeasurement> ms;
    ms.push_back({50.0, 0.04, 65.0, 0});
    ms.push_back({80.0, 0.20, 66.0, 1});  // not significant
    ms.push_back({60.0, 0.01, 67.0, 2});
    ms.push_back({40.0, 0.05, 75.0, 3});  // alpha boundary is inclusive
    ms.push_back({90.0, 0.01, 120.0, 4}); // heart rate out of range

    const auto out = twa::bin_features(ms);
    CHECK(out.dropped == 1);
    CHECK(out.features[0] == 0.0);
    CHECK(out.features[1] == 60.0);
    CHECK(out.features[2] == 40.0);
    CHECK(out.features[3] == 0.0);
    CHECK(out.features[4] == 0.0);
    CHECK(out.features[5] == 0.0);

    CHECK_THROWS_AS(twa::bin_features(ms, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(twa::bin_features(ms, 1.0), std::invalid_argument);
}

TEST_CASE("end to end: injected alternans is recovered from a rendered record") {
    const auto bank = synth::builtin_templates(1);
    synth::SynthesisConfig cfg;
    cfg.morphology = bank[0];
    cfg.rhythm.mean_hr_bpm = 70.0;
    cfg.rhythm.hr_std_bpm = 1.0;
    cfg.twa_uv = 60.0;
    cfg.duration_s = 120.0;
    cfg.fs_hz = 250.0;
    cfg.perturbation_frac = 0.0;
    cfg.seed = 404;
    const auto rec = synth::render_record(cfg, nullptr, true);

    const auto& lead_i = rec.leads[0];
    const auto clean = preprocess::remove_baseline(lead_i, cfg.fs_hz);
    const auto peaks = preprocess::detect_qrs_robust(clean, cfg.fs_hz);
    REQUIRE(peaks.size() >= 120);

    const auto m = twa::build_beat_matrix(clean, cfg.fs_hz, peaks);
    const auto res = twa::sliding_twa(m, 2024);
    CHECK_FALSE(res.shortage);
    REQUIRE(res.measurements.size() >= 3);
    for (const auto& meas : res.measurements) {
        CHECK(meas.amplitude_uv == doctest::Approx(60.0).epsilon(0.2));
        CHECK(meas.p_value <= 0.05);
        CHECK(meas.mean_hr_bpm == doctest::Approx(70.0).epsilon(0.05));
    }

    const auto feats = twa::bin_features(res.measurements);
    // Window means hover around 70 bpm, landing in one of the two bins that
    // share that edge.
    CHECK(feats.features[1] + feats.features[2] > 0.0);
    CHECK(feats.dropped == 0);
}
