#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "twakit/rng.hpp"

namespace twakit::twa {

// Beats cut to a fixed window around each R peak ([-250, +500] ms), plus the
// sample range the alternans search runs over (ST-T segment).
struct BeatMatrix {
    std::vector<std::vector<double>> beats;  // mV, equal lengths
    double fs_hz = 0.0;
    std::size_t r_offset = 0;     // R peak index within a beat
    std::size_t st_t_begin = 0;   // inclusive, within a beat
    std::size_t st_t_end = 0;     // exclusive
    std::vector<double> rr_s;     // one per kept beat
};

BeatMatrix build_beat_matrix(std::span<const double> signal_mv, double fs_hz,
                             std::span<const std::size_t> r_peaks);

// Modified moving average alternans estimate in uV: recursive even/odd
// averages with sign(delta) * min(|delta|/8, 32 uV) updates, then the peak
// ST-T difference between the two averages.
double mma_twa(const BeatMatrix& m, double update_factor = 0.125);

// Beat order permutation test; p = (1 + #{surrogate >= observed}) / (1 + n).
double surrogate_test(const BeatMatrix& m, std::size_t n_surrogates, Rng& rng);

struct TwaMeasurement {
    double amplitude_uv = 0.0;
    double p_value = 1.0;
    double mean_hr_bpm = 0.0;
    std::size_t window_index = 0;
};

struct SlidingResult {
    std::vector<TwaMeasurement> measurements;
    bool shortage = false;  // record shorter than one analysis window
};

// Fixed 60 beat windows advanced by half a window.
SlidingResult sliding_twa(const BeatMatrix& m, std::uint64_t seed,
                          std::size_t window_beats = 60, double overlap = 0.5,
                          std::size_t n_surrogates = 99);

inline constexpr std::size_t kHrBinCount = 6;

// Decade bins [30,60), [60,70), ... [100,110]; outside gives nullopt.
std::optional<std::size_t> hr_bin_index(double hr_bpm);

struct BinnedFeatures {
    std::array<double, kHrBinCount> features{};
    std::size_t dropped = 0;  // measurements with out of range heart rate
};

// Per bin, the largest amplitude among significant measurements (p <= alpha).
BinnedFeatures bin_features(std::span<const TwaMeasurement> measurements,
                            double alpha = 0.05);

}  // namespace twakit::twa
