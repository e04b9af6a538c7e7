#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace twakit::rhythm {

struct RhythmConfig {
    double mean_hr_bpm = 60.0;   // accepted range [20, 250]
    double br_rpm = 15.0;        // respiratory rate, breaths per minute
    double hr_std_bpm = 1.0;
    double lf_hf_ratio = 0.5;
    std::size_t n_beats = 0;
    std::uint64_t seed = 0;
};

struct Tachogram {
    std::vector<double> rr_s;
    std::size_t clamp_count = 0;  // intervals forced into [0.2, 3.0] s
};

inline constexpr double kRrMin = 0.2;
inline constexpr double kRrMax = 3.0;

// Beat-to-beat RR series with a bimodal spectrum: a low frequency lobe at
// 0.1 Hz and a respiratory lobe at br/60 Hz, random phases from the seed.
Tachogram generate_tachogram(const RhythmConfig& cfg);

}  // namespace twakit::rhythm
