#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twakit/rng.hpp"

namespace twakit::preprocess {

// Two stage median filter baseline removal (200 ms, then 600 ms).
std::vector<double> remove_baseline(std::span<const double> signal_mv, double fs_hz);

struct EcgWindow {
    std::vector<double> samples_mv;
    double fs_hz = 0.0;
    std::size_t offset = 0;  // sample index into the source record
    std::string source_id;
    std::optional<double> sqi;
};

// Fixed length windows with fractional overlap; a trailing remainder shorter
// than the window is dropped.
std::vector<EcgWindow> segment_windows(std::span<const double> signal_mv, double fs_hz,
                                       double window_s = 16.0, double overlap = 0.2,
                                       const std::string& source_id = {});

// Bandpass, squaring and moving window integration with an adaptive
// threshold; 250 ms refractory.
std::vector<std::size_t> detect_qrs_robust(std::span<const double> signal_mv, double fs_hz);

// Fixed fraction-of-peak threshold detector on the raw magnitude; trigger
// happy on noise, which is what the quality index wants.
std::vector<std::size_t> detect_qrs_sensitive(std::span<const double> signal_mv, double fs_hz);

// Agreement of the two detectors: matched beats over the union, matches
// within 150 ms. Empty union gives 0.
double sqi(std::span<const double> signal_mv, double fs_hz);

struct WindowSelection {
    std::vector<EcgWindow> windows;
    bool shortage = false;  // fewer clean windows than requested
};

// Random subset of the windows whose quality index is exactly 1; windows
// without a cached sqi get one computed.
WindowSelection select_windows(std::vector<EcgWindow> windows, std::size_t count, Rng& rng);

}  // namespace twakit::preprocess
