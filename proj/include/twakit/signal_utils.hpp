#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace twakit::sig {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Wraps an angle into (-pi, pi].
double wrap_phase(double theta);

// Catmull-Rom interpolation of x at a fractional index; edge samples clamp.
double cubic_interp(std::span<const double> x, double pos);

double mean(std::span<const double> x);
double power(std::span<const double> x);  // mean square

// Exact sliding median, odd window, reflection padding at both ends.
std::vector<double> median_filter(std::span<const double> x, std::size_t window);

// Same filter evaluated on a decimated copy of the input and linearly
// interpolated back; cheap estimate for low frequency baselines.
std::vector<double> median_filter_decimated(std::span<const double> x,
                                            std::size_t window,
                                            std::size_t stride);

// Centered moving average, reflection padding.
std::vector<double> moving_average(std::span<const double> x, std::size_t window);

// Two stage median baseline (200 ms then 600 ms windows). stride > 1 runs the
// medians on a decimated copy, good enough for power calibration.
std::vector<double> ecg_baseline(std::span<const double> x, double fs_hz,
                                 std::size_t stride = 1);

// RBJ biquad, applied in one forward pass.
struct Biquad {
    double b0, b1, b2, a1, a2;
    static Biquad lowpass(double fc_hz, double fs_hz, double q = 0.70710678);
    static Biquad highpass(double fc_hz, double fs_hz, double q = 0.70710678);
    std::vector<double> apply(std::span<const double> x) const;
};

// Squared magnitude of the DFT at bin k over n points (direct evaluation).
double periodogram_bin(std::span<const double> x, std::size_t k);

}  // namespace twakit::sig
