#include "twakit/signal_utils.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace twakit::sig {

double wrap_phase(double theta) {
    double t = std::fmod(theta + kPi, kTwoPi);
    if (t <= 0.0) t += kTwoPi;
    return t - kPi;
}

double cubic_interp(std::span<const double> x, double pos) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    if (n == 0) return 0.0;
    if (n == 1) return x[0];
    double fl = std::floor(pos);
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(fl);
    double t = pos - fl;
    auto at = [&](std::ptrdiff_t j) {
        return x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, n - 1))];
    };
    const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    const double a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    const double b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    const double c = -0.5 * p0 + 0.5 * p2;
    return ((a * t + b) * t + c) * t + p1;
}

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double power(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / static_cast<double>(x.size());
}

namespace {

// Index with reflection at both ends (abcb|abc|bcba style).
std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    std::ptrdiff_t j = i % period;
    if (j < 0) j += period;
    if (j >= n) j = period - j;
    return static_cast<std::size_t>(j);
}

class SortedWindow {
public:
    explicit SortedWindow(std::size_t capacity) { buf_.reserve(capacity); }

    void insert(double v) {
        buf_.insert(std::lower_bound(buf_.begin(), buf_.end(), v), v);
    }

    void erase(double v) {
        auto it = std::lower_bound(buf_.begin(), buf_.end(), v);
        buf_.erase(it);
    }

    double median() const { return buf_[buf_.size() / 2]; }

private:
    std::vector<double> buf_;
};

}  // namespace

std::vector<double> median_filter(std::span<const double> x, std::size_t window) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    if (n == 0) return {};
    if (window % 2 == 0) ++window;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);

    SortedWindow w(window);
    for (std::ptrdiff_t j = -half; j <= half; ++j) w.insert(x[reflect_index(j, n)]);

    std::vector<double> out(static_cast<std::size_t>(n));
    out[0] = w.median();
    for (std::ptrdiff_t i = 1; i < n; ++i) {
        w.erase(x[reflect_index(i - 1 - half, n)]);
        w.insert(x[reflect_index(i + half, n)]);
        out[static_cast<std::size_t>(i)] = w.median();
    }
    return out;
}

std::vector<double> median_filter_decimated(std::span<const double> x,
                                            std::size_t window,
                                            std::size_t stride) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    if (stride <= 1 || n <= 2 * stride) return median_filter(x, window);

    std::vector<double> coarse;
    coarse.reserve(n / stride + 1);
    for (std::size_t i = 0; i < n; i += stride) coarse.push_back(x[i]);

    std::size_t cw = window / stride;
    if (cw % 2 == 0) ++cw;
    if (cw < 3) cw = 3;
    std::vector<double> cb = median_filter(coarse, cw);

    std::vector<double> out(n);
    const std::size_t m = cb.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) / static_cast<double>(stride);
        std::size_t j = static_cast<std::size_t>(pos);
        if (j >= m - 1) {
            out[i] = cb[m - 1];
        } else {
            const double t = pos - static_cast<double>(j);
            out[i] = cb[j] * (1.0 - t) + cb[j + 1] * t;
        }
    }
    return out;
}

std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    if (n == 0) return {};
    if (window % 2 == 0) ++window;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);

    std::vector<double> out(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (std::ptrdiff_t j = -half; j <= half; ++j) acc += x[reflect_index(j, n)];
    out[0] = acc / static_cast<double>(window);
    for (std::ptrdiff_t i = 1; i < n; ++i) {
        acc -= x[reflect_index(i - 1 - half, n)];
        acc += x[reflect_index(i + half, n)];
        out[static_cast<std::size_t>(i)] = acc / static_cast<double>(window);
    }
    return out;
}

std::vector<double> ecg_baseline(std::span<const double> x, double fs_hz,
                                 std::size_t stride) {
    std::size_t w1 = static_cast<std::size_t>(std::lround(0.2 * fs_hz));
    std::size_t w2 = static_cast<std::size_t>(std::lround(0.6 * fs_hz));
    if (w1 < 3) w1 = 3;
    if (w2 < 3) w2 = 3;
    if (stride <= 1) {
        const std::vector<double> m1 = median_filter(x, w1);
        return median_filter(m1, w2);
    }
    const std::size_t n = x.size();
    if (n <= 2 * stride) {
        const std::vector<double> m1 = median_filter(x, w1);
        return median_filter(m1, w2);
    }
    std::vector<double> coarse;
    coarse.reserve(n / stride + 1);
    for (std::size_t i = 0; i < n; i += stride) coarse.push_back(x[i]);
    auto odd = [](std::size_t w) { return w % 2 == 0 ? w + 1 : w; };
    const std::size_t c1 = odd(std::max<std::size_t>(3, w1 / stride));
    const std::size_t c2 = odd(std::max<std::size_t>(3, w2 / stride));
    std::vector<double> cb = median_filter(median_filter(coarse, c1), c2);

    std::vector<double> out(n);
    const std::size_t m = cb.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) / static_cast<double>(stride);
        const std::size_t j = static_cast<std::size_t>(pos);
        if (j >= m - 1) {
            out[i] = cb[m - 1];
        } else {
            const double t = pos - static_cast<double>(j);
            out[i] = cb[j] * (1.0 - t) + cb[j + 1] * t;
        }
    }
    return out;
}

Biquad Biquad::lowpass(double fc_hz, double fs_hz, double q) {
    const double w0 = kTwoPi * fc_hz / fs_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return Biquad{(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0,
                  -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Biquad Biquad::highpass(double fc_hz, double fs_hz, double q) {
    const double w0 = kTwoPi * fc_hz / fs_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return Biquad{(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0,
                  -2.0 * cw / a0, (1.0 - alpha) / a0};
}

std::vector<double> Biquad::apply(std::span<const double> x) const {
    std::vector<double> y(x.size());
    double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = b0 * x[i] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x[i];
        y2 = y1;
        y1 = v;
        y[i] = v;
    }
    return y;
}

double periodogram_bin(std::span<const double> x, std::size_t k) {
    const std::size_t n = x.size();
    if (n == 0) return 0.0;
    double re = 0.0, im = 0.0;
    const double w = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double a = w * static_cast<double>(t);
        re += x[t] * std::cos(a);
        im += x[t] * std::sin(a);
    }
    return re * re + im * im;
}

}  // namespace twakit::sig
