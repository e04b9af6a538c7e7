#include "twakit/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "twakit/errors.hpp"
#include "twakit/signal_utils.hpp"

namespace twakit::preprocess {

std::vector<double> remove_baseline(std::span<const double> signal_mv, double fs_hz) {
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    if (signal_mv.empty()) return {};
    const std::vector<double> base = sig::ecg_baseline(signal_mv, fs_hz);
    std::vector<double> out(signal_mv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal_mv[i] - base[i];
    return out;
}

std::vector<EcgWindow> segment_windows(std::span<const double> signal_mv, double fs_hz,
                                       double window_s, double overlap,
                                       const std::string& source_id) {
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    if (!(window_s > 0.0)) throw std::invalid_argument("window length must be positive");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw std::invalid_argument("overlap must lie in [0, 1)");

    const std::size_t wlen = static_cast<std::size_t>(std::lround(window_s * fs_hz));
    const std::size_t hop = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(window_s * (1.0 - overlap) * fs_hz)));

    std::vector<EcgWindow> out;
    if (wlen == 0 || signal_mv.size() < wlen) return out;
    for (std::size_t start = 0; start + wlen <= signal_mv.size(); start += hop) {
        EcgWindow w;
        w.samples_mv.assign(signal_mv.begin() + static_cast<std::ptrdiff_t>(start),
                            signal_mv.begin() + static_cast<std::ptrdiff_t>(start + wlen));
        w.fs_hz = fs_hz;
        w.offset = start;
        w.source_id = source_id;
        out.push_back(std::move(w));
    }
    return out;
}

namespace {

constexpr double kRefractoryS = 0.25;
constexpr double kMatchToleranceS = 0.15;
constexpr double kEdgeMarginS = 0.25;

std::vector<std::size_t> enforce_refractory(std::vector<std::size_t> peaks,
                                            std::span<const double> strength,
                                            std::size_t min_gap) {
    std::vector<std::size_t> out;
    for (std::size_t p : peaks) {
        if (!out.empty() && p - out.back() < min_gap) {
            if (strength[p] > strength[out.back()]) out.back() = p;
            continue;
        }
        out.push_back(p);
    }
    return out;
}

// Beats cut off by the record boundary are detector-dependent; drop them.
std::vector<std::size_t> trim_edges(std::vector<std::size_t> peaks, std::size_t n,
                                    double fs_hz) {
    const auto margin = static_cast<std::size_t>(kEdgeMarginS * fs_hz);
    std::erase_if(peaks, [&](std::size_t p) { return p < margin || p + margin >= n; });
    return peaks;
}

}  // namespace

std::vector<std::size_t> detect_qrs_robust(std::span<const double> signal_mv, double fs_hz) {
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    const std::size_t n = signal_mv.size();
    if (n < static_cast<std::size_t>(fs_hz)) return {};

    const auto hp = sig::Biquad::highpass(5.0, fs_hz);
    const auto lp = sig::Biquad::lowpass(15.0, fs_hz);
    std::vector<double> band = lp.apply(hp.apply(signal_mv));

    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = band[i] * band[i];

    const std::size_t mwi_w = std::max<std::size_t>(1, static_cast<std::size_t>(0.15 * fs_hz));
    const std::vector<double> mwi = sig::moving_average(sq, mwi_w);

    // Threshold bootstrap from the first couple of seconds.
    const std::size_t warm = std::min(n, static_cast<std::size_t>(2.0 * fs_hz));
    double spk = 0.0, npk = 0.0;
    for (std::size_t i = 0; i < warm; ++i) spk = std::max(spk, mwi[i]);
    npk = 0.5 * sig::mean(std::span<const double>(mwi.data(), warm));
    spk *= 0.5;

    const std::size_t refractory = static_cast<std::size_t>(kRefractoryS * fs_hz);
    const std::size_t refine_w = static_cast<std::size_t>(0.10 * fs_hz);

    std::vector<std::size_t> beats;
    std::ptrdiff_t last = -static_cast<std::ptrdiff_t>(refractory) - 1;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])) continue;
        const double thr = npk + 0.25 * (spk - npk);
        if (mwi[i] > thr &&
            static_cast<std::ptrdiff_t>(i) - last >= static_cast<std::ptrdiff_t>(refractory)) {
            // Refine on the squared bandpass signal around the integrated peak.
            const std::size_t lo = i > refine_w ? i - refine_w : 0;
            const std::size_t hi = std::min(n - 1, i + refine_w);
            std::size_t best = lo;
            for (std::size_t j = lo; j <= hi; ++j)
                if (sq[j] > sq[best]) best = j;
            beats.push_back(best);
            last = static_cast<std::ptrdiff_t>(i);
            spk = 0.125 * mwi[i] + 0.875 * spk;
        } else {
            npk = 0.125 * mwi[i] + 0.875 * npk;
        }
    }

    std::sort(beats.begin(), beats.end());
    beats.erase(std::unique(beats.begin(), beats.end()), beats.end());
    return trim_edges(enforce_refractory(std::move(beats), sq, refractory), n, fs_hz);
}

std::vector<std::size_t> detect_qrs_sensitive(std::span<const double> signal_mv,
                                              double fs_hz) {
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    const std::size_t n = signal_mv.size();
    if (n < 3) return {};

    std::vector<double> mag(n);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mag[i] = std::fabs(signal_mv[i]);
        peak = std::max(peak, mag[i]);
    }
    if (peak <= 0.0) return {};

    const double thr = 0.4 * peak;
    const std::size_t refractory = static_cast<std::size_t>(kRefractoryS * fs_hz);
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (mag[i] >= thr && mag[i] > mag[i - 1] && mag[i] >= mag[i + 1])
            peaks.push_back(i);
    return trim_edges(enforce_refractory(std::move(peaks), mag, refractory), n, fs_hz);
}

double sqi(std::span<const double> signal_mv, double fs_hz) {
    const std::vector<std::size_t> a = detect_qrs_robust(signal_mv, fs_hz);
    const std::vector<std::size_t> b = detect_qrs_sensitive(signal_mv, fs_hz);
    if (a.empty() && b.empty()) return 0.0;

    const auto tol = static_cast<std::ptrdiff_t>(kMatchToleranceS * fs_hz);
    std::size_t matches = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const auto d = static_cast<std::ptrdiff_t>(a[i]) - static_cast<std::ptrdiff_t>(b[j]);
        if (std::llabs(d) <= tol) {
            ++matches;
            ++i;
            ++j;
        } else if (d < 0) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - matches;
    return uni == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(uni);
}

WindowSelection select_windows(std::vector<EcgWindow> windows, std::size_t count, Rng& rng) {
    WindowSelection sel;
    std::vector<std::size_t> clean;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!windows[i].sqi) windows[i].sqi = sqi(windows[i].samples_mv, windows[i].fs_hz);
        if (*windows[i].sqi == 1.0) clean.push_back(i);
    }

    if (clean.size() <= count) {
        sel.shortage = clean.size() < count;
        for (std::size_t i : clean) sel.windows.push_back(std::move(windows[i]));
        return sel;
    }
    // Partial Fisher-Yates over the clean indices.
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t pick = k + rng.below(clean.size() - k);
        std::swap(clean[k], clean[pick]);
    }
    for (std::size_t k = 0; k < count; ++k) sel.windows.push_back(std::move(windows[clean[k]]));
    return sel;
}

}  // namespace twakit::preprocess
