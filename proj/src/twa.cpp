#include "twakit/twa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "twakit/errors.hpp"

namespace twakit::twa {

namespace {

constexpr double kPreR_S = 0.25;
constexpr double kPostR_S = 0.50;
constexpr double kStTStart_S = 0.10;   // after R
constexpr double kMaxUpdateMv = 0.032; // 32 uV

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

}  // namespace

BeatMatrix build_beat_matrix(std::span<const double> signal_mv, double fs_hz,
                             std::span<const std::size_t> r_peaks) {
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    if (r_peaks.size() < 2)
        throw insufficient_data_error("need at least two beats for a beat matrix");

    const std::size_t pre = static_cast<std::size_t>(std::lround(kPreR_S * fs_hz));
    const std::size_t post = static_cast<std::size_t>(std::lround(kPostR_S * fs_hz));
    const std::size_t blen = pre + post + 1;

    BeatMatrix m;
    m.fs_hz = fs_hz;
    m.r_offset = pre;

    std::vector<double> rr_all;
    for (std::size_t k = 0; k + 1 < r_peaks.size(); ++k) {
        if (r_peaks[k + 1] <= r_peaks[k])
            throw std::invalid_argument("R peaks must be strictly increasing");
        rr_all.push_back(static_cast<double>(r_peaks[k + 1] - r_peaks[k]) / fs_hz);
    }

    for (std::size_t k = 0; k < r_peaks.size(); ++k) {
        const std::size_t r = r_peaks[k];
        if (r < pre || r + post >= signal_mv.size()) continue;  // clipped at the edges
        std::vector<double> beat(blen);
        for (std::size_t i = 0; i < blen; ++i) beat[i] = signal_mv[r - pre + i];
        m.beats.push_back(std::move(beat));
        m.rr_s.push_back(k < rr_all.size() ? rr_all[k] : rr_all.back());
    }
    if (m.beats.size() < 2)
        throw insufficient_data_error("too few beats fit inside the record");

    // ST-T search range: [R + 100 ms, R + min(500 ms, 90% of the typical RR)].
    const double rr_med = median(m.rr_s);
    const double end_s = std::min(kPostR_S, 0.9 * rr_med);
    m.st_t_begin = pre + static_cast<std::size_t>(std::lround(kStTStart_S * fs_hz));
    m.st_t_end = std::min(blen, pre + static_cast<std::size_t>(std::lround(end_s * fs_hz)) + 1);
    if (m.st_t_end <= m.st_t_begin)
        throw insufficient_data_error("ST-T range is empty at this heart rate");
    return m;
}

namespace {

double mma_over_order(const BeatMatrix& m, std::span<const std::size_t> order,
                      double update_factor) {
    const std::size_t lo = m.st_t_begin, hi = m.st_t_end;
    const std::size_t span = hi - lo;
    std::vector<double> even(m.beats[order[0]].begin() + static_cast<std::ptrdiff_t>(lo),
                             m.beats[order[0]].begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<double> odd(m.beats[order[1]].begin() + static_cast<std::ptrdiff_t>(lo),
                            m.beats[order[1]].begin() + static_cast<std::ptrdiff_t>(hi));

    for (std::size_t k = 2; k < order.size(); ++k) {
        std::vector<double>& avg = (k % 2 == 0) ? even : odd;
        const std::vector<double>& beat = m.beats[order[k]];
        for (std::size_t i = 0; i < span; ++i) {
            const double delta = beat[lo + i] - avg[i];
            const double step = std::min(std::fabs(delta) * update_factor, kMaxUpdateMv);
            avg[i] += delta >= 0.0 ? step : -step;
        }
    }

    double peak = 0.0;
    for (std::size_t i = 0; i < span; ++i)
        peak = std::max(peak, std::fabs(even[i] - odd[i]));
    return peak * 1000.0;  // uV
}

}  // namespace

double mma_twa(const BeatMatrix& m, double update_factor) {
    if (m.beats.size() < 2) throw insufficient_data_error("need at least two beats");
    if (!(update_factor > 0.0 && update_factor <= 1.0))
        throw std::invalid_argument("update factor outside (0, 1]");
    std::vector<std::size_t> order(m.beats.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return mma_over_order(m, order, update_factor);
}

double surrogate_test(const BeatMatrix& m, std::size_t n_surrogates, Rng& rng) {
    if (n_surrogates < 19)
        throw std::invalid_argument("need at least 19 surrogates for a 0.05 level");
    if (m.beats.size() < 2) throw insufficient_data_error("need at least two beats");

    std::vector<std::size_t> order(m.beats.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double observed = mma_over_order(m, order, 0.125);

    std::size_t at_least = 0;
    for (std::size_t s = 0; s < n_surrogates; ++s) {
        for (std::size_t k = order.size(); k > 1; --k)
            std::swap(order[k - 1], order[rng.below(k)]);
        if (mma_over_order(m, order, 0.125) >= observed) ++at_least;
    }
    return static_cast<double>(1 + at_least) / static_cast<double>(1 + n_surrogates);
}

SlidingResult sliding_twa(const BeatMatrix& m, std::uint64_t seed,
                          std::size_t window_beats, double overlap,
                          std::size_t n_surrogates) {
    if (window_beats < 2) throw std::invalid_argument("window must hold at least two beats");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw std::invalid_argument("overlap must lie in [0, 1)");

    SlidingResult res;
    if (m.beats.size() < window_beats) {
        res.shortage = true;
        return res;
    }
    const std::size_t hop = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(static_cast<double>(window_beats) *
                                                (1.0 - overlap))));

    std::size_t w = 0;
    for (std::size_t start = 0; start + window_beats <= m.beats.size(); start += hop, ++w) {
        BeatMatrix sub;
        sub.fs_hz = m.fs_hz;
        sub.r_offset = m.r_offset;
        sub.st_t_begin = m.st_t_begin;
        sub.st_t_end = m.st_t_end;
        sub.beats.assign(m.beats.begin() + static_cast<std::ptrdiff_t>(start),
                         m.beats.begin() + static_cast<std::ptrdiff_t>(start + window_beats));
        sub.rr_s.assign(m.rr_s.begin() + static_cast<std::ptrdiff_t>(start),
                        m.rr_s.begin() + static_cast<std::ptrdiff_t>(start + window_beats));

        TwaMeasurement meas;
        meas.window_index = w;
        meas.amplitude_uv = mma_twa(sub);
        Rng rng(derive_seed(seed, w));
        meas.p_value = surrogate_test(sub, n_surrogates, rng);
        double rr_mean = 0.0;
        for (double rr : sub.rr_s) rr_mean += rr;
        rr_mean /= static_cast<double>(sub.rr_s.size());
        meas.mean_hr_bpm = 60.0 / rr_mean;
        res.measurements.push_back(meas);
    }
    return res;
}

std::optional<std::size_t> hr_bin_index(double hr_bpm) {
    if (hr_bpm < 30.0 || hr_bpm > 110.0) return std::nullopt;
    if (hr_bpm < 60.0) return 0;
    if (hr_bpm < 70.0) return 1;
    if (hr_bpm < 80.0) return 2;
    if (hr_bpm < 90.0) return 3;
    if (hr_bpm < 100.0) return 4;
    return 5;  // [100, 110]
}

BinnedFeatures bin_features(std::span<const TwaMeasurement> measurements, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0, 1)");
    BinnedFeatures out;
    for (const auto& meas : measurements) {
        const auto bin = hr_bin_index(meas.mean_hr_bpm);
        if (!bin) {
            ++out.dropped;
            continue;
        }
        if (meas.p_value <= alpha)
            out.features[*bin] = std::max(out.features[*bin], meas.amplitude_uv);
    }
    return out;
}

}  // namespace twakit::twa
