#include "twakit/rhythm.hpp"

#include <cmath>
#include <stdexcept>

#include "twakit/rng.hpp"
#include "twakit/signal_utils.hpp"

namespace twakit::rhythm {

namespace {

constexpr double kLfCenterHz = 0.1;
constexpr double kLobeSigmaHz = 0.01;

double spectrum(double f_hz, double hf_center_hz, double lf_hf_ratio) {
    const double lf = std::exp(-(f_hz - kLfCenterHz) * (f_hz - kLfCenterHz) /
                               (2.0 * kLobeSigmaHz * kLobeSigmaHz));
    const double hf = std::exp(-(f_hz - hf_center_hz) * (f_hz - hf_center_hz) /
                               (2.0 * kLobeSigmaHz * kLobeSigmaHz));
    return lf_hf_ratio * lf + hf;
}

}  // namespace

Tachogram generate_tachogram(const RhythmConfig& cfg) {
    if (!(cfg.mean_hr_bpm >= 20.0 && cfg.mean_hr_bpm <= 250.0))
        throw std::invalid_argument("mean heart rate outside [20, 250] bpm");
    if (!(cfg.br_rpm > 0.0)) throw std::invalid_argument("breathing rate must be positive");
    if (cfg.hr_std_bpm < 0.0) throw std::invalid_argument("hr_std must be nonnegative");
    if (!(cfg.lf_hf_ratio > 0.0)) throw std::invalid_argument("lf_hf_ratio must be positive");

    Tachogram tacho;
    const std::size_t n = cfg.n_beats;
    if (n == 0) return tacho;

    const double mean_rr = 60.0 / cfg.mean_hr_bpm;
    // First order mapping of the bpm deviation onto the RR axis.
    const double rr_std = 60.0 * cfg.hr_std_bpm / (cfg.mean_hr_bpm * cfg.mean_hr_bpm);

    tacho.rr_s.assign(n, mean_rr);
    if (rr_std > 0.0 && n > 1) {
        Rng rng(cfg.seed);
        const double df = 1.0 / (static_cast<double>(n) * mean_rr);
        const double hf_center = cfg.br_rpm / 60.0;
        const std::size_t half = n / 2;

        std::vector<double> amp(half + 1, 0.0), phase(half + 1, 0.0);
        for (std::size_t k = 1; k <= half; ++k) {
            amp[k] = std::sqrt(spectrum(static_cast<double>(k) * df, hf_center, cfg.lf_hf_ratio));
            phase[k] = rng.u01() * sig::kTwoPi;
        }

        std::vector<double> x(n, 0.0);
        for (std::size_t k = 1; k <= half; ++k) {
            if (amp[k] < 1e-9) continue;
            const double w = sig::kTwoPi * static_cast<double>(k) / static_cast<double>(n);
            for (std::size_t t = 0; t < n; ++t)
                x[t] += amp[k] * std::cos(w * static_cast<double>(t) + phase[k]);
        }

        const double m = sig::mean(x);
        double var = 0.0;
        for (double v : x) var += (v - m) * (v - m);
        var /= static_cast<double>(n);
        const double scale = var > 0.0 ? rr_std / std::sqrt(var) : 0.0;
        for (std::size_t t = 0; t < n; ++t) tacho.rr_s[t] = mean_rr + (x[t] - m) * scale;
    }

    for (double& rr : tacho.rr_s) {
        if (rr < kRrMin) {
            rr = kRrMin;
            ++tacho.clamp_count;
        } else if (rr > kRrMax) {
            rr = kRrMax;
            ++tacho.clamp_count;
        }
    }
    return tacho;
}

}  // namespace twakit::rhythm
