#include "twakit/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "twakit/errors.hpp"
#include "twakit/signal_utils.hpp"

namespace twakit::noise {

namespace {

double baseline_removed_power(std::span<const double> x, double fs_hz, std::size_t stride) {
    const std::vector<double> base = sig::ecg_baseline(x, fs_hz, stride);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i] - base[i];
        s += v * v;
    }
    return s / static_cast<double>(x.size());
}

// Calibration runs the medians decimated; the error against the exact
// baseline is far below the mixing tolerance.
std::size_t calib_stride(double fs_hz) {
    const auto s = static_cast<std::size_t>(fs_hz / 125.0);
    return std::max<std::size_t>(1, s);
}

void standardize_power(std::vector<double>& x) {
    const double p = sig::power(x);
    if (p <= 0.0) return;
    const double g = 1.0 / std::sqrt(p);
    for (double& v : x) v *= g;
}

}  // namespace

NoiseRecord resample_noise(const NoiseRecord& rec, double target_fs_hz) {
    if (!(rec.fs_hz > 0.0) || !(target_fs_hz > 0.0))
        throw std::invalid_argument("sampling rates must be positive");
    if (rec.samples_mv.empty()) return NoiseRecord{rec.kind, target_fs_hz, {}};
    if (rec.fs_hz == target_fs_hz) return rec;

    const double ratio = rec.fs_hz / target_fs_hz;
    const std::size_t n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(rec.samples_mv.size() - 1) / ratio)) + 1;
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double pos = static_cast<double>(i) * ratio;
        const std::size_t j = std::min(static_cast<std::size_t>(pos),
                                       rec.samples_mv.size() - 1);
        if (j + 1 >= rec.samples_mv.size()) {
            out[i] = rec.samples_mv.back();
        } else {
            const double t = pos - static_cast<double>(j);
            out[i] = rec.samples_mv[j] * (1.0 - t) + rec.samples_mv[j + 1] * t;
        }
    }
    return NoiseRecord{rec.kind, target_fs_hz, std::move(out)};
}

std::vector<double> mix(std::span<const double> clean_mv, const NoiseRecord& ma,
                        const NoiseRecord& em, double snr_db, double fs_hz, Rng& rng) {
    if (clean_mv.empty()) throw std::invalid_argument("clean signal is empty");
    if (!std::isfinite(snr_db)) throw std::invalid_argument("snr must be finite");
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");

    const NoiseRecord ma_r = ma.fs_hz == fs_hz ? ma : resample_noise(ma, fs_hz);
    const NoiseRecord em_r = em.fs_hz == fs_hz ? em : resample_noise(em, fs_hz);
    const std::size_t n = clean_mv.size();
    if (ma_r.samples_mv.size() < n || em_r.samples_mv.size() < n)
        throw insufficient_noise_error("noise record shorter than the clean signal");

    const std::size_t ma_off = rng.below(ma_r.samples_mv.size() - n + 1);
    const std::size_t em_off = rng.below(em_r.samples_mv.size() - n + 1);
    const std::span<const double> ma_seg(ma_r.samples_mv.data() + ma_off, n);
    const std::span<const double> em_seg(em_r.samples_mv.data() + em_off, n);

    const std::size_t stride = calib_stride(fs_hz);
    const double p_signal = baseline_removed_power(clean_mv, fs_hz, stride);
    std::vector<double> out(clean_mv.begin(), clean_mv.end());
    if (p_signal <= 0.0) return out;  // nothing to scale against

    const double p_ma = baseline_removed_power(ma_seg, fs_hz, stride);
    const double p_em = baseline_removed_power(em_seg, fs_hz, stride);
    if (p_ma <= 0.0 || p_em <= 0.0)
        throw insufficient_noise_error("noise segment has zero power");

    // Each source carries half the noise power budget.
    const double target = p_signal / std::pow(10.0, snr_db / 10.0);
    const double g_ma = std::sqrt(target / (2.0 * p_ma));
    const double g_em = std::sqrt(target / (2.0 * p_em));
    for (std::size_t i = 0; i < n; ++i) out[i] += g_ma * ma_seg[i] + g_em * em_seg[i];
    return out;
}

double measure_snr_db(std::span<const double> clean_mv, std::span<const double> noisy_mv,
                      double fs_hz) {
    if (clean_mv.size() != noisy_mv.size() || clean_mv.empty())
        throw std::invalid_argument("signals must be nonempty and equally long");
    std::vector<double> diff(clean_mv.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = noisy_mv[i] - clean_mv[i];
    const double p_signal = baseline_removed_power(clean_mv, fs_hz, 1);
    const double p_noise = baseline_removed_power(diff, fs_hz, 1);
    if (p_noise <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(p_signal / p_noise);
}

NoiseRecord synth_noise(NoiseKind kind, std::size_t n_samples, double fs_hz, Rng& rng) {
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    std::vector<double> white(n_samples);
    for (double& v : white) v = rng.normal();

    std::vector<double> out;
    switch (kind) {
        case NoiseKind::MuscleArtifact: {
            const auto hp = sig::Biquad::highpass(std::min(15.0, 0.4 * fs_hz), fs_hz);
            out = hp.apply(white);
            // Slow lognormal envelope gives the bursty character.
            std::vector<double> slow(n_samples);
            for (double& v : slow) v = rng.normal();
            const auto lp = sig::Biquad::lowpass(std::min(0.3, 0.4 * fs_hz), fs_hz);
            std::vector<double> env = lp.apply(slow);
            standardize_power(env);
            for (std::size_t i = 0; i < n_samples; ++i)
                out[i] *= std::exp(0.7 * std::clamp(env[i], -3.0, 3.0));
            break;
        }
        case NoiseKind::ElectrodeMotion: {
            const auto lp = sig::Biquad::lowpass(std::min(3.0, 0.4 * fs_hz), fs_hz);
            const auto hp = sig::Biquad::highpass(std::min(0.3, 0.2 * fs_hz), fs_hz);
            out = hp.apply(lp.apply(white));
            break;
        }
        case NoiseKind::BaselineWander: {
            const auto lp = sig::Biquad::lowpass(std::min(0.3, 0.4 * fs_hz), fs_hz);
            out = lp.apply(white);
            break;
        }
    }
    standardize_power(out);
    for (double& v : out) v *= 0.05;  // nominal mV scale; mixing rescales anyway
    return NoiseRecord{kind, fs_hz, std::move(out)};
}

NoiseRecord load_noise_text(const std::string& path, NoiseKind kind, double default_fs_hz) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open noise file: " + path);
    NoiseRecord rec;
    rec.kind = kind;
    rec.fs_hz = default_fs_hz;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            const auto key_end = line.find_last_not_of(" \t", eq - 1);
            const std::string key = line.substr(0, key_end + 1);
            if (key == "fs") rec.fs_hz = std::stod(line.substr(eq + 1));
            continue;
        }
        rec.samples_mv.push_back(std::stod(line));
    }
    if (rec.samples_mv.empty() || !(rec.fs_hz > 0.0))
        throw data_error("malformed noise file: " + path);
    return rec;
}

std::vector<std::vector<double>> load_wfdb16(const std::string& path, std::size_t n_channels,
                                             std::span<const double> gains_adu_per_mv) {
    if (n_channels == 0 || gains_adu_per_mv.size() != n_channels)
        throw std::invalid_argument("need one positive gain per channel");
    for (double g : gains_adu_per_mv)
        if (!(g > 0.0)) throw std::invalid_argument("gains must be positive");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open signal file: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % (2 * n_channels) != 0)
        throw data_error("signal file size is not a whole number of frames: " + path);

    const std::size_t n_frames = bytes.size() / (2 * n_channels);
    std::vector<std::vector<double>> channels(n_channels, std::vector<double>(n_frames));
    for (std::size_t i = 0; i < n_frames; ++i) {
        for (std::size_t c = 0; c < n_channels; ++c) {
            const std::size_t off = 2 * (i * n_channels + c);
            const auto lo = static_cast<unsigned char>(bytes[off]);
            const auto hi = static_cast<unsigned char>(bytes[off + 1]);
            const auto raw = static_cast<std::int16_t>(
                static_cast<std::uint16_t>(lo) | (static_cast<std::uint16_t>(hi) << 8));
            channels[c][i] = static_cast<double>(raw) / gains_adu_per_mv[c];
        }
    }
    return channels;
}

bool BankNoiseProvider::has(NoiseKind kind) const {
    return std::any_of(bank_.begin(), bank_.end(),
                       [kind](const NoiseRecord& r) { return r.kind == kind; });
}

NoiseRecord BankNoiseProvider::get(NoiseKind kind, std::size_t n_samples, double fs_hz,
                                   Rng& rng) {
    std::vector<const NoiseRecord*> match;
    for (const auto& r : bank_)
        if (r.kind == kind) match.push_back(&r);
    if (match.empty()) throw insufficient_noise_error("no noise records of the requested kind");
    const NoiseRecord* pick = match[rng.below(match.size())];
    NoiseRecord out = pick->fs_hz == fs_hz ? *pick : resample_noise(*pick, fs_hz);
    if (out.samples_mv.size() < n_samples)
        throw insufficient_noise_error("noise record shorter than the requested length");
    return out;
}

}  // namespace twakit::noise
