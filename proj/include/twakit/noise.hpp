#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "twakit/rng.hpp"

namespace twakit::noise {

enum class NoiseKind { MuscleArtifact, ElectrodeMotion, BaselineWander };

struct NoiseRecord {
    NoiseKind kind = NoiseKind::MuscleArtifact;
    double fs_hz = 0.0;
    std::vector<double> samples_mv;
};

// Linear resampling onto the target rate.
NoiseRecord resample_noise(const NoiseRecord& rec, double target_fs_hz);

// Adds a random contiguous segment of each noise record, both scaled so the
// two contribute equal power and the total hits the requested SNR. Powers are
// taken on baseline-removed signals. Noise records are resampled to fs first
// and must then cover the clean length.
std::vector<double> mix(std::span<const double> clean_mv, const NoiseRecord& ma,
                        const NoiseRecord& em, double snr_db, double fs_hz, Rng& rng);

// SNR of (noisy - clean) against clean, both baseline-removed. Verification
// helper for the mixer.
double measure_snr_db(std::span<const double> clean_mv, std::span<const double> noisy_mv,
                      double fs_hz);

// Built-in surrogate noise: band-shaped filtered noise with burst modulation
// for muscle artifact, low frequency excursions for electrode motion.
NoiseRecord synth_noise(NoiseKind kind, std::size_t n_samples, double fs_hz, Rng& rng);

// Plain text: one sample (mV) per line, '#' comments, optional "fs = ..".
NoiseRecord load_noise_text(const std::string& path, NoiseKind kind, double default_fs_hz);

// Interleaved 16 bit little-endian multichannel file; gains are ADC units
// per mV, one per channel.
std::vector<std::vector<double>> load_wfdb16(const std::string& path, std::size_t n_channels,
                                             std::span<const double> gains_adu_per_mv);

// Source of noise records for record rendering.
class NoiseProvider {
public:
    virtual ~NoiseProvider() = default;
    virtual NoiseRecord get(NoiseKind kind, std::size_t n_samples, double fs_hz, Rng& rng) = 0;
};

class SyntheticNoiseProvider : public NoiseProvider {
public:
    NoiseRecord get(NoiseKind kind, std::size_t n_samples, double fs_hz, Rng& rng) override {
        return synth_noise(kind, n_samples, fs_hz, rng);
    }
};

// Serves previously loaded records, resampled to the requested rate.
class BankNoiseProvider : public NoiseProvider {
public:
    void add(NoiseRecord rec) { bank_.push_back(std::move(rec)); }
    bool has(NoiseKind kind) const;
    NoiseRecord get(NoiseKind kind, std::size_t n_samples, double fs_hz, Rng& rng) override;

private:
    std::vector<NoiseRecord> bank_;
};

}  // namespace twakit::noise
