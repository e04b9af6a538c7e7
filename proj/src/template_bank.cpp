#include "twakit/template_bank.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "twakit/rng.hpp"
#include "twakit/synthesizer.hpp"

namespace twakit::synth {

namespace {

// Base morphology: P (two lobes), QRS, ST hump and a two lobe T wave.
// Columns: center (rad), width (rad), then amplitude (mV) per lead X, Y, Z.
struct BaseWave {
    double center, width, ax, ay, az;
};

constexpr BaseWave kBaseWaves[] = {
    {-1.210, 0.140, 0.055, 0.040, 0.015},   // P1
    {-1.060, 0.130, 0.065, 0.045, 0.020},   // P2
    {-0.220, 0.055, -0.110, -0.050, 0.020}, // Q
    {-0.015, 0.095, 0.950, 0.550, -0.350},  // R
    {0.045, 0.075, 0.350, 0.180, -0.120},   // R'
    {0.220, 0.070, -0.280, -0.140, 0.180},  // S
    {0.700, 0.280, 0.035, 0.020, -0.020},   // ST
    {1.380, 0.170, 0.320, 0.200, -0.140},   // T1
    {1.580, 0.200, 0.130, 0.085, -0.060},   // T2
};

constexpr std::size_t kWaveCount = sizeof(kBaseWaves) / sizeof(kBaseWaves[0]);
constexpr std::uint64_t kBankSeed = 0x7477616b62616e6bULL;

beats::MorphologyTemplate build_variant(std::size_t index, std::uint64_t salt) {
    Rng rng(derive_seed(kBankSeed + salt, index));

    double dc[kWaveCount] = {};
    double wf[kWaveCount];
    double t_shift = 0.0;
    for (std::size_t w = 0; w < kWaveCount; ++w) wf[w] = 1.0;
    if (index > 0) {
        for (std::size_t w = 0; w < kWaveCount; ++w) {
            dc[w] = rng.uniform(-0.05, 0.05);
            wf[w] = 1.0 + rng.uniform(-0.10, 0.10);
        }
        t_shift = rng.uniform(-0.08, 0.08);  // moves both T lobes together
    }

    beats::MorphologyTemplate t;
    const beats::LeadAxis axes[3] = {beats::LeadAxis::X, beats::LeadAxis::Y,
                                     beats::LeadAxis::Z};
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const double lead_scale = index > 0 ? 1.0 + rng.uniform(-0.15, 0.15) : 1.0;
        std::vector<beats::GaussianKernel> ks;
        for (std::size_t w = 0; w < kWaveCount; ++w) {
            const auto& bw = kBaseWaves[w];
            const double base_amp = axis == 0 ? bw.ax : axis == 1 ? bw.ay : bw.az;
            const double amp_jit = index > 0 ? 1.0 + rng.uniform(-0.12, 0.12) : 1.0;
            double center = bw.center + dc[w];
            if (w >= kWaveCount - 2) center += t_shift;
            ks.push_back({base_amp * lead_scale * amp_jit, bw.width * wf[w], center});
        }
        t.leads[axis] = beats::make_lead_template(axes[axis], std::move(ks));
    }

    char name[16];
    std::snprintf(name, sizeof(name), "synth%02zu", index);
    t.source_id = name;
    t.nominal_qt_s = measure_qt(t).cycle_fraction;  // corrected QT at RR = 1 s
    return t;
}

}  // namespace

std::vector<beats::MorphologyTemplate> builtin_templates(std::size_t count) {
    std::vector<beats::MorphologyTemplate> bank;
    bank.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        beats::MorphologyTemplate t;
        bool ok = false;
        for (std::uint64_t salt = 0; salt < 20 && !ok; ++salt) {
            t = build_variant(i, salt * 0x9e37ULL);
            ok = validate_qtc(t, dataset_hr_grid());
        }
        if (!ok) throw std::logic_error("could not build a valid bank morphology");
        bank.push_back(std::move(t));
    }
    return bank;
}

}  // namespace twakit::synth
