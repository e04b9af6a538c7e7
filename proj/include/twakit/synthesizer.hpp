#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "twakit/beat_model.hpp"
#include "twakit/noise.hpp"
#include "twakit/rhythm.hpp"
#include "twakit/rng.hpp"

namespace twakit::synth {

inline constexpr double kQtcMinS = 0.360;
inline constexpr double kQtcMaxS = 0.440;
inline constexpr double kTwaMinUv = 20.0;
inline constexpr double kTwaMaxUv = 100.0;
inline constexpr double kDefaultQuantizationStepMv = 1.32e-6;
inline constexpr int kQtcRetryLimit = 100;

// Orthogonal-to-12-lead projection, rows I, II, V1..V6 against (x, y, z);
// the limb leads III, aVR, aVL, aVF are linear in I and II.
extern const double kLeadProjection[8][3];
extern const char* const kTwelveLeadNames[12];

// HR grid the corrected-QT gate is checked over (60..110 bpm, step 2).
std::span<const double> dataset_hr_grid();

struct SynthesisConfig {
    beats::MorphologyTemplate morphology;
    rhythm::RhythmConfig rhythm;      // n_beats and seed are derived internally
    double twa_uv = 0.0;              // 0, or within [20, 100]
    double duration_s = 70.0;
    double fs_hz = 1000.0;
    double perturbation_frac = 0.045;
    std::optional<double> snr_db;     // absent = clean record
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

struct VcgRecord {
    double fs_hz = 0.0;
    std::vector<double> x, y, z;           // mV
    std::vector<std::size_t> beat_onsets;  // R peak sample indices
    bool label = false;
    std::string config_digest;
};

struct EcgRecord {
    double fs_hz = 0.0;
    std::vector<std::string> lead_names;
    std::vector<std::vector<double>> leads;  // parallel to lead_names, mV
    double quantization_step_mv = kDefaultQuantizationStepMv;
    bool label = false;
    std::map<std::string, std::string> metadata;
};

// Landmarks identified on one kernel set (usually the lead I projection):
// R is the largest magnitude kernel, Q the first negative kernel before it,
// T the dominant kernels in the (0.15 pi, 0.85 pi) window.
struct WaveMarkers {
    std::size_t r_kernel = 0;
    std::size_t q_kernel = 0;
    std::vector<std::size_t> t_kernels;
    double q_onset_rad = 0.0;   // center - 3 widths
    double t_offset_rad = 0.0;  // max of center + 3 widths over T kernels
};

// Kernel-weighted projection of all three leads onto lead I.
std::vector<beats::GaussianKernel> project_lead_i(const beats::MorphologyTemplate& t);

WaveMarkers identify_waves(std::span<const beats::GaussianKernel> kernels);

// T-wave kernel indices of one lead, window plus relative amplitude rule.
std::vector<std::size_t> t_kernel_indices(const beats::LeadTemplate& lead);

struct QtMeasure {
    double q_onset_rad = 0.0;
    double t_offset_rad = 0.0;
    double cycle_fraction = 0.0;  // fraction of one beat cycle
    double qt_seconds(double rr_s) const { return cycle_fraction * rr_s; }
};

QtMeasure measure_qt(const beats::MorphologyTemplate& t);

double qtc_bazett(double qt_s, double rr_s);

// Morphology at a beat length of rr seconds: centers and widths scale with
// sqrt(rr), which keeps the Bazett-corrected QT rate invariant.
beats::MorphologyTemplate rate_adapted(const beats::MorphologyTemplate& t, double rr_s);

// True when the corrected QT stays inside [0.36, 0.44] s at every grid rate.
bool validate_qtc(const beats::MorphologyTemplate& t, std::span<const double> hr_grid_bpm);

// Independent relative jitter on every amplitude and width, centers kept.
beats::MorphologyTemplate perturb_template(const beats::MorphologyTemplate& t,
                                           double max_frac, Rng& rng);

// Even/odd templates with the T-wave kernels of every lead scaled (1 +/- s),
// s calibrated so the even-odd difference peaks at twa_uv on lead I at the
// given beat length.
std::pair<beats::MorphologyTemplate, beats::MorphologyTemplate> apply_twa(
    const beats::MorphologyTemplate& t, double twa_uv, double calibration_rr_s = 1.0);

// Clean orthogonal-lead record: perturbation, corrected-QT gate with bounded
// retries, tachogram, beat-by-beat rendering with even/odd alternation.
VcgRecord synthesize_vcg(const SynthesisConfig& cfg);

EcgRecord dower_transform(const VcgRecord& vcg);

// Full pipeline: synthesize_vcg, project, optionally keep lead I only, then
// mix noise to the configured SNR.
EcgRecord render_record(const SynthesisConfig& cfg, noise::NoiseProvider* provider,
                        bool lead_i_only);

}  // namespace twakit::synth
