#include "twakit/synthesizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "twakit/errors.hpp"
#include "twakit/signal_utils.hpp"

namespace twakit::synth {

const double kLeadProjection[8][3] = {
    {0.632, -0.235, 0.059},   // I
    {0.235, 1.066, -0.132},   // II
    {-0.515, 0.157, -0.917},  // V1
    {0.044, 0.164, -1.387},   // V2
    {0.882, 0.098, -1.277},   // V3
    {1.213, 0.127, -0.601},   // V4
    {1.125, 0.127, -0.086},   // V5
    {0.831, 0.076, 0.230},    // V6
};

const char* const kTwelveLeadNames[12] = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                          "V1", "V2", "V3",  "V4",  "V5",  "V6"};

std::span<const double> dataset_hr_grid() {
    static const std::vector<double> grid = [] {
        std::vector<double> g;
        for (int hr = 60; hr <= 110; hr += 2) g.push_back(static_cast<double>(hr));
        return g;
    }();
    return grid;
}

void SynthesisConfig::validate() const {
    for (const auto& lead : morphology.leads)
        if (lead.kernels.empty())
            throw std::invalid_argument("morphology template must have kernels on every lead");
    if (!(rhythm.mean_hr_bpm >= 20.0 && rhythm.mean_hr_bpm <= 250.0))
        throw std::invalid_argument("mean heart rate outside [20, 250] bpm");
    if (!(rhythm.br_rpm > 0.0)) throw std::invalid_argument("breathing rate must be positive");
    if (twa_uv != 0.0 && !(twa_uv >= kTwaMinUv && twa_uv <= kTwaMaxUv))
        throw std::invalid_argument("twa amplitude must be 0 or within [20, 100] uV");
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    if (!(perturbation_frac >= 0.0 && perturbation_frac <= 0.10))
        throw std::invalid_argument("perturbation fraction outside [0, 0.1]");
    if (snr_db && !std::isfinite(*snr_db))
        throw std::invalid_argument("snr must be finite");
}

std::vector<beats::GaussianKernel> project_lead_i(const beats::MorphologyTemplate& t) {
    std::vector<beats::GaussianKernel> out;
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const double w = kLeadProjection[0][axis];
        for (const auto& k : t.leads[axis].kernels)
            out.push_back({k.amplitude_mv * w, k.width_rad, k.center_rad});
    }
    std::sort(out.begin(), out.end(),
              [](const beats::GaussianKernel& a, const beats::GaussianKernel& b) {
                  return a.center_rad < b.center_rad;
              });
    return out;
}

namespace {

constexpr double kTWindowLo = 0.15 * sig::kPi;
constexpr double kTWindowHi = 0.85 * sig::kPi;
constexpr double kTRelativeAmp = 0.3;

}  // namespace

WaveMarkers identify_waves(std::span<const beats::GaussianKernel> kernels) {
    if (kernels.empty()) throw invalid_template_error("no kernels to identify waves in");

    WaveMarkers m;
    double best = -1.0;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        if (std::fabs(kernels[i].amplitude_mv) > best) {
            best = std::fabs(kernels[i].amplitude_mv);
            m.r_kernel = i;
        }
    }
    const double r_center = kernels[m.r_kernel].center_rad;

    // First negative kernel preceding R.
    bool have_q = false;
    double q_center = -1e9;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const auto& k = kernels[i];
        if (k.amplitude_mv < 0.0 && k.center_rad < r_center - 1e-12 &&
            k.center_rad > q_center) {
            q_center = k.center_rad;
            m.q_kernel = i;
            have_q = true;
        }
    }
    if (!have_q) throw invalid_template_error("no negative kernel before the R wave");

    double t_max = 0.0;
    for (const auto& k : kernels)
        if (k.center_rad > kTWindowLo && k.center_rad < kTWindowHi)
            t_max = std::max(t_max, std::fabs(k.amplitude_mv));
    if (t_max <= 0.0) throw invalid_template_error("no T-wave kernels in the repolarization window");

    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const auto& k = kernels[i];
        if (k.center_rad > kTWindowLo && k.center_rad < kTWindowHi &&
            std::fabs(k.amplitude_mv) >= kTRelativeAmp * t_max)
            m.t_kernels.push_back(i);
    }

    const auto& q = kernels[m.q_kernel];
    m.q_onset_rad = q.center_rad - 3.0 * q.width_rad;
    m.t_offset_rad = -1e9;
    for (std::size_t i : m.t_kernels) {
        const auto& k = kernels[i];
        m.t_offset_rad = std::max(m.t_offset_rad, k.center_rad + 3.0 * k.width_rad);
    }
    return m;
}

std::vector<std::size_t> t_kernel_indices(const beats::LeadTemplate& lead) {
    double t_max = 0.0;
    for (const auto& k : lead.kernels)
        if (k.center_rad > kTWindowLo && k.center_rad < kTWindowHi)
            t_max = std::max(t_max, std::fabs(k.amplitude_mv));
    std::vector<std::size_t> idx;
    if (t_max <= 0.0) return idx;
    for (std::size_t i = 0; i < lead.kernels.size(); ++i) {
        const auto& k = lead.kernels[i];
        if (k.center_rad > kTWindowLo && k.center_rad < kTWindowHi &&
            std::fabs(k.amplitude_mv) >= kTRelativeAmp * t_max)
            idx.push_back(i);
    }
    return idx;
}

QtMeasure measure_qt(const beats::MorphologyTemplate& t) {
    const auto proj = project_lead_i(t);
    const WaveMarkers m = identify_waves(proj);
    QtMeasure q;
    q.q_onset_rad = m.q_onset_rad;
    q.t_offset_rad = m.t_offset_rad;
    q.cycle_fraction = (m.t_offset_rad - m.q_onset_rad) / sig::kTwoPi;
    if (!(q.cycle_fraction > 0.0))
        throw invalid_template_error("nonpositive QT span");
    return q;
}

double qtc_bazett(double qt_s, double rr_s) {
    if (!(rr_s > 0.0)) throw std::invalid_argument("RR must be positive");
    if (!(qt_s >= 0.0)) throw std::invalid_argument("QT must be nonnegative");
    return qt_s / std::sqrt(rr_s);
}

beats::MorphologyTemplate rate_adapted(const beats::MorphologyTemplate& t, double rr_s) {
    if (!(rr_s > 0.0)) throw std::invalid_argument("RR must be positive");
    const double alpha = 1.0 / std::sqrt(rr_s);
    beats::MorphologyTemplate out = t;
    for (auto& lead : out.leads) {
        std::vector<beats::GaussianKernel> ks = lead.kernels;
        for (auto& k : ks) {
            k.center_rad *= alpha;
            k.width_rad *= alpha;
        }
        lead = beats::make_lead_template(lead.lead, std::move(ks));
    }
    return out;
}

bool validate_qtc(const beats::MorphologyTemplate& t, std::span<const double> hr_grid_bpm) {
    try {
        for (double hr : hr_grid_bpm) {
            if (!(hr > 0.0)) throw std::invalid_argument("heart rate must be positive");
            const double rr = 60.0 / hr;
            const auto adapted = rate_adapted(t, rr);
            const double qt = measure_qt(adapted).qt_seconds(rr);
            const double qtc = qtc_bazett(qt, rr);
            if (qtc < kQtcMinS || qtc > kQtcMaxS) return false;
        }
    } catch (const invalid_template_error&) {
        return false;
    }
    return true;
}

beats::MorphologyTemplate perturb_template(const beats::MorphologyTemplate& t,
                                           double max_frac, Rng& rng) {
    if (!(max_frac >= 0.0 && max_frac <= 0.10))
        throw std::invalid_argument("perturbation fraction outside [0, 0.1]");
    beats::MorphologyTemplate out = t;
    // Draw order is fixed: leads X, Y, Z, kernels in order, amplitude then width.
    for (auto& lead : out.leads) {
        std::vector<beats::GaussianKernel> ks = lead.kernels;
        for (auto& k : ks) {
            k.amplitude_mv *= 1.0 + rng.uniform(-max_frac, max_frac);
            k.width_rad *= 1.0 + rng.uniform(-max_frac, max_frac);
        }
        lead = beats::make_lead_template(lead.lead, std::move(ks));
    }
    return out;
}

namespace {

// Peak of the lead I projection of the tagged T kernels, dense grid.
double t_wave_peak_lead_i(const beats::MorphologyTemplate& t,
                          const std::array<std::vector<std::size_t>, 3>& tags) {
    constexpr std::size_t kGrid = 4096;
    double peak = 0.0;
    for (std::size_t j = 0; j < kGrid; ++j) {
        const double theta =
            -sig::kPi + sig::kTwoPi * static_cast<double>(j) / static_cast<double>(kGrid);
        double z = 0.0;
        for (std::size_t axis = 0; axis < 3; ++axis) {
            const double w = kLeadProjection[0][axis];
            for (std::size_t i : tags[axis]) {
                const auto& k = t.leads[axis].kernels[i];
                const double d = sig::wrap_phase(theta - k.center_rad);
                z += w * k.amplitude_mv *
                     std::exp(-d * d / (2.0 * k.width_rad * k.width_rad));
            }
        }
        peak = std::max(peak, std::fabs(z));
    }
    return peak;
}

}  // namespace

std::pair<beats::MorphologyTemplate, beats::MorphologyTemplate> apply_twa(
    const beats::MorphologyTemplate& t, double twa_uv, double calibration_rr_s) {
    if (!(twa_uv >= 0.0)) throw std::invalid_argument("twa amplitude must be nonnegative");
    if (!(calibration_rr_s > 0.0)) throw std::invalid_argument("RR must be positive");
    if (twa_uv == 0.0) return {t, t};

    std::array<std::vector<std::size_t>, 3> tags;
    bool any = false;
    for (std::size_t axis = 0; axis < 3; ++axis) {
        tags[axis] = t_kernel_indices(t.leads[axis]);
        any = any || !tags[axis].empty();
    }
    if (!any) throw invalid_template_error("no T-wave kernels to alternate");

    const double peak = t_wave_peak_lead_i(rate_adapted(t, calibration_rr_s), tags);
    if (!(peak > 0.0)) throw invalid_template_error("T wave projects to zero on lead I");

    // Even/odd difference on lead I is 2 s * T(theta); calibrate its peak.
    const double s = (twa_uv / 1000.0) / (2.0 * peak);

    beats::MorphologyTemplate even = t, odd = t;
    for (std::size_t axis = 0; axis < 3; ++axis) {
        auto ke = even.leads[axis].kernels;
        auto ko = odd.leads[axis].kernels;
        for (std::size_t i : tags[axis]) {
            ke[i].amplitude_mv *= 1.0 + s;
            ko[i].amplitude_mv *= 1.0 - s;
        }
        even.leads[axis] = beats::make_lead_template(even.leads[axis].lead, std::move(ke));
        odd.leads[axis] = beats::make_lead_template(odd.leads[axis].lead, std::move(ko));
    }
    return {even, odd};
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t hash_double(std::uint64_t h, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return fnv1a(h, &bits, sizeof(bits));
}

std::string config_digest(const SynthesisConfig& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    h = fnv1a(h, cfg.morphology.source_id.data(), cfg.morphology.source_id.size());
    for (const auto& lead : cfg.morphology.leads)
        for (const auto& k : lead.kernels) {
            h = hash_double(h, k.amplitude_mv);
            h = hash_double(h, k.width_rad);
            h = hash_double(h, k.center_rad);
        }
    h = hash_double(h, cfg.rhythm.mean_hr_bpm);
    h = hash_double(h, cfg.rhythm.br_rpm);
    h = hash_double(h, cfg.rhythm.hr_std_bpm);
    h = hash_double(h, cfg.rhythm.lf_hf_ratio);
    h = hash_double(h, cfg.twa_uv);
    h = hash_double(h, cfg.duration_s);
    h = hash_double(h, cfg.fs_hz);
    h = hash_double(h, cfg.perturbation_frac);
    h = hash_double(h, cfg.snr_db ? *cfg.snr_db : std::nan(""));
    h = fnv1a(h, &cfg.seed, sizeof(cfg.seed));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

struct FlatKernels {
    std::vector<double> amp, inv2b2, center, cutoff;

    void assign(const beats::LeadTemplate& lead) {
        amp.clear();
        inv2b2.clear();
        center.clear();
        cutoff.clear();
        for (const auto& k : lead.kernels) {
            amp.push_back(k.amplitude_mv);
            inv2b2.push_back(1.0 / (2.0 * k.width_rad * k.width_rad));
            center.push_back(k.center_rad);
            cutoff.push_back(8.0 * k.width_rad);
        }
    }

    double eval(double theta) const {
        double z = 0.0;
        for (std::size_t i = 0; i < amp.size(); ++i) {
            double d = theta - center[i];
            if (d > sig::kPi) d -= sig::kTwoPi;
            else if (d <= -sig::kPi) d += sig::kTwoPi;
            if (std::fabs(d) < cutoff[i]) z += amp[i] * std::exp(-d * d * inv2b2[i]);
        }
        return z;
    }
};

}  // namespace

VcgRecord synthesize_vcg(const SynthesisConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    // Perturb until the corrected-QT gate passes, within the retry budget.
    beats::MorphologyTemplate shaped;
    bool ok = false;
    int attempts = 0;
    for (; attempts < kQtcRetryLimit; ) {
        ++attempts;
        shaped = perturb_template(cfg.morphology, cfg.perturbation_frac, rng);
        if (validate_qtc(shaped, dataset_hr_grid())) {
            ok = true;
            break;
        }
        if (cfg.perturbation_frac == 0.0) break;  // retries would repeat the same draw
    }
    if (!ok)
        throw generation_error("corrected QT stayed outside [0.36, 0.44] s after " +
                                   std::to_string(attempts) + " attempts",
                               attempts);

    const double mean_rr = 60.0 / cfg.rhythm.mean_hr_bpm;
    beats::MorphologyTemplate even = shaped, odd = shaped;
    if (cfg.twa_uv > 0.0) {
        auto pair = apply_twa(shaped, cfg.twa_uv, mean_rr);
        even = std::move(pair.first);
        odd = std::move(pair.second);
    }

    rhythm::RhythmConfig rc = cfg.rhythm;
    rc.n_beats = static_cast<std::size_t>(
                     std::ceil(cfg.duration_s / mean_rr * 1.25)) + 8;
    rc.seed = rng.subseed();
    const rhythm::Tachogram tacho = rhythm::generate_tachogram(rc);

    std::vector<double> onset_s(tacho.rr_s.size() + 1, 0.0);
    for (std::size_t k = 0; k < tacho.rr_s.size(); ++k)
        onset_s[k + 1] = onset_s[k] + tacho.rr_s[k];
    if (onset_s.back() < cfg.duration_s)
        throw generation_error("tachogram shorter than the record", 0);

    const std::size_t n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs_hz));
    VcgRecord rec;
    rec.fs_hz = cfg.fs_hz;
    rec.x.resize(n);
    rec.y.resize(n);
    rec.z.resize(n);
    rec.label = cfg.twa_uv > 0.0;
    rec.config_digest = config_digest(cfg);

    std::size_t beat = 0;
    FlatKernels fx, fy, fz;
    auto load_beat = [&](std::size_t k) {
        const auto& base = (k % 2 == 0) ? even : odd;
        const auto adapted = rate_adapted(base, tacho.rr_s[k]);
        fx.assign(adapted.leads[0]);
        fy.assign(adapted.leads[1]);
        fz.assign(adapted.leads[2]);
    };
    load_beat(0);
    rec.beat_onsets.push_back(0);

    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.fs_hz;
        while (beat + 1 < tacho.rr_s.size() && t >= onset_s[beat + 1]) {
            ++beat;
            load_beat(beat);
            const auto onset_idx =
                static_cast<std::size_t>(std::llround(onset_s[beat] * cfg.fs_hz));
            if (onset_idx < n) rec.beat_onsets.push_back(onset_idx);
        }
        const double tau = (t - onset_s[beat]) / tacho.rr_s[beat];
        const double theta = tau < 0.5 ? sig::kTwoPi * tau : sig::kTwoPi * tau - sig::kTwoPi;
        rec.x[i] = fx.eval(theta);
        rec.y[i] = fy.eval(theta);
        rec.z[i] = fz.eval(theta);
    }
    return rec;
}

EcgRecord dower_transform(const VcgRecord& vcg) {
    if (vcg.x.size() != vcg.y.size() || vcg.x.size() != vcg.z.size())
        throw std::invalid_argument("orthogonal leads must be equally long");

    const std::size_t n = vcg.x.size();
    EcgRecord ecg;
    ecg.fs_hz = vcg.fs_hz;
    ecg.label = vcg.label;
    ecg.lead_names.assign(std::begin(kTwelveLeadNames), std::end(kTwelveLeadNames));
    ecg.leads.assign(12, std::vector<double>(n));

    for (std::size_t i = 0; i < n; ++i) {
        const double v[3] = {vcg.x[i], vcg.y[i], vcg.z[i]};
        double direct[8];
        for (int r = 0; r < 8; ++r)
            direct[r] = kLeadProjection[r][0] * v[0] + kLeadProjection[r][1] * v[1] +
                        kLeadProjection[r][2] * v[2];
        const double lead_i = direct[0], lead_ii = direct[1];
        ecg.leads[0][i] = lead_i;
        ecg.leads[1][i] = lead_ii;
        ecg.leads[2][i] = lead_ii - lead_i;
        ecg.leads[3][i] = -(lead_i + lead_ii) / 2.0;
        ecg.leads[4][i] = lead_i - lead_ii / 2.0;
        ecg.leads[5][i] = lead_ii - lead_i / 2.0;
        for (int p = 0; p < 6; ++p) ecg.leads[static_cast<std::size_t>(6 + p)][i] = direct[2 + p];
    }
    return ecg;
}

EcgRecord render_record(const SynthesisConfig& cfg, noise::NoiseProvider* provider,
                        bool lead_i_only) {
    const VcgRecord vcg = synthesize_vcg(cfg);
    EcgRecord ecg = dower_transform(vcg);

    if (lead_i_only) {
        ecg.lead_names.resize(1);
        ecg.leads.resize(1);
    }

    if (cfg.snr_db) {
        if (!provider) throw std::invalid_argument("snr requested but no noise source given");
        Rng nrng(splitmix64(cfg.seed + 0x517cc1b727220a95ULL));
        const std::size_t n = ecg.leads[0].size();
        const noise::NoiseRecord ma =
            provider->get(noise::NoiseKind::MuscleArtifact, n, cfg.fs_hz, nrng);
        const noise::NoiseRecord em =
            provider->get(noise::NoiseKind::ElectrodeMotion, n, cfg.fs_hz, nrng);
        for (auto& lead : ecg.leads)
            lead = noise::mix(lead, ma, em, *cfg.snr_db, cfg.fs_hz, nrng);
    }

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    ecg.metadata["source_id"] = cfg.morphology.source_id;
    ecg.metadata["hr_bpm"] = fmt(cfg.rhythm.mean_hr_bpm);
    ecg.metadata["br_rpm"] = fmt(cfg.rhythm.br_rpm);
    ecg.metadata["twa_uv"] = fmt(cfg.twa_uv);
    if (cfg.snr_db) ecg.metadata["snr_db"] = fmt(*cfg.snr_db);
    ecg.metadata["duration_s"] = fmt(cfg.duration_s);
    ecg.metadata["seed"] = std::to_string(cfg.seed);
    ecg.metadata["config_digest"] = vcg.config_digest;
    return ecg;
}

}  // namespace twakit::synth
