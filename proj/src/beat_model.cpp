#include "twakit/beat_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "twakit/errors.hpp"
#include "twakit/signal_utils.hpp"

namespace twakit::beats {

const char* lead_axis_name(LeadAxis lead) {
    switch (lead) {
        case LeadAxis::X: return "X";
        case LeadAxis::Y: return "Y";
        case LeadAxis::Z: return "Z";
    }
    return "?";
}

std::optional<LeadAxis> lead_axis_from_name(std::string_view name) {
    if (name == "X" || name == "x") return LeadAxis::X;
    if (name == "Y" || name == "y") return LeadAxis::Y;
    if (name == "Z" || name == "z") return LeadAxis::Z;
    return std::nullopt;
}

LeadTemplate make_lead_template(LeadAxis lead, std::vector<GaussianKernel> kernels) {
    for (auto& k : kernels) {
        if (!std::isfinite(k.amplitude_mv) || !std::isfinite(k.width_rad) ||
            !std::isfinite(k.center_rad)) {
            throw std::invalid_argument("kernel parameters must be finite");
        }
        if (k.width_rad <= 0.0) throw std::invalid_argument("kernel width must be positive");
        k.center_rad = sig::wrap_phase(k.center_rad);
    }
    std::sort(kernels.begin(), kernels.end(),
              [](const GaussianKernel& a, const GaussianKernel& b) {
                  return a.center_rad < b.center_rad;
              });
    // Canonical ordering wants strictly increasing centers; nudge exact ties.
    for (std::size_t i = 1; i < kernels.size(); ++i) {
        if (kernels[i].center_rad <= kernels[i - 1].center_rad) {
            kernels[i].center_rad = std::nextafter(kernels[i - 1].center_rad, 4.0);
        }
    }
    return LeadTemplate{lead, std::move(kernels)};
}

double evaluate_lead_at(const LeadTemplate& lead, double phase_rad) {
    if (!std::isfinite(phase_rad)) throw std::invalid_argument("phase must be finite");
    double z = 0.0;
    for (const auto& k : lead.kernels) {
        const double d = sig::wrap_phase(phase_rad - k.center_rad);
        z += k.amplitude_mv * std::exp(-d * d / (2.0 * k.width_rad * k.width_rad));
    }
    return z;
}

std::vector<double> evaluate_lead(const LeadTemplate& lead,
                                  std::span<const double> phases_rad) {
    std::vector<double> out;
    out.reserve(phases_rad.size());
    for (double p : phases_rad) out.push_back(evaluate_lead_at(lead, p));
    return out;
}

std::vector<double> phase_grid(std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j)
        g[j] = -sig::kPi + sig::kTwoPi * static_cast<double>(j) / static_cast<double>(n);
    return g;
}

AverageBeat compute_average_beat(std::span<const double> signal_mv,
                                 std::span<const std::size_t> r_peaks,
                                 double fs_hz) {
    if (!(fs_hz > 0.0) || !std::isfinite(fs_hz))
        throw std::invalid_argument("sampling rate must be positive");
    if (r_peaks.size() < 2)
        throw insufficient_data_error("need at least two R peaks to average a beat");
    for (std::size_t i = 0; i < r_peaks.size(); ++i) {
        if (r_peaks[i] >= signal_mv.size())
            throw std::invalid_argument("R peak outside the signal");
        if (i > 0 && r_peaks[i] <= r_peaks[i - 1])
            throw std::invalid_argument("R peaks must be strictly increasing");
    }

    const std::size_t n = kPhaseGridSize;
    std::vector<double> acc(n, 0.0);
    const std::size_t cycles = r_peaks.size() - 1;
    for (std::size_t c = 0; c < cycles; ++c) {
        const double start = static_cast<double>(r_peaks[c]);
        const double len = static_cast<double>(r_peaks[c + 1] - r_peaks[c]);
        for (std::size_t j = 0; j < n; ++j) {
            const double theta =
                -sig::kPi + sig::kTwoPi * static_cast<double>(j) / static_cast<double>(n);
            // R at phase 0; negative phases sit late in the preceding cycle.
            const double u = theta >= 0.0 ? theta / sig::kTwoPi : theta / sig::kTwoPi + 1.0;
            acc[j] += sig::cubic_interp(signal_mv, start + u * len);
        }
    }
    for (double& v : acc) v /= static_cast<double>(cycles);
    return AverageBeat{std::move(acc), fs_hz};
}

namespace {

std::vector<GaussianKernel> initial_guess(const AverageBeat& beat, int n_kernels) {
    const auto& s = beat.samples_mv;
    const std::size_t n = s.size();
    struct Ext {
        double phase, value;
    };
    std::vector<Ext> ext;
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const bool peak = s[j] > s[j - 1] && s[j] >= s[j + 1];
        const bool dip = s[j] < s[j - 1] && s[j] <= s[j + 1];
        if (peak || dip) {
            const double phase =
                -sig::kPi + sig::kTwoPi * static_cast<double>(j) / static_cast<double>(n);
            ext.push_back({phase, s[j]});
        }
    }
    std::sort(ext.begin(), ext.end(),
              [](const Ext& a, const Ext& b) { return std::fabs(a.value) > std::fabs(b.value); });

    std::vector<GaussianKernel> init;
    for (int i = 0; i < n_kernels && i < static_cast<int>(ext.size()); ++i)
        init.push_back({ext[static_cast<std::size_t>(i)].value, 0.05,
                        ext[static_cast<std::size_t>(i)].phase});
    // Pad with evenly spaced kernels when the beat has too few extrema.
    int missing = n_kernels - static_cast<int>(init.size());
    for (int i = 0; i < missing; ++i) {
        const double phase = -sig::kPi + sig::kTwoPi * (static_cast<double>(i) + 0.5) /
                                             static_cast<double>(missing);
        const std::size_t j = static_cast<std::size_t>(
            std::clamp((phase + sig::kPi) / sig::kTwoPi * static_cast<double>(n), 0.0,
                       static_cast<double>(n - 1)));
        init.push_back({s[j], 0.05, phase});
    }
    return init;
}

constexpr double kMinWidth = 1e-4;

}  // namespace

FitResult fit_template(const AverageBeat& beat, int n_kernels,
                       const std::vector<GaussianKernel>* init, double tol,
                       int max_iter, LeadAxis lead) {
    const std::size_t n = beat.samples_mv.size();
    if (n_kernels < 1) throw std::invalid_argument("need at least one kernel");
    if (n < 16 || n <= 3 * static_cast<std::size_t>(n_kernels))
        throw insufficient_data_error("beat grid too short for the requested kernel count");
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be positive");
    if (init && static_cast<int>(init->size()) != n_kernels)
        throw std::invalid_argument("initial guess size must match n_kernels");

    std::vector<GaussianKernel> kernels = init ? *init : initial_guess(beat, n_kernels);
    for (auto& k : kernels) {
        k.width_rad = std::max(k.width_rad, kMinWidth);
        k.center_rad = sig::wrap_phase(k.center_rad);
    }

    const std::vector<double> phases = phase_grid(n);
    const int m = 3 * n_kernels;

    auto residual_rss = [&](const std::vector<GaussianKernel>& ks, Eigen::VectorXd* r) {
        double rss = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double z = 0.0;
            for (const auto& k : ks) {
                const double d = sig::wrap_phase(phases[j] - k.center_rad);
                z += k.amplitude_mv * std::exp(-d * d / (2.0 * k.width_rad * k.width_rad));
            }
            const double e = z - beat.samples_mv[j];
            if (r) (*r)(static_cast<Eigen::Index>(j)) = e;
            rss += e * e;
        }
        return rss;
    };

    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    Eigen::MatrixXd J(static_cast<Eigen::Index>(n), m);

    double rss = residual_rss(kernels, &r);
    double lambda = 1e-3;
    bool converged = rss < 1e-30;
    int iterations = 0;

    for (int it = 0; it < max_iter && !converged; ++it) {
        iterations = it + 1;
        for (std::size_t j = 0; j < n; ++j) {
            for (int k = 0; k < n_kernels; ++k) {
                const auto& ker = kernels[static_cast<std::size_t>(k)];
                const double d = sig::wrap_phase(phases[j] - ker.center_rad);
                const double b = ker.width_rad;
                const double e = std::exp(-d * d / (2.0 * b * b));
                J(static_cast<Eigen::Index>(j), 3 * k) = e;
                J(static_cast<Eigen::Index>(j), 3 * k + 1) =
                    ker.amplitude_mv * e * d * d / (b * b * b);
                J(static_cast<Eigen::Index>(j), 3 * k + 2) =
                    ker.amplitude_mv * e * d / (b * b);
            }
        }

        const Eigen::MatrixXd jtj = J.transpose() * J;
        const Eigen::VectorXd jtr = J.transpose() * r;

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd a = jtj;
            for (int i = 0; i < m; ++i) a(i, i) += lambda * jtj(i, i) + 1e-12;
            const Eigen::VectorXd delta = a.ldlt().solve(-jtr);

            std::vector<GaussianKernel> trial = kernels;
            for (int k = 0; k < n_kernels; ++k) {
                auto& ker = trial[static_cast<std::size_t>(k)];
                ker.amplitude_mv += delta(3 * k);
                ker.width_rad = std::max(ker.width_rad + delta(3 * k + 1), kMinWidth);
                ker.center_rad = sig::wrap_phase(ker.center_rad + delta(3 * k + 2));
            }
            const double trial_rss = residual_rss(trial, nullptr);

            if (std::isfinite(trial_rss) && trial_rss <= rss) {
                const double gain = rss - trial_rss;
                kernels = std::move(trial);
                rss = residual_rss(kernels, &r);
                lambda = std::max(lambda * 0.1, 1e-12);
                accepted = true;
                if (gain <= tol * std::max(rss, 1e-300)) converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e14) break;  // stalled
            }
        }
        if (!accepted) break;
    }

    FitResult res;
    res.lead_template = make_lead_template(lead, std::move(kernels));
    res.rss = rss;
    res.converged = converged;
    res.iterations = iterations;
    return res;
}

namespace {

bool parse_kv(const std::string& line, std::string* key, std::string* value) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) return false;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        return s.substr(a, b - a + 1);
    };
    *key = trim(line.substr(0, eq));
    *value = trim(line.substr(eq + 1));
    return !key->empty();
}

}  // namespace

AverageBeat load_average_beat(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open beat file: " + path);
    AverageBeat beat;
    std::size_t expect = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::string key, value;
        if (line.find('=') != std::string::npos && parse_kv(line, &key, &value)) {
            if (key == "fs") beat.sampling_rate_hz = std::stod(value);
            else if (key == "n") expect = std::stoul(value);
            continue;
        }
        beat.samples_mv.push_back(std::stod(line));
    }
    if (beat.samples_mv.size() < 16 || !(beat.sampling_rate_hz > 0.0))
        throw data_error("malformed beat file: " + path);
    if (expect != 0 && expect != beat.samples_mv.size())
        throw data_error("beat file sample count mismatch: " + path);
    for (double v : beat.samples_mv)
        if (!std::isfinite(v)) throw data_error("non-finite sample in beat file: " + path);
    return beat;
}

void save_average_beat(const AverageBeat& beat, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write beat file: " + path);
    out << "# average beat, one sample (mV) per line\n";
    out << "fs = " << beat.sampling_rate_hz << "\n";
    out << "n = " << beat.samples_mv.size() << "\n";
    out.precision(17);
    for (double v : beat.samples_mv) out << v << "\n";
    if (!out) throw data_error("write failed: " + path);
}

TemplateFile load_template_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open template file: " + path);
    TemplateFile tf;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::string key, value;
        if (line.find('=') != std::string::npos && parse_kv(line, &key, &value)) {
            if (key == "source_id") tf.source_id = value;
            else if (key == "nominal_qt") tf.nominal_qt_s = std::stod(value);
            continue;
        }
        std::istringstream ss(line);
        double a, b, c;
        std::string lead_name;
        if (!(ss >> a >> b >> c >> lead_name))
            throw data_error("malformed kernel line " + std::to_string(lineno) + " in " + path);
        const auto lead = lead_axis_from_name(lead_name);
        if (!lead) throw data_error("unknown lead '" + lead_name + "' in " + path);
        if (!(b > 0.0) || !std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
            throw data_error("invalid kernel parameters in " + path);
        tf.leads[*lead].push_back({a, b, c});
    }
    if (tf.leads.empty()) throw data_error("template file has no kernels: " + path);
    return tf;
}

void save_template_file(const TemplateFile& tf, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write template file: " + path);
    out << "# morphology template, one kernel per line: amplitude_mV width_rad center_rad lead\n";
    if (!tf.source_id.empty()) out << "source_id = " << tf.source_id << "\n";
    if (tf.nominal_qt_s > 0.0) {
        out.precision(17);
        out << "nominal_qt = " << tf.nominal_qt_s << "\n";
    }
    out.precision(17);
    for (const auto& [lead, kernels] : tf.leads)
        for (const auto& k : kernels)
            out << k.amplitude_mv << " " << k.width_rad << " " << k.center_rad << " "
                << lead_axis_name(lead) << "\n";
    if (!out) throw data_error("write failed: " + path);
}

MorphologyTemplate morphology_from_file(const TemplateFile& tf) {
    MorphologyTemplate t;
    const LeadAxis order[3] = {LeadAxis::X, LeadAxis::Y, LeadAxis::Z};
    for (int i = 0; i < 3; ++i) {
        const auto it = tf.leads.find(order[i]);
        if (it == tf.leads.end() || it->second.empty())
            throw invalid_template_error(std::string("template lacks lead ") +
                                         lead_axis_name(order[i]));
        t.leads[static_cast<std::size_t>(i)] = make_lead_template(order[i], it->second);
    }
    t.source_id = tf.source_id;
    t.nominal_qt_s = tf.nominal_qt_s;
    return t;
}

TemplateFile morphology_to_file(const MorphologyTemplate& t) {
    TemplateFile tf;
    tf.source_id = t.source_id;
    tf.nominal_qt_s = t.nominal_qt_s;
    for (const auto& lead : t.leads) tf.leads[lead.lead] = lead.kernels;
    return tf;
}

}  // namespace twakit::beats
