#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twakit::beats {

enum class LeadAxis { X, Y, Z };

const char* lead_axis_name(LeadAxis lead);
std::optional<LeadAxis> lead_axis_from_name(std::string_view name);

// One Gaussian bump of the beat model: a * exp(-d^2 / (2 b^2)) with
// d = wrapped distance from the kernel center.
struct GaussianKernel {
    double amplitude_mv = 0.0;
    double width_rad = 0.0;   // > 0
    double center_rad = 0.0;  // in (-pi, pi]
};

struct LeadTemplate {
    LeadAxis lead = LeadAxis::X;
    std::vector<GaussianKernel> kernels;  // centers strictly increasing
};

// Wraps centers, sorts by center and validates widths/finiteness.
LeadTemplate make_lead_template(LeadAxis lead, std::vector<GaussianKernel> kernels);

// Orthogonal-lead morphology of one synthetic subject. The R peak sits at
// phase 0 and one beat spans [-pi, pi).
struct MorphologyTemplate {
    std::array<LeadTemplate, 3> leads;  // X, Y, Z
    std::string source_id;
    double nominal_qt_s = 0.0;  // corrected QT at RR = 1 s
};

struct AverageBeat {
    std::vector<double> samples_mv;  // uniform phase grid over [-pi, pi)
    double sampling_rate_hz = 0.0;   // rate of the source signal
};

inline constexpr std::size_t kPhaseGridSize = 512;

double evaluate_lead_at(const LeadTemplate& lead, double phase_rad);
std::vector<double> evaluate_lead(const LeadTemplate& lead,
                                  std::span<const double> phases_rad);

// Phase grid the fitter and the averaging work on.
std::vector<double> phase_grid(std::size_t n = kPhaseGridSize);

// Cycle-wise average around the given R peaks, cubic interpolation onto the
// 512 point phase grid, R at phase 0.
AverageBeat compute_average_beat(std::span<const double> signal_mv,
                                 std::span<const std::size_t> r_peaks,
                                 double fs_hz);

struct FitResult {
    LeadTemplate lead_template;
    double rss = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Damped least squares fit of n_kernels Gaussians to an average beat.
// init, when given, must hold exactly n_kernels kernels.
FitResult fit_template(const AverageBeat& beat, int n_kernels,
                       const std::vector<GaussianKernel>* init = nullptr,
                       double tol = 1e-10, int max_iter = 500,
                       LeadAxis lead = LeadAxis::X);

// Text formats: an average beat is one sample per line after a small header;
// a template file holds one kernel per line (amplitude width center lead).
AverageBeat load_average_beat(const std::string& path);
void save_average_beat(const AverageBeat& beat, const std::string& path);

struct TemplateFile {
    std::string source_id;
    double nominal_qt_s = 0.0;
    std::map<LeadAxis, std::vector<GaussianKernel>> leads;
};

TemplateFile load_template_file(const std::string& path);
void save_template_file(const TemplateFile& tf, const std::string& path);

// Requires all three leads to be present in the file.
MorphologyTemplate morphology_from_file(const TemplateFile& tf);
TemplateFile morphology_to_file(const MorphologyTemplate& t);

}  // namespace twakit::beats
