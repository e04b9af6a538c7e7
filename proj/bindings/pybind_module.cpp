#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "twakit/beat_model.hpp"
#include "twakit/dataset.hpp"
#include "twakit/errors.hpp"
#include "twakit/eval.hpp"
#include "twakit/noise.hpp"
#include "twakit/preprocess.hpp"
#include "twakit/rhythm.hpp"
#include "twakit/signal_utils.hpp"
#include "twakit/synthesizer.hpp"
#include "twakit/template_bank.hpp"
#include "twakit/twa.hpp"

namespace py = pybind11;
using namespace twakit;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<double> leads_to_array(const std::vector<std::vector<double>>& leads) {
    if (leads.empty()) return py::array_t<double>(std::vector<py::ssize_t>{0, 0});
    const py::ssize_t rows = static_cast<py::ssize_t>(leads.size());
    const py::ssize_t cols = static_cast<py::ssize_t>(leads[0].size());
    py::array_t<double> out({rows, cols});
    auto view = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < rows; ++i)
        for (py::ssize_t j = 0; j < cols; ++j)
            view(i, j) = leads[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return out;
}

}  // namespace

PYBIND11_MODULE(_twakit, m) {
    m.doc() = "Synthetic alternans ECG toolkit";

    py::register_exception<data_error>(m, "DataError");

    py::class_<beats::GaussianKernel>(m, "GaussianKernel")
        .def(py::init<>())
        .def(py::init([](double a, double b, double c) {
                 return beats::GaussianKernel{a, b, c};
             }),
             py::arg("amplitude_mv"), py::arg("width_rad"), py::arg("center_rad"))
        .def_readwrite("amplitude_mv", &beats::GaussianKernel::amplitude_mv)
        .def_readwrite("width_rad", &beats::GaussianKernel::width_rad)
        .def_readwrite("center_rad", &beats::GaussianKernel::center_rad)
        .def("__repr__", [](const beats::GaussianKernel& k) {
            return "GaussianKernel(a=" + std::to_string(k.amplitude_mv) +
                   ", b=" + std::to_string(k.width_rad) +
                   ", c=" + std::to_string(k.center_rad) + ")";
        });

    py::class_<beats::LeadTemplate>(m, "LeadTemplate")
        .def_property_readonly(
            "lead", [](const beats::LeadTemplate& t) { return beats::lead_axis_name(t.lead); })
        .def_readonly("kernels", &beats::LeadTemplate::kernels);

    py::class_<beats::MorphologyTemplate>(m, "MorphologyTemplate")
        .def_readonly("source_id", &beats::MorphologyTemplate::source_id)
        .def_readonly("nominal_qt_s", &beats::MorphologyTemplate::nominal_qt_s)
        .def_property_readonly("leads", [](const beats::MorphologyTemplate& t) {
            return std::vector<beats::LeadTemplate>(t.leads.begin(), t.leads.end());
        });

    py::class_<beats::AverageBeat>(m, "AverageBeat")
        .def(py::init([](const DoubleArray& samples, double fs) {
                 beats::AverageBeat b;
                 b.samples_mv = to_vector(samples);
                 b.sampling_rate_hz = fs;
                 return b;
             }),
             py::arg("samples_mv"), py::arg("sampling_rate_hz"))
        .def_property_readonly(
            "samples_mv", [](const beats::AverageBeat& b) { return to_array(b.samples_mv); })
        .def_readonly("sampling_rate_hz", &beats::AverageBeat::sampling_rate_hz);

    py::class_<beats::FitResult>(m, "FitResult")
        .def_readonly("lead_template", &beats::FitResult::lead_template)
        .def_readonly("rss", &beats::FitResult::rss)
        .def_readonly("iterations", &beats::FitResult::iterations)
        .def_readonly("converged", &beats::FitResult::converged);

    m.def(
        "evaluate_lead",
        [](const std::vector<beats::GaussianKernel>& kernels, const DoubleArray& phase) {
            const auto lt = beats::make_lead_template(beats::LeadAxis::X, kernels);
            return to_array(beats::evaluate_lead(lt, to_vector(phase)));
        },
        py::arg("kernels"), py::arg("phase"),
        "Evaluate a Gaussian kernel sum at the given beat phases.");

    m.def(
        "fit_template",
        [](const beats::AverageBeat& beat, int n_kernels, double tol, int max_iter) {
            return beats::fit_template(beat, n_kernels, nullptr, tol, max_iter);
        },
        py::arg("beat"), py::arg("n_kernels") = 9, py::arg("tol") = 1e-10,
        py::arg("max_iter") = 500);

    m.def(
        "compute_average_beat",
        [](const DoubleArray& signal, const std::vector<std::size_t>& r_peaks, double fs) {
            return beats::compute_average_beat(to_vector(signal), r_peaks, fs);
        },
        py::arg("signal"), py::arg("r_peaks"), py::arg("fs"));

    m.def("phase_grid", [](std::size_t n) { return to_array(beats::phase_grid(n)); },
          py::arg("n") = beats::kPhaseGridSize);

    m.def("builtin_templates", &synth::builtin_templates, py::arg("count") = 47);

    m.def(
        "generate_tachogram",
        [](double mean_hr, double hr_std, double br_rpm, std::size_t n_beats,
           std::uint64_t seed) {
            rhythm::RhythmConfig cfg;
            cfg.mean_hr_bpm = mean_hr;
            cfg.hr_std_bpm = hr_std;
            cfg.br_rpm = br_rpm;
            cfg.n_beats = n_beats;
            cfg.seed = seed;
            const rhythm::Tachogram t = rhythm::generate_tachogram(cfg);
            return py::make_tuple(to_array(t.rr_s), t.clamp_count);
        },
        py::arg("mean_hr_bpm"), py::arg("hr_std_bpm") = 1.0, py::arg("br_rpm") = 15.0,
        py::arg("n_beats") = 64, py::arg("seed") = 0,
        "Returns (rr_intervals_s, clamp_count).");

    py::class_<rhythm::RhythmConfig>(m, "RhythmConfig")
        .def(py::init<>())
        .def_readwrite("mean_hr_bpm", &rhythm::RhythmConfig::mean_hr_bpm)
        .def_readwrite("br_rpm", &rhythm::RhythmConfig::br_rpm)
        .def_readwrite("hr_std_bpm", &rhythm::RhythmConfig::hr_std_bpm)
        .def_readwrite("lf_hf_ratio", &rhythm::RhythmConfig::lf_hf_ratio)
        .def_readwrite("n_beats", &rhythm::RhythmConfig::n_beats)
        .def_readwrite("seed", &rhythm::RhythmConfig::seed);

    py::class_<synth::SynthesisConfig>(m, "SynthesisConfig")
        .def(py::init<>())
        .def_readwrite("morphology", &synth::SynthesisConfig::morphology)
        .def_readwrite("rhythm", &synth::SynthesisConfig::rhythm)
        .def_readwrite("twa_uv", &synth::SynthesisConfig::twa_uv)
        .def_readwrite("duration_s", &synth::SynthesisConfig::duration_s)
        .def_readwrite("fs_hz", &synth::SynthesisConfig::fs_hz)
        .def_readwrite("perturbation_frac", &synth::SynthesisConfig::perturbation_frac)
        .def_readwrite("snr_db", &synth::SynthesisConfig::snr_db)
        .def_readwrite("seed", &synth::SynthesisConfig::seed);

    py::class_<synth::EcgRecord>(m, "EcgRecord")
        .def_readonly("fs_hz", &synth::EcgRecord::fs_hz)
        .def_readonly("lead_names", &synth::EcgRecord::lead_names)
        .def_readonly("label", &synth::EcgRecord::label)
        .def_readonly("quantization_step_mv", &synth::EcgRecord::quantization_step_mv)
        .def_readonly("metadata", &synth::EcgRecord::metadata)
        .def_property_readonly(
            "leads", [](const synth::EcgRecord& r) { return leads_to_array(r.leads); })
        .def("lead", [](const synth::EcgRecord& r, const std::string& name) {
            for (std::size_t i = 0; i < r.lead_names.size(); ++i)
                if (r.lead_names[i] == name) return to_array(r.leads[i]);
            throw py::key_error("no lead named " + name);
        });

    m.def(
        "render_record",
        [](const synth::SynthesisConfig& cfg, bool lead_i_only) {
            noise::SyntheticNoiseProvider provider;
            return synth::render_record(cfg, &provider, lead_i_only);
        },
        py::arg("config"), py::arg("lead_i_only") = true,
        "Synthesize one record; synthetic noise when config.snr_db is set.");

    m.def(
        "dower_transform",
        [](const DoubleArray& x, const DoubleArray& y, const DoubleArray& z, double fs) {
            synth::VcgRecord vcg;
            vcg.fs_hz = fs;
            vcg.x = to_vector(x);
            vcg.y = to_vector(y);
            vcg.z = to_vector(z);
            const synth::EcgRecord rec = synth::dower_transform(vcg);
            return py::make_tuple(leads_to_array(rec.leads), rec.lead_names);
        },
        py::arg("x"), py::arg("y"), py::arg("z"), py::arg("fs") = 1000.0,
        "Project orthogonal leads onto the twelve standard leads.");

    m.def(
        "measure_qt",
        [](const beats::MorphologyTemplate& t) {
            const synth::QtMeasure q = synth::measure_qt(t);
            return py::make_tuple(q.q_onset_rad, q.t_offset_rad, q.cycle_fraction);
        },
        py::arg("template"),
        "Returns (q_onset_rad, t_offset_rad, qt_as_cycle_fraction).");

    m.def("qtc_bazett", &synth::qtc_bazett, py::arg("qt_s"), py::arg("rr_s"));

    m.def(
        "validate_qtc",
        [](const beats::MorphologyTemplate& t) {
            return synth::validate_qtc(t, synth::dataset_hr_grid());
        },
        py::arg("template"),
        "Corrected QT inside [0.36, 0.44] s at every rate of the 60-110 bpm grid.");

    m.def(
        "rate_adapted",
        [](const beats::MorphologyTemplate& t, double rr_s) {
            return synth::rate_adapted(t, rr_s);
        },
        py::arg("template"), py::arg("rr_s"));

    m.def(
        "apply_twa",
        [](const beats::MorphologyTemplate& t, double twa_uv, double calibration_rr_s) {
            return synth::apply_twa(t, twa_uv, calibration_rr_s);
        },
        py::arg("template"), py::arg("twa_uv"), py::arg("calibration_rr_s") = 1.0,
        "Returns (even_template, odd_template).");

    m.def(
        "remove_baseline",
        [](const DoubleArray& x, double fs) {
            return to_array(preprocess::remove_baseline(to_vector(x), fs));
        },
        py::arg("signal"), py::arg("fs"));

    m.def(
        "detect_qrs",
        [](const DoubleArray& x, double fs, const std::string& detector) {
            const std::vector<double> sig = to_vector(x);
            if (detector == "robust") return preprocess::detect_qrs_robust(sig, fs);
            if (detector == "sensitive") return preprocess::detect_qrs_sensitive(sig, fs);
            throw std::invalid_argument("detector must be 'robust' or 'sensitive'");
        },
        py::arg("signal"), py::arg("fs"), py::arg("detector") = "robust");

    m.def(
        "sqi",
        [](const DoubleArray& x, double fs) { return preprocess::sqi(to_vector(x), fs); },
        py::arg("signal"), py::arg("fs"),
        "Beat detector agreement on [0, 1].");

    m.def(
        "mix_noise",
        [](const DoubleArray& clean, double fs, double snr_db, std::uint64_t seed) {
            const std::vector<double> sig = to_vector(clean);
            Rng ma_rng(derive_seed(seed, 1));
            Rng em_rng(derive_seed(seed, 2));
            const noise::NoiseRecord ma =
                noise::synth_noise(noise::NoiseKind::MuscleArtifact, sig.size(), fs, ma_rng);
            const noise::NoiseRecord em =
                noise::synth_noise(noise::NoiseKind::ElectrodeMotion, sig.size(), fs, em_rng);
            Rng rng(seed);
            return to_array(noise::mix(sig, ma, em, snr_db, fs, rng));
        },
        py::arg("clean"), py::arg("fs"), py::arg("snr_db"), py::arg("seed") = 0,
        "Add synthetic muscle artifact and electrode motion at the requested SNR.");

    m.def(
        "measure_snr_db",
        [](const DoubleArray& clean, const DoubleArray& noisy, double fs) {
            return noise::measure_snr_db(to_vector(clean), to_vector(noisy), fs);
        },
        py::arg("clean"), py::arg("noisy"), py::arg("fs"));

    py::class_<twa::TwaMeasurement>(m, "TwaMeasurement")
        .def_readonly("amplitude_uv", &twa::TwaMeasurement::amplitude_uv)
        .def_readonly("p_value", &twa::TwaMeasurement::p_value)
        .def_readonly("mean_hr_bpm", &twa::TwaMeasurement::mean_hr_bpm)
        .def_readonly("window_index", &twa::TwaMeasurement::window_index);

    m.def(
        "sliding_twa",
        [](const DoubleArray& x, const std::vector<std::size_t>& r_peaks, double fs,
           std::uint64_t seed, std::size_t window_beats, std::size_t n_surrogates) {
            const twa::BeatMatrix bm = twa::build_beat_matrix(to_vector(x), fs, r_peaks);
            const twa::SlidingResult res =
                twa::sliding_twa(bm, seed, window_beats, 0.5, n_surrogates);
            return py::make_tuple(res.measurements, res.shortage);
        },
        py::arg("signal"), py::arg("r_peaks"), py::arg("fs"), py::arg("seed") = 0,
        py::arg("window_beats") = 60, py::arg("n_surrogates") = 99,
        "Returns (measurements, shortage_flag).");

    m.def(
        "mma_twa",
        [](const DoubleArray& x, const std::vector<std::size_t>& r_peaks, double fs) {
            const twa::BeatMatrix bm = twa::build_beat_matrix(to_vector(x), fs, r_peaks);
            return twa::mma_twa(bm);
        },
        py::arg("signal"), py::arg("r_peaks"), py::arg("fs"),
        "Peak even/odd ST-T difference in microvolts.");

    m.def(
        "bin_features",
        [](const std::vector<twa::TwaMeasurement>& windows, double alpha) {
            const twa::BinnedFeatures f = twa::bin_features(windows, alpha);
            return std::vector<double>(f.features.begin(), f.features.end());
        },
        py::arg("measurements"), py::arg("alpha") = 0.05,
        "Per heart rate bin, the largest significant alternans amplitude.");

    py::class_<eval::RocPoint>(m, "RocPoint")
        .def_readonly("fpr", &eval::RocPoint::fpr)
        .def_readonly("tpr", &eval::RocPoint::tpr)
        .def_readonly("threshold", &eval::RocPoint::threshold);

    py::class_<eval::Metrics>(m, "Metrics")
        .def_readonly("auc", &eval::Metrics::auc)
        .def_readonly("accuracy", &eval::Metrics::accuracy)
        .def_readonly("f1", &eval::Metrics::f1)
        .def_readonly("balanced_accuracy", &eval::Metrics::balanced_accuracy)
        .def_readonly("sensitivity", &eval::Metrics::sensitivity)
        .def_readonly("specificity", &eval::Metrics::specificity);

    m.def(
        "roc_metrics",
        [](const DoubleArray& scores, const std::vector<bool>& labels) {
            if (static_cast<std::size_t>(scores.size()) != labels.size())
                throw std::invalid_argument("scores and labels must have equal length");
            std::vector<eval::SubjectScore> ss(labels.size());
            const double* s = scores.data();
            for (std::size_t i = 0; i < labels.size(); ++i) {
                ss[i].id = std::to_string(i);
                ss[i].score = s[i];
                ss[i].label = labels[i];
            }
            const eval::RocCurve curve = eval::roc_auc(ss);
            const eval::RocPoint point = eval::optimal_operating_point(curve);
            return eval::summarize(ss, curve, point);
        },
        py::arg("scores"), py::arg("labels"));

    m.def(
        "chi2_independence",
        [](std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
            const eval::Chi2Result r = eval::chi2_independence({{{a, b}, {c, d}}});
            return py::make_tuple(r.statistic, r.p_value);
        },
        py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"),
        "Chi-square test on a 2x2 table [[a, b], [c, d]]; returns (statistic, p).");

    py::class_<dataset::DatasetConfig>(m, "DatasetConfig")
        .def(py::init<>())
        .def_readwrite("count", &dataset::DatasetConfig::count)
        .def_readwrite("master_seed", &dataset::DatasetConfig::master_seed)
        .def_readwrite("duration_s", &dataset::DatasetConfig::duration_s)
        .def_readwrite("fs_hz", &dataset::DatasetConfig::fs_hz)
        .def_readwrite("perturbation_frac", &dataset::DatasetConfig::perturbation_frac)
        .def_readwrite("hr_std_bpm", &dataset::DatasetConfig::hr_std_bpm)
        .def_readwrite("all_leads", &dataset::DatasetConfig::all_leads)
        .def_readwrite("folds", &dataset::DatasetConfig::folds);

    m.def("load_dataset_config", &dataset::load_config, py::arg("path"));

    m.def(
        "generate_dataset",
        [](const dataset::DatasetConfig& cfg, const std::string& out_dir, unsigned workers) {
            dataset::DatasetConfig c = cfg;
            c.apply_defaults();
            c.validate();
            const dataset::Manifest manifest = dataset::generate_dataset(c, out_dir, workers);
            py::list entries;
            for (const auto& e : manifest.entries) {
                py::dict d;
                d["record_id"] = e.record_id;
                d["path"] = e.path;
                d["label"] = e.label;
                d["fold"] = e.fold;
                d["twa_uv"] = e.twa_uv;
                d["hr_bpm"] = e.hr_bpm;
                entries.append(d);
            }
            return entries;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);

    m.def(
        "analyze_record",
        [](const synth::EcgRecord& rec, const std::string& record_id, bool label,
           std::uint64_t seed, std::size_t n_surrogates, bool aggregate) {
            dataset::AnalysisOptions opt;
            opt.seed = seed;
            opt.n_surrogates = n_surrogates;
            opt.aggregate = aggregate;
            const auto rows = dataset::analyze_record(rec, record_id, label, opt);
            py::list out;
            for (const auto& r : rows) {
                py::dict d;
                d["subject_id"] = r.subject_id;
                d["label"] = r.label;
                d["features"] = to_array(r.features);
                out.append(d);
            }
            return out;
        },
        py::arg("record"), py::arg("record_id"), py::arg("label"), py::arg("seed") = 0,
        py::arg("n_surrogates") = 99, py::arg("aggregate") = false);

    m.def("load_record", &dataset::load_record, py::arg("header_path"));
    m.def("feature_names", &dataset::feature_names);
    m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("index"));
}
