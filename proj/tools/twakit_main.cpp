#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "twakit/dataset.hpp"
#include "twakit/errors.hpp"
#include "twakit/eval.hpp"
#include "twakit/preprocess.hpp"
#include "twakit/template_bank.hpp"

namespace fs = std::filesystem;
using namespace twakit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int run_fit(const std::vector<std::string>& beat_files, const std::string& out_dir,
            int n_kernels, double tol, int max_iter) {
    fs::create_directories(out_dir);
    for (const auto& path : beat_files) {
        const beats::AverageBeat beat = beats::load_average_beat(path);
        const beats::FitResult fit = beats::fit_template(beat, n_kernels, nullptr, tol, max_iter);

        beats::TemplateFile tf;
        tf.source_id = fs::path(path).stem().string();
        tf.leads[fit.lead_template.lead] = fit.lead_template.kernels;
        const std::string out_path =
            (fs::path(out_dir) / (tf.source_id + ".tmpl")).string();
        beats::save_template_file(tf, out_path);
        std::printf("%s: rss %.6g, %s after %d iterations -> %s\n", path.c_str(), fit.rss,
                    fit.converged ? "converged" : "not converged", fit.iterations,
                    out_path.c_str());
    }
    return kExitOk;
}

int run_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, std::optional<unsigned> workers,
                 bool stream, bool all_leads, const dataset::AnalysisOptions& opt,
                 const std::string& features_out) {
    dataset::DatasetConfig cfg = dataset::load_config(config_path);
    if (seed) cfg.master_seed = *seed;
    if (all_leads) cfg.all_leads = true;
    cfg.validate();
    const unsigned n_workers = dataset::resolve_workers(workers);

    if (!stream) {
        fs::create_directories(out_dir);
        const dataset::Manifest m = dataset::generate_dataset(cfg, out_dir, n_workers);
        std::printf("wrote %zu records to %s\n", m.entries.size(), out_dir.c_str());
        return kExitOk;
    }

    // Stream mode: analyze records as they are produced, keep nothing on disk.
    std::vector<eval::FeatureRow> rows;
    dataset::RecordSink sink = [&](const dataset::RecordPlan& plan,
                                   const synth::EcgRecord& rec) {
        auto r = dataset::analyze_record(rec, plan.record_id, plan.label, opt);
        rows.insert(rows.end(), r.begin(), r.end());
    };
    dataset::generate_dataset(cfg, out_dir, n_workers, sink);
    const auto names = dataset::feature_names();
    eval::write_feature_csv(rows, names, features_out);
    std::printf("streamed %zu records into %s (%zu feature rows)\n", cfg.count,
                features_out.c_str(), rows.size());
    return kExitOk;
}

int run_analyze(const std::vector<std::string>& inputs, const std::string& out_path,
                const dataset::AnalysisOptions& opt, std::optional<unsigned> workers) {
    struct Task {
        std::string header;
        std::string record_id;
        bool label = false;
    };
    std::vector<Task> tasks;
    for (const auto& input : inputs) {
        if (fs::is_directory(input)) {
            const dataset::Manifest m =
                dataset::load_manifest((fs::path(input) / "manifest.json").string());
            for (const auto& e : m.entries)
                tasks.push_back({(fs::path(input) / e.path).string(), e.record_id, e.label});
        } else {
            tasks.push_back({input, fs::path(input).stem().string(), false});
        }
    }
    if (tasks.empty()) throw data_error("nothing to analyze");

    // Headers carry the ground truth when records came straight from files.
    std::vector<std::vector<eval::FeatureRow>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size() || first_error) break;
            try {
                const synth::EcgRecord rec = dataset::load_record(tasks[i].header);
                results[i] =
                    dataset::analyze_record(rec, tasks[i].record_id, rec.label, opt);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                break;
            }
        }
    };
    const unsigned n_workers = dataset::resolve_workers(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::vector<eval::FeatureRow> rows;
    for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
    eval::write_feature_csv(rows, dataset::feature_names(), out_path);
    std::printf("analyzed %zu records -> %s (%zu rows)\n", tasks.size(), out_path.c_str(),
                rows.size());
    return kExitOk;
}

int run_evaluate(const std::string& features_path, const std::string& out_dir,
                 const std::string& model_name, double l2, std::size_t permutations,
                 std::uint64_t seed) {
    const std::vector<eval::FeatureRow> rows = eval::read_feature_csv(features_path);
    const std::vector<eval::Subject> subjects = eval::group_rows(rows);
    const eval::Trainer trainer = eval::make_logistic_trainer(l2);

    const eval::LootResult lr = eval::loot(subjects, trainer, seed);
    for (const auto& id : lr.excluded)
        std::fprintf(stderr, "warning: subject %s has no windows, excluded\n", id.c_str());

    const eval::RocCurve curve = eval::roc_auc(lr.scores);
    const eval::RocPoint point = eval::optimal_operating_point(curve);
    const eval::Metrics metrics = eval::summarize(lr.scores, curve, point);

    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "metrics.csv");
        out << "model,auc,accuracy,f1,balanced_accuracy,sensitivity,specificity\n";
        out.precision(6);
        out << model_name << "," << metrics.auc << "," << metrics.accuracy << ","
            << metrics.f1 << "," << metrics.balanced_accuracy << "," << metrics.sensitivity
            << "," << metrics.specificity << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "roc.csv");
        out << "fpr,tpr,threshold\n";
        out.precision(17);
        for (const auto& p : curve.points)
            out << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "scores.csv");
        out << "record_id,score,label\n";
        out.precision(17);
        for (const auto& s : lr.scores)
            out << s.id << "," << s.score << "," << (s.label ? 1 : 0) << "\n";
    }

    std::printf("%s: AUC %.3f, Acc %.3f, F1 %.3f, BAcc %.3f (operating point fpr %.3f tpr %.3f)\n",
                model_name.c_str(), metrics.auc, metrics.accuracy, metrics.f1,
                metrics.balanced_accuracy, point.fpr, point.tpr);

    try {
        const eval::Chi2Result chi = eval::chi2_independence(
            {{{metrics.tp, metrics.fn}, {metrics.fp, metrics.tn}}});
        std::printf("chi-square %.4g, p = %.4g\n", chi.statistic, chi.p_value);
    } catch (const std::invalid_argument&) {
        std::printf("chi-square: not defined (zero marginal)\n");
    }

    if (permutations > 0) {
        const eval::PermutationResult perm =
            eval::permutation_significance(subjects, trainer, permutations, seed);
        std::ofstream out(fs::path(out_dir) / "permutation.csv");
        out << "observed_auc,p_value,n_reps\n";
        out.precision(17);
        out << perm.observed_auc << "," << perm.p_value << "," << permutations << "\n";
        std::printf("permutation test: observed AUC %.3f, p = %.3f (%zu reps)\n",
                    perm.observed_auc, perm.p_value, permutations);
    }
    return kExitOk;
}

int run_report(const std::vector<std::string>& metrics_files, const std::string& out_path) {
    std::ofstream out(out_path);
    if (!out) throw data_error("cannot write report: " + out_path);
    out << "model,auc,accuracy,f1,balanced_accuracy,sensitivity,specificity\n";
    for (const auto& path : metrics_files) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open metrics file: " + path);
        std::string line;
        if (!std::getline(in, line)) throw data_error("empty metrics file: " + path);
        while (std::getline(in, line))
            if (!line.empty()) out << line << "\n";
    }
    std::printf("combined %zu metric files -> %s\n", metrics_files.size(), out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic alternans ECG toolkit"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "Fit beat templates from averaged beats");
    std::vector<std::string> fit_inputs;
    std::string fit_out = "templates";
    int fit_kernels = 9;
    double fit_tol = 1e-10;
    int fit_max_iter = 500;
    fit->add_option("beats", fit_inputs, "Average beat files")->required();
    fit->add_option("--out", fit_out, "Output directory");
    fit->add_option("--kernels", fit_kernels, "Kernels per lead");
    fit->add_option("--tol", fit_tol, "Relative improvement tolerance");
    fit->add_option("--max-iter", fit_max_iter, "Iteration cap");

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a labeled dataset");
    std::string gen_config, gen_out = "dataset", gen_features = "features.csv";
    std::optional<std::uint64_t> gen_seed;
    std::optional<unsigned> gen_workers;
    bool gen_stream = false, gen_all_leads = false;
    dataset::AnalysisOptions gen_opt;
    gen->add_option("--config", gen_config, "Dataset config file")->required();
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--seed", gen_seed, "Override the master seed");
    gen->add_option("--workers", gen_workers, "Worker threads (default: TWAKIT_WORKERS or cores)");
    gen->add_flag("--stream", gen_stream, "Analyze records in memory instead of writing them");
    gen->add_flag("--all-leads", gen_all_leads, "Store all twelve leads");
    gen->add_option("--features-out", gen_features, "Feature CSV for --stream");
    gen->add_option("--surrogates", gen_opt.n_surrogates, "Surrogates per analysis window");

    // analyze
    auto* ana = app.add_subcommand("analyze", "Detect alternans and emit features");
    std::vector<std::string> ana_inputs;
    std::string ana_out = "features.csv";
    std::optional<unsigned> ana_workers;
    dataset::AnalysisOptions ana_opt;
    ana->add_option("inputs", ana_inputs, "Dataset directory or record headers")->required();
    ana->add_option("--out", ana_out, "Feature CSV path");
    ana->add_option("--workers", ana_workers, "Worker threads");
    ana->add_option("--surrogates", ana_opt.n_surrogates, "Surrogates per window");
    ana->add_option("--alpha", ana_opt.alpha, "Significance level");
    ana->add_option("--seed", ana_opt.seed, "Analysis seed");
    ana->add_flag("--aggregate", ana_opt.aggregate, "One pooled row per record");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Cross validate features and report metrics");
    std::string ev_features, ev_out = "evaluation", ev_model = "baseline";
    double ev_l2 = 1e-3;
    std::size_t ev_perm = 0;
    std::uint64_t ev_seed = 0;
    ev->add_option("--features", ev_features, "Feature CSV")->required();
    ev->add_option("--out", ev_out, "Output directory");
    ev->add_option("--model-name", ev_model, "Name in the metrics table");
    ev->add_option("--l2", ev_l2, "Ridge penalty");
    ev->add_option("--permutations", ev_perm, "Label permutation count (0 = skip)");
    ev->add_option("--seed", ev_seed, "Evaluation seed");

    // report
    auto* rep = app.add_subcommand("report", "Combine metric tables");
    std::vector<std::string> rep_inputs;
    std::string rep_out = "report.csv";
    rep->add_option("metrics", rep_inputs, "metrics.csv files")->required();
    rep->add_option("--out", rep_out, "Combined table path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (fit->parsed())
            return run_fit(fit_inputs, fit_out, fit_kernels, fit_tol, fit_max_iter);
        if (gen->parsed())
            return run_generate(gen_config, gen_out, gen_seed, gen_workers, gen_stream,
                                gen_all_leads, gen_opt, gen_features);
        if (ana->parsed()) return run_analyze(ana_inputs, ana_out, ana_opt, ana_workers);
        if (ev->parsed())
            return run_evaluate(ev_features, ev_out, ev_model, ev_l2, ev_perm, ev_seed);
        if (rep->parsed()) return run_report(rep_inputs, rep_out);
    } catch (const data_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
