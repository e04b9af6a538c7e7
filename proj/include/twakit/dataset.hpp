#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twakit/eval.hpp"
#include "twakit/noise.hpp"
#include "twakit/synthesizer.hpp"

namespace twakit::dataset {

struct DatasetConfig {
    std::size_t count = 0;            // total records, half of them alternans
    std::uint64_t master_seed = 0;
    double duration_s = 70.0;
    double fs_hz = 1000.0;
    double perturbation_frac = 0.045;
    double hr_std_bpm = 1.0;
    std::vector<double> hr_grid;      // defaults 60..110 step 2
    std::vector<double> br_grid;      // defaults 12..20 step 1
    std::vector<double> twa_grid;     // defaults 20..100 step 1, uV
    std::optional<std::pair<double, double>> snr_range_db =
        std::make_pair(15.0, 30.0);   // nullopt = clean records
    std::string templates_dir;        // empty = built-in bank
    std::string noise_dir;            // empty = synthetic noise
    bool all_leads = false;
    int folds = 10;

    void apply_defaults();
    void validate() const;  // throws std::invalid_argument
};

// key = value lines, '#' comments. Grids accept "lo:step:hi" or a comma list.
DatasetConfig load_config(const std::string& path);

struct ManifestEntry {
    std::string record_id;
    std::string path;  // header file, relative to the manifest
    bool label = false;
    int fold = 0;
    double hr_bpm = 0.0;
    double br_rpm = 0.0;
    double twa_uv = 0.0;
    double snr_db = 0.0;  // NaN when clean
    std::uint64_t seed = 0;
    std::string source_id;
};

struct Manifest {
    int format_version = 1;
    std::uint64_t master_seed = 0;
    std::vector<ManifestEntry> entries;
};

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

// Record files: a text header next to a float32 little-endian payload,
// lead-major order.
void save_record(const synth::EcgRecord& rec, const std::string& dir,
                 const std::string& record_id);
synth::EcgRecord load_record(const std::string& header_path);

// The sampled grid parameters of one planned record.
struct RecordPlan {
    std::size_t index = 0;
    std::string record_id;
    bool label = false;
    int fold = 0;
    double hr_bpm = 0.0;
    double br_rpm = 0.0;
    double twa_uv = 0.0;
    std::optional<double> snr_db;
    std::uint64_t seed = 0;
    std::size_t template_index = 0;
};

// Deterministic plan for every record: per-record seeds derived from the
// master seed and the record index, stratified folds, half the records
// labeled positive.
std::vector<RecordPlan> plan_records(const DatasetConfig& cfg, std::size_t n_templates);

synth::SynthesisConfig plan_to_synthesis(const RecordPlan& plan, const DatasetConfig& cfg,
                                         const beats::MorphologyTemplate& morphology);

using RecordSink =
    std::function<void(const RecordPlan&, const synth::EcgRecord&)>;

// Renders every planned record with the given worker count. When sink is
// set the records stream to it (in index order) instead of being written.
Manifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir,
                          unsigned workers, const RecordSink& sink = nullptr);

struct AnalysisOptions {
    std::uint64_t seed = 0;
    std::size_t n_surrogates = 99;
    double alpha = 0.05;
    bool aggregate = false;  // one pooled row per record instead of per window
};

// Lead I analysis: baseline removal, beat detection, sliding alternans
// windows, heart rate binned features. One feature row per analysis window
// (or one per record with aggregate set).
std::vector<eval::FeatureRow> analyze_record(const synth::EcgRecord& rec,
                                             const std::string& record_id, bool label,
                                             const AnalysisOptions& opt);

std::vector<std::string> feature_names();

unsigned resolve_workers(std::optional<unsigned> cli_value);

}  // namespace twakit::dataset
