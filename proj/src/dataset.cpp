#include "twakit/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "twakit/errors.hpp"
#include "twakit/preprocess.hpp"
#include "twakit/template_bank.hpp"
#include "twakit/twa.hpp"

namespace fs = std::filesystem;

namespace twakit::dataset {

namespace {

std::vector<double> make_grid(double lo, double step, double hi) {
    std::vector<double> g;
    for (double v = lo; v <= hi + 1e-9; v += step) g.push_back(v);
    return g;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return {};
    return s.substr(a, b - a + 1);
}

std::vector<double> parse_grid(const std::string& text, const std::string& key) {
    std::vector<double> g;
    try {
        if (text.find(':') != std::string::npos) {
            double lo, step, hi;
            char c1, c2;
            std::istringstream ss(text);
            if (!(ss >> lo >> c1 >> step >> c2 >> hi) || c1 != ':' || c2 != ':')
                throw data_error("");
            if (!(step > 0.0) || hi < lo) throw data_error("");
            return make_grid(lo, step, hi);
        }
        std::istringstream ss(text);
        std::string cell;
        while (std::getline(ss, cell, ',')) g.push_back(std::stod(trim(cell)));
    } catch (const std::exception&) {
        throw data_error("bad grid for '" + key + "': " + text);
    }
    if (g.empty()) throw data_error("empty grid for '" + key + "'");
    return g;
}

std::uint64_t fnv1a_str(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

void DatasetConfig::apply_defaults() {
    if (hr_grid.empty()) hr_grid = make_grid(60.0, 2.0, 110.0);
    if (br_grid.empty()) br_grid = make_grid(12.0, 1.0, 20.0);
    if (twa_grid.empty()) twa_grid = make_grid(20.0, 1.0, 100.0);
}

void DatasetConfig::validate() const {
    if (count < 10) throw std::invalid_argument("record count must be at least 10");
    if (count % 2 != 0) throw std::invalid_argument("record count must be even");
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
    if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
    if (!(perturbation_frac >= 0.0 && perturbation_frac <= 0.10))
        throw std::invalid_argument("perturbation fraction outside [0, 0.1]");
    if (hr_std_bpm < 0.0) throw std::invalid_argument("hr_std must be nonnegative");
    if (hr_grid.empty() || br_grid.empty() || twa_grid.empty())
        throw std::invalid_argument("parameter grids must be nonempty");
    for (double hr : hr_grid)
        if (!(hr >= 20.0 && hr <= 250.0))
            throw std::invalid_argument("heart rate grid outside [20, 250]");
    for (double br : br_grid)
        if (!(br > 0.0)) throw std::invalid_argument("breathing grid must be positive");
    for (double twa : twa_grid)
        if (!(twa >= synth::kTwaMinUv && twa <= synth::kTwaMaxUv))
            throw std::invalid_argument("alternans grid outside [20, 100] uV");
    if (snr_range_db && !(snr_range_db->first <= snr_range_db->second))
        throw std::invalid_argument("snr range is inverted");
    if (folds < 2 || static_cast<std::size_t>(folds) > count / 2)
        throw std::invalid_argument("fold count must lie in [2, count/2]");
}

DatasetConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open config: " + path);
    DatasetConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw data_error("expected key = value on line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "count") cfg.count = std::stoul(value);
            else if (key == "seed") cfg.master_seed = std::stoull(value);
            else if (key == "duration") cfg.duration_s = std::stod(value);
            else if (key == "fs") cfg.fs_hz = std::stod(value);
            else if (key == "perturbation") cfg.perturbation_frac = std::stod(value);
            else if (key == "hr_std") cfg.hr_std_bpm = std::stod(value);
            else if (key == "hr_grid") cfg.hr_grid = parse_grid(value, key);
            else if (key == "br_grid") cfg.br_grid = parse_grid(value, key);
            else if (key == "twa_grid") cfg.twa_grid = parse_grid(value, key);
            else if (key == "snr_db") {
                if (value == "none") {
                    cfg.snr_range_db.reset();
                } else {
                    const auto g = parse_grid(value, key);
                    cfg.snr_range_db = std::make_pair(g.front(), g.back());
                }
            } else if (key == "templates_dir") cfg.templates_dir = value;
            else if (key == "noise_dir") cfg.noise_dir = value;
            else if (key == "all_leads") cfg.all_leads = (value == "true" || value == "1");
            else if (key == "folds") cfg.folds = std::stoi(value);
            else throw data_error("unknown config key '" + key + "'");
        } catch (const data_error&) {
            throw;
        } catch (const std::exception&) {
            throw data_error("bad value for '" + key + "' on line " + std::to_string(lineno));
        }
    }
    cfg.apply_defaults();
    return cfg;
}

void save_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = m.format_version;
    j["master_seed"] = m.master_seed;
    auto& records = j["records"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json r;
        r["record_id"] = e.record_id;
        r["path"] = e.path;
        r["label"] = e.label;
        r["fold"] = e.fold;
        r["hr_bpm"] = e.hr_bpm;
        r["br_rpm"] = e.br_rpm;
        r["twa_uv"] = e.twa_uv;
        if (std::isnan(e.snr_db)) r["snr_db"] = nullptr;
        else r["snr_db"] = e.snr_db;
        r["seed"] = e.seed;
        r["source_id"] = e.source_id;
        records.push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw data_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw data_error("write failed: " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw data_error("malformed manifest " + path + ": " + e.what());
    }
    Manifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        for (const auto& r : j.at("records")) {
            ManifestEntry e;
            e.record_id = r.at("record_id").get<std::string>();
            e.path = r.at("path").get<std::string>();
            e.label = r.at("label").get<bool>();
            e.fold = r.at("fold").get<int>();
            e.hr_bpm = r.at("hr_bpm").get<double>();
            e.br_rpm = r.at("br_rpm").get<double>();
            e.twa_uv = r.at("twa_uv").get<double>();
            e.snr_db = r.at("snr_db").is_null() ? std::nan("") : r.at("snr_db").get<double>();
            e.seed = r.at("seed").get<std::uint64_t>();
            e.source_id = r.at("source_id").get<std::string>();
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw data_error("manifest field error in " + path + ": " + e.what());
    }
    return m;
}

namespace {

void write_f32_payload(const synth::EcgRecord& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write payload: " + path);
    std::vector<unsigned char> buf;
    buf.reserve(rec.leads.size() * rec.leads[0].size() * 4);
    for (const auto& lead : rec.leads) {
        for (double v : lead) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof(bits));
            if constexpr (std::endian::native == std::endian::big) {
                bits = ((bits & 0xff) << 24) | ((bits & 0xff00) << 8) |
                       ((bits >> 8) & 0xff00) | (bits >> 24);
            }
            buf.push_back(static_cast<unsigned char>(bits & 0xff));
            buf.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
            buf.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
            buf.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace

void save_record(const synth::EcgRecord& rec, const std::string& dir,
                 const std::string& record_id) {
    if (rec.leads.empty() || rec.leads[0].empty())
        throw std::invalid_argument("record has no samples");
    const fs::path base = fs::path(dir) / record_id;
    const std::string payload_name = record_id + ".f32";

    std::ofstream hdr(base.string() + ".hdr");
    if (!hdr) throw data_error("cannot write header: " + base.string() + ".hdr");
    hdr << "twakit_record 1\n";
    hdr << "record_id = " << record_id << "\n";
    hdr.precision(17);
    hdr << "fs = " << rec.fs_hz << "\n";
    hdr << "n_samples = " << rec.leads[0].size() << "\n";
    hdr << "n_leads = " << rec.leads.size() << "\n";
    hdr << "leads =";
    for (const auto& name : rec.lead_names) hdr << " " << name;
    hdr << "\n";
    hdr << "label = " << (rec.label ? 1 : 0) << "\n";
    hdr << "quantization_step = " << rec.quantization_step_mv << "\n";
    hdr << "payload = " << payload_name << "\n";
    for (const auto& [k, v] : rec.metadata) hdr << "meta." << k << " = " << v << "\n";
    if (!hdr) throw data_error("write failed: " + base.string() + ".hdr");

    write_f32_payload(rec, (fs::path(dir) / payload_name).string());
}

synth::EcgRecord load_record(const std::string& header_path) {
    std::ifstream in(header_path);
    if (!in) throw data_error("cannot open record header: " + header_path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "twakit_record 1")
        throw data_error("not a record header: " + header_path);

    synth::EcgRecord rec;
    std::size_t n_samples = 0, n_leads = 0;
    std::string payload;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "fs") rec.fs_hz = std::stod(value);
            else if (key == "n_samples") n_samples = std::stoul(value);
            else if (key == "n_leads") n_leads = std::stoul(value);
            else if (key == "label") rec.label = value == "1";
            else if (key == "quantization_step") rec.quantization_step_mv = std::stod(value);
            else if (key == "payload") payload = value;
            else if (key == "leads") {
                std::istringstream ss(value);
                std::string name;
                while (ss >> name) rec.lead_names.push_back(name);
            } else if (key.rfind("meta.", 0) == 0) {
                rec.metadata[key.substr(5)] = value;
            }
        } catch (const std::exception&) {
            throw data_error("bad header value for '" + key + "' in " + header_path);
        }
    }
    if (!(rec.fs_hz > 0.0) || n_samples == 0 || n_leads == 0 || payload.empty() ||
        rec.lead_names.size() != n_leads)
        throw data_error("incomplete record header: " + header_path);

    const fs::path payload_path = fs::path(header_path).parent_path() / payload;
    std::ifstream pin(payload_path, std::ios::binary);
    if (!pin) throw data_error("cannot open payload: " + payload_path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(pin)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() != n_samples * n_leads * 4)
        throw data_error("payload size mismatch: " + payload_path.string());

    rec.leads.assign(n_leads, std::vector<double>(n_samples));
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_leads; ++l) {
        for (std::size_t i = 0; i < n_samples; ++i, off += 4) {
            std::uint32_t bits = static_cast<std::uint8_t>(bytes[off]) |
                                 (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + 1])) << 8) |
                                 (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + 2])) << 16) |
                                 (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + 3])) << 24);
            float f;
            std::memcpy(&f, &bits, sizeof(f));
            rec.leads[l][i] = static_cast<double>(f);
        }
    }
    return rec;
}

std::vector<RecordPlan> plan_records(const DatasetConfig& cfg, std::size_t n_templates) {
    if (n_templates == 0) throw std::invalid_argument("need at least one morphology");
    std::vector<RecordPlan> plans;
    plans.reserve(cfg.count);
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < cfg.count; ++i) {
        RecordPlan p;
        p.index = i;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "rec%06zu", i);
        p.record_id = buf;
        p.label = (i % 2 == 0);  // alternating keeps any prefix nearly balanced

        // Stratified folds: positives cycle 0,1,..; negatives start half-way.
        if (p.label) p.fold = static_cast<int>(n_pos++ % static_cast<std::size_t>(cfg.folds));
        else
            p.fold = static_cast<int>((n_neg++ + static_cast<std::size_t>(cfg.folds) / 2) %
                                      static_cast<std::size_t>(cfg.folds));

        Rng rng(derive_seed(cfg.master_seed, i));
        p.hr_bpm = cfg.hr_grid[rng.below(cfg.hr_grid.size())];
        p.br_rpm = cfg.br_grid[rng.below(cfg.br_grid.size())];
        p.twa_uv = p.label ? cfg.twa_grid[rng.below(cfg.twa_grid.size())] : 0.0;
        if (cfg.snr_range_db)
            p.snr_db = rng.uniform(cfg.snr_range_db->first, cfg.snr_range_db->second);
        p.template_index = rng.below(n_templates);
        p.seed = rng.subseed();
        plans.push_back(std::move(p));
    }
    return plans;
}

synth::SynthesisConfig plan_to_synthesis(const RecordPlan& plan, const DatasetConfig& cfg,
                                         const beats::MorphologyTemplate& morphology) {
    synth::SynthesisConfig sc;
    sc.morphology = morphology;
    sc.rhythm.mean_hr_bpm = plan.hr_bpm;
    sc.rhythm.br_rpm = plan.br_rpm;
    sc.rhythm.hr_std_bpm = cfg.hr_std_bpm;
    sc.twa_uv = plan.twa_uv;
    sc.duration_s = cfg.duration_s;
    sc.fs_hz = cfg.fs_hz;
    sc.perturbation_frac = cfg.perturbation_frac;
    sc.snr_db = plan.snr_db;
    sc.seed = plan.seed;
    return sc;
}

namespace {

std::vector<beats::MorphologyTemplate> load_template_dir(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".tmpl" || ext == ".template") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<beats::MorphologyTemplate> out;
    for (const auto& f : files)
        out.push_back(beats::morphology_from_file(beats::load_template_file(f)));
    if (out.empty()) throw data_error("no template files (*.tmpl) in " + dir);
    return out;
}

std::unique_ptr<noise::NoiseProvider> make_noise_provider(const DatasetConfig& cfg) {
    if (!cfg.snr_range_db) return nullptr;
    if (cfg.noise_dir.empty()) return std::make_unique<noise::SyntheticNoiseProvider>();

    auto bank = std::make_unique<noise::BankNoiseProvider>();
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(cfg.noise_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const std::string stem = fs::path(f).stem().string();
        noise::NoiseKind kind;
        if (stem.rfind("ma", 0) == 0) kind = noise::NoiseKind::MuscleArtifact;
        else if (stem.rfind("em", 0) == 0) kind = noise::NoiseKind::ElectrodeMotion;
        else if (stem.rfind("bw", 0) == 0) kind = noise::NoiseKind::BaselineWander;
        else continue;
        bank->add(noise::load_noise_text(f, kind, cfg.fs_hz));
    }
    if (!bank->has(noise::NoiseKind::MuscleArtifact) ||
        !bank->has(noise::NoiseKind::ElectrodeMotion))
        throw data_error("noise dir needs ma*.txt and em*.txt records: " + cfg.noise_dir);
    return bank;
}

}  // namespace

Manifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir,
                          unsigned workers, const RecordSink& sink) {
    cfg.validate();
    if (workers == 0) workers = 1;

    const std::vector<beats::MorphologyTemplate> bank =
        cfg.templates_dir.empty() ? synth::builtin_templates()
                                  : load_template_dir(cfg.templates_dir);
    const std::unique_ptr<noise::NoiseProvider> provider = make_noise_provider(cfg);

    const std::vector<RecordPlan> plans = plan_records(cfg, bank.size());

    const fs::path records_dir = fs::path(out_dir) / "records";
    if (!sink) fs::create_directories(records_dir);

    Manifest manifest;
    manifest.master_seed = cfg.master_seed;
    manifest.entries.resize(plans.size());

    auto render_one = [&](const RecordPlan& plan) {
        const synth::SynthesisConfig sc =
            plan_to_synthesis(plan, cfg, bank[plan.template_index]);
        synth::EcgRecord rec = synth::render_record(sc, provider.get(), !cfg.all_leads);
        rec.metadata["record_id"] = plan.record_id;
        rec.metadata["fold"] = std::to_string(plan.fold);
        return rec;
    };

    auto fill_entry = [&](const RecordPlan& plan) {
        ManifestEntry e;
        e.record_id = plan.record_id;
        e.path = "records/" + plan.record_id + ".hdr";
        e.label = plan.label;
        e.fold = plan.fold;
        e.hr_bpm = plan.hr_bpm;
        e.br_rpm = plan.br_rpm;
        e.twa_uv = plan.twa_uv;
        e.snr_db = plan.snr_db ? *plan.snr_db : std::nan("");
        e.seed = plan.seed;
        e.source_id = bank[plan.template_index].source_id;
        return e;
    };

    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto record_error = [&] {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
    };

    if (!sink) {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= plans.size() || first_error) break;
                try {
                    const synth::EcgRecord rec = render_one(plans[i]);
                    save_record(rec, records_dir.string(), plans[i].record_id);
                    manifest.entries[i] = fill_entry(plans[i]);
                } catch (...) {
                    record_error();
                    break;
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
        save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
        return manifest;
    }

    // Streaming: render chunks in parallel, hand records over in index order.
    const std::size_t chunk = std::max<std::size_t>(workers * 4, 8);
    for (std::size_t base = 0; base < plans.size(); base += chunk) {
        const std::size_t end = std::min(base + chunk, plans.size());
        std::vector<synth::EcgRecord> buf(end - base);
        std::atomic<std::size_t> next{base};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= end || first_error) break;
                try {
                    buf[i - base] = render_one(plans[i]);
                } catch (...) {
                    record_error();
                    break;
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
        for (std::size_t i = base; i < end; ++i) {
            manifest.entries[i] = fill_entry(plans[i]);
            sink(plans[i], buf[i - base]);
        }
    }
    return manifest;
}

std::vector<eval::FeatureRow> analyze_record(const synth::EcgRecord& rec,
                                             const std::string& record_id, bool label,
                                             const AnalysisOptions& opt) {
    if (rec.leads.empty()) throw std::invalid_argument("record has no leads");
    std::size_t lead_idx = 0;
    for (std::size_t i = 0; i < rec.lead_names.size(); ++i)
        if (rec.lead_names[i] == "I") {
            lead_idx = i;
            break;
        }

    const std::vector<double> clean =
        preprocess::remove_baseline(rec.leads[lead_idx], rec.fs_hz);
    const std::vector<std::size_t> peaks = preprocess::detect_qrs_robust(clean, rec.fs_hz);

    const std::uint64_t seed = splitmix64(opt.seed ^ fnv1a_str(record_id));
    std::vector<twa::TwaMeasurement> measurements;
    try {
        const twa::BeatMatrix bm = twa::build_beat_matrix(clean, rec.fs_hz, peaks);
        measurements =
            twa::sliding_twa(bm, seed, 60, 0.5, opt.n_surrogates).measurements;
    } catch (const insufficient_data_error&) {
        // Undetectable rhythm: fall through to a single all-zero row.
    }

    std::vector<eval::FeatureRow> rows;
    if (measurements.empty()) {
        eval::FeatureRow row;
        row.subject_id = record_id;
        row.features.assign(twa::kHrBinCount, 0.0);
        row.label = label;
        rows.push_back(std::move(row));
        return rows;
    }

    if (opt.aggregate) {
        const twa::BinnedFeatures bf = twa::bin_features(measurements, opt.alpha);
        eval::FeatureRow row;
        row.subject_id = record_id;
        row.features.assign(bf.features.begin(), bf.features.end());
        row.label = label;
        rows.push_back(std::move(row));
        return rows;
    }

    for (const auto& meas : measurements) {
        const twa::TwaMeasurement one[1] = {meas};
        const twa::BinnedFeatures bf = twa::bin_features(one, opt.alpha);
        eval::FeatureRow row;
        row.subject_id = record_id;
        row.features.assign(bf.features.begin(), bf.features.end());
        row.label = label;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> feature_names() {
    return {"twa_hr_30_60",  "twa_hr_60_70",  "twa_hr_70_80",
            "twa_hr_80_90",  "twa_hr_90_100", "twa_hr_100_110"};
}

unsigned resolve_workers(std::optional<unsigned> cli_value) {
    if (cli_value && *cli_value > 0) return *cli_value;
    if (const char* env = std::getenv("TWAKIT_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

}  // namespace twakit::dataset
