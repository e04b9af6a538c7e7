#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "twakit/dataset.hpp"
#include "twakit/errors.hpp"
#include "twakit/template_bank.hpp"

using namespace twakit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

dataset::DatasetConfig small_clean_config() {
    dataset::DatasetConfig cfg;
    cfg.count = 10;
    cfg.master_seed = 7;
    cfg.duration_s = 10.0;
    cfg.fs_hz = 250.0;
    cfg.hr_grid = {60.0};
    cfg.br_grid = {15.0};
    cfg.twa_grid = {60.0};
    cfg.snr_range_db.reset();
    cfg.folds = 5;
    cfg.apply_defaults();
    return cfg;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

synth::EcgRecord tiny_record() {
    synth::EcgRecord rec;
    rec.fs_hz = 100.0;
    rec.lead_names = {"I", "II"};
    rec.leads = {{0.125, -0.5, 0.75}, {1.0, 2.0, -3.0}};
    rec.label = true;
    rec.metadata["source_id"] = "demo";
    rec.metadata["twa_uv"] = "60";
    return rec;
}

}  // namespace

TEST_CASE("config files parse every key, both grid spellings included") {
    TempDir dir("twakit_cfg_test");
    const auto path = dir.path / "dataset.cfg";
    {
        std::ofstream out(path);
        out << "# demo dataset\n";
        out << "count = 20\n";
        out << "seed = 99\n";
        out << "duration = 30  # seconds\n";
        out << "fs = 250\n";
        out << "perturbation = 0.03\n";
        out << "hr_std = 1.5\n";
        out << "hr_grid = 60:2:110\n";
        out << "br_grid = 12,14,16\n";
        out << "twa_grid = 20:10:100\n";
        out << "snr_db = 15,30\n";
        out << "all_leads = true\n";
        out << "folds = 10\n";
    }
    const auto cfg = dataset::load_config(path.string());
    CHECK(cfg.count == 20);
    CHECK(cfg.master_seed == 99);
    CHECK(cfg.duration_s == 30.0);
    CHECK(cfg.fs_hz == 250.0);
    CHECK(cfg.perturbation_frac == 0.03);
    CHECK(cfg.hr_std_bpm == 1.5);
    REQUIRE(cfg.hr_grid.size() == 26);
    CHECK(cfg.hr_grid.front() == 60.0);
    CHECK(cfg.hr_grid.back() == 110.0);
    CHECK(cfg.br_grid == std::vector<double>{12.0, 14.0, 16.0});
    REQUIRE(cfg.twa_grid.size() == 9);
    CHECK(cfg.twa_grid.back() == 100.0);
    REQUIRE(cfg.snr_range_db.has_value());
    CHECK(cfg.snr_range_db->first == 15.0);
    CHECK(cfg.snr_range_db->second == 30.0);
    CHECK(cfg.all_leads);
    CHECK(cfg.folds == 10);
    CHECK_NOTHROW(cfg.validate());

    SUBCASE("clean datasets spell it none") {
        std::ofstream out(path);
        out << "count = 10\nsnr_db = none\n";
        out.close();
        const auto c = dataset::load_config(path.string());
        CHECK_FALSE(c.snr_range_db.has_value());
        // Grids fall back to their defaults.
        CHECK(c.hr_grid.size() == 26);
        CHECK(c.br_grid.size() == 9);
        CHECK(c.twa_grid.size() == 81);
    }
    SUBCASE("unknown keys are rejected") {
        std::ofstream out(path);
        out << "records = 10\n";
        out.close();
        CHECK_THROWS_AS(dataset::load_config(path.string()), data_error);
    }
    SUBCASE("bad values are rejected") {
        std::ofstream out(path);
        out << "count = plenty\n";
        out.close();
        CHECK_THROWS_AS(dataset::load_config(path.string()), data_error);
    }
    SUBCASE("lines need key = value shape") {
        std::ofstream out(path);
        out << "count 10\n";
        out.close();
        CHECK_THROWS_AS(dataset::load_config(path.string()), data_error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(dataset::load_config("/nonexistent/dataset.cfg"), data_error);
    }
}

TEST_CASE("config validation") {
    auto cfg = small_clean_config();
    CHECK_NOTHROW(cfg.validate());

    auto bad = cfg;
    bad.count = 11;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.count = 8;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.folds = 6;  // more than count / 2
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.perturbation_frac = 0.2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.hr_grid = {300.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.twa_grid = {10.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.snr_range_db = std::make_pair(30.0, 15.0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("record plans: alternating labels, stratified folds, grid draws") {
    dataset::DatasetConfig cfg;
    cfg.count = 20;
    cfg.master_seed = 42;
    cfg.folds = 10;
    cfg.apply_defaults();

    const auto plans = dataset::plan_records(cfg, 47);
    REQUIRE(plans.size() == 20);
    CHECK(plans[0].record_id == "rec000000");
    CHECK(plans[13].record_id == "rec000013");

    std::map<int, std::pair<int, int>> fold_counts;  // fold -> (pos, neg)
    std::set<std::uint64_t> seeds;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto& p = plans[i];
        CHECK(p.index == i);
        CHECK(p.label == (i % 2 == 0));
        (p.label ? fold_counts[p.fold].first : fold_counts[p.fold].second)++;

        if (p.label) {
            CHECK(p.twa_uv >= 20.0);
            CHECK(p.twa_uv <= 100.0);
        } else {
            CHECK(p.twa_uv == 0.0);
        }
        CHECK(std::count(cfg.hr_grid.begin(), cfg.hr_grid.end(), p.hr_bpm) == 1);
        CHECK(std::count(cfg.br_grid.begin(), cfg.br_grid.end(), p.br_rpm) == 1);
        REQUIRE(p.snr_db.has_value());
        CHECK(*p.snr_db >= 15.0);
        CHECK(*p.snr_db <= 30.0);
        CHECK(p.template_index < 47);
        seeds.insert(p.seed);
    }
    // Ten folds, one positive and one negative each.
    REQUIRE(fold_counts.size() == 10);
    for (const auto& [fold, counts] : fold_counts) {
        CHECK(counts.first == 1);
        CHECK(counts.second == 1);
    }
    CHECK(seeds.size() == plans.size());

    SUBCASE("plans are a pure function of the config") {
        const auto again = dataset::plan_records(cfg, 47);
        for (std::size_t i = 0; i < plans.size(); ++i) {
            CHECK(again[i].seed == plans[i].seed);
            CHECK(again[i].hr_bpm == plans[i].hr_bpm);
            CHECK(again[i].twa_uv == plans[i].twa_uv);
            CHECK(again[i].template_index == plans[i].template_index);
        }
    }
    SUBCASE("needs a morphology bank") {
        CHECK_THROWS_AS(dataset::plan_records(cfg, 0), std::invalid_argument);
    }
}

TEST_CASE("record files round trip through the header and float payload") {
    TempDir dir("twakit_rec_test");
    const auto rec = tiny_record();
    dataset::save_record(rec, dir.path.string(), "r1");
    CHECK(fs::exists(dir.path / "r1.hdr"));
    CHECK(fs::exists(dir.path / "r1.f32"));

    const auto back = dataset::load_record((dir.path / "r1.hdr").string());
    CHECK(back.fs_hz == rec.fs_hz);
    CHECK(back.lead_names == rec.lead_names);
    CHECK(back.label == rec.label);
    CHECK(back.metadata.at("source_id") == "demo");
    CHECK(back.metadata.at("twa_uv") == "60");
    REQUIRE(back.leads.size() == 2);
    for (std::size_t l = 0; l < 2; ++l) {
        REQUIRE(back.leads[l].size() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(back.leads[l][i] ==
                  static_cast<double>(static_cast<float>(rec.leads[l][i])));
    }

    SUBCASE("payload size mismatch is caught") {
        fs::resize_file(dir.path / "r1.f32", 8);
        CHECK_THROWS_AS(dataset::load_record((dir.path / "r1.hdr").string()), data_error);
    }
    SUBCASE("foreign files are rejected") {
        std::ofstream out(dir.path / "other.hdr");
        out << "something else\n";
        out.close();
        CHECK_THROWS_AS(dataset::load_record((dir.path / "other.hdr").string()), data_error);
        CHECK_THROWS_AS(dataset::load_record((dir.path / "absent.hdr").string()), data_error);
    }
    SUBCASE("empty records cannot be saved") {
        synth::EcgRecord empty;
        CHECK_THROWS_AS(dataset::save_record(empty, dir.path.string(), "x"),
                        std::invalid_argument);
    }
}

TEST_CASE("manifest round trip keeps the clean record marker") {
    TempDir dir("twakit_manifest_test");
    dataset::Manifest m;
    m.master_seed = 123;
    dataset::ManifestEntry a;
    a.record_id = "rec000000";
    a.path = "records/rec000000.hdr";
    a.label = true;
    a.fold = 3;
    a.hr_bpm = 72.0;
    a.br_rpm = 15.0;
    a.twa_uv = 60.0;
    a.snr_db = 22.5;
    a.seed = 9;
    a.source_id = "s01";
    dataset::ManifestEntry b = a;
    b.record_id = "rec000001";
    b.label = false;
    b.twa_uv = 0.0;
    b.snr_db = std::nan("");  // clean record
    m.entries = {a, b};

    const auto path = (dir.path / "manifest.json").string();
    dataset::save_manifest(m, path);
    const auto back = dataset::load_manifest(path);
    CHECK(back.format_version == 1);
    CHECK(back.master_seed == 123);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].record_id == "rec000000");
    CHECK(back.entries[0].label);
    CHECK(back.entries[0].fold == 3);
    CHECK(back.entries[0].hr_bpm == 72.0);
    CHECK(back.entries[0].snr_db == 22.5);
    CHECK(back.entries[0].seed == 9);
    CHECK(back.entries[0].source_id == "s01");
    CHECK(std::isnan(back.entries[1].snr_db));
    CHECK(back.entries[1].twa_uv == 0.0);

    SUBCASE("malformed json") {
        std::ofstream out(dir.path / "broken.json");
        out << "{ not json";
        out.close();
        CHECK_THROWS_AS(dataset::load_manifest((dir.path / "broken.json").string()),
                        data_error);
    }
    SUBCASE("missing fields") {
        std::ofstream out(dir.path / "short.json");
        out << R"({"format_version": 1, "master_seed": 0, "records": [{"record_id": "x"}]})";
        out.close();
        CHECK_THROWS_AS(dataset::load_manifest((dir.path / "short.json").string()),
                        data_error);
    }
}

TEST_CASE("dataset generation writes records plus manifest, identically per worker count") {
    const auto cfg = small_clean_config();

    TempDir dir1("twakit_gen_w1");
    TempDir dir2("twakit_gen_w2");
    TempDir dir4("twakit_gen_w4");
    const auto m1 = dataset::generate_dataset(cfg, dir1.path.string(), 1);
    const auto m2 = dataset::generate_dataset(cfg, dir2.path.string(), 2);
    const auto m4 = dataset::generate_dataset(cfg, dir4.path.string(), 4);

    REQUIRE(m1.entries.size() == 10);
    CHECK(fs::exists(dir1.path / "manifest.json"));
    for (const auto& e : m1.entries) {
        CHECK(fs::exists(dir1.path / e.path));
        const auto rec = dataset::load_record((dir1.path / e.path).string());
        CHECK(rec.label == e.label);
        CHECK(rec.lead_names == std::vector<std::string>{"I"});
        CHECK(std::isnan(e.snr_db));
        CHECK(rec.metadata.at("record_id") == e.record_id);
    }

    // Same bytes regardless of parallelism.
    CHECK(slurp(dir1.path / "manifest.json") == slurp(dir2.path / "manifest.json"));
    CHECK(slurp(dir1.path / "manifest.json") == slurp(dir4.path / "manifest.json"));
    for (const auto& e : m1.entries) {
        const auto payload = fs::path(e.path).replace_extension(".f32");
        CHECK(slurp(dir1.path / payload) == slurp(dir2.path / payload));
        CHECK(slurp(dir1.path / payload) == slurp(dir4.path / payload));
        CHECK(slurp(dir1.path / e.path) == slurp(dir2.path / e.path));
    }
}

TEST_CASE("streamed generation hands records over in order without touching disk") {
    const auto cfg = small_clean_config();
    TempDir dir("twakit_gen_stream");

    std::vector<std::size_t> order;
    std::vector<bool> labels;
    const auto manifest = dataset::generate_dataset(
        cfg, dir.path.string(), 2,
        [&](const dataset::RecordPlan& plan, const synth::EcgRecord& rec) {
            order.push_back(plan.index);
            labels.push_back(rec.label);
        });

    REQUIRE(order.size() == 10);
    for (std::size_t i = 0; i < order.size(); ++i) {
        CHECK(order[i] == i);
        CHECK(labels[i] == (i % 2 == 0));
    }
    CHECK(manifest.entries.size() == 10);
    CHECK_FALSE(fs::exists(dir.path / "manifest.json"));
    CHECK_FALSE(fs::exists(dir.path / "records"));
}

TEST_CASE("record analysis emits one labeled feature row per analysis window") {
    const auto bank = synth::builtin_templates(1);
    synth::SynthesisConfig sc;
    sc.morphology = bank[0];
    sc.rhythm.mean_hr_bpm = 70.0;
    sc.twa_uv = 60.0;
    sc.duration_s = 85.0;
    sc.fs_hz = 250.0;
    sc.perturbation_frac = 0.0;
    sc.seed = 11;
    const auto rec = synth::render_record(sc, nullptr, true);

    dataset::AnalysisOptions opt;
    opt.seed = 3;
    const auto rows = dataset::analyze_record(rec, "rec_a", true, opt);
    // About 97 usable beats: sliding 60 beat windows at half overlap fit twice.
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        CHECK(row.subject_id == "rec_a");
        CHECK(row.label);
        REQUIRE(row.features.size() == 6);
        double total = 0.0;
        for (double f : row.features) total += f;
        CHECK(total > 0.0);  // the injected alternans is significant
    }

    SUBCASE("aggregate mode pools the windows into one row") {
        opt.aggregate = true;
        const auto pooled = dataset::analyze_record(rec, "rec_a", true, opt);
        REQUIRE(pooled.size() == 1);
        CHECK(pooled[0].features.size() == 6);
    }
    SUBCASE("analysis is deterministic in the option seed") {
        const auto again = dataset::analyze_record(rec, "rec_a", true, opt);
        REQUIRE(again.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            CHECK(again[i].features == rows[i].features);
    }
}

TEST_CASE("records too short for one window produce a single all zero row") {
    const auto bank = synth::builtin_templates(1);
    synth::SynthesisConfig sc;
    sc.morphology = bank[0];
    sc.duration_s = 10.0;
    sc.fs_hz = 250.0;
    sc.perturbation_frac = 0.0;
    sc.seed = 2;
    const auto rec = synth::render_record(sc, nullptr, true);

    const auto rows = dataset::analyze_record(rec, "rec_b", false, {});
    REQUIRE(rows.size() == 1);
    CHECK_FALSE(rows[0].label);
    REQUIRE(rows[0].features.size() == 6);
    for (double f : rows[0].features) CHECK(f == 0.0);
}

TEST_CASE("feature names match the heart rate bins") {
    const auto names = dataset::feature_names();
    REQUIRE(names.size() == 6);
    CHECK(names.front() == "twa_hr_30_60");
    CHECK(names.back() == "twa_hr_100_110");
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == 6);
}

TEST_CASE("worker resolution: explicit value, environment, hardware fallback") {
    CHECK(dataset::resolve_workers(3u) == 3u);

    ::setenv("TWAKIT_WORKERS", "5", 1);
    CHECK(dataset::resolve_workers(std::nullopt) == 5u);
    ::setenv("TWAKIT_WORKERS", "junk", 1);
    CHECK(dataset::resolve_workers(std::nullopt) >= 1u);
    ::unsetenv("TWAKIT_WORKERS");
    CHECK(dataset::resolve_workers(std::nullopt) >= 1u);
}
