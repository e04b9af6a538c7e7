#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "twakit/errors.hpp"
#include "twakit/eval.hpp"
#include "twakit/rng.hpp"

using namespace twakit;

namespace {

eval::Subject make_subject(const std::string& id, bool label, std::size_t n_windows,
                           double value) {
    eval::Subject s;
    s.id = id;
    s.label = label;
    for (std::size_t i = 0; i < n_windows; ++i) s.windows.push_back({value});
    return s;
}

// Pairwise concordance count, the textbook AUC definition: each
// positive/negative pair contributes 2 for a win, 1 for a tie.
std::uint64_t concordance2(const std::vector<eval::SubjectScore>& scores) {
    std::uint64_t c2 = 0;
    for (const auto& p : scores) {
        if (!p.label) continue;
        for (const auto& n : scores) {
            if (n.label) continue;
            if (p.score > n.score) c2 += 2;
            else if (p.score == n.score) c2 += 1;
        }
    }
    return c2;
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

}  // namespace

TEST_CASE("row grouping keeps first seen order and rejects label conflicts") {
    std::vector<eval::FeatureRow> rows = {
        {"b", {1.0}, true},
        {"a", {2.0}, false},
        {"b", {3.0}, true},
        {"a", {4.0}, false},
    };
    const auto subjects = eval::group_rows(rows);
    REQUIRE(subjects.size() == 2);
    CHECK(subjects[0].id == "b");
    CHECK(subjects[0].windows.size() == 2);
    CHECK(subjects[0].windows[1][0] == 3.0);
    CHECK(subjects[1].id == "a");
    CHECK_FALSE(subjects[1].label);

    rows.push_back({"a", {5.0}, true});
    CHECK_THROWS_AS(eval::group_rows(rows), std::invalid_argument);
}

TEST_CASE("logistic regression separates a one dimensional problem") {
    const std::vector<std::vector<double>> x = {{-2.0}, {-1.0}, {1.0}, {2.0}};
    const std::vector<char> y = {0, 0, 1, 1};
    const auto model = eval::fit_logistic(x, y);
    CHECK(model.converged);
    REQUIRE(model.weights.size() == 2);
    CHECK(model.weights[1] > 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(model.predict(x[i]) == static_cast<bool>(y[i]));
    const std::vector<double> midpoint{0.0};
    CHECK(model.predict_prob(midpoint) == doctest::Approx(0.5).epsilon(0.05));

    SUBCASE("input validation") {
        CHECK_THROWS_AS(eval::fit_logistic({}, {}), std::invalid_argument);
        CHECK_THROWS_AS(eval::fit_logistic(x, {0, 1}), std::invalid_argument);
        const std::vector<std::vector<double>> ragged = {{1.0}, {1.0, 2.0}};
        CHECK_THROWS_AS(eval::fit_logistic(ragged, {0, 1}), std::invalid_argument);
        CHECK_THROWS_AS(eval::fit_logistic(x, y, -1.0), std::invalid_argument);
        const std::vector<double> wrong{1.0, 2.0};
        CHECK_THROWS_AS(model.predict_prob(wrong), std::invalid_argument);
    }
}

TEST_CASE("cross validation downsamples the majority class per training fold") {
    // Four positive subjects with 50 windows each, four negatives with 10.
    std::vector<eval::Subject> subjects;
    for (int i = 0; i < 4; ++i)
        subjects.push_back(make_subject("p" + std::to_string(i), true, 50, 1.0));
    for (int i = 0; i < 4; ++i)
        subjects.push_back(make_subject("n" + std::to_string(i), false, 10, -1.0));

    std::vector<std::map<std::string, std::size_t>> fold_counts;
    eval::Trainer recorder = [&](const std::vector<eval::FeatureRow>& rows) -> eval::ScoreFn {
        std::map<std::string, std::size_t> counts;
        for (const auto& r : rows) ++counts[r.subject_id];
        fold_counts.push_back(std::move(counts));
        return [](std::span<const double>) { return 0.0; };
    };

    const auto res = eval::loot(subjects, recorder, 77);
    REQUIRE(res.scores.size() == 8);
    REQUIRE(fold_counts.size() == 8);
    CHECK(res.excluded.empty());

    for (std::size_t fold = 0; fold < 8; ++fold) {
        const bool test_positive = fold < 4;
        const auto& counts = fold_counts[fold];
        // Positives dominate every training fold, so each contributes half
        // its windows; negatives stay whole.
        for (const auto& [id, cnt] : counts) {
            if (id[0] == 'p') CHECK(cnt == 25);
            else CHECK(cnt == 10);
        }
        CHECK(counts.size() == 7);
        std::size_t pos_rows = 0, neg_rows = 0;
        for (const auto& [id, cnt] : counts) (id[0] == 'p' ? pos_rows : neg_rows) += cnt;
        CHECK(pos_rows == (test_positive ? 75 : 100));
        CHECK(neg_rows == (test_positive ? 40 : 30));
    }

    // The recording scorer classifies everything negative.
    for (const auto& s : res.scores) CHECK(s.score == 0.0);
}

TEST_CASE("balanced classes are left alone") {
    // Five subjects per class: holding one out leaves 40 vs 50 windows,
    // inside the 1.25 tolerance, so no fold downsamples.
    std::vector<eval::Subject> subjects;
    for (int i = 0; i < 5; ++i) {
        subjects.push_back(make_subject("p" + std::to_string(i), true, 10, 1.0));
        subjects.push_back(make_subject("n" + std::to_string(i), false, 10, -1.0));
    }
    std::vector<std::size_t> sizes;
    eval::Trainer recorder = [&](const std::vector<eval::FeatureRow>& rows) -> eval::ScoreFn {
        sizes.push_back(rows.size());
        return [](std::span<const double> f) { return f[0] > 0.0 ? 1.0 : 0.0; };
    };
    const auto res = eval::loot(subjects, recorder, 5);
    for (std::size_t n : sizes) CHECK(n == 90);

    // Separable features score each held out subject perfectly.
    for (const auto& s : res.scores) CHECK(s.score == (s.label ? 1.0 : 0.0));
}

TEST_CASE("subjects without windows are excluded, degenerate folds rejected") {
    std::vector<eval::Subject> subjects;
    subjects.push_back(make_subject("p0", true, 5, 1.0));
    subjects.push_back(make_subject("n0", false, 5, -1.0));
    subjects.push_back(eval::Subject{"empty", {}, true});

    const auto trainer = eval::make_logistic_trainer();
    const auto res = eval::loot(subjects, trainer, 1);
    REQUIRE(res.excluded.size() == 1);
    CHECK(res.excluded[0] == "empty");
    CHECK(res.scores.size() == 2);

    SUBCASE("one usable subject") {
        std::vector<eval::Subject> one = {make_subject("p0", true, 5, 1.0),
                                          eval::Subject{"empty", {}, false}};
        CHECK_THROWS_AS(eval::loot(one, trainer, 1), insufficient_data_error);
    }
    SUBCASE("single class") {
        std::vector<eval::Subject> mono = {make_subject("p0", true, 5, 1.0),
                                           make_subject("p1", true, 5, 1.0)};
        CHECK_THROWS_AS(eval::loot(mono, trainer, 1), degenerate_labels_error);
    }
}

TEST_CASE("the trapezoid free AUC equals pairwise concordance exactly") {
    Rng rng(2026);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n_pos = 1 + rng.below(10);
        const std::size_t n_neg = 1 + rng.below(10);
        std::vector<eval::SubjectScore> scores;
        for (std::size_t i = 0; i < n_pos; ++i)
            scores.push_back({"p", static_cast<double>(rng.below(5)) / 4.0, true});
        for (std::size_t i = 0; i < n_neg; ++i)
            scores.push_back({"n", static_cast<double>(rng.below(5)) / 4.0, false});

        const auto curve = eval::roc_auc(scores);
        const double want = static_cast<double>(concordance2(scores)) /
                            (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
        CHECK(curve.auc == want);  // bit exact, both sides are small integer ratios
        CHECK(curve.points.front().fpr == 0.0);
        CHECK(curve.points.front().tpr == 0.0);
        CHECK(curve.points.back().fpr == 1.0);
        CHECK(curve.points.back().tpr == 1.0);
    }
}

TEST_CASE("operating point selection prefers the earliest maximum") {
    SUBCASE("perfect separation") {
        std::vector<eval::SubjectScore> scores = {
            {"a", 0.9, true}, {"b", 0.8, true}, {"c", 0.2, false}, {"d", 0.1, false}};
        const auto curve = eval::roc_auc(scores);
        CHECK(curve.auc == 1.0);
        const auto pt = eval::optimal_operating_point(curve);
        CHECK(pt.fpr == 0.0);
        CHECK(pt.tpr == 1.0);
        CHECK(pt.threshold == 0.8);
    }
    SUBCASE("all scores tied resolves to the all negative corner") {
        std::vector<eval::SubjectScore> scores = {
            {"a", 0.0, true}, {"b", 0.0, false}, {"c", 0.0, false}};
        const auto curve = eval::roc_auc(scores);
        CHECK(curve.auc == 0.5);
        const auto pt = eval::optimal_operating_point(curve);
        CHECK(pt.fpr == 0.0);
        CHECK(pt.tpr == 0.0);
        CHECK(std::isinf(pt.threshold));
    }
    SUBCASE("empty curve") {
        CHECK_THROWS_AS(eval::optimal_operating_point(eval::RocCurve{}),
                        std::invalid_argument);
    }
}

TEST_CASE("summary metrics on a worked four subject example") {
    std::vector<eval::SubjectScore> scores = {
        {"a", 0.9, true}, {"b", 0.8, false}, {"c", 0.7, true}, {"d", 0.3, false}};
    const auto curve = eval::roc_auc(scores);
    CHECK(curve.auc == 0.75);

    const auto pt = eval::optimal_operating_point(curve);
    CHECK(pt.threshold == 0.9);

    const auto m = eval::summarize(scores, curve, pt);
    CHECK(m.tp == 1);
    CHECK(m.fp == 0);
    CHECK(m.tn == 2);
    CHECK(m.fn == 1);
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.sensitivity == doctest::Approx(0.5));
    CHECK(m.specificity == doctest::Approx(1.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.balanced_accuracy == doctest::Approx(0.75));
}

TEST_CASE("an all negative classifier lands on the no skill reference values") {
    std::vector<eval::SubjectScore> scores;
    for (int i = 0; i < 12; ++i) scores.push_back({"p" + std::to_string(i), 0.0, true});
    for (int i = 0; i < 24; ++i) scores.push_back({"n" + std::to_string(i), 0.0, false});

    const auto curve = eval::roc_auc(scores);
    const auto pt = eval::optimal_operating_point(curve);
    const auto m = eval::summarize(scores, curve, pt);

    CHECK(std::fabs(m.accuracy - 0.67) <= 0.005);
    CHECK(m.f1 == 0.0);
    CHECK(std::fabs(m.balanced_accuracy - 0.50) <= 0.005);
    CHECK(std::fabs(m.auc - 0.50) <= 0.005);
    CHECK(m.tn == 24);
    CHECK(m.fn == 12);
}

TEST_CASE("label permutations wash out a separable signal's advantage") {
    std::vector<eval::Subject> subjects;
    for (int i = 0; i < 3; ++i) {
        subjects.push_back(make_subject("p" + std::to_string(i), true, 6, 1.0));
        subjects.push_back(make_subject("n" + std::to_string(i), false, 6, -1.0));
    }
    const auto trainer = eval::make_logistic_trainer();
    const auto res = eval::permutation_significance(subjects, trainer, 8, 31);
    CHECK(res.observed_auc == 1.0);
    CHECK(res.null_aucs.size() == 8);
    CHECK(res.p_value >= 0.0);
    CHECK(res.p_value <= 1.0);

    CHECK_THROWS_AS(eval::permutation_significance(subjects, trainer, 0, 31),
                    std::invalid_argument);
}

TEST_CASE("chi square independence against the closed form") {
    std::array<std::array<std::uint64_t, 2>, 2> table = {{{20, 10}, {5, 25}}};
    const auto r = eval::chi2_independence(table);
    // n * (ad - bc)^2 / (row and column marginals)
    const double want = 60.0 * 450.0 * 450.0 / (30.0 * 30.0 * 25.0 * 35.0);
    CHECK(r.statistic == doctest::Approx(want).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(std::erfc(std::sqrt(want / 2.0))).epsilon(1e-12));

    SUBCASE("independent table gives zero and p one") {
        table = {{{10, 10}, {10, 10}}};
        const auto r0 = eval::chi2_independence(table);
        CHECK(r0.statistic == 0.0);
        CHECK(r0.p_value == 1.0);
    }
    SUBCASE("several tables against the formula") {
        Rng rng(55);
        for (int i = 0; i < 20; ++i) {
            const double a = 1.0 + static_cast<double>(rng.below(50));
            const double b = 1.0 + static_cast<double>(rng.below(50));
            const double c = 1.0 + static_cast<double>(rng.below(50));
            const double d = 1.0 + static_cast<double>(rng.below(50));
            table = {{{static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b)},
                      {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(d)}}};
            const auto rr = eval::chi2_independence(table);
            const double n = a + b + c + d;
            const double det = a * d - b * c;
            const double w = n * det * det / ((a + b) * (c + d) * (a + c) * (b + d));
            CHECK(rr.statistic == doctest::Approx(w).epsilon(1e-9));
        }
    }
    SUBCASE("zero marginal is rejected") {
        table = {{{0, 0}, {5, 5}}};
        CHECK_THROWS_AS(eval::chi2_independence(table), std::invalid_argument);
    }
}

TEST_CASE("feature csv files round trip and reject malformed input") {
    TempFile tmp("twakit_eval_csv_test.csv");
    const std::vector<std::string> names = {"f1", "f2"};
    std::vector<eval::FeatureRow> rows = {
        {"rec_0", {1.0, -0.5}, true},
        {"rec_1", {0.123456789012345, 3.0e-7}, false},
    };
    eval::write_feature_csv(rows, names, tmp.path.string());
    const auto back = eval::read_feature_csv(tmp.path.string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].subject_id == "rec_0");
    CHECK(back[0].label);
    CHECK_FALSE(back[1].label);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(back[i].features.size() == 2);
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(back[i].features[j] == rows[i].features[j]);  // 17 digit round trip
    }

    SUBCASE("row and header width must match on write") {
        rows[0].features.pop_back();
        CHECK_THROWS_AS(eval::write_feature_csv(rows, names, tmp.path.string()),
                        std::invalid_argument);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(eval::read_feature_csv("/nonexistent/features.csv"), data_error);
    }
    SUBCASE("bad header") {
        std::ofstream out(tmp.path);
        out << "id,f1,label\n";
        out.close();
        CHECK_THROWS_AS(eval::read_feature_csv(tmp.path.string()), data_error);
    }
    SUBCASE("bad label value") {
        std::ofstream out(tmp.path);
        out << "record_id,f1,label\nrec,1.0,yes\n";
        out.close();
        CHECK_THROWS_AS(eval::read_feature_csv(tmp.path.string()), data_error);
    }
    SUBCASE("bad number") {
        std::ofstream out(tmp.path);
        out << "record_id,f1,label\nrec,abc,1\n";
        out.close();
        CHECK_THROWS_AS(eval::read_feature_csv(tmp.path.string()), data_error);
    }
    SUBCASE("ragged row") {
        std::ofstream out(tmp.path);
        out << "record_id,f1,label\nrec,1.0,2.0,1\n";
        out.close();
        CHECK_THROWS_AS(eval::read_feature_csv(tmp.path.string()), data_error);
    }
}
