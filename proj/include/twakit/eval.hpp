#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace twakit::eval {

struct FeatureRow {
    std::string subject_id;
    std::vector<double> features;
    bool label = false;
};

struct Subject {
    std::string id;
    std::vector<std::vector<double>> windows;  // feature vectors
    bool label = false;
};

// Groups rows by subject id, first-seen order. Conflicting labels for one
// subject are rejected.
std::vector<Subject> group_rows(std::span<const FeatureRow> rows);

struct LogisticModel {
    std::vector<double> weights;  // intercept first
    bool converged = false;
    int iterations = 0;

    double predict_prob(std::span<const double> x) const;
    bool predict(std::span<const double> x) const { return predict_prob(x) >= 0.5; }
};

// Penalized IRLS; the intercept is not regularized.
LogisticModel fit_logistic(const std::vector<std::vector<double>>& x,
                           const std::vector<char>& y, double l2 = 1e-3,
                           int max_iter = 100);

using ScoreFn = std::function<double(std::span<const double>)>;
using Trainer = std::function<ScoreFn(const std::vector<FeatureRow>&)>;

Trainer make_logistic_trainer(double l2 = 1e-3);

struct SubjectScore {
    std::string id;
    double score = 0.0;  // fraction of windows classified positive
    bool label = false;
};

struct LootResult {
    std::vector<SubjectScore> scores;
    std::vector<std::string> excluded;  // subjects with no windows
};

// Leave-one-subject-out. When one class carries more than balance_ratio
// times the windows of the other, every majority-class training subject
// contributes a random half of its windows (per-fold seed).
LootResult loot(std::span<const Subject> subjects, const Trainer& trainer,
                std::uint64_t seed, double balance_ratio = 1.25);

struct RocPoint {
    double fpr = 0.0, tpr = 0.0;
    double threshold = 0.0;  // classify positive when score >= threshold
};

struct RocCurve {
    std::vector<RocPoint> points;  // (0,0) first, (1,1) last
    double auc = 0.0;
};

RocCurve roc_auc(std::span<const SubjectScore> scores);

// Maximizes tpr - fpr; on ties the point reached first along the curve
// (lowest fpr) wins, so a no-skill curve resolves to (0,0).
RocPoint optimal_operating_point(const RocCurve& curve);

struct Metrics {
    double auc = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double balanced_accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Metrics summarize(std::span<const SubjectScore> scores, const RocCurve& curve,
                  const RocPoint& point);

struct PermutationResult {
    double observed_auc = 0.0;
    std::vector<double> null_aucs;
    double p_value = 1.0;  // fraction of null AUCs >= observed
};

// Re-runs the whole cross validation with labels randomly reassigned to a
// half/half split.
PermutationResult permutation_significance(std::span<const Subject> subjects,
                                           const Trainer& trainer, std::size_t n_reps,
                                           std::uint64_t seed);

struct Chi2Result {
    double statistic = 0.0;
    double p_value = 1.0;
};

// 2x2 contingency table, one degree of freedom, no continuity correction.
Chi2Result chi2_independence(const std::array<std::array<std::uint64_t, 2>, 2>& table);

// features.csv: record_id, one column per feature, label (0/1); header line.
std::vector<FeatureRow> read_feature_csv(const std::string& path);
void write_feature_csv(std::span<const FeatureRow> rows, std::span<const std::string> names,
                       const std::string& path);

}  // namespace twakit::eval
