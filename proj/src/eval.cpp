#include "twakit/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "twakit/errors.hpp"
#include "twakit/rng.hpp"

namespace twakit::eval {

std::vector<Subject> group_rows(std::span<const FeatureRow> rows) {
    std::vector<Subject> subjects;
    std::map<std::string, std::size_t> index;
    for (const auto& row : rows) {
        auto [it, inserted] = index.try_emplace(row.subject_id, subjects.size());
        if (inserted) subjects.push_back(Subject{row.subject_id, {}, row.label});
        Subject& s = subjects[it->second];
        if (s.label != row.label)
            throw std::invalid_argument("conflicting labels for subject " + row.subject_id);
        s.windows.push_back(row.features);
    }
    return subjects;
}

double LogisticModel::predict_prob(std::span<const double> x) const {
    if (x.size() + 1 != weights.size())
        throw std::invalid_argument("feature size does not match the model");
    double eta = weights[0];
    for (std::size_t i = 0; i < x.size(); ++i) eta += weights[i + 1] * x[i];
    eta = std::clamp(eta, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-eta));
}

LogisticModel fit_logistic(const std::vector<std::vector<double>>& x,
                           const std::vector<char>& y, double l2, int max_iter) {
    if (x.empty() || x.size() != y.size())
        throw std::invalid_argument("need matching, nonempty features and labels");
    const std::size_t d = x[0].size();
    for (const auto& row : x)
        if (row.size() != d) throw std::invalid_argument("ragged feature matrix");
    if (l2 < 0.0) throw std::invalid_argument("l2 must be nonnegative");

    const auto n = static_cast<Eigen::Index>(x.size());
    const auto m = static_cast<Eigen::Index>(d + 1);
    Eigen::MatrixXd X(n, m);
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < m; ++j)
            X(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
        t(i) = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    auto objective = [&](const Eigen::VectorXd& b) {
        double nll = 0.0;
        const Eigen::VectorXd eta = (X * b).cwiseMax(-30.0).cwiseMin(30.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-eta(i)));
            nll -= t(i) * std::log(std::max(p, 1e-300)) +
                   (1.0 - t(i)) * std::log(std::max(1.0 - p, 1e-300));
        }
        for (Eigen::Index j = 1; j < m; ++j) nll += 0.5 * l2 * b(j) * b(j);
        return nll;
    };

    LogisticModel model;
    double nll = objective(beta);
    for (int it = 0; it < max_iter; ++it) {
        model.iterations = it + 1;
        const Eigen::VectorXd eta = (X * beta).cwiseMax(-30.0).cwiseMin(30.0);
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            w(i) = std::max(p(i) * (1.0 - p(i)), 1e-9);
        }
        Eigen::VectorXd grad = X.transpose() * (t - p);
        for (Eigen::Index j = 1; j < m; ++j) grad(j) -= l2 * beta(j);
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
            model.converged = true;
            break;
        }
        Eigen::MatrixXd h = X.transpose() * w.asDiagonal() * X;
        for (Eigen::Index j = 1; j < m; ++j) h(j, j) += l2;
        h.diagonal().array() += 1e-12;
        Eigen::VectorXd step = h.ldlt().solve(grad);

        // Halve the step until the penalized likelihood improves.
        double trial_nll = 0.0;
        for (int half = 0; half < 30; ++half) {
            trial_nll = objective(beta + step);
            if (trial_nll <= nll + 1e-12) break;
            step *= 0.5;
        }
        beta += step;
        nll = trial_nll;
    }

    model.weights.assign(beta.data(), beta.data() + m);
    return model;
}

Trainer make_logistic_trainer(double l2) {
    return [l2](const std::vector<FeatureRow>& rows) -> ScoreFn {
        std::vector<std::vector<double>> x;
        std::vector<char> y;
        x.reserve(rows.size());
        y.reserve(rows.size());
        for (const auto& r : rows) {
            x.push_back(r.features);
            y.push_back(r.label ? 1 : 0);
        }
        LogisticModel model = fit_logistic(x, y, l2);
        return [model](std::span<const double> f) { return model.predict_prob(f); };
    };
}

LootResult loot(std::span<const Subject> subjects, const Trainer& trainer,
                std::uint64_t seed, double balance_ratio) {
    LootResult res;
    std::vector<const Subject*> usable;
    for (const auto& s : subjects) {
        if (s.windows.empty()) res.excluded.push_back(s.id);
        else usable.push_back(&s);
    }
    if (usable.size() < 2)
        throw insufficient_data_error("leave-one-out needs at least two subjects with windows");
    bool any_pos = false, any_neg = false;
    for (const auto* s : usable) (s->label ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg)
        throw degenerate_labels_error("both classes are required for cross validation");

    for (std::size_t fold = 0; fold < usable.size(); ++fold) {
        const Subject& test = *usable[fold];

        std::size_t pos_windows = 0, neg_windows = 0;
        for (std::size_t j = 0; j < usable.size(); ++j) {
            if (j == fold) continue;
            (usable[j]->label ? pos_windows : neg_windows) += usable[j]->windows.size();
        }
        const bool pos_major = pos_windows > static_cast<double>(neg_windows) * balance_ratio;
        const bool neg_major = neg_windows > static_cast<double>(pos_windows) * balance_ratio;

        Rng rng(derive_seed(seed, fold));
        std::vector<FeatureRow> rows;
        for (std::size_t j = 0; j < usable.size(); ++j) {
            if (j == fold) continue;
            const Subject& s = *usable[j];
            const bool majority = s.label ? pos_major : neg_major;
            if (majority && s.windows.size() >= 2) {
                // Each majority-class subject contributes a random half.
                std::vector<std::size_t> idx(s.windows.size());
                std::iota(idx.begin(), idx.end(), std::size_t{0});
                const std::size_t keep = (s.windows.size() + 1) / 2;
                for (std::size_t k = 0; k < keep; ++k)
                    std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
                for (std::size_t k = 0; k < keep; ++k)
                    rows.push_back(FeatureRow{s.id, s.windows[idx[k]], s.label});
            } else {
                for (const auto& w : s.windows) rows.push_back(FeatureRow{s.id, w, s.label});
            }
        }

        const ScoreFn score = trainer(rows);
        std::size_t positive = 0;
        for (const auto& w : test.windows)
            if (score(w) >= 0.5) ++positive;
        res.scores.push_back(SubjectScore{
            test.id,
            static_cast<double>(positive) / static_cast<double>(test.windows.size()),
            test.label});
    }
    return res;
}

RocCurve roc_auc(std::span<const SubjectScore> scores) {
    std::uint64_t pos = 0, neg = 0;
    for (const auto& s : scores) (s.label ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw degenerate_labels_error("ROC needs both classes");

    std::vector<const SubjectScore*> sorted;
    sorted.reserve(scores.size());
    for (const auto& s : scores) sorted.push_back(&s);
    std::sort(sorted.begin(), sorted.end(),
              [](const SubjectScore* a, const SubjectScore* b) { return a->score > b->score; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});

    std::uint64_t tp = 0, fp = 0, area2 = 0;  // area2 accumulates 2 * P * N * auc
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double v = sorted[i]->score;
        std::uint64_t dtp = 0, dfp = 0;
        while (i < sorted.size() && sorted[i]->score == v) {
            (sorted[i]->label ? dtp : dfp)++;
            ++i;
        }
        area2 += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos), v});
    }
    curve.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) *
                                              static_cast<double>(neg));
    return curve;
}

RocPoint optimal_operating_point(const RocCurve& curve) {
    if (curve.points.empty()) throw std::invalid_argument("empty ROC curve");
    // First maximum along the curve; a flat no-skill curve resolves to (0,0).
    std::size_t best = 0;
    double best_j = curve.points[0].tpr - curve.points[0].fpr;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const double j = curve.points[i].tpr - curve.points[i].fpr;
        if (j > best_j) {
            best_j = j;
            best = i;
        }
    }
    return curve.points[best];
}

Metrics summarize(std::span<const SubjectScore> scores, const RocCurve& curve,
                  const RocPoint& point) {
    Metrics m;
    for (const auto& s : scores) {
        const bool pred = s.score >= point.threshold;
        if (pred && s.label) ++m.tp;
        else if (pred && !s.label) ++m.fp;
        else if (!pred && !s.label) ++m.tn;
        else ++m.fn;
    }
    const auto pos = m.tp + m.fn, neg = m.tn + m.fp;
    if (pos == 0 || neg == 0)
        throw degenerate_labels_error("metrics need both classes");
    m.auc = curve.auc;
    m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(pos);
    m.specificity = static_cast<double>(m.tn) / static_cast<double>(neg);
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(pos + neg);
    const auto f1_den = 2 * m.tp + m.fp + m.fn;
    m.f1 = f1_den == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(f1_den);
    m.balanced_accuracy = 0.5 * (m.sensitivity + m.specificity);
    return m;
}

PermutationResult permutation_significance(std::span<const Subject> subjects,
                                           const Trainer& trainer, std::size_t n_reps,
                                           std::uint64_t seed) {
    if (n_reps == 0) throw std::invalid_argument("need at least one permutation");
    if (subjects.size() < 2)
        throw insufficient_data_error("need at least two subjects");

    PermutationResult res;
    res.observed_auc = roc_auc(loot(subjects, trainer, splitmix64(seed)).scores).auc;

    std::vector<Subject> shuffled(subjects.begin(), subjects.end());
    std::size_t at_least = 0;
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        Rng rng(derive_seed(seed, rep));
        std::vector<std::size_t> idx(shuffled.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const std::size_t half = shuffled.size() / 2;
        for (std::size_t k = 0; k < half; ++k)
            std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
        for (auto& s : shuffled) s.label = false;
        for (std::size_t k = 0; k < half; ++k) shuffled[idx[k]].label = true;

        const double auc =
            roc_auc(loot(shuffled, trainer, derive_seed(seed, 1000000 + rep)).scores).auc;
        res.null_aucs.push_back(auc);
        if (auc >= res.observed_auc) ++at_least;
    }
    res.p_value = static_cast<double>(at_least) / static_cast<double>(n_reps);
    return res;
}

Chi2Result chi2_independence(const std::array<std::array<std::uint64_t, 2>, 2>& table) {
    const double a = static_cast<double>(table[0][0]);
    const double b = static_cast<double>(table[0][1]);
    const double c = static_cast<double>(table[1][0]);
    const double d = static_cast<double>(table[1][1]);
    const double n = a + b + c + d;
    const double r0 = a + b, r1 = c + d, c0 = a + c, c1 = b + d;
    if (r0 == 0.0 || r1 == 0.0 || c0 == 0.0 || c1 == 0.0)
        throw std::invalid_argument("chi-square needs nonzero marginals");
    Chi2Result res;
    const double det = a * d - b * c;
    res.statistic = n * det * det / (r0 * r1 * c0 * c1);
    res.p_value = std::erfc(std::sqrt(res.statistic / 2.0));
    return res;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::vector<FeatureRow> read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open feature file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty feature file: " + path);
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header.front() != "record_id" || header.back() != "label")
        throw data_error("malformed feature header in " + path);

    std::vector<FeatureRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw data_error("bad column count on line " + std::to_string(lineno) + " of " +
                             path);
        FeatureRow row;
        row.subject_id = cells.front();
        for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
            try {
                row.features.push_back(std::stod(cells[i]));
            } catch (const std::exception&) {
                throw data_error("bad number on line " + std::to_string(lineno) + " of " + path);
            }
        }
        const std::string& lab = cells.back();
        if (lab == "1") row.label = true;
        else if (lab == "0") row.label = false;
        else throw data_error("bad label on line " + std::to_string(lineno) + " of " + path);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_feature_csv(std::span<const FeatureRow> rows, std::span<const std::string> names,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write feature file: " + path);
    out << "record_id";
    for (const auto& n : names) out << "," << n;
    out << ",label\n";
    out.precision(17);
    for (const auto& row : rows) {
        if (row.features.size() != names.size())
            throw std::invalid_argument("feature count does not match the header");
        out << row.subject_id;
        for (double f : row.features) out << "," << f;
        out << "," << (row.label ? 1 : 0) << "\n";
    }
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace twakit::eval
