#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retropredict/rng.hpp"
#include "retropredict/util.hpp"

namespace retro {
namespace stats {

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(ln_front) * detail::betacf(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a Student t statistic with df degrees of freedom.
inline double student_t_two_sided_p(double t, int df) {
    if (df <= 0) throw NumericError("student t: df must be positive");
    const double x = df / (df + t * t);
    return incbeta(df / 2.0, 0.5, x);
}

// Average ranks (1-based) of v; ties share the mean of their rank block.
inline std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// ROC-AUC via the Mann-Whitney rank formulation; ties contribute 1/2.
// labels: 1 = positive class, 0 = negative.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw NumericError("roc_auc: size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) (y != 0 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw NumericError("roc_auc: needs both classes");
    const auto ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != 0) rank_sum += ranks[i];
    const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

enum class Alternative { TwoSided, Greater, Less };

namespace detail {

// Exact tail probabilities by enumerating all 2^n sign assignments over the
// nonzero differences; average ranks make this valid under ties.
inline double wilcoxon_exact(const std::vector<double>& ranks, double w_obs, Alternative alt) {
    const std::size_t n = ranks.size();
    const std::uint64_t total = 1ULL << n;
    std::uint64_t ge = 0, le = 0;
    constexpr double kTol = 1e-9;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1ULL << i)) w += ranks[i];
        if (w >= w_obs - kTol) ++ge;
        if (w <= w_obs + kTol) ++le;
    }
    const double p_ge = static_cast<double>(ge) / static_cast<double>(total);
    const double p_le = static_cast<double>(le) / static_cast<double>(total);
    switch (alt) {
        case Alternative::Greater: return p_ge;
        case Alternative::Less: return p_le;
        case Alternative::TwoSided: return std::min(1.0, 2.0 * std::min(p_ge, p_le));
    }
    return 1.0;
}

}  // namespace detail

// Wilcoxon signed-rank test on paired differences.
//
// n <= 12 nonzero diffs: exact enumeration (zeros dropped first).
// Larger n: normal approximation with continuity correction, zeros handled
// by ranking them along with the rest and removing their rank mass, and a
// tie correction on the remaining ranks.
inline double wilcoxon_signed_rank(std::span<const double> diffs,
                                   Alternative alt = Alternative::TwoSided) {
    std::vector<double> nonzero;
    for (double d : diffs)
        if (d != 0.0) nonzero.push_back(d);
    if (nonzero.empty()) throw NumericError("wilcoxon: all differences are zero");

    if (nonzero.size() <= 12) {
        std::vector<double> abs_d(nonzero.size());
        for (std::size_t i = 0; i < nonzero.size(); ++i) abs_d[i] = std::fabs(nonzero[i]);
        const auto ranks = average_ranks(abs_d);
        double w_obs = 0.0;
        for (std::size_t i = 0; i < nonzero.size(); ++i)
            if (nonzero[i] > 0.0) w_obs += ranks[i];
        return detail::wilcoxon_exact(ranks, w_obs, alt);
    }

    const std::size_t n = diffs.size();
    std::vector<double> abs_all(n);
    for (std::size_t i = 0; i < n; ++i) abs_all[i] = std::fabs(diffs[i]);
    const auto ranks = average_ranks(abs_all);
    double r_plus = 0.0;
    std::size_t n_zero = 0;
    std::vector<double> nz_ranks;
    nz_ranks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (diffs[i] > 0.0) r_plus += ranks[i];
        if (diffs[i] == 0.0)
            ++n_zero;
        else
            nz_ranks.push_back(ranks[i]);
    }
    const double dn = static_cast<double>(n);
    const double dz = static_cast<double>(n_zero);
    const double mn = dn * (dn + 1.0) / 4.0 - dz * (dz + 1.0) / 4.0;
    double var24 = dn * (dn + 1.0) * (2.0 * dn + 1.0) - dz * (dz + 1.0) * (2.0 * dz + 1.0);
    // Tie correction over the nonzero ranks.
    std::sort(nz_ranks.begin(), nz_ranks.end());
    std::size_t i = 0;
    while (i < nz_ranks.size()) {
        std::size_t j = i;
        while (j + 1 < nz_ranks.size() && nz_ranks[j + 1] == nz_ranks[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        var24 -= 0.5 * (t * t * t - t);
        i = j + 1;
    }
    const double se = std::sqrt(var24 / 24.0);
    if (se <= 0.0) return 1.0;
    double cc = 0.0;
    switch (alt) {
        case Alternative::TwoSided: cc = 0.5 * ((r_plus > mn) - (r_plus < mn)); break;
        case Alternative::Greater: cc = 0.5; break;
        case Alternative::Less: cc = -0.5; break;
    }
    const double z = (r_plus - mn - cc) / se;
    switch (alt) {
        case Alternative::Greater: return normal_sf(z);
        case Alternative::Less: return normal_cdf(z);
        case Alternative::TwoSided: return std::min(1.0, 2.0 * normal_sf(std::fabs(z)));
    }
    return 1.0;
}

// Benjamini-Hochberg step-up at level alpha; returns per-hypothesis rejection
// flags in the input order.
inline std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double alpha = 0.05) {
    const std::size_t m = p_values.size();
    if (m == 0) throw NumericError("benjamini_hochberg: empty input");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::size_t cutoff = 0;  // number of rejections
    for (std::size_t i = 0; i < m; ++i) {
        const double bound = static_cast<double>(i + 1) * alpha / static_cast<double>(m);
        if (p_values[order[i]] <= bound) cutoff = i + 1;
    }
    std::vector<bool> reject(m, false);
    for (std::size_t i = 0; i < cutoff; ++i) reject[order[i]] = true;
    return reject;
}

struct NbTestResult {
    double t_stat = 0.0;
    int df = 0;
    double p_value = 1.0;
    double correction_factor = 0.0;
    bool degenerate = false;
};

// Variance-corrected resampled t-test: the naive per-run variance is inflated
// by (1/J + n_test/n_train) to account for overlapping training sets.
inline NbTestResult nadeau_bengio_test(std::span<const double> diffs, double n_train,
                                       double n_test) {
    const std::size_t j = diffs.size();
    if (j < 2) throw NumericError("nadeau_bengio: needs at least two runs");
    if (n_train <= 0.0 || n_test <= 0.0) throw NumericError("nadeau_bengio: bad split sizes");
    NbTestResult r;
    r.df = static_cast<int>(j) - 1;
    r.correction_factor = 1.0 / static_cast<double>(j) + n_test / n_train;
    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(j);
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(j - 1);
    if (var <= 0.0) {
        r.degenerate = true;
        r.t_stat = 0.0;
        r.p_value = mean != 0.0 ? 0.0 : 1.0;
        return r;
    }
    r.t_stat = mean / std::sqrt(r.correction_factor * var);
    r.p_value = student_t_two_sided_p(r.t_stat, r.df);
    return r;
}

// Balanced-accuracy threshold search over the grid {i/1000 : i = 1..999};
// returns the lowest grid value attaining the maximum. Rows predicted
// positive when probability >= threshold.
inline double tune_threshold(std::span<const double> probabilities, std::span<const int> labels) {
    if (probabilities.size() != labels.size()) throw NumericError("tune_threshold: size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) (y != 0 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw NumericError("tune_threshold: needs both classes");
    double best_ba = -1.0;
    double best_thr = 0.001;
    for (int i = 1; i <= 999; ++i) {
        const double thr = static_cast<double>(i) / 1000.0;
        std::size_t tp = 0, tn = 0;
        for (std::size_t k = 0; k < labels.size(); ++k) {
            const bool pred_pos = probabilities[k] >= thr;
            if (labels[k] != 0 && pred_pos) ++tp;
            if (labels[k] == 0 && !pred_pos) ++tn;
        }
        const double ba = 0.5 * (static_cast<double>(tp) / static_cast<double>(n_pos) +
                                 static_cast<double>(tn) / static_cast<double>(n_neg));
        if (ba > best_ba) {
            best_ba = ba;
            best_thr = thr;
        }
    }
    return best_thr;
}

enum class PositiveClass { Failure, Success };

struct MetricsReport {
    double auc = 0.0;
    double accuracy = 0.0;
    double recall = 0.0;       // sensitivity to the positive class
    double specificity = 0.0;  // sensitivity to the negative class
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::optional<double> auc_se, accuracy_se, recall_se, specificity_se;
};

// probabilities are P(failure); labels use 1 = failure, 0 = success.
// With positive = Failure, recall counts detected failures and specificity
// counts detected successes.
inline MetricsReport compute_metrics(std::span<const double> probabilities,
                                     std::span<const int> labels, double threshold,
                                     PositiveClass positive = PositiveClass::Failure) {
    if (probabilities.size() != labels.size()) throw NumericError("compute_metrics: size mismatch");
    MetricsReport m;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        bool is_pos = labels[i] != 0;
        bool pred_pos = probabilities[i] >= threshold;
        if (positive == PositiveClass::Success) {
            is_pos = !is_pos;
            pred_pos = !pred_pos;
        }
        if (is_pos && pred_pos) ++tp;
        if (is_pos && !pred_pos) ++fn;
        if (!is_pos && pred_pos) ++fp;
        if (!is_pos && !pred_pos) ++tn;
    }
    m.n_pos = tp + fn;
    m.n_neg = tn + fp;
    if (m.n_pos == 0 || m.n_neg == 0) throw NumericError("compute_metrics: needs both classes");
    std::vector<int> pos_labels(labels.begin(), labels.end());
    if (positive == PositiveClass::Success)
        for (auto& y : pos_labels) y = y != 0 ? 0 : 1;
    std::vector<double> scores(probabilities.begin(), probabilities.end());
    if (positive == PositiveClass::Success)
        for (auto& s : scores) s = 1.0 - s;
    m.auc = roc_auc(scores, pos_labels);
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(labels.size());
    m.recall = static_cast<double>(tp) / static_cast<double>(m.n_pos);
    m.specificity = static_cast<double>(tn) / static_cast<double>(m.n_neg);
    return m;
}

// Stratified bootstrap standard errors (resampling within each class keeps
// every resample two-class).
inline void add_bootstrap_errors(MetricsReport& m, std::span<const double> probabilities,
                                 std::span<const int> labels, double threshold,
                                 PositiveClass positive, std::size_t n_resamples,
                                 std::uint64_t seed) {
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] != 0 ? pos_idx : neg_idx).push_back(i);
    Rng rng(seed);
    std::vector<double> auc_v, acc_v, rec_v, spec_v;
    auc_v.reserve(n_resamples);
    std::vector<double> probs;
    std::vector<int> labs;
    for (std::size_t b = 0; b < n_resamples; ++b) {
        probs.clear();
        labs.clear();
        for (std::size_t k = 0; k < pos_idx.size(); ++k) {
            const auto i = pos_idx[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(pos_idx.size()) - 1))];
            probs.push_back(probabilities[i]);
            labs.push_back(labels[i]);
        }
        for (std::size_t k = 0; k < neg_idx.size(); ++k) {
            const auto i = neg_idx[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(neg_idx.size()) - 1))];
            probs.push_back(probabilities[i]);
            labs.push_back(labels[i]);
        }
        const auto mb = compute_metrics(probs, labs, threshold, positive);
        auc_v.push_back(mb.auc);
        acc_v.push_back(mb.accuracy);
        rec_v.push_back(mb.recall);
        spec_v.push_back(mb.specificity);
    }
    auto sd = [](const std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::sqrt(ss / static_cast<double>(v.size() - 1));
    };
    m.auc_se = sd(auc_v);
    m.accuracy_se = sd(acc_v);
    m.recall_se = sd(rec_v);
    m.specificity_se = sd(spec_v);
}

// ROC curve points (FPR, TPR) swept over distinct score thresholds.
inline std::vector<std::pair<double, double>> roc_points(std::span<const double> scores,
                                                         std::span<const int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double n_pos = 0, n_neg = 0;
    for (int y : labels) (y != 0 ? n_pos : n_neg)++;
    std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
    double tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) (labels[order[k]] != 0 ? tp : fp)++;
        pts.emplace_back(fp / std::max(1.0, n_neg), tp / std::max(1.0, n_pos));
        i = j + 1;
    }
    return pts;
}

struct StratumCell {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

struct StratumTest {
    std::string name;
    std::size_t n = 0;
    std::optional<double> p_value;  // absent when the stratum is empty or all-tied
    bool degenerate = false;
};

struct ProbabilityComparison {
    // Cells: mean +/- sd of the realized-outcome probability, per
    // (outcome, model, history-restricted-or-all).
    std::vector<std::pair<std::string, StratumCell>> cells;
    std::vector<StratumTest> tests;
};

// Compares two models' predicted probabilities on a shared test set.
// h_success / nh_success hold P(success) per row; labels use 1 = failure.
// Four one-sided tests (H stochastically greater than NH) over the strata
// successes, successes-with-history, failures, failures-with-history.
inline ProbabilityComparison compare_probability_distributions(
    std::span<const double> h_success, std::span<const double> nh_success,
    std::span<const int> labels, std::span<const int> history_flags) {
    const std::size_t n = labels.size();
    if (h_success.size() != n || nh_success.size() != n || history_flags.size() != n)
        throw NumericError("compare_probability_distributions: size mismatch");
    ProbabilityComparison out;

    auto cell = [&](bool failures, bool h_model, bool history_only) {
        StratumCell c;
        std::vector<double> v;
        for (std::size_t i = 0; i < n; ++i) {
            if ((labels[i] != 0) != failures) continue;
            if (history_only && history_flags[i] == 0) continue;
            const double ps = h_model ? h_success[i] : nh_success[i];
            v.push_back(failures ? 1.0 - ps : ps);
        }
        c.n = v.size();
        if (!v.empty()) {
            c.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - c.mean) * (x - c.mean);
            c.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        }
        return c;
    };
    const char* model_tag[2] = {"H", "NH"};
    for (bool failures : {false, true})
        for (int hm = 0; hm < 2; ++hm)
            for (bool hist_only : {true, false}) {
                std::string key = std::string(failures ? "failures" : "successes") + "/" +
                                  model_tag[hm] + "/" + (hist_only ? "with_history" : "all");
                out.cells.emplace_back(std::move(key), cell(failures, hm == 0, hist_only));
            }

    auto run_test = [&](const std::string& name, bool failures, bool history_only) {
        StratumTest t;
        t.name = name;
        std::vector<double> diffs;
        for (std::size_t i = 0; i < n; ++i) {
            if ((labels[i] != 0) != failures) continue;
            if (history_only && history_flags[i] == 0) continue;
            // For failures compare P(failure) = 1 - P(success).
            const double d = failures ? (1.0 - h_success[i]) - (1.0 - nh_success[i])
                                      : h_success[i] - nh_success[i];
            diffs.push_back(d);
        }
        t.n = diffs.size();
        if (diffs.empty()) return t;
        const bool all_zero = std::all_of(diffs.begin(), diffs.end(), [](double d) { return d == 0.0; });
        if (all_zero) {
            t.degenerate = true;
            t.p_value = 1.0;
            return t;
        }
        t.p_value = wilcoxon_signed_rank(diffs, Alternative::Greater);
        return t;
    };
    out.tests.push_back(run_test("successes", false, false));
    out.tests.push_back(run_test("successes_with_history", false, true));
    out.tests.push_back(run_test("failures", true, false));
    out.tests.push_back(run_test("failures_with_history", true, true));
    return out;
}

}  // namespace stats
}  // namespace retro
