#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "retropredict/features.hpp"
#include "retropredict/json_io.hpp"
#include "retropredict/persistence.hpp"
#include "retropredict/rng.hpp"
#include "retropredict/stats.hpp"
#include "retropredict/util.hpp"

namespace retro {

// Inside the learner: failure maps to +1, success to -1; the decision value
// rises with predicted failure.
inline int svm_label(int label01) { return label01 != 0 ? 1 : -1; }

struct SvmTrainResult {
    std::vector<double> w;  // dim + 1, bias in the last slot
    std::vector<double> alpha;
    int epochs = 0;
    double max_violation = 0.0;
    std::vector<double> dual_objective_trace;  // one entry per epoch

    double bias() const { return w.back(); }

    double decision(const DataRow& row) const {
        double d = w.back();
        for (const auto& f : row.features) d += w[f.index] * f.value;
        return d;
    }
};

namespace learner_detail {

inline double row_dot_self(const DataRow& row) {
    double s = 1.0;  // constant bias feature
    for (const auto& f : row.features) s += f.value * f.value;
    return s;
}

}  // namespace learner_detail

// L2-regularized L1-hinge linear SVM solved by dual coordinate descent.
// The bias is an appended constant-1 feature (and regularized with the rest).
// Deterministic given the coordinate-order seed.
inline SvmTrainResult train_svm(std::span<const DataRow* const> rows, std::size_t dim, double C,
                                std::uint64_t seed, double eps = 1e-6, int max_epochs = 2000) {
    if (C <= 0.0) throw NumericError("train_svm: C must be positive");
    bool has_pos = false, has_neg = false;
    for (const auto* r : rows) (r->label != 0 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw NumericError("train_svm: single-class input");

    const std::size_t n = rows.size();
    SvmTrainResult res;
    res.w.assign(dim + 1, 0.0);
    res.alpha.assign(n, 0.0);
    std::vector<double> qii(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        qii[i] = learner_detail::row_dot_self(*rows[i]);
        y[i] = svm_label(rows[i]->label);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "svm-coordinate-order"));

    auto dual_objective = [&] {
        double wtw = 0.0;
        for (double v : res.w) wtw += v * v;
        const double asum = std::accumulate(res.alpha.begin(), res.alpha.end(), 0.0);
        return asum - 0.5 * wtw;
    };

    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        rng.shuffle(order);
        double max_pg = 0.0;
        for (std::size_t oi = 0; oi < n; ++oi) {
            const std::size_t i = order[oi];
            const DataRow& row = *rows[i];
            double dec = res.w.back();
            for (const auto& f : row.features) dec += res.w[f.index] * f.value;
            const double g = y[i] * dec - 1.0;
            double pg = g;
            if (res.alpha[i] <= 0.0)
                pg = std::min(g, 0.0);
            else if (res.alpha[i] >= C)
                pg = std::max(g, 0.0);
            max_pg = std::max(max_pg, std::fabs(pg));
            if (pg != 0.0) {
                const double old = res.alpha[i];
                const double next = std::clamp(old - g / qii[i], 0.0, C);
                const double delta = (next - old) * y[i];
                if (delta != 0.0) {
                    for (const auto& f : row.features) res.w[f.index] += delta * f.value;
                    res.w.back() += delta;
                    res.alpha[i] = next;
                }
            }
        }
        res.epochs = epoch + 1;
        res.max_violation = max_pg;
        res.dual_objective_trace.push_back(dual_objective());
        if (max_pg < eps) break;
    }
    return res;
}

inline double svm_primal_objective(const SvmTrainResult& fit, std::span<const DataRow* const> rows,
                                   double C) {
    double wtw = 0.0;
    for (double v : fit.w) wtw += v * v;
    double hinge = 0.0;
    for (const auto* r : rows)
        hinge += std::max(0.0, 1.0 - svm_label(r->label) * fit.decision(*r));
    return 0.5 * wtw + C * hinge;
}

inline double svm_dual_objective(const SvmTrainResult& fit) {
    double wtw = 0.0;
    for (double v : fit.w) wtw += v * v;
    return std::accumulate(fit.alpha.begin(), fit.alpha.end(), 0.0) - 0.5 * wtw;
}

struct PlattResult {
    double a = 0.0;
    double b = 0.0;
    bool sign_flipped = false;  // unconstrained slope came out positive
};

// Platt scaling of decision values: fits P(failure | d) = 1/(1+e^(A d + B))
// against the smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2). A <= 0 is
// enforced; a positive unconstrained slope is flagged as a label-orientation
// problem and refit under the constraint.
inline PlattResult platt_calibrate(std::span<const double> decisions, std::span<const int> labels) {
    if (decisions.size() != labels.size()) throw NumericError("platt_calibrate: size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l != 0 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw NumericError("platt_calibrate: single-class input");

    const double t_pos = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
    const double t_neg = 1.0 / (static_cast<double>(n_neg) + 2.0);
    std::vector<double> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = labels[i] != 0 ? t_pos : t_neg;

    // Our logistic core models f = 1/(1+e^(c0 + c1 v)) as P(target = 1), so
    // fit with c0 = B, c1 = A over v = decision.
    const std::vector<std::pair<double, double>> starts{{0.0, 0.0}, {0.0, -1.0}, {0.0, 1.0}};
    const opt::Box2 unconstrained{-100.0, 100.0, -100.0, 100.0};
    auto fit = opt::fit_bounded_logistic(decisions, targets, unconstrained, starts);
    PlattResult res;
    res.b = fit.c0;
    res.a = fit.c1;
    if (res.a > 0.0) {
        res.sign_flipped = true;
        const opt::Box2 constrained{-100.0, 100.0, -100.0, 0.0};
        const std::vector<std::pair<double, double>> starts2{{0.0, 0.0}, {0.0, -1.0}};
        auto refit = opt::fit_bounded_logistic(decisions, targets, constrained, starts2);
        res.b = refit.c0;
        res.a = refit.c1;
    }
    return res;
}

inline double platt_probability(double a, double b, double decision) {
    return opt::sigmoid(-(a * decision + b));
}

struct CvCandidate {
    double C = 0.0;
    std::vector<double> fold_aucs;  // repeats * folds entries
    double mean_auc = 0.0;
    std::optional<double> p_value_vs_best;  // absent for the best candidate
    bool rejected = false;
};

struct CvSearchResult {
    double selected_C = 0.0;
    std::size_t best_index = 0;
    std::size_t selected_index = 0;
    std::vector<CvCandidate> candidates;
    int fold_reseeds = 0;  // partitions regenerated because a fold lost a class
};

namespace learner_detail {

// Patient-grouped fold assignment balanced by row count. Reseeds until every
// fold's validation and complement both contain the two classes.
inline std::vector<std::vector<std::size_t>> grouped_folds(
    const LabeledDataset& ds, std::span<const std::size_t> row_indices, std::size_t folds,
    std::uint64_t seed, int* reseeds) {
    std::map<std::string, std::vector<std::size_t>> by_patient;
    for (auto i : row_indices) by_patient[ds.rows[i].patient_id].push_back(i);
    if (by_patient.size() < folds)
        throw DataError("grouped_folds: fewer patients than folds");

    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::string> patients;
        patients.reserve(by_patient.size());
        for (const auto& [pid, rows] : by_patient) patients.push_back(pid);
        Rng rng(derive_seed(seed, "fold-shuffle", static_cast<std::uint64_t>(attempt)));
        rng.shuffle(patients);

        std::vector<std::vector<std::size_t>> fold_rows(folds);
        for (const auto& pid : patients) {
            auto smallest = std::min_element(fold_rows.begin(), fold_rows.end(),
                                             [](const auto& a, const auto& b) {
                                                 return a.size() < b.size();
                                             });
            const auto& rows = by_patient[pid];
            smallest->insert(smallest->end(), rows.begin(), rows.end());
        }

        bool ok = true;
        for (std::size_t f = 0; f < folds && ok; ++f) {
            bool val_pos = false, val_neg = false, fit_pos = false, fit_neg = false;
            for (std::size_t g = 0; g < folds; ++g) {
                for (auto i : fold_rows[g]) {
                    const bool pos = ds.rows[i].label != 0;
                    if (g == f)
                        (pos ? val_pos : val_neg) = true;
                    else
                        (pos ? fit_pos : fit_neg) = true;
                }
            }
            ok = val_pos && val_neg && fit_pos && fit_neg;
        }
        if (ok) {
            for (auto& rows : fold_rows) std::sort(rows.begin(), rows.end());
            return fold_rows;
        }
        if (reseeds) ++(*reseeds);
    }
    throw NumericError("grouped_folds: could not build two-class folds");
}

}  // namespace learner_detail

struct CvOptions {
    std::size_t folds = 5;
    std::size_t repeats = 5;
    double alpha = 0.05;
    double svm_eps = 1e-6;
    int svm_max_epochs = 2000;
    unsigned threads = 1;
};

// Random search over C ~ exp(U(-14, 0)) scored by repeated patient-grouped
// cross-validation. The winner is the smallest C whose 25 paired AUCs are not
// significantly below the best candidate's (two-sided Wilcoxon signed-rank,
// Benjamini-Hochberg corrected at 5%).
inline CvSearchResult random_search_cv(const LabeledDataset& ds,
                                       std::span<const std::size_t> train_rows,
                                       std::size_t n_candidates, std::uint64_t seed,
                                       const CvOptions& options = {}) {
    if (n_candidates == 0) throw ConfigError("random_search_cv: need at least one candidate");
    CvSearchResult res;
    res.candidates.resize(n_candidates);
    Rng c_rng(derive_seed(seed, "c-candidates"));
    for (auto& cand : res.candidates) cand.C = std::exp(c_rng.uniform(-14.0, 0.0));

    // One shared set of fold partitions keeps the comparisons paired.
    std::vector<std::vector<std::vector<std::size_t>>> partitions;  // [repeat][fold] -> rows
    for (std::size_t r = 0; r < options.repeats; ++r) {
        partitions.push_back(learner_detail::grouped_folds(
            ds, train_rows, options.folds, derive_seed(seed, "cv-partition", r), &res.fold_reseeds));
    }

    struct Task {
        std::size_t candidate, repeat, fold;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < n_candidates; ++c)
        for (std::size_t r = 0; r < options.repeats; ++r)
            for (std::size_t f = 0; f < options.folds; ++f) tasks.push_back({c, r, f});
    for (auto& cand : res.candidates)
        cand.fold_aucs.assign(options.repeats * options.folds, 0.0);

    parallel_for(tasks.size(), options.threads, [&](std::size_t ti) {
        const auto [c, r, f] = tasks[ti];
        std::vector<const DataRow*> fit_rows;
        std::vector<const DataRow*> val_rows;
        for (std::size_t g = 0; g < options.folds; ++g) {
            for (auto i : partitions[r][g])
                (g == f ? val_rows : fit_rows).push_back(&ds.rows[i]);
        }
        const auto fit = train_svm(fit_rows, ds.dim(), res.candidates[c].C,
                                   derive_seed(seed, "svm-cv", (r * options.folds + f)),
                                   options.svm_eps, options.svm_max_epochs);
        std::vector<double> scores;
        std::vector<int> labels;
        scores.reserve(val_rows.size());
        for (const auto* row : val_rows) {
            scores.push_back(fit.decision(*row));
            labels.push_back(row->label);
        }
        res.candidates[c].fold_aucs[r * options.folds + f] = stats::roc_auc(scores, labels);
    });

    for (auto& cand : res.candidates)
        cand.mean_auc = std::accumulate(cand.fold_aucs.begin(), cand.fold_aucs.end(), 0.0) /
                        static_cast<double>(cand.fold_aucs.size());

    res.best_index = 0;
    for (std::size_t c = 1; c < n_candidates; ++c)
        if (res.candidates[c].mean_auc > res.candidates[res.best_index].mean_auc) res.best_index = c;

    // Paired Wilcoxon of every other candidate against the best, BH-corrected.
    std::vector<std::size_t> others;
    std::vector<double> p_values;
    for (std::size_t c = 0; c < n_candidates; ++c) {
        if (c == res.best_index) continue;
        std::vector<double> diffs(res.candidates[c].fold_aucs.size());
        for (std::size_t i = 0; i < diffs.size(); ++i)
            diffs[i] = res.candidates[res.best_index].fold_aucs[i] - res.candidates[c].fold_aucs[i];
        const bool all_zero = std::all_of(diffs.begin(), diffs.end(), [](double d) { return d == 0.0; });
        const double p = all_zero ? 1.0 : stats::wilcoxon_signed_rank(diffs, stats::Alternative::TwoSided);
        res.candidates[c].p_value_vs_best = p;
        others.push_back(c);
        p_values.push_back(p);
    }
    if (!p_values.empty()) {
        const auto reject = stats::benjamini_hochberg(p_values, options.alpha);
        for (std::size_t i = 0; i < others.size(); ++i)
            res.candidates[others[i]].rejected = reject[i];
    }

    res.selected_index = res.best_index;
    for (std::size_t c = 0; c < n_candidates; ++c) {
        if (c != res.best_index && res.candidates[c].rejected) continue;
        if (res.candidates[c].C < res.candidates[res.selected_index].C) res.selected_index = c;
    }
    res.selected_C = res.candidates[res.selected_index].C;
    return res;
}

struct SvmModel {
    DatasetVariant variant;
    std::vector<double> w;  // over the dataset's feature universe
    double b = 0.0;
    double C = 0.0;
    double platt_a = 0.0;
    double platt_b = 0.0;
    double threshold = 0.5;
    bool platt_sign_flipped = false;
    std::string fingerprint;
    std::vector<CvCandidate> cv_table;
    double selected_C = 0.0;

    double decision(const DataRow& row) const {
        double d = b;
        for (const auto& f : row.features) d += w[f.index] * f.value;
        return d;
    }

    double failure_probability(const DataRow& row) const {
        return platt_probability(platt_a, platt_b, decision(row));
    }

    double success_probability(const DataRow& row) const { return 1.0 - failure_probability(row); }
};

// Refit on the full training split with the selected C, then calibrate and
// tune the threshold on out-of-fold decisions from a fresh grouped 5-fold
// pass (in-sample decisions would make the calibration optimistic).
inline SvmModel fit_final(const LabeledDataset& ds, std::span<const std::size_t> train_rows,
                          double selected_C, std::uint64_t seed, const CvOptions& options = {}) {
    std::vector<const DataRow*> rows;
    rows.reserve(train_rows.size());
    for (auto i : train_rows) rows.push_back(&ds.rows[i]);
    const auto fit = train_svm(rows, ds.dim(), selected_C, derive_seed(seed, "svm-final"),
                               options.svm_eps, options.svm_max_epochs);

    int reseeds = 0;
    const auto folds = learner_detail::grouped_folds(ds, train_rows, options.folds,
                                                     derive_seed(seed, "calibration-folds"),
                                                     &reseeds);
    std::vector<double> oof_decisions;
    std::vector<int> oof_labels;
    std::vector<std::pair<std::size_t, double>> collected;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<const DataRow*> fit_rows;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            for (auto i : folds[g]) fit_rows.push_back(&ds.rows[i]);
        }
        const auto fold_fit = train_svm(fit_rows, ds.dim(), selected_C,
                                        derive_seed(seed, "svm-calibration", f), options.svm_eps,
                                        options.svm_max_epochs);
        for (auto i : folds[f]) collected.emplace_back(i, fold_fit.decision(ds.rows[i]));
    }
    std::sort(collected.begin(), collected.end());
    for (const auto& [i, d] : collected) {
        oof_decisions.push_back(d);
        oof_labels.push_back(ds.rows[i].label);
    }

    const auto platt = platt_calibrate(oof_decisions, oof_labels);
    std::vector<double> oof_probs(oof_decisions.size());
    for (std::size_t i = 0; i < oof_decisions.size(); ++i)
        oof_probs[i] = platt_probability(platt.a, platt.b, oof_decisions[i]);

    SvmModel model;
    model.variant = ds.variant;
    model.w.assign(fit.w.begin(), fit.w.end() - 1);
    model.b = fit.w.back();
    model.C = selected_C;
    model.selected_C = selected_C;
    model.platt_a = platt.a;
    model.platt_b = platt.b;
    model.platt_sign_flipped = platt.sign_flipped;
    model.threshold = stats::tune_threshold(oof_probs, oof_labels);
    return model;
}

inline ordered_json svm_model_to_json(const SvmModel& model, const LabeledDataset& ds,
                                      const std::vector<std::string>& test_therapy_ids = {}) {
    ordered_json j;
    j["variant"] = model.variant.name();
    j["C"] = model.C;
    j["b"] = model.b;
    j["platt"] = {{"A", model.platt_a}, {"B", model.platt_b},
                  {"sign_flipped", model.platt_sign_flipped}};
    j["threshold"] = model.threshold;
    j["fingerprint"] = model.fingerprint;
    ordered_json w = ordered_json::object();
    const std::size_t mut_count = ds.mutation_universe.size();
    for (std::size_t i = 0; i < model.w.size(); ++i) {
        if (model.w[i] == 0.0) continue;
        const std::string key = i < mut_count
                                    ? ds.mutation_universe[i].render()
                                    : "drug:" + ds.drug_universe[i - mut_count];
        w[key] = model.w[i];
    }
    j["w"] = std::move(w);
    ordered_json cv = ordered_json::array();
    for (const auto& cand : model.cv_table) {
        ordered_json jc;
        jc["C"] = cand.C;
        jc["mean_auc"] = cand.mean_auc;
        if (cand.p_value_vs_best)
            jc["p_value_vs_best"] = *cand.p_value_vs_best;
        else
            jc["p_value_vs_best"] = nullptr;
        jc["rejected"] = cand.rejected;
        jc["fold_aucs"] = cand.fold_aucs;
        cv.push_back(std::move(jc));
    }
    j["cv"] = std::move(cv);
    j["selected_C"] = model.selected_C;
    j["test_therapy_ids"] = test_therapy_ids;
    return j;
}

inline SvmModel svm_model_from_json(const ordered_json& j, const LabeledDataset& ds) {
    SvmModel model;
    model.variant = parse_variant(j.at("variant").get<std::string>());
    model.C = j.at("C").get<double>();
    model.b = j.at("b").get<double>();
    model.platt_a = j.at("platt").at("A").get<double>();
    model.platt_b = j.at("platt").at("B").get<double>();
    model.platt_sign_flipped = j.at("platt").at("sign_flipped").get<bool>();
    model.threshold = j.at("threshold").get<double>();
    model.fingerprint = j.at("fingerprint").get<std::string>();
    model.selected_C = j.at("selected_C").get<double>();
    model.w.assign(ds.dim(), 0.0);
    const std::size_t mut_count = ds.mutation_universe.size();
    for (const auto& [key, value] : j.at("w").items()) {
        std::size_t idx;
        if (key.rfind("drug:", 0) == 0) {
            const std::string code = key.substr(5);
            auto it = std::find(ds.drug_universe.begin(), ds.drug_universe.end(), code);
            if (it == ds.drug_universe.end()) throw DataError("model drug outside universe: " + code);
            idx = mut_count + static_cast<std::size_t>(it - ds.drug_universe.begin());
        } else {
            idx = ds.mutation_index(parse_mutation(key));
        }
        model.w[idx] = value.get<double>();
    }
    for (const auto& jc : j.at("cv")) {
        CvCandidate cand;
        cand.C = jc.at("C").get<double>();
        cand.mean_auc = jc.at("mean_auc").get<double>();
        if (!jc.at("p_value_vs_best").is_null())
            cand.p_value_vs_best = jc.at("p_value_vs_best").get<double>();
        cand.rejected = jc.at("rejected").get<bool>();
        cand.fold_aucs = jc.at("fold_aucs").get<std::vector<double>>();
        model.cv_table.push_back(std::move(cand));
    }
    return model;
}

}  // namespace retro
