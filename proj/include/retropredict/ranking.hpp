#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "retropredict/features.hpp"
#include "retropredict/learner.hpp"

namespace retro {
namespace ranking {

struct RankingEntry {
    MutationId mutation;
    double coefficient = 0.0;
    double neg_log_weight_sum = 0.0;  // L_m = -sum log |w| over occurrences
    double coef_abs_z = 0.0;
    double neg_log_weight_sum_z = 0.0;
    double ranking_value = 0.0;
};

// Mutation-block coefficients by descending magnitude; ties fall back to the
// canonical token order. Drug indicators are excluded.
inline std::vector<std::pair<MutationId, double>> coefficient_ranking(const SvmModel& model,
                                                                      const LabeledDataset& ds) {
    std::vector<std::pair<MutationId, double>> out;
    out.reserve(ds.mutation_universe.size());
    for (std::size_t i = 0; i < ds.mutation_universe.size(); ++i)
        out.emplace_back(ds.mutation_universe[i], model.w[i]);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        const double ma = std::fabs(a.second), mb = std::fabs(b.second);
        if (ma != mb) return ma > mb;
        return a.first.render() < b.first.render();
    });
    return out;
}

inline void z_scale(std::vector<double>& v) {
    if (v.empty()) return;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    if (sd == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    for (double& x : v) x = (x - mean) / sd;
}

inline constexpr double kWeightClampLo = 1e-6;

// Composite ranking over a Weighted training set: each mutation scores the
// product of its z-scaled |coefficient| and z-scaled -sum(log |w|) over the
// training rows where its feature is nonzero (weights clamped into
// [1e-6, 1] before the log). High coefficient despite low weights ranks high.
inline std::vector<RankingEntry> composite_ranking(const SvmModel& model, const LabeledDataset& ds,
                                                   std::span<const std::size_t> train_rows,
                                                   bool sum_over_all_rows = false) {
    if (ds.variant.encoding != Encoding::Weighted)
        throw ConfigError("composite_ranking needs a Weighted training set");
    const std::size_t m_count = ds.mutation_universe.size();
    std::vector<double> neg_log_sum(m_count, 0.0);
    for (auto r : train_rows) {
        for (const auto& f : ds.rows[r].features) {
            if (f.index >= m_count) continue;
            const double w = std::clamp(std::fabs(f.value), kWeightClampLo, 1.0);
            neg_log_sum[f.index] += -std::log(w);
        }
        if (sum_over_all_rows) {
            // Rows lacking the mutation contribute the clamp floor.
            std::vector<bool> present(m_count, false);
            for (const auto& f : ds.rows[r].features)
                if (f.index < m_count) present[f.index] = true;
            for (std::size_t m = 0; m < m_count; ++m)
                if (!present[m]) neg_log_sum[m] += -std::log(kWeightClampLo);
        }
    }

    std::vector<double> coef_abs(m_count);
    for (std::size_t i = 0; i < m_count; ++i) coef_abs[i] = std::fabs(model.w[i]);
    std::vector<double> coef_z = coef_abs;
    std::vector<double> nls_z = neg_log_sum;
    z_scale(coef_z);
    z_scale(nls_z);

    std::vector<RankingEntry> entries(m_count);
    for (std::size_t i = 0; i < m_count; ++i) {
        entries[i].mutation = ds.mutation_universe[i];
        entries[i].coefficient = model.w[i];
        entries[i].neg_log_weight_sum = neg_log_sum[i];
        entries[i].coef_abs_z = coef_z[i];
        entries[i].neg_log_weight_sum_z = nls_z[i];
        entries[i].ranking_value = coef_z[i] * nls_z[i];
    }
    std::stable_sort(entries.begin(), entries.end(), [](const RankingEntry& a, const RankingEntry& b) {
        if (a.ranking_value != b.ranking_value) return a.ranking_value > b.ranking_value;
        return a.mutation.render() < b.mutation.render();
    });
    return entries;
}

// Scree-plot elbow: both axes are scaled to [0, 1], the flexion point is the
// point farthest from the chord through the first and last points, and the
// returned cutoff is the last index kept before it (so selecting indices
// [0, cutoff] keeps everything left of the bend).
inline std::size_t elbow_select(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 3) throw NumericError("elbow_select: need at least three values");
    for (std::size_t i = 1; i < n; ++i)
        if (values[i] > values[i - 1]) throw NumericError("elbow_select: values must be descending");

    const double span_y = values.front() - values.back();
    std::size_t flexion = 0;
    if (span_y > 0.0) {
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = static_cast<double>(i) / static_cast<double>(n - 1);
            const double y = (values[i] - values.back()) / span_y;
            // Chord runs from (0,1) to (1,0); |x + y - 1| / sqrt(2) is the
            // perpendicular distance.
            const double dist = std::fabs(x + y - 1.0);
            if (dist > best + 1e-15) {
                best = dist;
                flexion = i;
            }
        }
    }
    return flexion > 0 ? flexion - 1 : 0;
}

}  // namespace ranking

using ranking::coefficient_ranking;
using ranking::composite_ranking;
using ranking::elbow_select;
using ranking::RankingEntry;

}  // namespace retro
