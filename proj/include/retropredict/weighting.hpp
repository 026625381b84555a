#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "retropredict/core.hpp"
#include "retropredict/ingest.hpp"
#include "retropredict/persistence.hpp"

namespace retro {
namespace weighting {

inline constexpr int kWindowHalfDays = 30;  // two-month window = sample date +/- 30d
inline constexpr double kVlOffset = 50.0;   // undetectability threshold, log10-subtracted

// Area under the patient's piecewise-linear log10(VL) - log10(50) curve over
// [grt_date - 30d, grt_date + 30d]. The interpolant runs through every VL of
// the patient and is extended as a constant beyond the first/last
// measurement; the trapezoid rule is exact on it.
inline double vl_area(std::span<const ViralLoadMeasurement> vls, Day grt_date) {
    if (vls.empty()) throw NumericError("vl_area: no viral loads");
    const double lo = static_cast<double>(grt_date) - kWindowHalfDays;
    const double hi = static_cast<double>(grt_date) + kWindowHalfDays;
    const double log_offset = std::log10(kVlOffset);

    auto value_at = [&](double t) {
        if (t <= static_cast<double>(vls.front().date))
            return std::log10(vls.front().copies_per_ml) - log_offset;
        if (t >= static_cast<double>(vls.back().date))
            return std::log10(vls.back().copies_per_ml) - log_offset;
        // Find the segment containing t.
        std::size_t j = 1;
        while (j < vls.size() && static_cast<double>(vls[j].date) < t) ++j;
        const double x0 = static_cast<double>(vls[j - 1].date);
        const double x1 = static_cast<double>(vls[j].date);
        const double y0 = std::log10(vls[j - 1].copies_per_ml) - log_offset;
        const double y1 = std::log10(vls[j].copies_per_ml) - log_offset;
        if (x1 == x0) return y1;
        return y0 + (y1 - y0) * (t - x0) / (x1 - x0);
    };

    // Knots: window endpoints plus every measurement date inside the window.
    std::vector<double> knots{lo};
    for (const auto& v : vls) {
        const double d = static_cast<double>(v.date);
        if (d > lo && d < hi) knots.push_back(d);
    }
    knots.push_back(hi);

    double area = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double a = knots[i], b = knots[i + 1];
        area += 0.5 * (value_at(a) + value_at(b)) * (b - a);
    }
    return area;
}

struct AreaOccurrence {
    std::string therapy_id;
    MutationId mutation;
    double raw_area = 0.0;
    bool is_training = true;
};

struct NormalizedAreas {
    std::vector<double> normalized;           // aligned with the input occurrences
    std::map<MutationId, double> scales;      // per-mutation max-abs over training rows
};

// Per-mutation max-abs normalization of raw areas into [-1, 1]. Scales come
// from training occurrences only and are reused (with clamping) for the rest.
inline NormalizedAreas normalize_areas(std::span<const AreaOccurrence> occurrences) {
    if (occurrences.empty()) throw NumericError("normalize_areas: empty input");
    NormalizedAreas out;
    for (const auto& occ : occurrences) {
        if (!occ.is_training) continue;
        auto [it, inserted] = out.scales.emplace(occ.mutation, std::fabs(occ.raw_area));
        if (!inserted) it->second = std::max(it->second, std::fabs(occ.raw_area));
    }
    for (auto& [m, s] : out.scales)
        if (s == 0.0) s = 1.0;
    out.normalized.reserve(occurrences.size());
    for (const auto& occ : occurrences) {
        auto it = out.scales.find(occ.mutation);
        const double scale = it == out.scales.end() ? 1.0 : it->second;
        out.normalized.push_back(std::clamp(occ.raw_area / scale, -1.0, 1.0));
    }
    return out;
}

// Minimum penalty score of the mutation over the regimen's drugs (absent
// pairs score 0), divided by the norm of the canonical score vector.
inline double stanford_component(const MutationId& mutation, std::span<const std::string> regimen,
                                 const StanfordScoreTable& table,
                                 bool min_over_same_gene_class_only = false) {
    if (regimen.empty()) throw NumericError("stanford_component: empty regimen");
    bool any = false;
    int min_score = 0;
    for (const auto& code : regimen) {
        if (min_over_same_gene_class_only &&
            class_target_gene(drug_class(code)) != mutation.gene)
            continue;
        const int s = table.score(mutation, code);
        min_score = any ? std::min(min_score, s) : s;
        any = true;
    }
    if (!any) return 0.0;
    return static_cast<double>(min_score) / StanfordScoreTable::scale_norm();
}

struct MutationWeight {
    double value = 0.0;          // clamped to [-1, 1]
    double area = 0.0;           // normalized Area_VL input
    double sigmoid_term = 0.0;   // e^(alpha + beta t)
    double stanford_term = 0.0;  // tanh(S_m)
    long t_days = 0;
};

// w = AreaVL / (1 + e^(alpha + beta t) - tanh(S)), clamped to [-1, 1].
inline MutationWeight mutation_weight(const SigmoidParams& params, long t_days,
                                      double area_normalized, double s_m) {
    if (t_days < 0) throw NumericError("mutation_weight: negative elapsed time");
    MutationWeight w;
    w.t_days = t_days;
    w.area = area_normalized;
    const double expo = params.alpha + params.beta * static_cast<double>(t_days);
    w.sigmoid_term = expo > 700.0 ? std::numeric_limits<double>::infinity() : std::exp(expo);
    w.stanford_term = std::tanh(s_m);
    const double denom = 1.0 + w.sigmoid_term - w.stanford_term;
    if (!(denom > 1e-12)) throw NumericError("mutation_weight: degenerate denominator");
    if (std::isinf(w.sigmoid_term)) {
        w.value = 0.0;
        return w;
    }
    w.value = std::clamp(area_normalized / denom, -1.0, 1.0);
    return w;
}

}  // namespace weighting

using weighting::mutation_weight;
using weighting::normalize_areas;
using weighting::stanford_component;
using weighting::vl_area;

}  // namespace retro
