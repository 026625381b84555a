#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string_view>

#include "retropredict/core.hpp"

namespace retro {

enum class LabelRule { Window20to28, Stop4to8, Stop8to20, StopUnder4 };
enum class ExclusionReason { StoppedWithin4Weeks, NoFollowUpVl, NoOnTherapyVl };

inline std::string_view label_rule_name(LabelRule r) {
    switch (r) {
        case LabelRule::Window20to28: return "Window20to28";
        case LabelRule::Stop4to8: return "Stop4to8";
        case LabelRule::Stop8to20: return "Stop8to20";
        case LabelRule::StopUnder4: return "StopUnder4";
    }
    return "?";
}

inline std::string_view exclusion_reason_name(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::StoppedWithin4Weeks: return "StoppedWithin4Weeks";
        case ExclusionReason::NoFollowUpVl: return "NoFollowUpVl";
        case ExclusionReason::NoOnTherapyVl: return "NoOnTherapyVl";
    }
    return "?";
}

struct OutcomeLabel {
    Outcome value = Outcome::Excluded;
    std::optional<LabelRule> rule_fired;
    std::optional<std::pair<Day, double>> deciding_vl;  // (date, copies/ml)
    std::optional<ExclusionReason> reason;
};

namespace labeling {

inline constexpr int kWeekDays = 7;
inline constexpr double kSuppressionThreshold = 50.0;  // cp/ml
inline constexpr int kBaselineLookbackDays = 90;

// Maps a therapy's viral-load trajectory to Success / Failure / Excluded.
//
// Duration buckets partition as: <= 4 weeks excluded; (4w, 8w] needs a VL
// < 50 or a 1-log10 drop vs baseline; (8w, 20w) needs < 50 or a 2-log10 drop;
// >= 20 weeks (or open-ended) reads the follow-up VL in [start+20w, start+28w]
// closest to week 24 (ties resolved to the earlier measurement).
// Baseline is the most recent VL within 90 days before start; without one the
// log-decrease clauses are unsatisfiable and only the < 50 clause applies.
inline OutcomeLabel label_therapy(const Therapy& therapy,
                                  std::span<const ViralLoadMeasurement> vls) {
    const Day start = therapy.start_date;

    std::optional<double> baseline;
    for (const auto& v : vls) {
        if (v.date >= start - kBaselineLookbackDays && v.date <= start) baseline = v.copies_per_ml;
        if (v.date > start) break;
    }

    const bool open_ended = !therapy.end_date.has_value();
    const long duration = open_ended ? -1 : static_cast<long>(*therapy.end_date) - start;

    if (!open_ended && duration <= 4 * kWeekDays) {
        return OutcomeLabel{Outcome::Excluded, LabelRule::StopUnder4, std::nullopt,
                            ExclusionReason::StoppedWithin4Weeks};
    }

    if (open_ended || duration >= 20 * kWeekDays) {
        const Day lo = start + 20 * kWeekDays;
        const Day hi = start + 28 * kWeekDays;
        const Day target = start + 24 * kWeekDays;
        std::optional<std::pair<Day, double>> best;
        for (const auto& v : vls) {
            if (v.date < lo || v.date > hi) continue;
            if (!best || std::abs(static_cast<long>(v.date) - target) <
                             std::abs(static_cast<long>(best->first) - target)) {
                best = {v.date, v.copies_per_ml};
            }
        }
        if (!best) {
            return OutcomeLabel{Outcome::Excluded, std::nullopt, std::nullopt,
                                ExclusionReason::NoFollowUpVl};
        }
        const Outcome o = best->second < kSuppressionThreshold ? Outcome::Success : Outcome::Failure;
        return OutcomeLabel{o, LabelRule::Window20to28, best, std::nullopt};
    }

    // Early-stop buckets: need the last on-therapy VL.
    const Day end = *therapy.end_date;
    std::optional<std::pair<Day, double>> last_on;
    for (const auto& v : vls) {
        if (v.date >= start && v.date <= end) last_on = {v.date, v.copies_per_ml};
        if (v.date > end) break;
    }
    const LabelRule rule = duration <= 8 * kWeekDays ? LabelRule::Stop4to8 : LabelRule::Stop8to20;
    if (!last_on) {
        return OutcomeLabel{Outcome::Excluded, std::nullopt, std::nullopt,
                            ExclusionReason::NoOnTherapyVl};
    }
    const double required_drop = rule == LabelRule::Stop4to8 ? 1.0 : 2.0;
    bool success = last_on->second < kSuppressionThreshold;
    if (!success && baseline) {
        const double drop = std::log10(*baseline) - std::log10(last_on->second);
        success = drop >= required_drop;
    }
    return OutcomeLabel{success ? Outcome::Success : Outcome::Failure, rule, last_on, std::nullopt};
}

}  // namespace labeling

using labeling::label_therapy;

}  // namespace retro
