#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "retropredict/core.hpp"
#include "retropredict/labeling.hpp"
#include "retropredict/tsv.hpp"

namespace retro {

struct IngestStats {
    std::size_t clamped_vls = 0;
    std::size_t merged_grts = 0;
    std::size_t merged_vls = 0;
};

struct CohortPaths {
    std::string therapies;
    std::string genotypes;
    std::string viral_loads;
    std::string patients;

    static CohortPaths in_dir(const std::string& dir) {
        return CohortPaths{dir + "/therapies.tsv", dir + "/genotypes.tsv",
                           dir + "/viral_loads.tsv", dir + "/patients.tsv"};
    }
};

// Immutable in-memory cohort. Per patient, genotype tests and viral loads are
// strictly sorted by date (same-day genotypes merged by union, same-day viral
// loads merged by geometric mean).
class Cohort {
public:
    std::vector<std::string> patients;  // sorted
    std::vector<Therapy> therapies;     // sorted by (patient, start, therapy_id)
    IngestStats stats;

    bool has_patient(const std::string& id) const {
        return std::binary_search(patients.begin(), patients.end(), id);
    }

    std::span<const GenotypeTest> grts_for(const std::string& patient) const {
        auto it = grts_.find(patient);
        if (it == grts_.end()) return {};
        return it->second;
    }

    std::span<const ViralLoadMeasurement> vls_for(const std::string& patient) const {
        auto it = vls_.find(patient);
        if (it == vls_.end()) return {};
        return it->second;
    }

    std::span<const Therapy> therapies_for(const std::string& patient) const {
        auto lo = std::lower_bound(therapies.begin(), therapies.end(), patient,
                                   [](const Therapy& t, const std::string& p) { return t.patient_id < p; });
        auto hi = lo;
        while (hi != therapies.end() && hi->patient_id == patient) ++hi;
        if (lo == hi) return {};
        return {&*lo, static_cast<std::size_t>(hi - lo)};
    }

    // Latest date of any recorded event for the patient; used to close
    // open-ended therapy intervals.
    Day last_event(const std::string& patient) const {
        Day last = std::numeric_limits<Day>::min();
        for (const auto& t : therapies_for(patient)) {
            last = std::max(last, t.start_date);
            if (t.end_date) last = std::max(last, *t.end_date);
        }
        for (const auto& g : grts_for(patient)) last = std::max(last, g.sample_date);
        for (const auto& v : vls_for(patient)) last = std::max(last, v.date);
        return last;
    }

    std::map<std::string, std::vector<GenotypeTest>> grts_;
    std::map<std::string, std::vector<ViralLoadMeasurement>> vls_;
};

// Loads and validates the four cohort files. Viral loads below the assay
// floor are clamped to it; referential-integrity violations abort the load
// with row-numbered diagnostics.
inline Cohort load_cohort(const CohortPaths& paths, double vl_floor = 20.0) {
    Cohort cohort;
    std::vector<std::string> fields;

    {
        TsvReader r(paths.patients);
        const auto col = r.column("patient_id");
        while (r.next(fields)) {
            if (fields[col].empty()) throw DataError(r.row_context() + ": empty patient_id");
            cohort.patients.push_back(fields[col]);
        }
        std::sort(cohort.patients.begin(), cohort.patients.end());
        cohort.patients.erase(std::unique(cohort.patients.begin(), cohort.patients.end()),
                              cohort.patients.end());
        if (cohort.patients.empty()) throw DataError(paths.patients + ": no patients");
    }

    std::vector<std::string> integrity_errors;
    auto check_patient = [&](const TsvReader& r, const std::string& pid) {
        if (!cohort.has_patient(pid)) {
            integrity_errors.push_back(r.row_context() + ": unknown patient '" + pid + "'");
            return false;
        }
        return true;
    };

    {
        TsvReader r(paths.therapies);
        const auto c_pid = r.column("patient_id");
        const auto c_tid = r.column("therapy_id");
        const auto c_start = r.column("start_date");
        const auto c_end = r.column("end_date");
        const auto c_drugs = r.column("drugs");
        std::set<std::string> seen_ids;
        while (r.next(fields)) {
            Therapy t;
            t.patient_id = fields[c_pid];
            t.therapy_id = fields[c_tid];
            if (!seen_ids.insert(t.therapy_id).second)
                throw DataError(r.row_context() + ": duplicate therapy_id '" + t.therapy_id + "'");
            if (!check_patient(r, t.patient_id)) continue;
            t.start_date = parse_iso_date(fields[c_start]);
            if (!fields[c_end].empty()) {
                t.end_date = parse_iso_date(fields[c_end]);
                if (*t.end_date < t.start_date)
                    throw DataError(r.row_context() + ": end_date before start_date");
            }
            auto codes = split_list(fields[c_drugs]);
            if (codes.empty()) throw DataError(r.row_context() + ": therapy without drugs");
            for (const auto& code : codes) {
                drug_class(code);  // validates the code
                t.drugs.push_back(code);
            }
            std::sort(t.drugs.begin(), t.drugs.end());
            t.drugs.erase(std::unique(t.drugs.begin(), t.drugs.end()), t.drugs.end());
            cohort.therapies.push_back(std::move(t));
        }
        std::sort(cohort.therapies.begin(), cohort.therapies.end(),
                  [](const Therapy& a, const Therapy& b) {
                      return std::tie(a.patient_id, a.start_date, a.therapy_id) <
                             std::tie(b.patient_id, b.start_date, b.therapy_id);
                  });
    }

    {
        TsvReader r(paths.genotypes);
        const auto c_pid = r.column("patient_id");
        const auto c_date = r.column("sample_date");
        const auto c_mut = r.column("mutations");
        while (r.next(fields)) {
            if (!check_patient(r, fields[c_pid])) continue;
            GenotypeTest g;
            g.patient_id = fields[c_pid];
            g.sample_date = parse_iso_date(fields[c_date]);
            for (const auto& tok : split_list(fields[c_mut])) g.mutations.push_back(parse_mutation(tok));
            std::sort(g.mutations.begin(), g.mutations.end());
            g.mutations.erase(std::unique(g.mutations.begin(), g.mutations.end()), g.mutations.end());
            cohort.grts_[g.patient_id].push_back(std::move(g));
        }
    }

    {
        TsvReader r(paths.viral_loads);
        const auto c_pid = r.column("patient_id");
        const auto c_date = r.column("date");
        const auto c_val = r.column("copies_per_ml");
        while (r.next(fields)) {
            if (!check_patient(r, fields[c_pid])) continue;
            ViralLoadMeasurement v;
            v.patient_id = fields[c_pid];
            v.date = parse_iso_date(fields[c_date]);
            v.copies_per_ml = r.parse_double(fields[c_val], "copies_per_ml");
            if (v.copies_per_ml < 0.0)
                throw DataError(r.row_context() + ": negative viral load");
            if (v.copies_per_ml < vl_floor) {
                v.copies_per_ml = vl_floor;
                ++cohort.stats.clamped_vls;
            }
            cohort.vls_[v.patient_id].push_back(std::move(v));
        }
    }

    if (!integrity_errors.empty()) {
        std::string msg = "referential integrity violations:";
        for (const auto& e : integrity_errors) msg += "\n  " + e;
        throw DataError(msg);
    }

    // Sort and merge same-day records.
    for (auto& [pid, grts] : cohort.grts_) {
        std::stable_sort(grts.begin(), grts.end(), [](const GenotypeTest& a, const GenotypeTest& b) {
            return a.sample_date < b.sample_date;
        });
        std::vector<GenotypeTest> merged;
        for (auto& g : grts) {
            if (!merged.empty() && merged.back().sample_date == g.sample_date) {
                auto& dst = merged.back().mutations;
                dst.insert(dst.end(), g.mutations.begin(), g.mutations.end());
                std::sort(dst.begin(), dst.end());
                dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
                ++cohort.stats.merged_grts;
            } else {
                merged.push_back(std::move(g));
            }
        }
        grts = std::move(merged);
    }
    for (auto& [pid, vls] : cohort.vls_) {
        std::stable_sort(vls.begin(), vls.end(), [](const auto& a, const auto& b) {
            return a.date < b.date;
        });
        std::vector<ViralLoadMeasurement> merged;
        std::size_t i = 0;
        while (i < vls.size()) {
            std::size_t j = i;
            double log_sum = std::log(vls[i].copies_per_ml);
            while (j + 1 < vls.size() && vls[j + 1].date == vls[i].date) {
                ++j;
                log_sum += std::log(vls[j].copies_per_ml);
            }
            ViralLoadMeasurement v = vls[i];
            if (j > i) {
                v.copies_per_ml = std::exp(log_sum / static_cast<double>(j - i + 1));
                cohort.stats.merged_vls += j - i;
            }
            merged.push_back(v);
            i = j + 1;
        }
        vls = std::move(merged);
    }
    return cohort;
}

// Mutation-drug penalty table. Absent pairs score zero; stored scores must
// come from the canonical scale.
class StanfordScoreTable {
public:
    static constexpr std::array<int, 16> canonical_scale{-15, -10, -5, 0,  5,  10, 15, 20,
                                                         25,  30,  35, 40, 45, 50, 55, 60};

    static double scale_norm() { return std::sqrt(16600.0); }

    void set(const MutationId& m, const std::string& drug, int score) {
        if (!on_scale(score)) throw DataError("off-scale score " + std::to_string(score));
        auto key = std::make_pair(m, drug);
        auto [it, inserted] = scores_.emplace(key, score);
        if (!inserted && it->second != score)
            throw DataError("conflicting scores for " + m.render() + "/" + drug);
    }

    int score(const MutationId& m, const std::string& drug) const {
        auto it = scores_.find(std::make_pair(m, drug));
        return it == scores_.end() ? 0 : it->second;
    }

    static bool on_scale(int score) {
        return std::find(canonical_scale.begin(), canonical_scale.end(), score) !=
               canonical_scale.end();
    }

    std::size_t size() const { return scores_.size(); }

    const std::map<std::pair<MutationId, std::string>, int>& entries() const { return scores_; }

private:
    std::map<std::pair<MutationId, std::string>, int> scores_;
};

inline StanfordScoreTable load_stanford_table(const std::string& path) {
    StanfordScoreTable table;
    TsvReader r(path);
    const auto c_mut = r.column("mutation");
    const auto c_drug = r.column("drug");
    const auto c_score = r.column("score");
    std::vector<std::string> fields;
    while (r.next(fields)) {
        const auto m = parse_mutation(fields[c_mut]);
        drug_class(fields[c_drug]);  // validates
        const double raw = r.parse_double(fields[c_score], "score");
        const int score = static_cast<int>(raw);
        if (static_cast<double>(score) != raw || !StanfordScoreTable::on_scale(score))
            throw DataError(r.row_context() + ": off-scale score '" + fields[c_score] + "'");
        try {
            table.set(m, fields[c_drug], score);
        } catch (const DataError& e) {
            throw DataError(r.row_context() + ": " + e.what());
        }
    }
    return table;
}

enum class RejectReason { NoBaselineGenotype, VlCoverageGap, NoStandardDatum };

inline std::string_view reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::NoBaselineGenotype: return "NoBaselineGenotype";
        case RejectReason::VlCoverageGap: return "VlCoverageGap";
        case RejectReason::NoStandardDatum: return "NoStandardDatum";
    }
    return "?";
}

struct EligiblePair {
    PatientTherapyPair pair;
    OutcomeLabel label;
};

struct RejectedTherapy {
    Therapy therapy;
    RejectReason reason;
    OutcomeLabel label;  // populated for NoStandardDatum rejections
};

struct EligibilityResult {
    std::vector<EligiblePair> accepted;
    std::vector<RejectedTherapy> rejected;
};

// Inclusion screen. A therapy is kept when (1) at least one genotype test
// precedes its start, (2) every pre-start genotype has a viral load strictly
// before and strictly after it, and (3) the outcome label resolves to
// Success or Failure. Accepted and rejected lists partition the therapy set.
inline EligibilityResult eligible_pairs(const Cohort& cohort) {
    EligibilityResult out;
    for (const auto& therapy : cohort.therapies) {
        const auto grts = cohort.grts_for(therapy.patient_id);
        const auto vls = cohort.vls_for(therapy.patient_id);

        std::vector<const GenotypeTest*> prior;
        for (const auto& g : grts)
            if (g.sample_date < therapy.start_date) prior.push_back(&g);
        if (prior.empty()) {
            out.rejected.push_back({therapy, RejectReason::NoBaselineGenotype, {}});
            continue;
        }

        bool coverage_ok = true;
        for (const auto* g : prior) {
            const bool before = std::any_of(vls.begin(), vls.end(), [&](const auto& v) {
                return v.date < g->sample_date;
            });
            const bool after = std::any_of(vls.begin(), vls.end(), [&](const auto& v) {
                return v.date > g->sample_date;
            });
            if (!before || !after) {
                coverage_ok = false;
                break;
            }
        }
        if (!coverage_ok) {
            out.rejected.push_back({therapy, RejectReason::VlCoverageGap, {}});
            continue;
        }

        const auto label = label_therapy(therapy, vls);
        if (label.value == Outcome::Excluded) {
            out.rejected.push_back({therapy, RejectReason::NoStandardDatum, label});
            continue;
        }

        PatientTherapyPair pair;
        pair.therapy = therapy;
        std::set<Day> grt_dates;
        for (const auto* g : prior) {
            grt_dates.insert(g->sample_date);
            for (const auto& m : g->mutations) {
                auto [it, inserted] = pair.history_mutations.emplace(m, g->sample_date);
                if (!inserted) it->second = std::max(it->second, g->sample_date);
            }
        }
        const auto* latest = prior.back();
        pair.baseline_grt_date = latest->sample_date;
        pair.baseline_mutations = latest->mutations;
        pair.label = label.value;
        pair.has_prior_history = grt_dates.size() > 1;
        out.accepted.push_back({std::move(pair), label});
    }
    return out;
}

}  // namespace retro
