#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "retropredict/core.hpp"
#include "retropredict/ingest.hpp"
#include "retropredict/rng.hpp"
#include "retropredict/weighting.hpp"

namespace retro {

enum class Scope { Full, Partial };
enum class HistoryMode { History, NoHistory };
enum class Encoding { Weighted, Binary };

struct DatasetVariant {
    Scope scope = Scope::Full;
    HistoryMode history = HistoryMode::History;
    Encoding encoding = Encoding::Weighted;

    auto operator<=>(const DatasetVariant&) const = default;

    std::string name() const {
        std::string s = scope == Scope::Full ? "Full" : "Partial";
        s += history == HistoryMode::History ? "_History" : "_No-history";
        s += encoding == Encoding::Weighted ? "_Weighted" : "_Non-weighted";
        return s;
    }
};

inline DatasetVariant parse_variant(const std::string& name) {
    DatasetVariant v;
    auto parts = split_list(name, '_');
    if (parts.size() != 3) throw ConfigError("bad variant name '" + name + "'");
    if (parts[0] == "Full")
        v.scope = Scope::Full;
    else if (parts[0] == "Partial")
        v.scope = Scope::Partial;
    else
        throw ConfigError("bad variant scope '" + parts[0] + "'");
    if (parts[1] == "History")
        v.history = HistoryMode::History;
    else if (parts[1] == "No-history")
        v.history = HistoryMode::NoHistory;
    else
        throw ConfigError("bad variant history '" + parts[1] + "'");
    if (parts[2] == "Weighted")
        v.encoding = Encoding::Weighted;
    else if (parts[2] == "Non-weighted")
        v.encoding = Encoding::Binary;
    else
        throw ConfigError("bad variant encoding '" + parts[2] + "'");
    return v;
}

struct FeatureEntry {
    std::size_t index;
    double value;
};

struct DataRow {
    std::string therapy_id;
    std::string patient_id;
    int label = 0;  // 1 = failure, 0 = success
    bool has_prior_history = false;
    std::vector<FeatureEntry> features;  // sparse, sorted by index
};

// Feature rows over the fixed universe (mutation block first, then the drug
// indicator block). The mutation universe is frozen from the Full scope so
// coefficient vectors are comparable across variants.
struct LabeledDataset {
    DatasetVariant variant;
    std::vector<MutationId> mutation_universe;
    std::vector<std::string> drug_universe;
    std::vector<DataRow> rows;
    std::map<MutationId, double> area_scales;  // populated for Weighted variants

    std::size_t dim() const { return mutation_universe.size() + drug_universe.size(); }

    std::size_t mutation_index(const MutationId& m) const {
        auto it = std::lower_bound(mutation_universe.begin(), mutation_universe.end(), m);
        if (it == mutation_universe.end() || *it != m)
            throw DataError("mutation outside universe: " + m.render());
        return static_cast<std::size_t>(it - mutation_universe.begin());
    }
};

// The mutation axis shared by all variants: every mutation seen before any
// eligible therapy of the Full scope.
inline std::vector<MutationId> mutation_universe_from(std::span<const EligiblePair> eligible) {
    std::vector<MutationId> universe;
    for (const auto& e : eligible)
        for (const auto& [m, d] : e.pair.history_mutations) universe.push_back(m);
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
    return universe;
}

// Assembles one dataset variant. Partial keeps only pairs with more than one
// pre-start genotype date. History uses every mutation seen before start with
// its most recent sighting date; NoHistory restricts to the latest genotype.
// Weighted features come from the decay/area/score weight with area scales
// learned on train_patients (all rows when the set is empty).
inline LabeledDataset build_dataset(const Cohort& cohort, std::span<const EligiblePair> eligible,
                                    const PersistenceModel& persistence,
                                    const StanfordScoreTable& stanford,
                                    const DatasetVariant& variant,
                                    const std::set<std::string>& train_patients = {},
                                    bool min_over_same_gene_class_only = false) {
    LabeledDataset ds;
    ds.variant = variant;
    ds.mutation_universe = mutation_universe_from(eligible);
    ds.drug_universe = all_drug_codes();

    std::vector<const EligiblePair*> kept;
    for (const auto& e : eligible) {
        if (variant.scope == Scope::Partial && !e.pair.has_prior_history) continue;
        kept.push_back(&e);
    }
    if (kept.empty()) throw DataError("dataset variant " + variant.name() + " has no rows");

    // Mutation occurrences per row: (mutation, last-seen date).
    struct Occurrence {
        std::size_t row;
        MutationId mutation;
        Day last_seen;
    };
    std::vector<Occurrence> occurrences;
    for (std::size_t r = 0; r < kept.size(); ++r) {
        const auto& pair = kept[r]->pair;
        if (variant.history == HistoryMode::History) {
            for (const auto& [m, seen] : pair.history_mutations)
                occurrences.push_back({r, m, seen});
        } else {
            for (const auto& m : pair.baseline_mutations)
                occurrences.push_back({r, m, pair.baseline_grt_date});
        }
    }

    std::vector<double> values(occurrences.size(), 1.0);
    if (variant.encoding == Encoding::Weighted) {
        std::vector<weighting::AreaOccurrence> areas;
        areas.reserve(occurrences.size());
        for (const auto& occ : occurrences) {
            const auto& pair = kept[occ.row]->pair;
            weighting::AreaOccurrence a;
            a.therapy_id = pair.therapy.therapy_id;
            a.mutation = occ.mutation;
            a.raw_area = vl_area(cohort.vls_for(pair.therapy.patient_id), occ.last_seen);
            a.is_training = train_patients.empty() || train_patients.count(pair.therapy.patient_id) > 0;
            areas.push_back(std::move(a));
        }
        if (!areas.empty()) {
            auto normalized = normalize_areas(areas);
            ds.area_scales = std::move(normalized.scales);
            for (std::size_t i = 0; i < occurrences.size(); ++i) {
                const auto& occ = occurrences[i];
                const auto& pair = kept[occ.row]->pair;
                const auto params = persistence.params_for(occ.mutation);
                if (!params)
                    throw DataError("no persistence parameters for " + occ.mutation.render());
                const long t_days = static_cast<long>(pair.therapy.start_date) - occ.last_seen;
                const double s_m = stanford_component(occ.mutation, pair.therapy.drugs, stanford,
                                                      min_over_same_gene_class_only);
                values[i] = mutation_weight(*params, t_days, normalized.normalized[i], s_m).value;
            }
        }
    }

    const std::size_t mut_count = ds.mutation_universe.size();
    ds.rows.resize(kept.size());
    for (std::size_t r = 0; r < kept.size(); ++r) {
        auto& row = ds.rows[r];
        const auto& pair = kept[r]->pair;
        row.therapy_id = pair.therapy.therapy_id;
        row.patient_id = pair.therapy.patient_id;
        row.label = pair.label == Outcome::Failure ? 1 : 0;
        row.has_prior_history = pair.has_prior_history;
        for (std::size_t d = 0; d < ds.drug_universe.size(); ++d) {
            if (std::binary_search(pair.therapy.drugs.begin(), pair.therapy.drugs.end(),
                                   ds.drug_universe[d]))
                row.features.push_back({mut_count + d, 1.0});
        }
    }
    for (std::size_t i = 0; i < occurrences.size(); ++i) {
        if (values[i] == 0.0) continue;  // exact-zero weights drop out of the sparse row
        auto& row = ds.rows[occurrences[i].row];
        row.features.push_back({ds.mutation_index(occurrences[i].mutation), values[i]});
    }
    for (auto& row : ds.rows)
        std::sort(row.features.begin(), row.features.end(),
                  [](const FeatureEntry& a, const FeatureEntry& b) { return a.index < b.index; });
    return ds;
}

struct PatientSplit {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    std::set<std::string> train_patients;
    std::set<std::string> test_patients;
};

// Greedy patient-grouped split: patients are shuffled with the seeded RNG and
// assigned to the training side until it holds at least train_fraction of the
// rows; everyone else goes to test. No patient straddles the cut.
inline PatientSplit split_by_patient(const LabeledDataset& ds, double train_fraction,
                                     std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> rows_by_patient;
    for (std::size_t i = 0; i < ds.rows.size(); ++i)
        rows_by_patient[ds.rows[i].patient_id].push_back(i);
    if (rows_by_patient.size() < 2)
        throw DataError("split_by_patient: need at least two patients");

    std::vector<std::string> patients;
    patients.reserve(rows_by_patient.size());
    for (const auto& [pid, rows] : rows_by_patient) patients.push_back(pid);
    Rng rng(derive_seed(seed, "patient-split"));
    rng.shuffle(patients);

    const double target = train_fraction * static_cast<double>(ds.rows.size());
    PatientSplit split;
    double train_count = 0.0;
    for (const auto& pid : patients) {
        const auto& rows = rows_by_patient[pid];
        if (train_count < target) {
            split.train_patients.insert(pid);
            split.train_rows.insert(split.train_rows.end(), rows.begin(), rows.end());
            train_count += static_cast<double>(rows.size());
        } else {
            split.test_patients.insert(pid);
            split.test_rows.insert(split.test_rows.end(), rows.begin(), rows.end());
        }
    }
    std::sort(split.train_rows.begin(), split.train_rows.end());
    std::sort(split.test_rows.begin(), split.test_rows.end());
    return split;
}

}  // namespace retro
