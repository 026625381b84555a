#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retropredict/dates.hpp"
#include "retropredict/util.hpp"

namespace retro {

enum class Gene { PR, RT, IN };
enum class DrugClass { PI, NRTI, NNRTI, INI };

inline std::string_view gene_name(Gene g) {
    switch (g) {
        case Gene::PR: return "PR";
        case Gene::RT: return "RT";
        case Gene::IN: return "IN";
    }
    return "?";
}

inline std::optional<Gene> gene_from_name(std::string_view s) {
    if (s == "PR") return Gene::PR;
    if (s == "RT") return Gene::RT;
    if (s == "IN") return Gene::IN;
    return std::nullopt;
}

inline std::string_view drug_class_name(DrugClass c) {
    switch (c) {
        case DrugClass::PI: return "PI";
        case DrugClass::NRTI: return "NRTI";
        case DrugClass::NNRTI: return "NNRTI";
        case DrugClass::INI: return "INI";
    }
    return "?";
}

inline std::optional<DrugClass> drug_class_from_name(std::string_view s) {
    if (s == "PI") return DrugClass::PI;
    if (s == "NRTI") return DrugClass::NRTI;
    if (s == "NNRTI") return DrugClass::NNRTI;
    if (s == "INI") return DrugClass::INI;
    return std::nullopt;
}

// An amino-acid point substitution. Identity is (gene, position, amino acid);
// the wild-type reference letter seen in some spellings (RT M184V vs RT184V)
// is parsed and discarded.
struct MutationId {
    Gene gene;
    int position;
    char amino_acid;

    auto operator<=>(const MutationId&) const = default;

    std::string render() const {
        return std::string(gene_name(gene)) + std::to_string(position) + amino_acid;
    }
};

// Token grammar: <GENE><ref-letter?><position><aa-letter>, GENE in {PR,RT,IN}.
// Insertions, deletions and mixtures are not representable and are rejected.
inline MutationId parse_mutation(std::string_view token) {
    auto fail = [&](std::string_view why) {
        throw ParseError("bad mutation token '" + std::string(token) + "': " + std::string(why));
    };
    if (token.size() < 4) fail("too short");
    auto gene = gene_from_name(token.substr(0, 2));
    if (!gene) fail("unknown gene");
    std::size_t i = 2;
    if (i < token.size() && token[i] >= 'A' && token[i] <= 'Z') ++i;  // optional reference letter
    std::size_t digits_start = i;
    long pos = 0;
    while (i < token.size() && token[i] >= '0' && token[i] <= '9') {
        pos = pos * 10 + (token[i] - '0');
        if (pos > 100000) fail("position out of range");
        ++i;
    }
    if (i == digits_start) fail("missing position");
    if (pos <= 0) fail("position must be positive");
    if (i + 1 != token.size()) fail("expected a single amino-acid letter");
    char aa = token[i];
    if (aa < 'A' || aa > 'Z') fail("amino acid must be an uppercase letter");
    return MutationId{*gene, static_cast<int>(pos), aa};
}

inline std::string render_mutation(const MutationId& m) { return m.render(); }

namespace detail {

struct DrugEntry {
    const char* code;
    DrugClass cls;
};

// The 29 antiretroviral compounds the pipeline recognizes.
inline constexpr std::array<DrugEntry, 29> kDrugTable{{
    {"3TC", DrugClass::NRTI}, {"ABC", DrugClass::NRTI}, {"APV", DrugClass::PI},
    {"ATV", DrugClass::PI},   {"AZT", DrugClass::NRTI}, {"BIC", DrugClass::INI},
    {"CAB", DrugClass::INI},  {"D4T", DrugClass::NRTI}, {"DDC", DrugClass::NRTI},
    {"DDI", DrugClass::NRTI}, {"DLV", DrugClass::NNRTI},{"DOR", DrugClass::NNRTI},
    {"DRV", DrugClass::PI},   {"DTG", DrugClass::INI},  {"EFV", DrugClass::NNRTI},
    {"ETR", DrugClass::NNRTI},{"EVG", DrugClass::INI},  {"FPV", DrugClass::PI},
    {"FTC", DrugClass::NRTI}, {"IDV", DrugClass::PI},   {"LPV", DrugClass::PI},
    {"NFV", DrugClass::PI},   {"NVP", DrugClass::NNRTI},{"RAL", DrugClass::INI},
    {"RPV", DrugClass::NNRTI},{"SQV", DrugClass::PI},   {"TAF", DrugClass::NRTI},
    {"TDF", DrugClass::NRTI}, {"TPV", DrugClass::PI},
}};

}  // namespace detail

inline std::optional<DrugClass> try_drug_class(std::string_view code) {
    for (const auto& e : detail::kDrugTable)
        if (code == e.code) return e.cls;
    return std::nullopt;
}

inline DrugClass drug_class(std::string_view code) {
    auto c = try_drug_class(code);
    if (!c) throw DataError("unknown drug code '" + std::string(code) + "'");
    return *c;
}

// All 29 codes in table (alphabetical) order; the fixed drug-indicator axis.
inline std::vector<std::string> all_drug_codes() {
    std::vector<std::string> v;
    v.reserve(detail::kDrugTable.size());
    for (const auto& e : detail::kDrugTable) v.emplace_back(e.code);
    return v;
}

// Target gene of a drug class; decides which mutations a therapy of that class
// can select for.
inline Gene class_target_gene(DrugClass c) {
    switch (c) {
        case DrugClass::PI: return Gene::PR;
        case DrugClass::NRTI: return Gene::RT;
        case DrugClass::NNRTI: return Gene::RT;
        case DrugClass::INI: return Gene::IN;
    }
    return Gene::RT;
}

// Class whose persistence curves a mutation of this gene reads from.
// RT mutations are attributed to the NNRTI class.
inline DrugClass gene_lookup_class(Gene g) {
    switch (g) {
        case Gene::PR: return DrugClass::PI;
        case Gene::RT: return DrugClass::NNRTI;
        case Gene::IN: return DrugClass::INI;
    }
    return DrugClass::NNRTI;
}

struct Therapy {
    std::string patient_id;
    std::string therapy_id;
    Day start_date = 0;
    std::optional<Day> end_date;
    std::vector<std::string> drugs;  // deduplicated, sorted codes

    bool contains_class(DrugClass c) const {
        return std::any_of(drugs.begin(), drugs.end(),
                           [&](const std::string& d) { return drug_class(d) == c; });
    }
};

struct GenotypeTest {
    std::string patient_id;
    Day sample_date = 0;
    std::vector<MutationId> mutations;  // sorted, unique; empty = wild type

    bool has(const MutationId& m) const {
        return std::binary_search(mutations.begin(), mutations.end(), m);
    }
};

struct ViralLoadMeasurement {
    std::string patient_id;
    Day date = 0;
    double copies_per_ml = 0.0;  // > 0; assay-floor clamping happens at ingest
};

enum class Outcome { Success, Failure, Excluded };

inline std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Success: return "Success";
        case Outcome::Failure: return "Failure";
        case Outcome::Excluded: return "Excluded";
    }
    return "?";
}

// A labeled therapy together with the mutation evidence available before its
// start. history_mutations maps each mutation ever seen before start to the
// most recent pre-start genotype date containing it; baseline_mutations is
// the latest pre-start genotype's set.
struct PatientTherapyPair {
    Therapy therapy;
    std::map<MutationId, Day> history_mutations;
    std::vector<MutationId> baseline_mutations;
    Day baseline_grt_date = 0;
    Outcome label = Outcome::Excluded;
    bool has_prior_history = false;  // >1 distinct pre-start genotype dates
};

}  // namespace retro
