#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "retropredict/core.hpp"
#include "retropredict/dates.hpp"
#include "retropredict/rng.hpp"
#include "retropredict/tsv.hpp"

namespace retro {

// Seeded synthetic cohort generator. Patients cycle through anchor-class
// therapies; mutations are acquired under matching-class pressure, remain in
// a latent set forever, and their blood observability decays along planted
// sigmoids once the class is stopped. Outcomes for long therapies are drawn
// from a logistic model over the baseline-observable resistance score plus
// reservoir_effect times the score of acquired-but-no-longer-observable
// mutations, and the viral-load trajectory is then written to realize the
// drawn label.
struct SynthConfig {
    std::size_t n_patients = 2000;
    std::size_t n_mutations = 48;  // split evenly across PR / RT / IN
    double reservoir_effect = 1.0;  // log-odds per unit latent resistance
    double current_effect = 1.0;    // log-odds per unit observable resistance
    double base_logodds = -1.1;
    double vl_noise_sd = 0.3;   // log10 units
    double label_noise = 0.05;  // probability of flipping a drawn outcome
    double acquisition_prob = 0.22;  // per matching mutation per therapy
    double on_pressure_detect = 0.93;
    double short_therapy_prob = 0.06;
    double alpha_true = -3.0;
    double beta_slow = 0.005;
    double beta_fast = 0.05;
    std::uint64_t seed = 7;

    void validate() const {
        if (n_patients < 2) throw ConfigError("synth: need at least two patients");
        if (n_mutations < 6) throw ConfigError("synth: need at least six mutations");
        if (reservoir_effect < 0.0) throw ConfigError("synth: reservoir_effect must be >= 0");
        if (label_noise < 0.0 || label_noise > 0.5) throw ConfigError("synth: bad label_noise");
    }
};

struct SynthMutation {
    MutationId id;
    DrugClass selecting_class;
    double alpha_true;
    double beta_true;
    bool slow_group;
    int stanford_score;
};

struct SynthTruth {
    std::vector<SynthMutation> mutations;
    std::map<std::string, int> intended_label;  // therapy_id -> drawn label (long therapies)
};

struct SynthResult {
    std::string patients_tsv;
    std::string therapies_tsv;
    std::string genotypes_tsv;
    std::string viral_loads_tsv;
    std::string stanford_scores_tsv;
    SynthTruth truth;

    void write_to(const std::string& dir) const {
        write_text_file(dir + "/patients.tsv", patients_tsv);
        write_text_file(dir + "/therapies.tsv", therapies_tsv);
        write_text_file(dir + "/genotypes.tsv", genotypes_tsv);
        write_text_file(dir + "/viral_loads.tsv", viral_loads_tsv);
        write_text_file(dir + "/stanford_scores.tsv", stanford_scores_tsv);
    }
};

namespace synth_detail {

inline const std::vector<std::string>& backbone_pool() {
    static const std::vector<std::string> v{"3TC", "ABC", "AZT", "TDF", "FTC", "D4T"};
    return v;
}

inline const std::vector<std::string>& anchors_for(DrugClass c) {
    static const std::vector<std::string> pi{"LPV", "DRV", "ATV", "SQV"};
    static const std::vector<std::string> nnrti{"EFV", "NVP", "ETR", "RPV"};
    static const std::vector<std::string> ini{"DTG", "RAL", "EVG", "BIC"};
    switch (c) {
        case DrugClass::PI: return pi;
        case DrugClass::NNRTI: return nnrti;
        case DrugClass::INI: return ini;
        default: throw ConfigError("no anchor drugs for class");
    }
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace synth_detail

inline std::vector<SynthMutation> plant_mutations(const SynthConfig& config) {
    static const char* kAminoCycle = "VILMAKRQE";
    const std::array<Gene, 3> genes{Gene::PR, Gene::RT, Gene::IN};
    const std::array<int, 3> base_pos{10, 40, 140};
    static const std::array<int, 6> kScoreCycle{10, 60, 30, 45, 15, 55};
    std::vector<SynthMutation> out;
    out.reserve(config.n_mutations);
    for (std::size_t i = 0; i < config.n_mutations; ++i) {
        const std::size_t g = i % 3;
        const std::size_t slot = i / 3;
        SynthMutation m;
        m.id = MutationId{genes[g], base_pos[g] + static_cast<int>(slot),
                          kAminoCycle[i % 9]};
        m.selecting_class = gene_lookup_class(genes[g]);  // PR->PI, RT->NNRTI, IN->INI
        m.slow_group = slot % 2 == 0;
        m.alpha_true = config.alpha_true;
        m.beta_true = m.slow_group ? config.beta_slow : config.beta_fast;
        m.stanford_score = kScoreCycle[i % kScoreCycle.size()];
        out.push_back(m);
    }
    return out;
}

inline SynthResult generate_cohort(const SynthConfig& config) {
    config.validate();
    const auto mutations = plant_mutations(config);
    const Day epoch = make_day(2005, 1, 1);

    std::string patients = "patient_id\n";
    std::string therapies = "patient_id\ttherapy_id\tstart_date\tend_date\tdrugs\n";
    std::string genotypes = "patient_id\tsample_date\tmutations\n";
    std::string viral_loads = "patient_id\tdate\tcopies_per_ml\n";

    SynthTruth truth;
    truth.mutations = mutations;

    const std::array<DrugClass, 3> anchor_classes{DrugClass::PI, DrugClass::NNRTI, DrugClass::INI};

    for (std::size_t p = 0; p < config.n_patients; ++p) {
        Rng rng(derive_seed(config.seed, "patient", p));
        char pid_buf[16];
        std::snprintf(pid_buf, sizeof(pid_buf), "P%05zu", p + 1);
        const std::string pid = pid_buf;
        patients += pid + "\n";

        // Therapy course.
        struct PlannedTherapy {
            long start, end;
            DrugClass anchor;
            std::vector<std::string> drugs;
            bool short_therapy;
        };
        const int n_th = static_cast<int>(rng.uniform_int(2, 6));
        std::vector<PlannedTherapy> course;
        long day = rng.uniform_int(0, 60);
        int prev_anchor = -1;
        for (int j = 0; j < n_th; ++j) {
            PlannedTherapy t;
            int anchor_idx;
            do {
                anchor_idx = static_cast<int>(rng.uniform_int(0, 2));
            } while (anchor_idx == prev_anchor && rng.uniform() < 0.85);
            prev_anchor = anchor_idx;
            t.anchor = anchor_classes[static_cast<std::size_t>(anchor_idx)];
            t.short_therapy = rng.uniform() < config.short_therapy_prob;
            const long duration =
                t.short_therapy ? rng.uniform_int(10, 130) : rng.uniform_int(160, 450);
            t.start = day;
            t.end = day + duration;
            const auto& backbone = synth_detail::backbone_pool();
            const auto b1 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(backbone.size()) - 1));
            std::size_t b2;
            do {
                b2 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(backbone.size()) - 1));
            } while (b2 == b1);
            const auto& anchors = synth_detail::anchors_for(t.anchor);
            t.drugs = {backbone[b1], backbone[b2],
                       anchors[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(anchors.size()) - 1))]};
            course.push_back(t);
            day = t.end + rng.uniform_int(60, 600);
        }
        const long tail_end = course.back().end + rng.uniform_int(400, 900);

        // Mutation acquisition: transmitted seeds plus on-therapy selection.
        struct Acquired {
            long day;
        };
        std::map<std::size_t, Acquired> latent;  // mutation index -> acquisition day
        for (std::size_t m = 0; m < mutations.size(); ++m) {
            if (rng.uniform() < 0.03)
                latent[m] = {course.front().start - rng.uniform_int(300, 1200)};
        }
        for (const auto& t : course) {
            for (std::size_t m = 0; m < mutations.size(); ++m) {
                if (latent.count(m)) continue;
                if (mutations[m].selecting_class != t.anchor) continue;
                if (rng.uniform() < config.acquisition_prob)
                    latent[m] = {t.start + static_cast<long>(0.2 * static_cast<double>(t.end - t.start)) +
                                 rng.uniform_int(0, std::max(1L, (t.end - t.start) / 2))};
            }
        }

        // Observability of mutation m at a given day.
        auto pressure_active = [&](DrugClass c, long at) {
            for (const auto& t : course)
                if (t.anchor == c && at >= t.start && at <= t.end) return true;
            return false;
        };
        auto last_pressure_end = [&](DrugClass c, long at) {
            long e = std::numeric_limits<long>::min();
            for (const auto& t : course)
                if (t.anchor == c && t.end <= at) e = std::max(e, t.end);
            return e;
        };
        auto observable = [&](std::size_t m, long at) {
            auto it = latent.find(m);
            if (it == latent.end() || it->second.day > at) return false;
            const DrugClass c = mutations[m].selecting_class;
            if (pressure_active(c, at)) return rng.uniform() < config.on_pressure_detect;
            const long e = std::max(it->second.day, last_pressure_end(c, at));
            const double f = 1.0 / (1.0 + std::exp(mutations[m].alpha_true +
                                                   mutations[m].beta_true * static_cast<double>(at - e)));
            return rng.uniform() < f;
        };

        // Genotype schedule: a baseline test before each therapy, one
        // on-therapy test, and follow-up tests through every off-therapy gap.
        std::vector<long> grt_days;
        for (std::size_t j = 0; j < course.size(); ++j) {
            grt_days.push_back(course[j].start - rng.uniform_int(5, 45));
            if (rng.uniform() < 0.85 && !course[j].short_therapy) {
                const long span = course[j].end - course[j].start;
                grt_days.push_back(course[j].start + span / 2 + rng.uniform_int(0, span / 3 + 1));
            }
            const long gap_start = course[j].end;
            const long gap_end = j + 1 < course.size() ? course[j + 1].start : tail_end;
            long g = gap_start + rng.uniform_int(35, 90);
            while (g < gap_end - 10) {
                grt_days.push_back(g);
                g += rng.uniform_int(50, 130);
            }
        }
        std::sort(grt_days.begin(), grt_days.end());
        grt_days.erase(std::unique(grt_days.begin(), grt_days.end()), grt_days.end());

        // Materialize genotype contents.
        std::map<long, std::vector<std::size_t>> grt_sets;
        for (long g : grt_days) {
            auto& set = grt_sets[g];
            for (std::size_t m = 0; m < mutations.size(); ++m)
                if (observable(m, g)) set.push_back(m);
        }

        // Outcome draws for non-short therapies.
        std::vector<int> intended(course.size(), -1);
        for (std::size_t j = 0; j < course.size(); ++j) {
            if (course[j].short_therapy) continue;
            long baseline_grt = std::numeric_limits<long>::min();
            for (long g : grt_days)
                if (g < course[j].start) baseline_grt = std::max(baseline_grt, g);
            std::set<std::size_t> baseline_set;
            if (auto it = grt_sets.find(baseline_grt); it != grt_sets.end())
                baseline_set.insert(it->second.begin(), it->second.end());
            std::set<DrugClass> classes;
            for (const auto& d : course[j].drugs) classes.insert(drug_class(d));
            double current = 0.0, reservoir = 0.0;
            for (const auto& [m, acq] : latent) {
                if (acq.day >= course[j].start) continue;
                if (!classes.count(mutations[m].selecting_class)) continue;
                const double rel = static_cast<double>(mutations[m].stanford_score) / 60.0;
                if (baseline_set.count(m))
                    current += rel;
                else
                    reservoir += rel;
            }
            const double p_fail = synth_detail::logistic(config.base_logodds +
                                                         config.current_effect * current +
                                                         config.reservoir_effect * reservoir);
            int y = rng.uniform() < p_fail ? 1 : 0;
            if (rng.uniform() < config.label_noise) y = 1 - y;
            intended[j] = y;
        }

        // Viral-load schedule covering the whole record.
        long vl_start = std::min<long>(grt_days.empty() ? 0 : grt_days.front(), course.front().start) -
                        rng.uniform_int(15, 40);
        std::vector<long> vl_days;
        long v = vl_start;
        while (v < tail_end + 30) {
            vl_days.push_back(v);
            v += rng.uniform_int(25, 80);
        }
        // Guarantee a decider inside every follow-up window.
        for (std::size_t j = 0; j < course.size(); ++j) {
            if (course[j].short_therapy) continue;
            const long wlo = course[j].start + 140, whi = course[j].start + 196;
            const bool covered = std::any_of(vl_days.begin(), vl_days.end(),
                                             [&](long d) { return d >= wlo && d <= whi; });
            if (!covered) vl_days.push_back(course[j].start + 168 + rng.uniform_int(-10, 10));
        }
        std::sort(vl_days.begin(), vl_days.end());
        vl_days.erase(std::unique(vl_days.begin(), vl_days.end()), vl_days.end());

        auto vl_log10_at = [&](long at) {
            for (std::size_t j = 0; j < course.size(); ++j) {
                if (at < course[j].start || at > course[j].end) continue;
                const bool fail = course[j].short_therapy ? rng.uniform() < 0.5 : intended[j] == 1;
                const long into = at - course[j].start;
                if (at >= course[j].start + 140 && at <= course[j].start + 196 && !course[j].short_therapy) {
                    // Follow-up window: realize the drawn label exactly.
                    return intended[j] == 1 ? rng.uniform(2.5, 4.5) : rng.uniform(1.15, 1.55);
                }
                if (fail) return rng.uniform(3.0, 4.6) + rng.normal(0.0, config.vl_noise_sd);
                if (into < 42) {
                    const double frac = static_cast<double>(into) / 42.0;
                    return 4.2 - frac * 2.9 + rng.normal(0.0, config.vl_noise_sd);
                }
                return rng.uniform(1.1, 1.6);
            }
            return rng.uniform(3.8, 4.8) + rng.normal(0.0, config.vl_noise_sd);
        };

        // Emit rows.
        int tix = 0;
        for (std::size_t j = 0; j < course.size(); ++j) {
            ++tix;
            const std::string tid = pid + "T" + std::to_string(tix);
            std::string drug_list;
            for (std::size_t d = 0; d < course[j].drugs.size(); ++d) {
                if (d) drug_list += ';';
                drug_list += course[j].drugs[d];
            }
            therapies += pid + "\t" + tid + "\t" +
                         format_iso_date(epoch + static_cast<Day>(course[j].start)) + "\t" +
                         format_iso_date(epoch + static_cast<Day>(course[j].end)) + "\t" + drug_list +
                         "\n";
            if (intended[j] >= 0) truth.intended_label[tid] = intended[j];
        }
        for (long g : grt_days) {
            std::string toks;
            const auto& set = grt_sets[g];
            for (std::size_t i = 0; i < set.size(); ++i) {
                if (i) toks += ';';
                toks += mutations[set[i]].id.render();
            }
            genotypes += pid + "\t" + format_iso_date(epoch + static_cast<Day>(g)) + "\t" + toks + "\n";
        }
        for (long d : vl_days) {
            const double lv = std::clamp(vl_log10_at(d), 0.7, 6.5);
            const double copies = std::pow(10.0, lv);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.2f", copies);
            viral_loads += pid + "\t" + format_iso_date(epoch + static_cast<Day>(d)) + "\t" + buf + "\n";
        }
    }

    // Stanford-style table: every mutation scores against each drug of its
    // selecting class (plus the NRTI backbone for RT)... RT rows score NNRTI
    // anchors only; backbone drugs stay unscored so the min rule is exercised.
    std::string stanford = "mutation\tdrug\tscore\n";
    for (const auto& m : mutations) {
        for (const auto& code : synth_detail::anchors_for(m.selecting_class))
            stanford += m.id.render() + "\t" + code + "\t" + std::to_string(m.stanford_score) + "\n";
    }

    SynthResult res;
    res.patients_tsv = std::move(patients);
    res.therapies_tsv = std::move(therapies);
    res.genotypes_tsv = std::move(genotypes);
    res.viral_loads_tsv = std::move(viral_loads);
    res.stanford_scores_tsv = std::move(stanford);
    res.truth = std::move(truth);
    return res;
}

}  // namespace retro
