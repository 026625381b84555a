#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retropredict/core.hpp"
#include "retropredict/ingest.hpp"
#include "retropredict/json_io.hpp"
#include "retropredict/rng.hpp"

namespace retro {

// Presence/absence observations for one mutation after drug-class
// discontinuation: x holds day offsets since the class was stopped, y the
// matching presence bits. Entries are pooled over patients and stop events
// and kept sorted by offset.
struct PersistenceObservations {
    MutationId mutation;
    std::vector<double> x;
    std::vector<int> y;
};

enum class ParamProvenance { Fitted, ClusterCentroid, Hyperparameter };

inline std::string_view provenance_name(ParamProvenance p) {
    switch (p) {
        case ParamProvenance::Fitted: return "Fitted";
        case ParamProvenance::ClusterCentroid: return "ClusterCentroid";
        case ParamProvenance::Hyperparameter: return "Hyperparameter";
    }
    return "?";
}

inline std::optional<ParamProvenance> provenance_from_name(std::string_view s) {
    if (s == "Fitted") return ParamProvenance::Fitted;
    if (s == "ClusterCentroid") return ParamProvenance::ClusterCentroid;
    if (s == "Hyperparameter") return ParamProvenance::Hyperparameter;
    return std::nullopt;
}

// Parameters of the decay curve f(x) = 1 / (1 + e^(alpha + beta x)).
// beta >= 0 keeps the curve non-increasing in time.
struct SigmoidParams {
    double alpha = 0.0;
    double beta = 0.0;
    ParamProvenance provenance = ParamProvenance::Hyperparameter;
};

namespace opt {

struct Box2 {
    double c0_lo, c0_hi, c1_lo, c1_hi;
};

struct Logistic2Fit {
    double c0 = 0.0;
    double c1 = 0.0;
    double nll = 0.0;
    int iterations = 0;
};

inline double softplus(double u) {
    if (u > 35.0) return u;
    if (u < -35.0) return std::exp(u);
    return std::log1p(std::exp(u));
}

inline double sigmoid(double u) {
    if (u >= 0.0) {
        const double e = std::exp(-u);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(u);
    return e / (1.0 + e);
}

// Mean cross-entropy of the model f_i = 1/(1+e^(c0 + c1 v_i)) against
// fractional targets t_i.
inline double logistic2_nll(std::span<const double> v, std::span<const double> t, double c0,
                            double c1) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double u = c0 + c1 * v[i];
        acc += softplus(u) - (1.0 - t[i]) * u;
    }
    return acc / static_cast<double>(v.size());
}

// Bounded two-parameter logistic MLE: projected damped Newton with
// backtracking, run from each start point; best end point wins. The
// objective is convex, so this lands on the box-constrained optimum.
inline Logistic2Fit fit_bounded_logistic(std::span<const double> v, std::span<const double> t,
                                         const Box2& box,
                                         std::span<const std::pair<double, double>> starts,
                                         int max_iter = 500, double tol = 1e-10) {
    const double n = static_cast<double>(v.size());
    auto clamp = [](double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); };

    Logistic2Fit best;
    best.nll = std::numeric_limits<double>::infinity();

    for (const auto& s : starts) {
        double c0 = clamp(s.first, box.c0_lo, box.c0_hi);
        double c1 = clamp(s.second, box.c1_lo, box.c1_hi);
        double nll = logistic2_nll(v, t, c0, c1);
        int it = 0;
        for (; it < max_iter; ++it) {
            double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double u = c0 + c1 * v[i];
                const double su = sigmoid(u);
                const double gu = su - (1.0 - t[i]);
                const double hu = std::max(su * (1.0 - su), 1e-12);
                g0 += gu;
                g1 += gu * v[i];
                h00 += hu;
                h01 += hu * v[i];
                h11 += hu * v[i] * v[i];
            }
            g0 /= n;
            g1 /= n;
            h00 /= n;
            h01 /= n;
            h11 /= n;

            double det = h00 * h11 - h01 * h01;
            double d0, d1;
            if (det > 1e-14 * std::max(1.0, h00 * h11)) {
                d0 = -(h11 * g0 - h01 * g1) / det;
                d1 = -(-h01 * g0 + h00 * g1) / det;
            } else {
                // Singular Hessian (e.g. a single distinct v): gradient step.
                d0 = -g0;
                d1 = -g1;
            }

            double step = 1.0;
            double new_nll = nll;
            double n0 = c0, n1 = c1;
            bool improved = false;
            while (step > 1e-13) {
                const double t0 = clamp(c0 + step * d0, box.c0_lo, box.c0_hi);
                const double t1 = clamp(c1 + step * d1, box.c1_lo, box.c1_hi);
                const double cand = logistic2_nll(v, t, t0, t1);
                if (cand < nll) {
                    n0 = t0;
                    n1 = t1;
                    new_nll = cand;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!improved) break;
            const double gain = nll - new_nll;
            c0 = n0;
            c1 = n1;
            nll = new_nll;
            if (gain < tol) break;
        }
        if (nll < best.nll) {
            best.c0 = c0;
            best.c1 = c1;
            best.nll = nll;
            best.iterations = it;
        }
    }
    return best;
}

}  // namespace opt

inline constexpr double kAlphaMin = -20.0;
inline constexpr double kAlphaMax = 20.0;
inline constexpr double kBetaMin = 0.0;
inline constexpr double kBetaMax = 1.0;

struct SigmoidFit {
    SigmoidParams params;
    double nll = 0.0;
};

// Maximum-likelihood fit of the decay sigmoid to one mutation's observations.
// Returns nothing when the data cannot identify a curve: fewer than two
// points, or presence bits all equal.
inline std::optional<SigmoidFit> fit_sigmoid(const PersistenceObservations& obs) {
    if (obs.x.size() != obs.y.size()) throw NumericError("fit_sigmoid: length mismatch");
    if (obs.x.size() < 2) return std::nullopt;
    const bool has0 = std::find(obs.y.begin(), obs.y.end(), 0) != obs.y.end();
    const bool has1 = std::find(obs.y.begin(), obs.y.end(), 1) != obs.y.end();
    if (!has0 || !has1) return std::nullopt;

    std::vector<double> targets(obs.y.size());
    for (std::size_t i = 0; i < obs.y.size(); ++i) targets[i] = obs.y[i] ? 1.0 : 0.0;

    const opt::Box2 box{kAlphaMin, kAlphaMax, kBetaMin, kBetaMax};
    std::vector<std::pair<double, double>> starts{{0.0, 0.01}, {-5.0, 0.1}};
    // Coarse grid start guards against box-corner stalls.
    double best_grid = std::numeric_limits<double>::infinity();
    std::pair<double, double> grid_start{0.0, 0.0};
    for (int i = 0; i <= 10; ++i) {
        for (int j = 0; j <= 10; ++j) {
            const double a = kAlphaMin + (kAlphaMax - kAlphaMin) * i / 10.0;
            const double b = kBetaMin + (kBetaMax - kBetaMin) * j / 10.0;
            const double nll = opt::logistic2_nll(obs.x, targets, a, b);
            if (nll < best_grid) {
                best_grid = nll;
                grid_start = {a, b};
            }
        }
    }
    starts.push_back(grid_start);

    const auto fit = opt::fit_bounded_logistic(obs.x, targets, box, starts);
    return SigmoidFit{SigmoidParams{fit.c0, fit.c1, ParamProvenance::Fitted}, fit.nll};
}

struct KmeansResult {
    std::vector<std::array<double, 2>> centroids;  // original coordinates
    std::vector<int> assignments;
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> sd{1.0, 1.0};
    double z_sse = 0.0;
};

// k-means over (alpha, beta) pairs, z-scored per axis, k-means++ seeding,
// fixed number of restarts. Input order does not affect the result: points
// are canonicalized by sorting before seeding.
inline KmeansResult cluster_params(const std::vector<std::array<double, 2>>& points, std::size_t k,
                                   std::uint64_t seed, int restarts = 50, int max_iter = 300) {
    const std::size_t n = points.size();
    if (k == 0 || k > n) throw NumericError("cluster_params: need 1 <= k <= #points");

    KmeansResult res;
    for (int axis = 0; axis < 2; ++axis) {
        double m = 0.0;
        for (const auto& p : points) m += p[axis];
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& p : points) ss += (p[axis] - m) * (p[axis] - m);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        res.mean[axis] = m;
        res.sd[axis] = sd > 0.0 ? sd : 1.0;  // zero-variance axis left unscaled
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return points[a] < points[b];
    });
    std::vector<std::array<double, 2>> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int axis = 0; axis < 2; ++axis)
            z[i][axis] = (points[order[i]][axis] - res.mean[axis]) / res.sd[axis];
    }

    auto dist2 = [](const std::array<double, 2>& a, const std::array<double, 2>& b) {
        const double dx = a[0] - b[0], dy = a[1] - b[1];
        return dx * dx + dy * dy;
    };

    Rng rng(seed);
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<std::array<double, 2>> best_centroids;
    std::vector<int> best_assign;

    for (int restart = 0; restart < restarts; ++restart) {
        // k-means++ seeding.
        std::vector<std::array<double, 2>> centroids;
        centroids.push_back(z[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))]);
        std::vector<double> d2(n);
        while (centroids.size() < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& c : centroids) best = std::min(best, dist2(z[i], c));
                d2[i] = best;
                total += best;
            }
            std::size_t pick = 0;
            if (total <= 0.0) {
                pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
            } else {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= target) {
                        pick = i;
                        break;
                    }
                    pick = i;
                }
            }
            centroids.push_back(z[pick]);
        }

        std::vector<int> assign(n, -1);
        for (int iter = 0; iter < max_iter; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int best_c = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < centroids.size(); ++c) {
                    const double d = dist2(z[i], centroids[c]);
                    if (d < best_d) {
                        best_d = d;
                        best_c = static_cast<int>(c);
                    }
                }
                if (assign[i] != best_c) {
                    assign[i] = best_c;
                    changed = true;
                }
            }
            // Recompute means; restart an empty cluster at the point farthest
            // from its centroid.
            std::vector<std::array<double, 2>> sums(k, {0.0, 0.0});
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                sums[static_cast<std::size_t>(assign[i])][0] += z[i][0];
                sums[static_cast<std::size_t>(assign[i])][1] += z[i][1];
                counts[static_cast<std::size_t>(assign[i])]++;
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (counts[c] == 0) {
                    std::size_t far = 0;
                    double far_d = -1.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double d = dist2(z[i], centroids[static_cast<std::size_t>(assign[i])]);
                        if (d > far_d) {
                            far_d = d;
                            far = i;
                        }
                    }
                    centroids[c] = z[far];
                    changed = true;
                } else {
                    centroids[c] = {sums[c][0] / static_cast<double>(counts[c]),
                                    sums[c][1] / static_cast<double>(counts[c])};
                }
            }
            if (!changed) break;
        }

        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) sse += dist2(z[i], centroids[static_cast<std::size_t>(assign[i])]);
        if (sse < best_sse) {
            best_sse = sse;
            best_centroids = centroids;
            best_assign = assign;
        }
    }

    res.z_sse = best_sse;
    res.centroids.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        res.centroids[c] = {best_centroids[c][0] * res.sd[0] + res.mean[0],
                            best_centroids[c][1] * res.sd[1] + res.mean[1]};
    }
    res.assignments.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) res.assignments[order[i]] = best_assign[i];
    return res;
}

// Extracts post-discontinuation presence observations for every mutation of
// the class's target gene. For each maximal interval free of class pressure
// that follows a class therapy, each genotype sampled strictly inside the
// interval contributes one (days-since-stop, presence) point per mutation
// seen during the preceding on-class coverage.
inline std::map<MutationId, PersistenceObservations> extract_observations(const Cohort& cohort,
                                                                          DrugClass cls) {
    if (cls == DrugClass::NRTI)
        throw ConfigError("persistence extraction is not defined for the NRTI class");
    const Gene target = class_target_gene(cls);
    std::map<MutationId, PersistenceObservations> out;

    for (const auto& patient : cohort.patients) {
        const auto therapies = cohort.therapies_for(patient);
        if (therapies.empty()) continue;
        const auto grts = cohort.grts_for(patient);
        if (grts.empty()) continue;
        const Day last_event = cohort.last_event(patient);

        // Effective end: explicit end date, else next therapy start, else the
        // last recorded event.
        auto effective_end = [&](std::size_t idx) {
            if (therapies[idx].end_date) return *therapies[idx].end_date;
            if (idx + 1 < therapies.size()) return therapies[idx + 1].start_date;
            return last_event;
        };

        // Merge on-class coverage into maximal intervals.
        std::vector<std::pair<Day, Day>> on;
        for (std::size_t i = 0; i < therapies.size(); ++i) {
            if (!therapies[i].contains_class(cls)) continue;
            const Day s = therapies[i].start_date;
            const Day e = std::max(s, effective_end(i));
            if (!on.empty() && s <= on.back().second) {
                on.back().second = std::max(on.back().second, e);
            } else {
                on.emplace_back(s, e);
            }
        }

        for (std::size_t i = 0; i < on.size(); ++i) {
            const Day stop = on[i].second;
            const Day next_start =
                i + 1 < on.size() ? on[i + 1].first : std::numeric_limits<Day>::max();
            if (next_start <= stop) continue;

            std::vector<MutationId> under_pressure;
            for (const auto& g : grts) {
                if (g.sample_date < on[i].first || g.sample_date > stop) continue;
                for (const auto& m : g.mutations)
                    if (m.gene == target) under_pressure.push_back(m);
            }
            std::sort(under_pressure.begin(), under_pressure.end());
            under_pressure.erase(std::unique(under_pressure.begin(), under_pressure.end()),
                                 under_pressure.end());
            if (under_pressure.empty()) continue;

            for (const auto& g : grts) {
                if (g.sample_date <= stop || g.sample_date >= next_start) continue;
                const double offset = static_cast<double>(g.sample_date - stop);
                for (const auto& m : under_pressure) {
                    auto& obs = out[m];
                    obs.mutation = m;
                    obs.x.push_back(offset);
                    obs.y.push_back(g.has(m) ? 1 : 0);
                }
            }
        }
    }

    for (auto& [m, obs] : out) {
        std::vector<std::size_t> idx(obs.x.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return obs.x[a] < obs.x[b]; });
        PersistenceObservations sorted;
        sorted.mutation = m;
        sorted.x.reserve(obs.x.size());
        sorted.y.reserve(obs.y.size());
        for (auto i : idx) {
            sorted.x.push_back(obs.x[i]);
            sorted.y.push_back(obs.y[i]);
        }
        obs = std::move(sorted);
    }
    return out;
}

struct FallbackRange {
    double alpha_min = 0.0, alpha_max = 0.0;
    double beta_min = 0.0, beta_max = 0.0;
};

struct ClassPersistence {
    std::size_t k = 0;
    std::array<double, 2> z_mean{0.0, 0.0};
    std::array<double, 2> z_sd{1.0, 1.0};
    std::vector<std::array<double, 2>> centroids;
    std::optional<FallbackRange> fallback;
    std::map<MutationId, SigmoidParams> params;
};

struct PersistenceOptions {
    std::map<DrugClass, std::size_t> k_per_class{{DrugClass::PI, 3},
                                                 {DrugClass::NNRTI, 3},
                                                 {DrugClass::INI, 3}};
    bool use_centroids = false;  // replace fitted params by their cluster centroid
    std::optional<FallbackRange> explicit_fallback;  // used when a class has no fits
};

class PersistenceModel {
public:
    std::map<DrugClass, ClassPersistence> per_class;

    std::optional<SigmoidParams> params_for(const MutationId& m) const {
        auto cit = per_class.find(gene_lookup_class(m.gene));
        if (cit == per_class.end()) return std::nullopt;
        auto pit = cit->second.params.find(m);
        if (pit == cit->second.params.end()) return std::nullopt;
        return pit->second;
    }

    ordered_json to_json() const {
        ordered_json classes = ordered_json::object();
        for (const auto& [cls, cp] : per_class) {
            ordered_json jc;
            jc["k"] = cp.k;
            jc["standardization"] = {{"alpha_mean", cp.z_mean[0]},
                                     {"alpha_sd", cp.z_sd[0]},
                                     {"beta_mean", cp.z_mean[1]},
                                     {"beta_sd", cp.z_sd[1]}};
            ordered_json cents = ordered_json::array();
            for (const auto& c : cp.centroids) cents.push_back({{"alpha", c[0]}, {"beta", c[1]}});
            jc["centroids"] = std::move(cents);
            if (cp.fallback) {
                jc["fallback_range"] = {{"alpha_min", cp.fallback->alpha_min},
                                        {"alpha_max", cp.fallback->alpha_max},
                                        {"beta_min", cp.fallback->beta_min},
                                        {"beta_max", cp.fallback->beta_max}};
            } else {
                jc["fallback_range"] = nullptr;
            }
            ordered_json muts = ordered_json::object();
            for (const auto& [m, p] : cp.params) {
                muts[m.render()] = {{"alpha", p.alpha},
                                    {"beta", p.beta},
                                    {"provenance", std::string(provenance_name(p.provenance))}};
            }
            jc["mutations"] = std::move(muts);
            classes[std::string(drug_class_name(cls))] = std::move(jc);
        }
        ordered_json j;
        j["classes"] = std::move(classes);
        return j;
    }

    static PersistenceModel from_json(const ordered_json& j) {
        PersistenceModel model;
        for (const auto& [cls_name, jc] : j.at("classes").items()) {
            auto cls = drug_class_from_name(cls_name);
            if (!cls) throw DataError("unknown drug class in model: " + cls_name);
            ClassPersistence cp;
            cp.k = jc.at("k").get<std::size_t>();
            const auto& st = jc.at("standardization");
            cp.z_mean = {st.at("alpha_mean").get<double>(), st.at("beta_mean").get<double>()};
            cp.z_sd = {st.at("alpha_sd").get<double>(), st.at("beta_sd").get<double>()};
            for (const auto& c : jc.at("centroids"))
                cp.centroids.push_back({c.at("alpha").get<double>(), c.at("beta").get<double>()});
            if (!jc.at("fallback_range").is_null()) {
                const auto& f = jc.at("fallback_range");
                cp.fallback = FallbackRange{f.at("alpha_min").get<double>(), f.at("alpha_max").get<double>(),
                                            f.at("beta_min").get<double>(), f.at("beta_max").get<double>()};
            }
            for (const auto& [tok, jp] : jc.at("mutations").items()) {
                SigmoidParams p;
                p.alpha = jp.at("alpha").get<double>();
                p.beta = jp.at("beta").get<double>();
                auto prov = provenance_from_name(jp.at("provenance").get<std::string>());
                if (!prov) throw DataError("unknown provenance in model file");
                p.provenance = *prov;
                cp.params.emplace(parse_mutation(tok), p);
            }
            model.per_class.emplace(*cls, std::move(cp));
        }
        return model;
    }
};

// Builds the per-class persistence model: extract -> fit -> cluster for the
// PI, NNRTI and INI classes. Mutations whose fit is degenerate but that were
// observed get the centroid closest (in z-space) to the centroid mean; every
// other mutation of the class's gene draws hyperparameters uniformly from the
// observed parameter range. The NRTI class never contributes fits; RT-gene
// mutations read their curves from the NNRTI entry.
inline PersistenceModel build_persistence_model(const Cohort& cohort,
                                                const PersistenceOptions& options,
                                                std::uint64_t seed) {
    // Mutation universe from every genotype in the cohort.
    std::vector<MutationId> universe;
    for (const auto& [pid, grts] : cohort.grts_) {
        for (const auto& g : grts)
            universe.insert(universe.end(), g.mutations.begin(), g.mutations.end());
    }
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
    if (universe.empty()) throw ConfigError("cohort contains no mutations");

    PersistenceModel model;
    model.per_class.emplace(DrugClass::NRTI, ClassPersistence{});

    for (DrugClass cls : {DrugClass::PI, DrugClass::NNRTI, DrugClass::INI}) {
        ClassPersistence cp;
        auto kit = options.k_per_class.find(cls);
        const std::size_t k_req = kit == options.k_per_class.end() ? 3 : kit->second;
        const Gene gene = class_target_gene(cls);

        auto obs_map = extract_observations(cohort, cls);

        std::vector<MutationId> fitted_ids;
        std::vector<std::array<double, 2>> fitted_points;
        std::vector<MutationId> degenerate_ids;
        for (const auto& [m, obs] : obs_map) {
            if (auto fit = fit_sigmoid(obs)) {
                fitted_ids.push_back(m);
                fitted_points.push_back({fit->params.alpha, fit->params.beta});
            } else {
                degenerate_ids.push_back(m);
            }
        }

        std::optional<KmeansResult> clusters;
        if (!fitted_points.empty()) {
            cp.k = std::min<std::size_t>(k_req, fitted_points.size());
            clusters = cluster_params(fitted_points, cp.k,
                                      derive_seed(seed, "kmeans", static_cast<std::uint64_t>(cls)));
            cp.z_mean = clusters->mean;
            cp.z_sd = clusters->sd;
            cp.centroids = clusters->centroids;
            FallbackRange fr;
            fr.alpha_min = fr.alpha_max = fitted_points[0][0];
            fr.beta_min = fr.beta_max = fitted_points[0][1];
            for (const auto& p : fitted_points) {
                fr.alpha_min = std::min(fr.alpha_min, p[0]);
                fr.alpha_max = std::max(fr.alpha_max, p[0]);
                fr.beta_min = std::min(fr.beta_min, p[1]);
                fr.beta_max = std::max(fr.beta_max, p[1]);
            }
            cp.fallback = fr;
        } else {
            cp.k = 0;
            cp.fallback = options.explicit_fallback;
        }

        // Does this class have any mutation to parameterize?
        bool class_has_mutations = false;
        for (const auto& m : universe)
            if (gene_lookup_class(m.gene) == cls) class_has_mutations = true;
        if (class_has_mutations && !cp.fallback) {
            throw ConfigError(std::string("no fittable mutations for class ") +
                              std::string(drug_class_name(cls)) +
                              "; explicit alpha/beta fallback bounds required");
        }

        for (std::size_t i = 0; i < fitted_ids.size(); ++i) {
            if (options.use_centroids && clusters) {
                const auto c = clusters->centroids[static_cast<std::size_t>(clusters->assignments[i])];
                cp.params[fitted_ids[i]] =
                    SigmoidParams{c[0], c[1], ParamProvenance::ClusterCentroid};
            } else {
                cp.params[fitted_ids[i]] = SigmoidParams{fitted_points[i][0], fitted_points[i][1],
                                                         ParamProvenance::Fitted};
            }
        }

        if (!degenerate_ids.empty() && clusters) {
            // Fixed per-class choice: the centroid nearest the centroid mean.
            std::array<double, 2> mean_z{0.0, 0.0};
            std::vector<std::array<double, 2>> cents_z(cp.centroids.size());
            for (std::size_t c = 0; c < cp.centroids.size(); ++c) {
                cents_z[c] = {(cp.centroids[c][0] - cp.z_mean[0]) / cp.z_sd[0],
                              (cp.centroids[c][1] - cp.z_mean[1]) / cp.z_sd[1]};
                mean_z[0] += cents_z[c][0];
                mean_z[1] += cents_z[c][1];
            }
            mean_z[0] /= static_cast<double>(cents_z.size());
            mean_z[1] /= static_cast<double>(cents_z.size());
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < cents_z.size(); ++c) {
                const double dx = cents_z[c][0] - mean_z[0];
                const double dy = cents_z[c][1] - mean_z[1];
                const double d = dx * dx + dy * dy;
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            for (const auto& m : degenerate_ids)
                cp.params[m] = SigmoidParams{cp.centroids[best][0], cp.centroids[best][1],
                                             ParamProvenance::ClusterCentroid};
        }
        // Degenerate mutations without clusters fall through to the
        // hyperparameter draw below.

        for (const auto& m : universe) {
            if (gene_lookup_class(m.gene) != cls) continue;
            if (cp.params.count(m)) continue;
            if (!cp.fallback) continue;
            Rng rng(derive_seed(seed, "hyper-" + m.render(), static_cast<std::uint64_t>(cls)));
            const double a = rng.uniform(cp.fallback->alpha_min, cp.fallback->alpha_max);
            const double b = rng.uniform(cp.fallback->beta_min, cp.fallback->beta_max);
            cp.params[m] = SigmoidParams{a, b, ParamProvenance::Hyperparameter};
        }

        model.per_class[cls] = std::move(cp);
    }
    return model;
}

}  // namespace retro
