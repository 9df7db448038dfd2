#pragma once
// End-to-end retrieval pipeline (convolve -> index -> search -> metrics),
// the ablation runner, ensemble baselines and coefficient profiles.

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uec/convolution.hpp"
#include "uec/gaussian.hpp"
#include "uec/metrics.hpp"
#include "uec/retrieval.hpp"
#include "uec/similarity.hpp"
#include "uec/synth.hpp"

namespace uec {

struct PipelineConfig {
    CoefficientConfig coefficients{};
    SimilarityConfig similarity{};
    std::size_t k = 10;
    unsigned workers = 1;
};

// metric name -> value, ordered by name
using MetricReport = std::map<std::string, double>;

struct RetrievalMetrics {
    double ndcg = 0.0;
    double recall = 0.0;
    double nauc = 0.0;
    std::size_t n_queries = 0;
    std::size_t skipped = 0;
};

inline RetrievalMetrics evaluate_retrieval(const RunRanking& run, const Qrels& qrels, std::size_t k = 10) {
    RetrievalMetrics m;
    const auto ndcg = per_query_ndcg(run, qrels, k, &m.skipped);
    const auto recall = per_query_recall(run, qrels, k);
    m.n_queries = ndcg.size();
    for (const auto& q : ndcg) m.ndcg += q.metric;
    for (const auto& q : recall) m.recall += q.metric;
    if (m.n_queries) {
        m.ndcg /= static_cast<double>(m.n_queries);
        m.recall /= static_cast<double>(m.n_queries);
    }
    m.nauc = ndcg.size() >= 2 ? nauc_abstention(ndcg) : 0.0;
    return m;
}

inline void add_metrics(MetricReport& report, const std::string& prefix, const RetrievalMetrics& m, std::size_t k) {
    const std::string at = "@" + std::to_string(k);
    report[prefix + "ndcg" + at] = m.ndcg;
    report[prefix + "recall" + at] = m.recall;
    report[prefix + "nauc" + at] = m.nauc;
}

inline RunRanking search_convolved(const EmbeddingStore& docs, const EmbeddingStore& queries, const PipelineConfig& cfg) {
    const Index index = build_index(docs, cfg.similarity);
    return search_all(index, queries, cfg.k, cfg.workers);
}

inline RunRanking run_pipeline(const EnsembleInput& docs, const EnsembleInput& queries, const PipelineConfig& cfg) {
    const auto d = convolve_ensemble(docs, cfg.coefficients);
    const auto q = convolve_ensemble(queries, cfg.coefficients);
    return search_convolved(d.store, q.store, cfg);
}

struct AblationToggles {
    bool unc_sim = true;
    bool unc_conv = true;
};

inline std::string ablation_label(const AblationToggles& t) {
    if (t.unc_sim && t.unc_conv) return "full";
    if (!t.unc_sim && t.unc_conv) return "no_unc_sim";
    if (t.unc_sim && !t.unc_conv) return "no_unc_conv";
    return "no_unc_sim_no_unc_conv";
}

// unc_sim off -> mean-dot similarity; unc_conv off -> uniform coefficients.
inline PipelineConfig ablated_config(const PipelineConfig& base, const AblationToggles& t) {
    PipelineConfig cfg = base;
    if (!t.unc_sim) cfg.similarity.mode = SimilarityMode::mean_dot;
    if (!t.unc_conv) cfg.coefficients = CoefficientConfig{CoefficientMode::uniform, base.coefficients.temperature, std::nullopt};
    return cfg;
}

inline RetrievalMetrics ablation_run(const SynthData& data, const AblationToggles& toggles, const PipelineConfig& base) {
    const auto cfg = ablated_config(base, toggles);
    return evaluate_retrieval(run_pipeline(data.docs, data.queries, cfg), data.qrels, cfg.k);
}

inline constexpr AblationToggles kAblationGrid[] = {{true, true}, {false, true}, {true, false}, {false, false}};

// All four toggle combinations in one report, keys "<label>.<metric>@k".
inline MetricReport ablation_report(const SynthData& data, const PipelineConfig& base) {
    MetricReport report;
    for (const auto& t : kAblationGrid) add_metrics(report, ablation_label(t) + ".", ablation_run(data, t, base), base.k);
    return report;
}

// Uniform coefficients with plain cosine scoring.
inline PipelineConfig uniform_ensemble_config(const PipelineConfig& base) {
    return ablated_config(base, {false, false});
}

// All simplex points with coordinates on a 1/steps grid.
inline std::vector<Vector> simplex_grid(std::size_t k, std::size_t steps) {
    std::vector<Vector> out;
    Vector cur(k, 0.0);
    const auto rec = [&](auto&& self, std::size_t pos, std::size_t left) -> void {
        if (pos + 1 == k) {
            cur[pos] = static_cast<double>(left) / static_cast<double>(steps);
            out.push_back(cur);
            return;
        }
        for (std::size_t u = 0; u <= left; ++u) {
            cur[pos] = static_cast<double>(u) / static_cast<double>(steps);
            self(self, pos + 1, left - u);
        }
    };
    if (k > 0) rec(rec, 0, steps);
    return out;
}

struct WeightedBaseline {
    Vector weights;
    RetrievalMetrics metrics;
};

// Fixed global weights on a simplex grid, picked by NDCG on the evaluated
// queries themselves (oracle-on-test selection).
inline WeightedBaseline weighted_ensemble_baseline(const SynthData& data, const PipelineConfig& base,
                                                   std::size_t steps = 10) {
    WeightedBaseline best;
    best.metrics.ndcg = -1.0;
    for (const auto& w : simplex_grid(data.docs.n_models(), steps)) {
        PipelineConfig cfg = uniform_ensemble_config(base);
        cfg.coefficients = CoefficientConfig{CoefficientMode::fixed, 1.0, w};
        auto m = evaluate_retrieval(run_pipeline(data.docs, data.queries, cfg), data.qrels, cfg.k);
        if (m.ndcg > best.metrics.ndcg) best = {w, m};
    }
    return best;
}

// Deterministic store a + alpha (b - c) from three models' means.
inline EmbeddingStore task_arithmetic_store(const EnsembleInput& input, std::size_t a, std::size_t b, std::size_t c,
                                            double alpha) {
    EmbeddingStore out("task_arithmetic", input.dim());
    for (std::size_t i = 0; i < input.n_records(); ++i)
        out.add(input.id(i), GaussianEmbedding::deterministic(task_arithmetic_baseline(
                                 input.embedding(a, i).mean(), input.embedding(b, i).mean(),
                                 input.embedding(c, i).mean(), alpha)));
    return out;
}

inline constexpr double kTaskArithmeticAlphas[] = {0.0001, 0.001, 0.01, 0.1, 1.0};

struct CoefficientProfile {
    std::vector<std::string> domains;  // sorted; "other" for unlabeled ids
    std::vector<std::string> models;
    std::vector<Vector> mean_pi;       // [domain][model]
    std::vector<std::size_t> counts;   // records per domain
};

// Per-domain mean of the per-record coefficients.
inline CoefficientProfile coefficient_profile(const EnsembleInput& queries, const CoefficientConfig& cfg) {
    std::map<std::string, std::pair<Vector, std::size_t>> acc;
    const std::size_t k = queries.n_models();
    for (std::size_t i = 0; i < queries.n_records(); ++i) {
        const auto c = compute_coefficients(queries.record(i), cfg);
        auto& [sum, n] = acc.try_emplace(domain_of(queries.id(i)), Vector(k, 0.0), 0).first->second;
        for (std::size_t j = 0; j < k; ++j) sum[j] += c.pi[j];
        ++n;
    }
    CoefficientProfile p;
    for (const auto& s : queries.stores()) p.models.push_back(s.model_name());
    for (auto& [domain, entry] : acc) {
        auto& [sum, n] = entry;
        for (double& v : sum) v /= static_cast<double>(n);
        p.domains.push_back(domain);
        p.mean_pi.push_back(std::move(sum));
        p.counts.push_back(n);
    }
    return p;
}

}  // namespace uec
