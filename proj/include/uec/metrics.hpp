#pragma once
// Retrieval, STS and classification metrics, plus abstention-based
// calibration (nAUC).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uec/error.hpp"
#include "uec/retrieval.hpp"

namespace uec {

// query_id -> (doc_id -> grade)
using Qrels = std::map<std::string, std::map<std::string, int>>;

struct MeanMetric {
    double value = 0.0;
    std::size_t n_queries = 0;  // queries that contributed
    std::size_t skipped = 0;    // run queries without usable judgments
};

struct QueryMetric {
    std::string query_id;
    double metric = 0.0;
    double confidence = 0.0;
};

namespace detail {

inline const std::map<std::string, int>* judged_relevant(const Qrels& qrels, const std::string& qid) {
    auto it = qrels.find(qid);
    if (it == qrels.end()) return nullptr;
    for (const auto& [doc, grade] : it->second)
        if (grade > 0) return &it->second;
    return nullptr;
}

inline int grade_of(const std::map<std::string, int>& judged, const std::string& doc) {
    auto it = judged.find(doc);
    return it == judged.end() ? 0 : it->second;
}

inline double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

}  // namespace detail

inline double ndcg_for_query(std::span<const Hit> hits, const std::map<std::string, int>& judged, std::size_t k) {
    if (k == 0) throw InvalidArgumentError("k must be >= 1");
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, hits.size()); ++r)
        dcg += detail::gain(detail::grade_of(judged, hits[r].doc_id)) / std::log2(static_cast<double>(r) + 2.0);
    std::vector<int> grades;
    for (const auto& [doc, g] : judged) grades.push_back(g);
    std::sort(grades.begin(), grades.end(), std::greater<>());
    double ideal = 0.0;
    for (std::size_t r = 0; r < std::min(k, grades.size()); ++r)
        ideal += detail::gain(grades[r]) / std::log2(static_cast<double>(r) + 2.0);
    return ideal > 0.0 ? dcg / ideal : 0.0;
}

inline double recall_for_query(std::span<const Hit> hits, const std::map<std::string, int>& judged, std::size_t k) {
    if (k == 0) throw InvalidArgumentError("k must be >= 1");
    std::size_t relevant = 0, found = 0;
    for (const auto& [doc, g] : judged) relevant += g > 0;
    for (std::size_t r = 0; r < std::min(k, hits.size()); ++r) found += detail::grade_of(judged, hits[r].doc_id) > 0;
    return relevant == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(relevant);
}

// Per-query metric paired with the run's confidence. Queries absent from
// qrels (or with no relevant judgment) are dropped and counted.
template <class PerQuery>
std::vector<QueryMetric> per_query_metric(const RunRanking& run, const Qrels& qrels, PerQuery&& metric,
                                          std::size_t* skipped = nullptr) {
    std::vector<QueryMetric> out;
    std::size_t skip = 0;
    for (const auto& q : run) {
        const auto* judged = detail::judged_relevant(qrels, q.query_id);
        if (!judged) {
            ++skip;
            continue;
        }
        out.push_back({q.query_id, metric(q.hits, *judged), q.confidence});
    }
    if (skipped) *skipped = skip;
    return out;
}

inline std::vector<QueryMetric> per_query_ndcg(const RunRanking& run, const Qrels& qrels, std::size_t k,
                                               std::size_t* skipped = nullptr) {
    return per_query_metric(
        run, qrels, [k](std::span<const Hit> h, const auto& j) { return ndcg_for_query(h, j, k); }, skipped);
}

inline std::vector<QueryMetric> per_query_recall(const RunRanking& run, const Qrels& qrels, std::size_t k,
                                                 std::size_t* skipped = nullptr) {
    return per_query_metric(
        run, qrels, [k](std::span<const Hit> h, const auto& j) { return recall_for_query(h, j, k); }, skipped);
}

namespace detail {

inline MeanMetric mean_of(const std::vector<QueryMetric>& per_query, std::size_t skipped) {
    MeanMetric m;
    m.skipped = skipped;
    m.n_queries = per_query.size();
    for (const auto& q : per_query) m.value += q.metric;
    if (m.n_queries) m.value /= static_cast<double>(m.n_queries);
    return m;
}

}  // namespace detail

inline MeanMetric ndcg_at_k(const RunRanking& run, const Qrels& qrels, std::size_t k) {
    std::size_t skipped = 0;
    auto pq = per_query_ndcg(run, qrels, k, &skipped);
    return detail::mean_of(pq, skipped);
}

inline MeanMetric recall_at_k(const RunRanking& run, const Qrels& qrels, std::size_t k) {
    std::size_t skipped = 0;
    auto pq = per_query_recall(run, qrels, k, &skipped);
    return detail::mean_of(pq, skipped);
}

struct AbstentionPoint {
    double rate = 0.0;
    double mean_metric = 0.0;
};

struct AbstentionCurve {
    std::vector<AbstentionPoint> points;  // actual curve
    std::vector<AbstentionPoint> oracle_points;
    double auc_actual = 0.0;
    double auc_baseline = 0.0;
    double auc_oracle = 0.0;

    // (actual - baseline) / (oracle - baseline); 0 when the oracle cannot
    // improve on the baseline beyond rounding.
    double normalized() const {
        const double denom = auc_oracle - auc_baseline;
        if (!(denom > 1e-12 * std::max(1.0, std::abs(auc_baseline)))) return 0.0;
        return (auc_actual - auc_baseline) / denom;
    }
};

namespace detail {

// Mean metric of the kept queries after abstaining on the j lowest-keyed
// queries, j = 0..N-1. Queries with equal keys are removed in expectation
// over a uniformly random order among them.
inline std::vector<AbstentionPoint> abstention_points(std::span<const double> metric, std::span<const double> key) {
    const std::size_t n = metric.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });

    // tie groups as (count, metric sum) in removal order
    std::vector<std::pair<std::size_t, double>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || key[order[i]] != key[order[i - 1]]) groups.emplace_back(0, 0.0);
        groups.back().first += 1;
        groups.back().second += metric[order[i]];
    }
    double total = 0.0;
    for (double m : metric) total += m;

    std::vector<AbstentionPoint> pts;
    pts.reserve(n);
    std::size_t g = 0, taken_in_group = 0;
    double removed_full = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j > 0) {
            // remove one more query from the current group
            ++taken_in_group;
            if (taken_in_group == groups[g].first) {
                removed_full += groups[g].second;
                ++g;
                taken_in_group = 0;
            }
        }
        double removed = removed_full;
        if (taken_in_group > 0)
            removed += groups[g].second * static_cast<double>(taken_in_group) / static_cast<double>(groups[g].first);
        const double kept = static_cast<double>(n - j);
        pts.push_back({static_cast<double>(j) / static_cast<double>(n), (total - removed) / kept});
    }
    return pts;
}

inline double trapezoid(const std::vector<AbstentionPoint>& pts) {
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += 0.5 * (pts[i].mean_metric + pts[i - 1].mean_metric) * (pts[i].rate - pts[i - 1].rate);
    return area;
}

}  // namespace detail

// Abstains on the lowest-confidence queries first over rates {0, 1/N, ...,
// (N-1)/N}; the oracle abstains on the lowest-metric queries first and the
// baseline is the flat overall mean.
inline AbstentionCurve abstention_curve(std::span<const QueryMetric> items) {
    if (items.size() < 2) throw InvalidArgumentError("abstention curve needs at least 2 queries");
    Vector metric, conf;
    for (const auto& q : items) {
        metric.push_back(q.metric);
        conf.push_back(q.confidence);
    }
    AbstentionCurve c;
    c.points = detail::abstention_points(metric, conf);
    c.oracle_points = detail::abstention_points(metric, metric);
    const double mean = std::accumulate(metric.begin(), metric.end(), 0.0) / static_cast<double>(metric.size());
    c.auc_actual = detail::trapezoid(c.points);
    c.auc_oracle = detail::trapezoid(c.oracle_points);
    c.auc_baseline = mean * c.points.back().rate;
    return c;
}

inline double nauc_abstention(std::span<const QueryMetric> items) { return abstention_curve(items).normalized(); }

// Average ranks (1-based) with ties sharing the mean of their positions.
inline Vector average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Vector ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size(), "correlation");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw UndefinedCorrelationError("correlation undefined: zero variance input");
    return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> pred, std::span<const double> gold) {
    if (pred.size() != gold.size()) throw DimensionMismatchError(pred.size(), gold.size(), "spearman");
    if (pred.size() < 2) throw InvalidArgumentError("spearman needs at least 2 points");
    const Vector rp = average_ranks(pred), rg = average_ranks(gold);
    return pearson(rp, rg);
}

struct ClassificationScores {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// Macro F1 averages over every label seen in either gold or predictions.
inline ClassificationScores classification_scores(std::span<const std::string> predicted,
                                                  std::span<const std::string> gold) {
    if (predicted.size() != gold.size()) throw DimensionMismatchError(gold.size(), predicted.size(), "predictions");
    if (gold.empty()) throw InvalidArgumentError("no test examples");
    std::set<std::string> labels(gold.begin(), gold.end());
    labels.insert(predicted.begin(), predicted.end());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i];
    double f1_sum = 0.0;
    for (const auto& label : labels) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            const bool p = predicted[i] == label, g = gold[i] == label;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
        const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
        f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    return {static_cast<double>(correct) / static_cast<double>(gold.size()),
            f1_sum / static_cast<double>(labels.size())};
}

// Embedding-space task arithmetic: a + alpha (b - c). Variances are ignored.
inline Vector task_arithmetic_baseline(std::span<const double> a, std::span<const double> b, std::span<const double> c,
                                       double alpha) {
    if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size(), "task arithmetic");
    if (a.size() != c.size()) throw DimensionMismatchError(a.size(), c.size(), "task arithmetic");
    Vector out(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) out[d] = a[d] + alpha * (b[d] - c[d]);
    return out;
}

}  // namespace uec
