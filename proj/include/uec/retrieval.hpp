#pragma once
// Exact brute-force top-k search over a store of (convolved) Gaussian
// embeddings.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"
#include "uec/similarity.hpp"

namespace uec {

struct Hit {
    std::string doc_id;
    double score = 0.0;
    friend bool operator==(const Hit&, const Hit&) = default;
};

struct QueryResult {
    std::string query_id;
    std::vector<Hit> hits;  // score descending, ties by ascending doc_id
    double confidence = 0.0;  // score of the rank-1 hit
    friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

using RunRanking = std::vector<QueryResult>;

// Documents laid out row-major so a scan touches contiguous memory.
// Variances are held at the 32-bit precision of the store format, which
// keeps the uncertainty scan close to the bandwidth of a plain dot scan.
class Index {
public:
    Index(const EmbeddingStore& store, SimilarityConfig cfg) : cfg_(cfg), dim_(store.dim()) {
        cfg_.validate();
        if (store.empty()) throw InvalidArgumentError("cannot build an index over an empty store");
        const std::size_t n = store.size();
        ids_.reserve(n);
        means_.resize(n * dim_);
        vars_.resize(n * dim_);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& rec = store[i];
            const GaussianEmbedding e = cfg_.normalize_inputs ? l2_normalize(rec.embedding) : rec.embedding;
            std::copy(e.mean().begin(), e.mean().end(), means_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
            std::transform(e.var().begin(), e.var().end(), vars_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                           [](double v) { return static_cast<float>(v); });
            ids_.push_back(rec.id);
        }
        // position of each doc in ascending-id order, for integer tie breaks
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
        id_rank_.resize(n);
        for (std::size_t r = 0; r < n; ++r) id_rank_[order[r]] = r;
    }

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const SimilarityConfig& config() const noexcept { return cfg_; }
    const std::string& id(std::size_t i) const { return ids_.at(i); }
    std::span<const double> mean(std::size_t i) const { return {means_.data() + i * dim_, dim_}; }
    std::span<const float> var(std::size_t i) const { return {vars_.data() + i * dim_, dim_}; }

    // Scores of every document against one query, in index order.
    std::vector<double> score_all(const GaussianEmbedding& query) const {
        if (query.dim() != dim_) throw DimensionMismatchError(dim_, query.dim(), "query vs index");
        const PreparedQuery pq(cfg_.normalize_inputs ? l2_normalize(query) : query, cfg_);
        std::vector<double> scores(size());
        const double* m = means_.data();
        const float* v = vars_.data();
        if (pq.mode() == SimilarityMode::mean_dot) {
            for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = pq.dot_score(m + i * dim_);
        } else {
            for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = pq.score(m + i * dim_, v + i * dim_);
        }
        return scores;
    }

    QueryResult search(const std::string& query_id, const GaussianEmbedding& query, std::size_t k) const {
        if (k == 0) throw InvalidArgumentError("k must be >= 1");
        const auto scores = score_all(query);
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto better = [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return id_rank_[a] < id_rank_[b];
        };
        const std::size_t top = std::min(k, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(), better);
        QueryResult res;
        res.query_id = query_id;
        res.hits.reserve(top);
        for (std::size_t r = 0; r < top; ++r) res.hits.push_back({ids_[order[r]], scores[order[r]]});
        res.confidence = res.hits.front().score;
        return res;
    }

private:
    SimilarityConfig cfg_;
    std::size_t dim_;
    std::vector<std::string> ids_;
    std::vector<double> means_;
    std::vector<float> vars_;
    std::vector<std::size_t> id_rank_;
};

inline Index build_index(const EmbeddingStore& store, const SimilarityConfig& cfg) { return Index(store, cfg); }

inline QueryResult search_topk(const Index& index, const GaussianEmbedding& query, std::size_t k,
                               const std::string& query_id = "query") {
    return index.search(query_id, query, k);
}

// Runs every query of `queries` against the index. Output follows the
// query store order regardless of `workers`.
inline RunRanking search_all(const Index& index, const EmbeddingStore& queries, std::size_t k,
                             unsigned workers = 1) {
    RunRanking run(queries.size());
    if (queries.dim() != index.dim()) throw DimensionMismatchError(index.dim(), queries.dim(), "queries vs index");
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, queries.size()))));
    if (workers == 1) {
        for (std::size_t i = 0; i < queries.size(); ++i)
            run[i] = index.search(queries[i].id, queries[i].embedding, k);
        return run;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < queries.size() && !failed; i = next++) {
                try {
                    run[i] = index.search(queries[i].id, queries[i].embedding, k);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
    return run;
}

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace uec
