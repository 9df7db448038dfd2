#pragma once
// Core value types: diagonal Gaussian embeddings, id-addressed stores of
// them, and aligned multi-model ensembles.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uec/error.hpp"

namespace uec {

using Vector = std::vector<double>;

// Diagonal Gaussian N(mean, diag(var)). A zero variance vector represents a
// deterministic embedding.
class GaussianEmbedding {
public:
    GaussianEmbedding(Vector mean, Vector var) : mean_(std::move(mean)), var_(std::move(var)) {
        if (mean_.empty()) throw InvalidArgumentError("embedding dimension must be >= 1");
        if (mean_.size() != var_.size())
            throw DimensionMismatchError(mean_.size(), var_.size(), "embedding variance");
        for (std::size_t d = 0; d < mean_.size(); ++d) {
            if (!std::isfinite(mean_[d]) || !std::isfinite(var_[d]))
                throw InvalidArgumentError("embedding component " + std::to_string(d) + " is not finite");
            if (var_[d] < 0.0)
                throw InvalidArgumentError("embedding variance " + std::to_string(d) + " is negative");
        }
    }

    static GaussianEmbedding deterministic(Vector mean) {
        Vector var(mean.size(), 0.0);
        return GaussianEmbedding(std::move(mean), std::move(var));
    }

    std::size_t dim() const noexcept { return mean_.size(); }
    std::span<const double> mean() const noexcept { return mean_; }
    std::span<const double> var() const noexcept { return var_; }

    friend bool operator==(const GaussianEmbedding&, const GaussianEmbedding&) = default;

private:
    Vector mean_;
    Vector var_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

// Sum of the diagonal variances, i.e. tr(Sigma).
inline double trace(const GaussianEmbedding& e) {
    double s = 0.0;
    for (double v : e.var()) s += v;
    return s;
}

// Projects the mean onto the unit sphere. The variance is rescaled as if the
// norm were a constant: var / ||mean||^2.
inline GaussianEmbedding l2_normalize(const GaussianEmbedding& e) {
    const double sq = squared_norm(e.mean());
    if (!(sq > 0.0)) throw DegenerateEmbeddingError("cannot l2-normalize an embedding with zero-norm mean");
    const double norm = std::sqrt(sq);
    Vector mean(e.dim()), var(e.dim());
    for (std::size_t d = 0; d < e.dim(); ++d) {
        mean[d] = e.mean()[d] / norm;
        var[d] = e.var()[d] / sq;
    }
    return GaussianEmbedding(std::move(mean), std::move(var));
}

struct EmbeddingRecord {
    std::string id;
    GaussianEmbedding embedding;

    friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Records of one model in canonical order. Ids are unique and every record
// shares the store dimension.
class EmbeddingStore {
public:
    EmbeddingStore(std::string model_name, std::size_t dim) : model_name_(std::move(model_name)), dim_(dim) {
        if (dim_ == 0) throw InvalidArgumentError("store dimension must be >= 1");
    }

    EmbeddingStore(std::string model_name, std::size_t dim, std::vector<EmbeddingRecord> records)
        : EmbeddingStore(std::move(model_name), dim) {
        records_.reserve(records.size());
        for (auto& r : records) add(std::move(r));
    }

    void add(EmbeddingRecord record) {
        if (record.id.empty()) throw InvalidArgumentError("record id must be nonempty");
        if (record.embedding.dim() != dim_)
            throw DimensionMismatchError(dim_, record.embedding.dim(), "record '" + record.id + "'");
        auto [it, inserted] = by_id_.emplace(record.id, records_.size());
        if (!inserted) throw InvalidArgumentError("duplicate record id '" + record.id + "'");
        records_.push_back(std::move(record));
    }

    void add(std::string id, GaussianEmbedding e) { add(EmbeddingRecord{std::move(id), std::move(e)}); }

    const std::string& model_name() const noexcept { return model_name_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
    const EmbeddingRecord& operator[](std::size_t i) const { return records_.at(i); }

    const EmbeddingRecord* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &records_[it->second];
    }

    const EmbeddingRecord& at(const std::string& id) const {
        const auto* r = find(id);
        if (!r) throw InvalidArgumentError("unknown record id '" + id + "' in store '" + model_name_ + "'");
        return *r;
    }

    friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
        return a.model_name_ == b.model_name_ && a.dim_ == b.dim_ && a.records_ == b.records_;
    }

private:
    std::string model_name_;
    std::size_t dim_;
    std::vector<EmbeddingRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// K stores over the same id set and dimension. Iteration follows the first
// store's record order.
class EnsembleInput {
public:
    explicit EnsembleInput(std::vector<EmbeddingStore> stores) : stores_(std::move(stores)) {
        if (stores_.empty()) throw InvalidArgumentError("ensemble needs at least one store");
        const auto& first = stores_.front();
        for (std::size_t k = 1; k < stores_.size(); ++k) {
            const auto& s = stores_[k];
            if (s.dim() != first.dim())
                throw DimensionMismatchError(first.dim(), s.dim(), "ensemble store '" + s.model_name() + "'");
            if (s.size() != first.size())
                throw InvalidArgumentError("ensemble store '" + s.model_name() + "' has " +
                                           std::to_string(s.size()) + " records, expected " +
                                           std::to_string(first.size()));
        }
        aligned_.resize(stores_.size());
        for (std::size_t k = 0; k < stores_.size(); ++k) {
            aligned_[k].reserve(first.size());
            for (const auto& rec : first.records()) {
                const auto* r = stores_[k].find(rec.id);
                if (!r)
                    throw InvalidArgumentError("record '" + rec.id + "' missing from store '" +
                                               stores_[k].model_name() + "'");
                aligned_[k].push_back(&r->embedding);
            }
        }
    }

    EnsembleInput(const EnsembleInput& other) : EnsembleInput(other.stores_) {}
    EnsembleInput(EnsembleInput&&) noexcept = default;
    EnsembleInput& operator=(const EnsembleInput& other) {
        if (this != &other) *this = EnsembleInput(other.stores_);
        return *this;
    }
    EnsembleInput& operator=(EnsembleInput&&) noexcept = default;

    std::size_t n_models() const noexcept { return stores_.size(); }
    std::size_t n_records() const noexcept { return stores_.front().size(); }
    std::size_t dim() const noexcept { return stores_.front().dim(); }
    const std::vector<EmbeddingStore>& stores() const noexcept { return stores_; }
    const std::string& id(std::size_t i) const { return stores_.front()[i].id; }

    // Model k's embedding of record i.
    const GaussianEmbedding& embedding(std::size_t k, std::size_t i) const { return *aligned_.at(k).at(i); }

    // All K embeddings of record i.
    std::vector<GaussianEmbedding> record(std::size_t i) const {
        std::vector<GaussianEmbedding> out;
        out.reserve(n_models());
        for (std::size_t k = 0; k < n_models(); ++k) out.push_back(embedding(k, i));
        return out;
    }

private:
    std::vector<EmbeddingStore> stores_;
    std::vector<std::vector<const GaussianEmbedding*>> aligned_;
};

}  // namespace uec
