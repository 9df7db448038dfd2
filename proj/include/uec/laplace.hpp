#pragma once
// Diagonal last-layer Laplace approximation.
//
// A logistic relevance head with logit w^T (q ⊙ p) is fit to labeled
// query/passage pairs under a N(0, 1/lambda I) prior. The posterior is
// approximated by N(w_map, diag(H)^-1) with H the exact Hessian of the
// negative log posterior at the MAP. Deterministic embeddings h are then
// lifted to Gaussians with mean h and variance h_d^2 v_d.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"
#include "uec/newton.hpp"

namespace uec {

struct PairExample {
    Vector query_features;
    Vector passage_features;
    int label = 0;  // 1 relevant, 0 not relevant
};

struct LaplaceFitConfig {
    double prior_precision = 1.0;
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;
};

struct LaplacePosterior {
    std::string model_name;
    Vector map_weights;
    Vector post_var;  // diagonal of H^-1 approximated as 1 / diag(H)
    double prior_precision = 1.0;
    std::size_t n_examples = 0;

    std::size_t dim() const noexcept { return map_weights.size(); }
    friend bool operator==(const LaplacePosterior&, const LaplacePosterior&) = default;
};

inline Vector pair_features(std::span<const double> q, std::span<const double> p) {
    if (q.size() != p.size()) throw DimensionMismatchError(q.size(), p.size(), "pair features");
    Vector out(q.size());
    for (std::size_t d = 0; d < q.size(); ++d) out[d] = q[d] * p[d];
    return out;
}

namespace detail {

inline void validate_prior(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw InvalidArgumentError("prior precision must be positive, got " + std::to_string(lambda));
}

// Rows are pair feature vectors.
inline Eigen::MatrixXd feature_matrix(std::span<const PairExample> data, std::size_t dim) {
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto& ex = data[n];
        if (ex.label != 0 && ex.label != 1)
            throw InvalidArgumentError("pair label must be 0 or 1, got " + std::to_string(ex.label));
        if (ex.query_features.size() != dim) throw DimensionMismatchError(dim, ex.query_features.size(), "pair query");
        const Vector f = pair_features(ex.query_features, ex.passage_features);
        for (std::size_t d = 0; d < dim; ++d) phi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) = f[d];
    }
    return phi;
}

class LogisticMapProblem {
public:
    LogisticMapProblem(Eigen::MatrixXd phi, Eigen::VectorXd labels, double lambda)
        : phi_(std::move(phi)), y_(std::move(labels)), lambda_(lambda) {}

    double value(const Eigen::VectorXd& w) const {
        const Eigen::VectorXd a = phi_ * w;
        double f = 0.5 * lambda_ * w.squaredNorm();
        for (Eigen::Index n = 0; n < a.size(); ++n) f += softplus(a[n]) - y_[n] * a[n];
        return f;
    }

    void derivatives(const Eigen::VectorXd& w, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
        const Eigen::VectorXd a = phi_ * w;
        Eigen::VectorXd resid(a.size()), curv(a.size());
        for (Eigen::Index n = 0; n < a.size(); ++n) {
            const double p = sigmoid(a[n]);
            resid[n] = p - y_[n];
            curv[n] = p * (1.0 - p);
        }
        grad = phi_.transpose() * resid + lambda_ * w;
        hess = phi_.transpose() * curv.asDiagonal() * phi_;
        hess.diagonal().array() += lambda_;
    }

private:
    Eigen::MatrixXd phi_;
    Eigen::VectorXd y_;
    double lambda_;
};

inline std::size_t infer_dim(std::span<const PairExample> data, std::size_t dim_hint) {
    if (dim_hint != 0) return dim_hint;
    if (data.empty()) throw InvalidArgumentError("cannot infer feature dimension from an empty data set");
    return data.front().query_features.size();
}

}  // namespace detail

struct MapFitTrace {
    Vector weights;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::vector<double> objective;  // negative log posterior per accepted iterate
};

// Newton iteration with the exact logistic Hessian, starting from w = 0.
// `dim` may be 0 when data is nonempty.
inline MapFitTrace fit_map_traced(std::span<const PairExample> data, const LaplaceFitConfig& cfg,
                                  std::size_t dim = 0) {
    detail::validate_prior(cfg.prior_precision);
    dim = detail::infer_dim(data, dim);
    Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
    for (std::size_t n = 0; n < data.size(); ++n) y[static_cast<Eigen::Index>(n)] = data[n].label;
    detail::LogisticMapProblem problem(detail::feature_matrix(data, dim), std::move(y), cfg.prior_precision);
    const NewtonOptions opt{cfg.max_iterations, cfg.gradient_tolerance};
    auto res = newton_minimize(problem, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)), opt);
    MapFitTrace out;
    out.weights.assign(res.x.data(), res.x.data() + res.x.size());
    out.iterations = res.iterations;
    out.gradient_norm = res.gradient_norm;
    out.objective = std::move(res.objective);
    return out;
}

inline Vector fit_map(std::span<const PairExample> data, const LaplaceFitConfig& cfg, std::size_t dim = 0) {
    return fit_map_traced(data, cfg, dim).weights;
}

// v_d = 1 / (lambda + sum_n p_n (1 - p_n) phi_{n,d}^2), p_n = sigmoid(w^T phi_n).
inline Vector diag_posterior_variance(std::span<const PairExample> data, std::span<const double> map_weights,
                                      double prior_precision) {
    detail::validate_prior(prior_precision);
    const std::size_t dim = map_weights.size();
    Vector precision(dim, prior_precision);
    for (const auto& ex : data) {
        if (ex.query_features.size() != dim) throw DimensionMismatchError(dim, ex.query_features.size(), "pair query");
        const Vector phi = pair_features(ex.query_features, ex.passage_features);
        const double p = sigmoid(dot(map_weights, phi));
        const double c = p * (1.0 - p);
        for (std::size_t d = 0; d < dim; ++d) precision[d] += c * phi[d] * phi[d];
    }
    Vector v(dim);
    for (std::size_t d = 0; d < dim; ++d) v[d] = 1.0 / precision[d];
    return v;
}

inline LaplacePosterior fit_laplace(std::span<const PairExample> data, const LaplaceFitConfig& cfg, std::size_t dim = 0,
                                    std::string model_name = {}) {
    LaplacePosterior post;
    post.model_name = std::move(model_name);
    post.map_weights = fit_map(data, cfg, dim);
    post.post_var = diag_posterior_variance(data, post.map_weights, cfg.prior_precision);
    post.prior_precision = cfg.prior_precision;
    post.n_examples = data.size();
    return post;
}

inline GaussianEmbedding embed_to_gaussian(const LaplacePosterior& posterior, std::span<const double> h) {
    if (h.size() != posterior.post_var.size())
        throw DimensionMismatchError(posterior.post_var.size(), h.size(), "embedding vs posterior");
    Vector mean(h.begin(), h.end());
    Vector var(h.size());
    for (std::size_t d = 0; d < h.size(); ++d) var[d] = h[d] * h[d] * posterior.post_var[d];
    return GaussianEmbedding(std::move(mean), std::move(var));
}

// Lifts every record of a deterministic store; record order and ids are kept.
inline EmbeddingStore probabilize(const EmbeddingStore& store, const LaplacePosterior& posterior) {
    if (store.dim() != posterior.dim()) throw DimensionMismatchError(posterior.dim(), store.dim(), "store vs posterior");
    EmbeddingStore out(store.model_name(), store.dim());
    for (const auto& rec : store.records()) out.add(rec.id, embed_to_gaussian(posterior, rec.embedding.mean()));
    return out;
}

struct PairLabel {
    std::string query_id;
    std::string doc_id;
    int label = 0;
};

// Resolves labeled id pairs against a store of deterministic embeddings.
inline std::vector<PairExample> pair_examples(const EmbeddingStore& store, std::span<const PairLabel> labels) {
    std::vector<PairExample> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        const auto& q = store.at(l.query_id).embedding.mean();
        const auto& p = store.at(l.doc_id).embedding.mean();
        out.push_back(PairExample{Vector(q.begin(), q.end()), Vector(p.begin(), p.end()), l.label});
    }
    return out;
}

}  // namespace uec
