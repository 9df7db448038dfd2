#pragma once
// Uncertainty-driven ensemble coefficients and Gaussian convolution of K
// independent probabilistic embeddings.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"

namespace uec {

enum class CoefficientMode { bayes_inverse_trace, full_form, uniform, fixed };

inline std::string_view to_string(CoefficientMode m) {
    switch (m) {
        case CoefficientMode::bayes_inverse_trace: return "bayes";
        case CoefficientMode::full_form: return "full";
        case CoefficientMode::uniform: return "uniform";
        case CoefficientMode::fixed: return "fixed";
    }
    return "?";
}

inline CoefficientMode parse_coefficient_mode(std::string_view s) {
    if (s == "bayes" || s == "bayes_inverse_trace") return CoefficientMode::bayes_inverse_trace;
    if (s == "full" || s == "full_form") return CoefficientMode::full_form;
    if (s == "uniform") return CoefficientMode::uniform;
    if (s == "fixed") return CoefficientMode::fixed;
    throw InvalidArgumentError("unknown coefficient mode '" + std::string(s) + "'");
}

inline constexpr double kSimplexTolerance = 1e-12;

struct CoefficientConfig {
    CoefficientMode mode = CoefficientMode::bayes_inverse_trace;
    double temperature = 1.5;
    std::optional<Vector> fixed_weights;

    void validate() const {
        if (!(temperature > 0.0) || !std::isfinite(temperature))
            throw InvalidArgumentError("temperature must be positive");
        if (mode == CoefficientMode::fixed && !fixed_weights)
            throw InvalidArgumentError("fixed coefficient mode requires weights");
        if (fixed_weights) {
            double s = 0.0;
            for (double w : *fixed_weights) {
                if (!(w >= 0.0)) throw InvalidArgumentError("fixed weights must be nonnegative");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-9) throw InvalidArgumentError("fixed weights must sum to 1");
        }
    }
};

struct Coefficients {
    Vector pi;
    CoefficientConfig provenance;

    std::size_t size() const noexcept { return pi.size(); }
    double operator[](std::size_t k) const { return pi.at(k); }
};

namespace detail {

// pi_k ∝ cost_k^-tau, evaluated in log space so extreme costs stay finite.
inline Vector inverse_power_weights(std::span<const double> costs, double tau, const char* what) {
    if (costs.empty()) throw InvalidArgumentError("need at least one model");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgumentError("temperature must be positive");
    Vector logw(costs.size());
    for (std::size_t k = 0; k < costs.size(); ++k) {
        if (!(costs[k] > 0.0) || !std::isfinite(costs[k]))
            throw DegenerateUncertaintyError(std::string(what) + " " + std::to_string(k) +
                                             " must be positive and finite, got " + std::to_string(costs[k]));
        logw[k] = -tau * std::log(costs[k]);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (double& w : logw) {
        w = std::exp(w - top);
        z += w;
    }
    for (double& w : logw) w /= z;
    return logw;
}

}  // namespace detail

// Inverse-trace weighting sharpened by temperature: pi_k ∝ (1 / tr_k)^tau.
inline Coefficients bayes_coefficients(std::span<const double> traces, double temperature) {
    return {detail::inverse_power_weights(traces, temperature, "trace"),
            CoefficientConfig{CoefficientMode::bayes_inverse_trace, temperature, std::nullopt}};
}

// Costs c_k = tr_k + ||mu_k||^2, pi_k ∝ (1 / c_k)^tau.
inline Coefficients full_coefficients(std::span<const double> traces, std::span<const double> mean_sq_norms,
                                      double temperature) {
    if (traces.size() != mean_sq_norms.size())
        throw DimensionMismatchError(traces.size(), mean_sq_norms.size(), "full-form costs");
    Vector cost(traces.size());
    for (std::size_t k = 0; k < cost.size(); ++k) cost[k] = traces[k] + mean_sq_norms[k];
    return {detail::inverse_power_weights(cost, temperature, "cost"),
            CoefficientConfig{CoefficientMode::full_form, temperature, std::nullopt}};
}

inline Coefficients uniform_coefficients(std::size_t k) {
    if (k == 0) throw InvalidArgumentError("need at least one model");
    return {Vector(k, 1.0 / static_cast<double>(k)), CoefficientConfig{CoefficientMode::uniform, 1.0, std::nullopt}};
}

inline Coefficients fixed_coefficients(const Vector& weights) {
    CoefficientConfig cfg{CoefficientMode::fixed, 1.0, weights};
    cfg.validate();
    return {weights, cfg};
}

// Per-record coefficients for the K embeddings of one input.
inline Coefficients compute_coefficients(std::span<const GaussianEmbedding> embeddings, const CoefficientConfig& cfg) {
    cfg.validate();
    const std::size_t k = embeddings.size();
    switch (cfg.mode) {
        case CoefficientMode::bayes_inverse_trace: {
            Vector tr(k);
            for (std::size_t i = 0; i < k; ++i) tr[i] = trace(embeddings[i]);
            return bayes_coefficients(tr, cfg.temperature);
        }
        case CoefficientMode::full_form: {
            Vector tr(k), nsq(k);
            for (std::size_t i = 0; i < k; ++i) {
                tr[i] = trace(embeddings[i]);
                nsq[i] = squared_norm(embeddings[i].mean());
            }
            auto c = full_coefficients(tr, nsq, cfg.temperature);
            return c;
        }
        case CoefficientMode::uniform: return uniform_coefficients(k);
        case CoefficientMode::fixed:
            if (cfg.fixed_weights->size() != k)
                throw DimensionMismatchError(k, cfg.fixed_weights->size(), "fixed weights");
            return fixed_coefficients(*cfg.fixed_weights);
    }
    throw InvalidArgumentError("unknown coefficient mode");
}

// Weighted sum of independent Gaussians: mean sum pi_k mu_k, var sum pi_k^2 var_k.
inline GaussianEmbedding convolve(std::span<const GaussianEmbedding> embeddings, const Coefficients& coeffs) {
    if (embeddings.empty()) throw InvalidArgumentError("nothing to convolve");
    if (coeffs.size() != embeddings.size())
        throw DimensionMismatchError(embeddings.size(), coeffs.size(), "coefficient count");
    const std::size_t dim = embeddings.front().dim();
    Vector mean(dim, 0.0), var(dim, 0.0);
    for (std::size_t k = 0; k < embeddings.size(); ++k) {
        const auto& e = embeddings[k];
        if (e.dim() != dim) throw DimensionMismatchError(dim, e.dim(), "convolve");
        const double p = coeffs.pi[k];
        if (p == 0.0) continue;
        for (std::size_t d = 0; d < dim; ++d) {
            mean[d] += p * e.mean()[d];
            var[d] += p * p * e.var()[d];
        }
    }
    return GaussianEmbedding(std::move(mean), std::move(var));
}

struct ConvolvedStore {
    EmbeddingStore store;
    std::vector<Coefficients> coefficients;  // aligned with store records
};

// Convolves every record of an ensemble with its own data-wise coefficients.
inline ConvolvedStore convolve_ensemble(const EnsembleInput& input, const CoefficientConfig& cfg,
                                        std::string model_name = "ensemble") {
    cfg.validate();
    ConvolvedStore out{EmbeddingStore(std::move(model_name), input.dim()), {}};
    out.coefficients.reserve(input.n_records());
    for (std::size_t i = 0; i < input.n_records(); ++i) {
        const auto embs = input.record(i);
        auto c = compute_coefficients(embs, cfg);
        out.store.add(input.id(i), convolve(embs, c));
        out.coefficients.push_back(std::move(c));
    }
    return out;
}

// sum_k pi_k (||mu_k(x) - mu_k(x')||^2 + tr Sigma_k(x) + tr Sigma_k(x')).
inline double surrogate_loss(std::span<const double> pi, std::span<const GaussianEmbedding> x_embs,
                             std::span<const GaussianEmbedding> xp_embs) {
    if (x_embs.size() != xp_embs.size()) throw DimensionMismatchError(x_embs.size(), xp_embs.size(), "surrogate models");
    if (pi.size() != x_embs.size()) throw DimensionMismatchError(x_embs.size(), pi.size(), "surrogate coefficients");
    double loss = 0.0;
    for (std::size_t k = 0; k < pi.size(); ++k) {
        const auto& a = x_embs[k];
        const auto& b = xp_embs[k];
        if (a.dim() != b.dim()) throw DimensionMismatchError(a.dim(), b.dim(), "surrogate pair");
        double fidelity = 0.0;
        for (std::size_t d = 0; d < a.dim(); ++d) {
            const double diff = a.mean()[d] - b.mean()[d];
            fidelity += diff * diff;
        }
        loss += pi[k] * (fidelity + trace(a) + trace(b));
    }
    return loss;
}

// Euclidean projection onto the probability simplex (sort-and-threshold).
inline Vector project_to_simplex(std::span<const double> v) {
    Vector u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    Vector out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(v[k] - theta, 0.0);
    return out;
}

// Minimizes sum_k pi_k^2 c_k over the simplex by projected gradient descent,
// stopping once the iterate is certified within `resolution` (inf-norm) of
// the optimum. Independent of the closed form; used to check it.
inline Vector quadratic_simplex_oracle(std::span<const double> costs, double resolution) {
    if (costs.empty()) throw InvalidArgumentError("need at least one cost");
    if (!(resolution > 0.0)) throw InvalidArgumentError("resolution must be positive");
    double cmin = costs[0], cmax = costs[0];
    for (double c : costs) {
        if (!(c > 0.0)) throw DegenerateUncertaintyError("oracle costs must be positive");
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
    }
    const std::size_t k = costs.size();
    const double step = 1.0 / (2.0 * cmax);
    // strongly convex with modulus 2 cmin, smooth with 2 cmax: the fixed-point
    // map contracts by (1 - cmin/cmax), which bounds distance to the optimum
    const double contraction = 1.0 - cmin / cmax;
    Vector pi(k, 1.0 / static_cast<double>(k)), next(k);
    for (int it = 0; it < 10'000'000; ++it) {
        for (std::size_t j = 0; j < k; ++j) next[j] = pi[j] - step * 2.0 * pi[j] * costs[j];
        next = project_to_simplex(next);
        double delta = 0.0;
        for (std::size_t j = 0; j < k; ++j) delta = std::max(delta, std::abs(next[j] - pi[j]));
        pi.swap(next);
        const double bound = contraction >= 1.0 ? delta : delta * contraction / (1.0 - contraction);
        // the l2 contraction bound is converted to inf-norm conservatively via sqrt(k)
        if (bound * std::sqrt(static_cast<double>(k)) <= resolution) break;
    }
    return pi;
}

}  // namespace uec
