#pragma once
// Uncertainty-aware similarity: the dot product of two independent diagonal
// Gaussians is moment-matched to N(mu_s, sigma_s^2) and scored with the
// probit shrinkage mu_s / sqrt(1 + (pi/8) beta sigma_s^2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"

namespace uec {

enum class SimilarityMode { mean_dot, uncertainty_probit };

inline std::string_view to_string(SimilarityMode m) {
    return m == SimilarityMode::mean_dot ? "dot" : "probit";
}

inline SimilarityMode parse_similarity_mode(std::string_view s) {
    if (s == "dot" || s == "mean_dot") return SimilarityMode::mean_dot;
    if (s == "probit" || s == "uncertainty_probit") return SimilarityMode::uncertainty_probit;
    throw InvalidArgumentError("unknown similarity mode '" + std::string(s) + "'");
}

struct SimilarityConfig {
    double beta = 0.01;
    SimilarityMode mode = SimilarityMode::uncertainty_probit;
    bool normalize_inputs = true;
    // tr(Sigma_q Sigma_c); only switched off for speed studies
    bool include_trace_term = true;

    void validate() const {
        if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgumentError("beta must be nonnegative");
    }
};

struct DotMoments {
    double mu_s = 0.0;
    double sigma_s_sq = 0.0;
};

inline DotMoments dot_moments(const GaussianEmbedding& q, const GaussianEmbedding& c, bool include_trace_term = true) {
    if (q.dim() != c.dim()) throw DimensionMismatchError(q.dim(), c.dim(), "dot moments");
    const auto mq = q.mean(), mc = c.mean(), vq = q.var(), vc = c.var();
    DotMoments m;
    for (std::size_t d = 0; d < q.dim(); ++d) {
        m.mu_s += mq[d] * mc[d];
        m.sigma_s_sq += mq[d] * mq[d] * vc[d] + mc[d] * mc[d] * vq[d];
        if (include_trace_term) m.sigma_s_sq += vq[d] * vc[d];
    }
    return m;
}

inline constexpr double kProbitScale = std::numbers::pi / 8.0;

inline double probit_score(const DotMoments& m, double beta) {
    return m.mu_s / std::sqrt(1.0 + kProbitScale * beta * m.sigma_s_sq);
}

inline double score_pair(const GaussianEmbedding& q, const GaussianEmbedding& c, const SimilarityConfig& cfg) {
    if (cfg.normalize_inputs) return score_pair(l2_normalize(q), l2_normalize(c), {cfg.beta, cfg.mode, false, cfg.include_trace_term});
    if (cfg.mode == SimilarityMode::mean_dot) return dot(q.mean(), c.mean());
    return probit_score(dot_moments(q, c, cfg.include_trace_term), cfg.beta);
}

// Query-side terms hoisted out of a scan over many candidates, so each
// candidate costs one fused pass over its mean and variance:
//   sigma_s^2 = sum_d var_c[d] (mu_q[d]^2 + var_q[d]) + mu_c[d]^2 var_q[d].
class PreparedQuery {
public:
    PreparedQuery(const GaussianEmbedding& q, const SimilarityConfig& cfg)
        : mean_(q.mean().begin(), q.mean().end()),
          var_weight_(q.dim()),
          mean_weight_(q.var().begin(), q.var().end()),
          beta_(cfg.beta),
          mode_(cfg.mode) {
        for (std::size_t d = 0; d < q.dim(); ++d)
            var_weight_[d] = mean_[d] * mean_[d] + (cfg.include_trace_term ? mean_weight_[d] : 0.0);
    }

    std::size_t dim() const noexcept { return mean_.size(); }
    SimilarityMode mode() const noexcept { return mode_; }

    // Kernels keep four independent partial sums so the reduction pipelines.
    double dot_score(const double* cand_mean) const noexcept {
        const double* mq = mean_.data();
        const std::size_t n = mean_.size(), n4 = n - n % 4;
        double tail = 0.0;
        for (std::size_t d = n4; d < n; ++d) tail += mq[d] * cand_mean[d];
#if defined(__SSE2__)
        __m128d s0 = _mm_setzero_pd(), s1 = _mm_setzero_pd();
        for (std::size_t d = 0; d < n4; d += 4) {
            s0 = _mm_add_pd(s0, _mm_mul_pd(_mm_loadu_pd(mq + d), _mm_loadu_pd(cand_mean + d)));
            s1 = _mm_add_pd(s1, _mm_mul_pd(_mm_loadu_pd(mq + d + 2), _mm_loadu_pd(cand_mean + d + 2)));
        }
        return horizontal_sum(_mm_add_pd(s0, s1)) + tail;
#else
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (std::size_t d = 0; d < n4; d += 4) {
            s0 += mq[d] * cand_mean[d];
            s1 += mq[d + 1] * cand_mean[d + 1];
            s2 += mq[d + 2] * cand_mean[d + 2];
            s3 += mq[d + 3] * cand_mean[d + 3];
        }
        return ((s0 + s1) + (s2 + s3)) + tail;
#endif
    }

    template <class VarT>
    DotMoments moments(const double* cand_mean, const VarT* cand_var) const noexcept {
        const double* mq = mean_.data();
        const double* a = var_weight_.data();
        const double* b = mean_weight_.data();
        const std::size_t n = mean_.size(), n4 = n - n % 4;
        double mu[4] = {0.0, 0.0, 0.0, 0.0}, sig[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t d = 0; d < n4; d += 4) {
            for (std::size_t l = 0; l < 4; ++l) {
                const double m = cand_mean[d + l];
                mu[l] += mq[d + l] * m;
                sig[l] += a[d + l] * static_cast<double>(cand_var[d + l]) + b[d + l] * m * m;
            }
        }
        for (std::size_t d = n4; d < n; ++d) {
            const double m = cand_mean[d];
            mu[0] += mq[d] * m;
            sig[0] += a[d] * static_cast<double>(cand_var[d]) + b[d] * m * m;
        }
        return {(mu[0] + mu[1]) + (mu[2] + mu[3]), (sig[0] + sig[1]) + (sig[2] + sig[3])};
    }

#if defined(__SSE2__)
    DotMoments moments(const double* cand_mean, const float* cand_var) const noexcept {
        const double* mq = mean_.data();
        const double* a = var_weight_.data();
        const double* b = mean_weight_.data();
        const std::size_t n = mean_.size(), n4 = n - n % 4;
        __m128d mu0 = _mm_setzero_pd(), mu1 = _mm_setzero_pd(), sig0 = _mm_setzero_pd(), sig1 = _mm_setzero_pd();
        for (std::size_t d = 0; d < n4; d += 4) {
            const __m128d m0 = _mm_loadu_pd(cand_mean + d), m1 = _mm_loadu_pd(cand_mean + d + 2);
            const __m128 vf = _mm_loadu_ps(cand_var + d);
            const __m128d v0 = _mm_cvtps_pd(vf), v1 = _mm_cvtps_pd(_mm_movehl_ps(vf, vf));
            mu0 = _mm_add_pd(mu0, _mm_mul_pd(_mm_loadu_pd(mq + d), m0));
            mu1 = _mm_add_pd(mu1, _mm_mul_pd(_mm_loadu_pd(mq + d + 2), m1));
            sig0 = _mm_add_pd(sig0, _mm_add_pd(_mm_mul_pd(_mm_loadu_pd(a + d), v0),
                                               _mm_mul_pd(_mm_mul_pd(_mm_loadu_pd(b + d), m0), m0)));
            sig1 = _mm_add_pd(sig1, _mm_add_pd(_mm_mul_pd(_mm_loadu_pd(a + d + 2), v1),
                                               _mm_mul_pd(_mm_mul_pd(_mm_loadu_pd(b + d + 2), m1), m1)));
        }
        double mu = horizontal_sum(_mm_add_pd(mu0, mu1)), sig = horizontal_sum(_mm_add_pd(sig0, sig1));
        for (std::size_t d = n4; d < n; ++d) {
            const double m = cand_mean[d];
            mu += mq[d] * m;
            sig += a[d] * static_cast<double>(cand_var[d]) + b[d] * m * m;
        }
        return {mu, sig};
    }
#endif

    template <class VarT>
    double score(const double* cand_mean, const VarT* cand_var) const noexcept {
        if (mode_ == SimilarityMode::mean_dot) return dot_score(cand_mean);
        return probit_score(moments(cand_mean, cand_var), beta_);
    }

private:
#if defined(__SSE2__)
    static double horizontal_sum(__m128d v) noexcept {
        return _mm_cvtsd_f64(v) + _mm_cvtsd_f64(_mm_unpackhi_pd(v, v));
    }
#endif

    Vector mean_;
    Vector var_weight_;
    Vector mean_weight_;
    double beta_;
    SimilarityMode mode_;
};

struct MonteCarloMoments {
    DotMoments moments;
    double mean_std_error = 0.0;
    double var_std_error = 0.0;
};

// Empirical mean and (unbiased) variance of z_q^T z_c over independent draws,
// with standard errors from the running fourth central moment. Each sample
// draws z_q in full; given z_q, z_q^T z_c is exactly N(z_q^T mu_c,
// sum_d z_q[d]^2 var_c[d]), so the candidate side costs one draw.
inline MonteCarloMoments mc_moments_estimate(const GaussianEmbedding& q, const GaussianEmbedding& c,
                                             std::size_t n_samples, std::uint64_t seed) {
    if (q.dim() != c.dim()) throw DimensionMismatchError(q.dim(), c.dim(), "mc moments");
    if (n_samples == 0) throw InvalidArgumentError("n_samples must be >= 1");
    boost::random::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t dim = q.dim();
    const auto mq = q.mean(), mc = c.mean(), vc = c.var();
    Vector sq(dim);
    for (std::size_t d = 0; d < dim; ++d) sq[d] = std::sqrt(q.var()[d]);
    double mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        double loc = 0.0, scale_sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double zq = sq[d] > 0.0 ? mq[d] + sq[d] * normal(rng) : mq[d];
            loc += zq * mc[d];
            scale_sq += zq * zq * vc[d];
        }
        const double s = scale_sq > 0.0 ? loc + std::sqrt(scale_sq) * normal(rng) : loc;
        const double n1 = static_cast<double>(i), n = n1 + 1.0;
        const double delta = s - mean, delta_n = delta / n, delta_n2 = delta_n * delta_n;
        const double term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (n * n - 3 * n + 3) + 6 * delta_n2 * m2 - 4 * delta_n * m3;
        m3 += term1 * delta_n * (n - 2) - 3 * delta_n * m2;
        m2 += term1;
    }
    const double n = static_cast<double>(n_samples);
    MonteCarloMoments out;
    out.moments = {mean, n_samples > 1 ? m2 / (n - 1) : 0.0};
    if (n_samples > 1) {
        const double pop_var = m2 / n;
        out.mean_std_error = std::sqrt(out.moments.sigma_s_sq / n);
        out.var_std_error = std::sqrt(std::max(m4 / n - pop_var * pop_var, 0.0) / n);
    }
    return out;
}

inline DotMoments mc_moments_oracle(const GaussianEmbedding& q, const GaussianEmbedding& c, std::size_t n_samples,
                                    std::uint64_t seed) {
    return mc_moments_estimate(q, c, n_samples, seed).moments;
}

}  // namespace uec
