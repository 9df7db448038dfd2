#pragma once
// Synthetic specialist corpus: L domains, K models, each domain has one
// specialist model whose embeddings carry little noise while every other
// model is noisy there. Variance fields hold the generating noise scale
// squared, so they are exact per-record uncertainty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"
#include "uec/metrics.hpp"

namespace uec {

struct SynthSpec {
    std::size_t n_models = 3;
    std::size_t n_domains = 3;
    std::size_t queries_per_domain = 25;
    std::size_t docs_per_query = 4;  // one relevant source doc plus near-topic distractors
    std::size_t dim = 32;
    double specialist_noise = 0.05;
    double offdomain_noise = 0.5;
    // per-record noise multiplier drawn log-uniformly from [1, difficulty_spread]
    double difficulty_spread = 4.0;
    // cosine between a query topic and its distractor docs
    double distractor_similarity = 0.8;
    std::uint64_t seed = 7;

    void validate() const {
        if (n_models < 1 || n_domains < 1 || queries_per_domain < 1 || docs_per_query < 1 || dim < 1)
            throw InvalidArgumentError("synthetic spec counts must be >= 1");
        if (!(specialist_noise > 0.0) || !(offdomain_noise > 0.0))
            throw InvalidArgumentError("noise scales must be positive");
        if (!(specialist_noise < offdomain_noise))
            throw InvalidArgumentError("specialist_noise must be smaller than offdomain_noise");
        if (!(difficulty_spread >= 1.0)) throw InvalidArgumentError("difficulty_spread must be >= 1");
        if (!(distractor_similarity >= 0.0 && distractor_similarity < 1.0))
            throw InvalidArgumentError("distractor_similarity must lie in [0, 1)");
    }

    std::size_t specialist_of(std::size_t domain) const noexcept { return domain % n_models; }
};

struct SynthData {
    EnsembleInput docs;
    EnsembleInput queries;
    Qrels qrels;
};

inline std::string synth_model_name(std::size_t k) { return "model" + std::to_string(k); }

inline std::string domain_label(std::size_t domain) { return "dom" + std::to_string(domain); }

namespace detail {

inline std::string zero_pad(std::size_t v, std::size_t width) {
    std::string s = std::to_string(v);
    return s.size() >= width ? s : std::string(width - s.size(), '0') + s;
}

class SynthSampler {
public:
    explicit SynthSampler(std::uint64_t seed) : rng_(seed) {}

    Vector unit(std::size_t dim) {
        Vector v(dim);
        double n = 0.0;
        do {
            n = 0.0;
            for (auto& x : v) {
                x = normal_(rng_);
                n += x * x;
            }
        } while (n == 0.0);
        n = std::sqrt(n);
        for (auto& x : v) x /= n;
        return v;
    }

    // Unit vector at cosine `cos` from unit vector `t`.
    Vector near(const Vector& t, double cos) {
        Vector r = unit(t.size());
        const double proj = dot(r, t);
        double n = 0.0;
        for (std::size_t d = 0; d < r.size(); ++d) {
            r[d] -= proj * t[d];
            n += r[d] * r[d];
        }
        n = std::sqrt(n);
        const double sin = std::sqrt(1.0 - cos * cos);
        Vector out(t.size());
        for (std::size_t d = 0; d < t.size(); ++d) out[d] = cos * t[d] + (n > 0.0 ? sin * r[d] / n : 0.0);
        return out;
    }

    double log_uniform(double hi) {
        if (hi <= 1.0) return 1.0;
        return std::exp(std::uniform_real_distribution<double>(0.0, std::log(hi))(rng_));
    }

    GaussianEmbedding observe(const Vector& truth, double scale) {
        Vector mean(truth.size()), var(truth.size(), scale * scale);
        for (std::size_t d = 0; d < truth.size(); ++d) mean[d] = truth[d] + scale * normal_(rng_);
        return GaussianEmbedding(std::move(mean), std::move(var));
    }

    std::mt19937_64& rng() noexcept { return rng_; }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace detail

inline SynthData synth_generate(const SynthSpec& spec) {
    spec.validate();
    detail::SynthSampler s(spec.seed);
    const std::size_t n_docs = spec.n_domains * spec.queries_per_domain * spec.docs_per_query;

    // doc ids come from a shuffled counter so id order carries no relevance signal
    std::vector<std::size_t> doc_number(n_docs);
    std::iota(doc_number.begin(), doc_number.end(), std::size_t{0});
    std::shuffle(doc_number.begin(), doc_number.end(), s.rng());
    const std::size_t width = std::to_string(n_docs).size();

    std::vector<EmbeddingStore> doc_stores, query_stores;
    for (std::size_t k = 0; k < spec.n_models; ++k) {
        doc_stores.emplace_back(synth_model_name(k), spec.dim);
        query_stores.emplace_back(synth_model_name(k), spec.dim);
    }
    struct PendingDoc {
        std::string id;
        std::vector<GaussianEmbedding> views;
    };
    std::vector<PendingDoc> docs;
    docs.reserve(n_docs);
    Qrels qrels;

    std::size_t doc_counter = 0;
    for (std::size_t l = 0; l < spec.n_domains; ++l) {
        const std::size_t specialist = spec.specialist_of(l);
        const auto scale_for = [&](std::size_t k, double difficulty) {
            return difficulty * (k == specialist ? spec.specialist_noise : spec.offdomain_noise);
        };
        for (std::size_t q = 0; q < spec.queries_per_domain; ++q) {
            const Vector topic = s.unit(spec.dim);
            const std::string qid = domain_label(l) + ":q" + detail::zero_pad(q, 3);

            const double qdiff = s.log_uniform(spec.difficulty_spread);
            for (std::size_t k = 0; k < spec.n_models; ++k) query_stores[k].add(qid, s.observe(topic, scale_for(k, qdiff)));

            for (std::size_t j = 0; j < spec.docs_per_query; ++j) {
                const Vector truth = j == 0 ? topic : s.near(topic, spec.distractor_similarity);
                const std::string did =
                    domain_label(l) + ":doc" + detail::zero_pad(doc_number[doc_counter++], width);
                const double ddiff = s.log_uniform(spec.difficulty_spread);
                PendingDoc pd{did, {}};
                for (std::size_t k = 0; k < spec.n_models; ++k) pd.views.push_back(s.observe(truth, scale_for(k, ddiff)));
                if (j == 0) qrels[qid][did] = 1;
                docs.push_back(std::move(pd));
            }
        }
    }
    std::sort(docs.begin(), docs.end(), [](const PendingDoc& a, const PendingDoc& b) { return a.id < b.id; });
    for (auto& d : docs)
        for (std::size_t k = 0; k < spec.n_models; ++k) doc_stores[k].add(d.id, std::move(d.views[k]));

    return SynthData{EnsembleInput(std::move(doc_stores)), EnsembleInput(std::move(query_stores)), std::move(qrels)};
}

// Domain label of a record id: the prefix before the first ':'; ids without
// one belong to "other".
inline std::string domain_of(const std::string& id) {
    const auto pos = id.find(':');
    if (pos == std::string::npos || pos == 0) return "other";
    return id.substr(0, pos);
}

}  // namespace uec
