#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "uec/gaussian.hpp"

using namespace uec;

TEST(GaussianEmbedding, RejectsInvalidFields) {
    EXPECT_THROW(GaussianEmbedding({}, {}), InvalidArgumentError);
    EXPECT_THROW(GaussianEmbedding({1.0, 2.0}, {1.0}), DimensionMismatchError);
    EXPECT_THROW(GaussianEmbedding({1.0}, {-0.1}), InvalidArgumentError);
    EXPECT_THROW(GaussianEmbedding({NAN}, {0.0}), InvalidArgumentError);
    EXPECT_THROW(GaussianEmbedding({1.0}, {INFINITY}), InvalidArgumentError);
}

TEST(L2Normalize, UnitMeanIsUnchanged) {
    const auto e = l2_normalize(GaussianEmbedding({1.0, 0.0}, {0.1, 0.1}));
    EXPECT_DOUBLE_EQ(e.mean()[0], 1.0);
    EXPECT_DOUBLE_EQ(e.mean()[1], 0.0);
    EXPECT_DOUBLE_EQ(e.var()[0], 0.1);
    EXPECT_DOUBLE_EQ(e.var()[1], 0.1);
}

TEST(L2Normalize, ScalesVarianceByInverseSquaredNorm) {
    const auto e = l2_normalize(GaussianEmbedding({3.0, 4.0}, {25.0, 50.0}));
    EXPECT_DOUBLE_EQ(e.mean()[0], 0.6);
    EXPECT_DOUBLE_EQ(e.mean()[1], 0.8);
    EXPECT_DOUBLE_EQ(e.var()[0], 1.0);
    EXPECT_DOUBLE_EQ(e.var()[1], 2.0);
}

TEST(L2Normalize, VarianceMatchesMonteCarloOfScaledSamples) {
    // z / ||mu|| with ||mu|| = 5 held constant
    const GaussianEmbedding e({3.0, 4.0}, {25.0, 50.0});
    const auto n = l2_normalize(e);
    for (std::size_t d = 0; d < 2; ++d) {
        const auto m = oracle::monte_carlo(400000, 11 + d, [&](auto& rng, auto& normal) {
            return (e.mean()[d] + std::sqrt(e.var()[d]) * normal(rng)) / 5.0;
        });
        EXPECT_NEAR(m.var, n.var()[d], 0.01 * n.var()[d]);
        EXPECT_NEAR(m.mean, n.mean()[d], 0.01);
    }
}

TEST(L2Normalize, ZeroMeanIsDegenerate) {
    EXPECT_THROW(l2_normalize(GaussianEmbedding({0.0, 0.0}, {1.0, 1.0})), DegenerateEmbeddingError);
}

TEST(Trace, SumsVariances) {
    EXPECT_EQ(trace(GaussianEmbedding({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0})), 0.0);
    EXPECT_EQ(trace(GaussianEmbedding({1.0, 1.0}, {1.0, 1.0})), 2.0);
    EXPECT_DOUBLE_EQ(trace(GaussianEmbedding({1.0, 1.0, 1.0}, {0.25, 0.5, 1.25})), 2.0);
}

TEST(GaussianProperties, NormalizationIdempotentAndTraceScaling) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t dim = 1 + trial % 17;
        Vector mean(dim), var(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            mean[d] = 3.0 * normal(rng);
            var[d] = unif(rng);
        }
        const GaussianEmbedding e(mean, var);
        const auto once = l2_normalize(e);
        const auto twice = l2_normalize(once);
        for (std::size_t d = 0; d < dim; ++d) {
            EXPECT_NEAR(twice.mean()[d], once.mean()[d], 1e-12 * std::max(1.0, std::abs(once.mean()[d])));
            EXPECT_NEAR(twice.var()[d], once.var()[d], 1e-12 * std::max(1e-300, once.var()[d]) + 1e-300);
        }
        const double sq = squared_norm(e.mean());
        EXPECT_NEAR(trace(once), trace(e) / sq, 1e-9 * std::max(trace(e) / sq, 1e-300));

        // permutation invariance of the trace
        Vector pv = var;
        std::shuffle(pv.begin(), pv.end(), rng);
        EXPECT_NEAR(trace(GaussianEmbedding(mean, pv)), trace(e), 1e-12 * std::max(1.0, trace(e)));
    }
}

TEST(EmbeddingStore, EnforcesIdsAndDims) {
    EmbeddingStore s("m", 2);
    s.add("a", GaussianEmbedding::deterministic({1.0, 0.0}));
    EXPECT_THROW(s.add("a", GaussianEmbedding::deterministic({0.0, 1.0})), InvalidArgumentError);
    EXPECT_THROW(s.add("", GaussianEmbedding::deterministic({0.0, 1.0})), InvalidArgumentError);
    EXPECT_THROW(s.add("b", GaussianEmbedding::deterministic({1.0})), DimensionMismatchError);
    EXPECT_EQ(s.size(), 1u);
    EXPECT_EQ(s.at("a").embedding.mean()[0], 1.0);
    EXPECT_THROW(s.at("zzz"), InvalidArgumentError);
}

TEST(EnsembleInput, AlignsByIdAcrossOrderings) {
    EmbeddingStore a("a", 1), b("b", 1);
    a.add("x", GaussianEmbedding::deterministic({1.0}));
    a.add("y", GaussianEmbedding::deterministic({2.0}));
    b.add("y", GaussianEmbedding::deterministic({20.0}));
    b.add("x", GaussianEmbedding::deterministic({10.0}));
    EnsembleInput in({a, b});
    EXPECT_EQ(in.n_models(), 2u);
    EXPECT_EQ(in.id(0), "x");
    EXPECT_EQ(in.embedding(1, 0).mean()[0], 10.0);
    EXPECT_EQ(in.embedding(1, 1).mean()[0], 20.0);

    const EnsembleInput copy = in;
    EXPECT_EQ(copy.embedding(1, 1).mean()[0], 20.0);
}

TEST(EnsembleInput, RejectsMismatchedStores) {
    EmbeddingStore a("a", 1), b("b", 1), c("c", 2);
    a.add("x", GaussianEmbedding::deterministic({1.0}));
    b.add("z", GaussianEmbedding::deterministic({1.0}));
    c.add("x", GaussianEmbedding::deterministic({1.0, 1.0}));
    EXPECT_THROW(EnsembleInput({a, b}), InvalidArgumentError);
    EXPECT_THROW(EnsembleInput({a, c}), DimensionMismatchError);
    EXPECT_THROW(EnsembleInput({}), InvalidArgumentError);
}
