#pragma once
// Multinomial logistic probe on embedding means, fit with the same damped
// Newton solver as the Laplace head.

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"
#include "uec/metrics.hpp"
#include "uec/newton.hpp"

namespace uec {

struct ProbeConfig {
    double prior_precision = 0.1;
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;
};

// Softmax regression with a bias column; parameters are stacked per class.
class SoftmaxProbe {
public:
    SoftmaxProbe(std::span<const Vector> features, std::span<const std::string> labels, const ProbeConfig& cfg = {}) {
        if (features.size() != labels.size()) throw DimensionMismatchError(features.size(), labels.size(), "probe labels");
        if (features.empty()) throw InvalidArgumentError("empty training set");
        for (const auto& l : labels) class_index_.emplace(l, 0);
        if (class_index_.size() < 2) throw InvalidArgumentError("training set must contain at least 2 classes");
        for (auto& [name, idx] : class_index_) {
            idx = static_cast<int>(classes_.size());
            classes_.push_back(name);
        }
        dim_ = features.front().size();
        const auto n = static_cast<Eigen::Index>(features.size());
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim_ + 1));
        Eigen::VectorXi y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& f = features[static_cast<std::size_t>(i)];
            if (f.size() != dim_) throw DimensionMismatchError(dim_, f.size(), "probe features");
            for (std::size_t d = 0; d < dim_; ++d) x(i, static_cast<Eigen::Index>(d)) = f[d];
            x(i, static_cast<Eigen::Index>(dim_)) = 1.0;
            y[i] = class_index_.at(labels[static_cast<std::size_t>(i)]);
        }
        Problem problem{x, y, static_cast<Eigen::Index>(classes_.size()), cfg.prior_precision};
        const auto p = static_cast<Eigen::Index>((dim_ + 1) * classes_.size());
        auto res = newton_minimize(problem, Eigen::VectorXd::Zero(p), {cfg.max_iterations, cfg.gradient_tolerance});
        weights_ = Eigen::Map<Eigen::MatrixXd>(res.x.data(), static_cast<Eigen::Index>(dim_ + 1),
                                               static_cast<Eigen::Index>(classes_.size()));
    }

    const std::vector<std::string>& classes() const noexcept { return classes_; }

    std::string predict(std::span<const double> f) const {
        if (f.size() != dim_) throw DimensionMismatchError(dim_, f.size(), "probe input");
        Eigen::VectorXd x(static_cast<Eigen::Index>(dim_ + 1));
        for (std::size_t d = 0; d < dim_; ++d) x[static_cast<Eigen::Index>(d)] = f[d];
        x[static_cast<Eigen::Index>(dim_)] = 1.0;
        const Eigen::VectorXd logits = weights_.transpose() * x;
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        return classes_[static_cast<std::size_t>(best)];
    }

private:
    struct Problem {
        Eigen::MatrixXd x;  // n x (d+1)
        Eigen::VectorXi y;
        Eigen::Index c;
        double lambda;

        Eigen::MatrixXd probabilities(const Eigen::VectorXd& theta) const {
            const Eigen::Map<const Eigen::MatrixXd> w(theta.data(), x.cols(), c);
            Eigen::MatrixXd logits = x * w;  // n x c
            for (Eigen::Index i = 0; i < logits.rows(); ++i) {
                const double top = logits.row(i).maxCoeff();
                logits.row(i) = (logits.row(i).array() - top).exp();
                logits.row(i) /= logits.row(i).sum();
            }
            return logits;
        }

        double value(const Eigen::VectorXd& theta) const {
            const Eigen::Map<const Eigen::MatrixXd> w(theta.data(), x.cols(), c);
            const Eigen::MatrixXd logits = x * w;
            double f = 0.5 * lambda * theta.squaredNorm();
            for (Eigen::Index i = 0; i < logits.rows(); ++i) {
                const double top = logits.row(i).maxCoeff();
                const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
                f += lse - logits(i, y[i]);
            }
            return f;
        }

        void derivatives(const Eigen::VectorXd& theta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
            const Eigen::MatrixXd p = probabilities(theta);
            Eigen::MatrixXd resid = p;
            for (Eigen::Index i = 0; i < resid.rows(); ++i) resid(i, y[i]) -= 1.0;
            const Eigen::MatrixXd g = x.transpose() * resid;  // (d+1) x c
            grad = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()) + lambda * theta;
            const Eigen::Index m = x.cols();
            hess.setZero(m * c, m * c);
            for (Eigen::Index a = 0; a < c; ++a) {
                for (Eigen::Index b = a; b < c; ++b) {
                    Eigen::VectorXd wts(x.rows());
                    for (Eigen::Index i = 0; i < x.rows(); ++i) wts[i] = p(i, a) * ((a == b ? 1.0 : 0.0) - p(i, b));
                    const Eigen::MatrixXd block = x.transpose() * wts.asDiagonal() * x;
                    hess.block(a * m, b * m, m, m) = block;
                    if (a != b) hess.block(b * m, a * m, m, m) = block.transpose();
                }
            }
            hess.diagonal().array() += lambda;
        }
    };

    std::map<std::string, int> class_index_;
    std::vector<std::string> classes_;
    std::size_t dim_ = 0;
    Eigen::MatrixXd weights_;
};

inline ClassificationScores classify_probe(std::span<const Vector> train_means, std::span<const std::string> train_labels,
                                           std::span<const Vector> test_means, std::span<const std::string> test_labels,
                                           const ProbeConfig& cfg = {}) {
    const SoftmaxProbe probe(train_means, train_labels, cfg);
    if (test_means.size() != test_labels.size())
        throw DimensionMismatchError(test_means.size(), test_labels.size(), "test labels");
    std::vector<std::string> predicted;
    predicted.reserve(test_means.size());
    for (const auto& f : test_means) predicted.push_back(probe.predict(f));
    return classification_scores(predicted, test_labels);
}

}  // namespace uec
