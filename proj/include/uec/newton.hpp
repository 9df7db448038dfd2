#pragma once
// Damped Newton minimization for smooth, strictly convex objectives.
// Shared by the logistic Laplace head and the multinomial probe.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "uec/error.hpp"

namespace uec {

struct NewtonOptions {
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;
    int max_halvings = 60;
};

struct NewtonResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double gradient_norm = 0.0;       // inf-norm at x
    std::vector<double> objective;    // value at each accepted iterate, starting with x0
};

// `problem` must provide
//   double value(const Eigen::VectorXd&) const;
//   void derivatives(const Eigen::VectorXd&, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const;
// Steps are halved until the objective does not increase.
template <class Problem>
NewtonResult newton_minimize(const Problem& problem, Eigen::VectorXd x0, const NewtonOptions& opt) {
    NewtonResult res;
    res.x = std::move(x0);
    const auto n = res.x.size();
    Eigen::VectorXd grad(n);
    Eigen::MatrixXd hess(n, n);
    double f = problem.value(res.x);
    res.objective.push_back(f);

    for (;;) {
        problem.derivatives(res.x, grad, hess);
        res.gradient_norm = n == 0 ? 0.0 : grad.lpNorm<Eigen::Infinity>();
        if (res.gradient_norm <= opt.gradient_tolerance) return res;
        if (res.iterations >= opt.max_iterations) throw FitFailureError(res.iterations, res.gradient_norm);

        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        double t = 1.0;
        Eigen::VectorXd candidate = res.x - step;
        double fc = problem.value(candidate);
        // rounding slack so a converging full step is not rejected at machine precision
        const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
        int halvings = 0;
        while (!(fc <= f + slack) && halvings < opt.max_halvings) {
            t *= 0.5;
            candidate = res.x - t * step;
            fc = problem.value(candidate);
            ++halvings;
        }
        ++res.iterations;
        if (!(fc <= f + slack)) {
            // no descent possible at machine precision; report where we stand
            problem.derivatives(res.x, grad, hess);
            res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
            if (res.gradient_norm <= opt.gradient_tolerance) return res;
            throw FitFailureError(res.iterations, res.gradient_norm);
        }
        res.x = std::move(candidate);
        f = fc;
        res.objective.push_back(f);
    }
}

// log(1 + exp(a)) without overflow.
inline double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

inline double sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

}  // namespace uec
