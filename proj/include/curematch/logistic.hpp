#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <span>

#include "curematch/distributions.hpp"
#include "curematch/error.hpp"

namespace curematch {

struct LogisticFit {
    double intercept = 0.0;
    Eigen::VectorXd coef;
    bool converged = false;
    bool separated = false;
    int iterations = 0;
    double score_norm = 0.0;  // sup-norm of the score at the returned point

    [[nodiscard]] double linear_predictor(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return intercept + x.dot(coef.transpose());
    }
    [[nodiscard]] double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return expit(linear_predictor(x));
    }
};

struct LogisticOptions {
    int max_iter = 100;
    double tol = 1e-8;           // on the summed score
    double max_abs_linear = 35;  // |x b| beyond this is treated as separation
};

/// Maximum likelihood by iteratively reweighted least squares with step
/// halving. The returned point satisfies sum (y - p) [1, x] = 0 to `tol`
/// unless the classes are (quasi-)separated.
inline LogisticFit fit_logistic(const Eigen::MatrixXd& x, std::span<const int> target,
                                const LogisticOptions& opt = {}) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (static_cast<Index>(target.size()) != n) throw DataError("fit_logistic: target length mismatch");
    Index ones = 0;
    for (int t : target) {
        if (t != 0 && t != 1) throw DataError("fit_logistic: target must be 0/1");
        ones += t;
    }
    if (ones == 0 || ones == n) throw DataError("fit_logistic: both classes must be present");

    Eigen::MatrixXd a(n, p + 1);
    a.col(0).setOnes();
    a.rightCols(p) = x;
    Eigen::VectorXd yv(n);
    for (Index i = 0; i < n; ++i) yv[i] = target[static_cast<std::size_t>(i)];

    auto nll = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd eta = a * b;
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += softplus(eta[i]) - yv[i] * eta[i];
        return s;
    };

    Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
    b[0] = std::log(static_cast<double>(ones) / static_cast<double>(n - ones));
    LogisticFit fit;
    double f = nll(b);
    for (int it = 0; it < opt.max_iter; ++it) {
        const Eigen::VectorXd eta = a * b;
        Eigen::VectorXd mu(n);
        Eigen::VectorXd w(n);
        for (Index i = 0; i < n; ++i) {
            mu[i] = expit(eta[i]);
            w[i] = mu[i] * (1.0 - mu[i]);
        }
        const Eigen::VectorXd score = a.transpose() * (yv - mu);
        fit.score_norm = score.cwiseAbs().maxCoeff();
        fit.iterations = it;
        if (fit.score_norm < opt.tol) {
            fit.converged = true;
            break;
        }
        if (eta.cwiseAbs().maxCoeff() > opt.max_abs_linear) {
            fit.separated = true;
            break;
        }
        const Eigen::MatrixXd info = a.transpose() * w.asDiagonal() * a;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd step = ldlt.solve(score);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            fit.separated = true;
            break;
        }
        double t = 1.0;
        Eigen::VectorXd next = b + step;
        double fn = nll(next);
        while (!(fn <= f) && t > 1e-10) {
            t *= 0.5;
            next = b + t * step;
            fn = nll(next);
        }
        if (!(fn <= f)) break;
        b = next;
        f = fn;
    }
    if (fit.separated) {
        const double m = (a * b).cwiseAbs().maxCoeff();
        if (m > opt.max_abs_linear) b *= opt.max_abs_linear / m;
        fit.converged = false;
    }
    fit.intercept = b[0];
    fit.coef = b.tail(p);
    return fit;
}

}  // namespace curematch
