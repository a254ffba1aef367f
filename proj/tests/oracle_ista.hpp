#pragma once

// Independent reference minimizer for the l1-penalized objectives, used
// only by the tests. Deliberately shares no solver code with the library:
// accelerated proximal gradient (FISTA) with an exact Lipschitz constant
// from an eigendecomposition, run to high precision.

#include <Eigen/Dense>
#include <cmath>

#include "homtest/lasso.hpp"

namespace oracle {

struct Fit {
    double intercept_std = 0.0;   // on the standardized scale
    Eigen::VectorXd w;            // standardized coefficients
    homtest::LassoModel model;    // converted to the library's convention
};

inline Eigen::MatrixXd standardized(const Eigen::MatrixXd& x, Eigen::VectorXd& center,
                                    Eigen::VectorXd& scale) {
    const auto n = static_cast<double>(x.rows());
    center = x.colwise().mean();
    scale.resize(x.cols());
    Eigen::MatrixXd xs = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double ms = x.col(j).squaredNorm() / n - center[j] * center[j];
        scale[j] = ms > 1e-12 ? std::sqrt(ms) : 1.0;
        xs.col(j) = (xs.col(j).array() - center[j]) / scale[j];
    }
    return xs;
}

inline Fit fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, homtest::Family family,
               double lambda, int iters = 50000) {
    Eigen::VectorXd center, scale;
    const Eigen::MatrixXd xs = standardized(x, center, scale);
    const Eigen::Index n = x.rows(), p = x.cols();
    const double dn = static_cast<double>(n);

    // design with the unpenalized intercept column prepended
    Eigen::MatrixXd a(n, p + 1);
    a.col(0).setOnes();
    a.rightCols(p) = xs;
    const Eigen::MatrixXd ata = a.transpose() * a / dn;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ata);
    double lip = eig.eigenvalues().maxCoeff();
    if (family == homtest::Family::binomial) lip /= 4.0;
    lip = std::max(lip, 1e-12);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd momentum = beta;
    double tk = 1.0;
    for (int it = 0; it < iters; ++it) {
        // gradient of the smooth part at the momentum point
        Eigen::VectorXd lin = a * momentum;
        Eigen::VectorXd resid(n);
        if (family == homtest::Family::gaussian) {
            resid = lin - y;
        } else {
            for (Eigen::Index i = 0; i < n; ++i)
                resid[i] = 1.0 / (1.0 + std::exp(-lin[i])) - y[i];
        }
        Eigen::VectorXd grad = a.transpose() * resid / dn;
        Eigen::VectorXd next = momentum - grad / lip;
        const double thr = lambda / lip;
        for (Eigen::Index j = 1; j <= p; ++j) {
            const double v = next[j];
            next[j] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
        }
        const double tk1 = (1.0 + std::sqrt(1.0 + 4.0 * tk * tk)) / 2.0;
        momentum = next + ((tk - 1.0) / tk1) * (next - beta);
        const double step = (next - beta).lpNorm<Eigen::Infinity>();
        beta = next;
        tk = tk1;
        if (step < 1e-12) break;
    }

    Fit out;
    out.intercept_std = beta[0];
    out.w = beta.tail(p);
    out.model.family = family;
    out.model.penalty = lambda;
    out.model.center = center;
    out.model.scale = scale;
    out.model.coefficients = out.w.cwiseQuotient(scale);
    out.model.intercept = beta[0] - out.model.coefficients.dot(center);
    return out;
}

}  // namespace oracle
