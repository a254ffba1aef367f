#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "homtest/errors.hpp"

namespace homtest {

enum class Family { gaussian, binomial };

// Linear predictors are clamped here before the logistic link so that
// predicted probabilities stay strictly inside (0,1).
inline constexpr double kLinkClamp = 35.0;

struct LassoModel {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;  // original (unstandardized) scale
    double penalty = 0.0;
    Family family = Family::gaussian;
    // Per-column standardization used at fit time. Zero-variance columns
    // carry coefficient 0 and scale sentinel 1.
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
};

inline double logistic(double eta) {
    eta = std::clamp(eta, -kLinkClamp, kLinkClamp);
    return 1.0 / (1.0 + std::exp(-eta));
}

namespace detail {

inline double soft_threshold(double b, double lambda) {
    if (b > lambda) return b - lambda;
    if (b < -lambda) return b + lambda;
    return 0.0;
}

struct ColumnStats {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    std::vector<bool> usable;  // false for zero-variance columns
};

inline ColumnStats column_stats(const Eigen::MatrixXd& x) {
    const auto n = static_cast<double>(x.rows());
    ColumnStats st;
    st.center = x.colwise().mean();
    st.scale.resize(x.cols());
    st.usable.assign(static_cast<size_t>(x.cols()), true);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double ms = x.col(j).squaredNorm() / n - st.center[j] * st.center[j];
        if (ms > 1e-12) {
            st.scale[j] = std::sqrt(ms);
        } else {
            st.scale[j] = 1.0;
            st.usable[static_cast<size_t>(j)] = false;
        }
    }
    return st;
}

inline void check_xy(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Family family) {
    if (x.rows() < 2) throw ValidationError("lasso: need at least 2 observations");
    if (x.cols() < 1) throw ValidationError("lasso: need at least 1 covariate");
    if (y.size() != x.rows()) throw ValidationError("lasso: response length does not match design rows");
    if (!x.allFinite() || !y.allFinite()) throw ValidationError("lasso: non-finite input");
    if (family == Family::binomial) {
        bool has0 = false, has1 = false;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] == 0.0) has0 = true;
            else if (y[i] == 1.0) has1 = true;
            else throw ValidationError("lasso: binomial response must be 0/1");
        }
        if (!has0 || !has1)
            throw DegenerateResponseError("lasso: binomial response has a single class");
    }
}

// Cyclic coordinate descent on the Gram matrix for the gaussian family.
// Minimizes (1/2n)||y - b0 - Xs w||^2 + lambda ||w||_1 on standardized
// columns. Cheap to warm-start along a penalty path: each sweep is O(p^2)
// and does not touch the data again.
class GaussianCd {
  public:
    GaussianCd(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ColumnStats& st)
        : st_(st), p_(x.cols()) {
        const auto n = static_cast<double>(x.rows());
        ymean_ = y.mean();
        gram_ = (x.transpose() * x) / n;
        Eigen::VectorXd xy = (x.transpose() * y) / n;
        for (Eigen::Index j = 0; j < p_; ++j) {
            for (Eigen::Index k = 0; k < p_; ++k) {
                gram_(j, k) = (gram_(j, k) - st.center[j] * st.center[k]) /
                              (st.scale[j] * st.scale[k]);
            }
            xy[j] = (xy[j] - st.center[j] * ymean_) / st.scale[j];
        }
        corr_ = xy;
        w_ = Eigen::VectorXd::Zero(p_);
        gw_ = Eigen::VectorXd::Zero(p_);
    }

    double lambda_max() const {
        double m = 0.0;
        for (Eigen::Index j = 0; j < p_; ++j)
            if (st_.usable[static_cast<size_t>(j)]) m = std::max(m, std::abs(corr_[j]));
        return m;
    }

    // Returns the number of sweeps spent; throws nothing.
    int solve(double lambda, double tol, int max_sweeps) {
        int sweeps = 0;
        while (sweeps < max_sweeps) {
            ++sweeps;
            const double delta = sweep(lambda);
            if (delta < tol) break;
        }
        return sweeps;
    }

    const Eigen::VectorXd& standardized_coefs() const { return w_; }
    double response_mean() const { return ymean_; }

  private:
    double sweep(double lambda) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p_; ++j) {
            if (!st_.usable[static_cast<size_t>(j)]) continue;
            const double gjj = gram_(j, j);
            const double cand = corr_[j] - gw_[j] + gjj * w_[j];
            const double wj = soft_threshold(cand, lambda) / gjj;
            const double d = wj - w_[j];
            if (d != 0.0) {
                gw_ += gram_.col(j) * d;
                w_[j] = wj;
                max_change = std::max(max_change, std::abs(d));
            }
        }
        return max_change;
    }

    ColumnStats st_;
    Eigen::Index p_;
    double ymean_;
    Eigen::MatrixXd gram_;   // standardized X'X / n
    Eigen::VectorXd corr_;   // standardized X'(y) / n
    Eigen::VectorXd w_;
    Eigen::VectorXd gw_;     // gram_ * w_
};

// IRLS outer loop with a naive-update coordinate-descent inner loop for
// the penalized logistic likelihood. Works on an explicit standardized
// copy of the design so inner products hit contiguous columns.
class BinomialCd {
  public:
    BinomialCd(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ColumnStats& st)
        : st_(st), y_(y), n_(x.rows()), p_(x.cols()) {
        xs_ = x;
        for (Eigen::Index j = 0; j < p_; ++j)
            xs_.col(j) = (xs_.col(j).array() - st.center[j]) / st.scale[j];
        const double ybar = y.mean();
        if (ybar <= 0.0 || ybar >= 1.0)
            throw DegenerateResponseError("lasso: binomial response has a single class");
        b0_ = std::log(ybar / (1.0 - ybar));
        w_ = Eigen::VectorXd::Zero(p_);
        eta_ = Eigen::VectorXd::Constant(n_, b0_);
    }

    double lambda_max() const {
        const double ybar = y_.mean();
        double m = 0.0;
        for (Eigen::Index j = 0; j < p_; ++j) {
            if (!st_.usable[static_cast<size_t>(j)]) continue;
            m = std::max(m, std::abs(xs_.col(j).dot(y_) - ybar * xs_.col(j).sum()) /
                                static_cast<double>(n_));
        }
        return m;
    }

    int solve(double lambda, double tol, int max_sweeps) {
        int sweeps = 0;
        for (int outer = 0; outer < 100 && sweeps < max_sweeps; ++outer) {
            Eigen::VectorXd prob(n_), v(n_), r(n_);
            for (Eigen::Index i = 0; i < n_; ++i) {
                prob[i] = logistic(eta_[i]);
                v[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-5);
                // working response minus current fit
                r[i] = (y_[i] - prob[i]) / v[i];
            }
            const Eigen::VectorXd d =
                (xs_.cwiseProduct(xs_).transpose() * v) / static_cast<double>(n_);
            const double vsum = v.sum();

            double outer_change = 0.0;
            bool first = true;
            std::vector<Eigen::Index> active;
            while (sweeps < max_sweeps) {
                ++sweeps;
                double change;
                if (first) {
                    change = wls_sweep_full(lambda, v, d, vsum, r, active);
                    first = false;
                } else {
                    change = wls_sweep_active(lambda, v, d, vsum, r, active);
                    if (change < tol) {
                        // confirm on the full coordinate set
                        change = wls_sweep_full(lambda, v, d, vsum, r, active);
                        if (change < tol) break;
                    }
                }
                outer_change = std::max(outer_change, change);
                if (change < tol) break;
            }
            eta_ = Eigen::VectorXd::Constant(n_, b0_) + xs_ * w_;
            if (outer_change < tol) break;
        }
        return sweeps;
    }

    const Eigen::VectorXd& standardized_coefs() const { return w_; }
    double standardized_intercept() const { return b0_; }

  private:
    double update_coord(Eigen::Index j, double lambda, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& d, Eigen::VectorXd& r) {
        const double g = xs_.col(j).dot(v.cwiseProduct(r)) / static_cast<double>(n_);
        const double cand = g + d[j] * w_[j];
        const double wj = soft_threshold(cand, lambda) / std::max(d[j], 1e-12);
        const double delta = wj - w_[j];
        if (delta != 0.0) {
            r -= xs_.col(j) * delta;
            w_[j] = wj;
        }
        return std::abs(delta);
    }

    double update_intercept(const Eigen::VectorXd& v, double vsum, Eigen::VectorXd& r) {
        const double delta = v.dot(r) / vsum;
        if (delta != 0.0) {
            b0_ += delta;
            r.array() -= delta;
        }
        return std::abs(delta);
    }

    double wls_sweep_full(double lambda, const Eigen::VectorXd& v, const Eigen::VectorXd& d,
                          double vsum, Eigen::VectorXd& r, std::vector<Eigen::Index>& active) {
        double max_change = update_intercept(v, vsum, r);
        active.clear();
        for (Eigen::Index j = 0; j < p_; ++j) {
            if (!st_.usable[static_cast<size_t>(j)]) continue;
            max_change = std::max(max_change, update_coord(j, lambda, v, d, r));
            if (w_[j] != 0.0) active.push_back(j);
        }
        return max_change;
    }

    double wls_sweep_active(double lambda, const Eigen::VectorXd& v, const Eigen::VectorXd& d,
                            double vsum, Eigen::VectorXd& r,
                            const std::vector<Eigen::Index>& active) {
        double max_change = update_intercept(v, vsum, r);
        for (Eigen::Index j : active)
            max_change = std::max(max_change, update_coord(j, lambda, v, d, r));
        return max_change;
    }

    ColumnStats st_;
    Eigen::MatrixXd xs_;
    Eigen::VectorXd y_;
    Eigen::Index n_, p_;
    double b0_;
    Eigen::VectorXd w_;
    Eigen::VectorXd eta_;
};

inline LassoModel to_model(const Eigen::VectorXd& w, double b0_std, double lambda,
                           Family family, const ColumnStats& st) {
    LassoModel model;
    model.family = family;
    model.penalty = lambda;
    model.center = st.center;
    model.scale = st.scale;
    model.coefficients = w.cwiseQuotient(st.scale);
    model.intercept = b0_std - model.coefficients.dot(st.center);
    return model;
}

}  // namespace detail

inline Eigen::VectorXd predict(const LassoModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.coefficients.size())
        throw ValidationError("predict: design has wrong number of columns");
    Eigen::VectorXd lin = (x * model.coefficients).array() + model.intercept;
    if (model.family == Family::binomial)
        for (Eigen::Index i = 0; i < lin.size(); ++i) lin[i] = logistic(lin[i]);
    return lin;
}

struct LassoControl {
    double tol = 1e-7;      // max coefficient change between sweeps
    int max_sweeps = 10000;
};

inline LassoModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Family family,
                            double lambda, const LassoControl& ctrl = {}) {
    detail::check_xy(x, y, family);
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ValidationError("lasso: penalty must be a finite nonnegative real");
    const auto st = detail::column_stats(x);
    if (family == Family::gaussian) {
        detail::GaussianCd solver(x, y, st);
        solver.solve(lambda, ctrl.tol, ctrl.max_sweeps);
        return detail::to_model(solver.standardized_coefs(), solver.response_mean(), lambda,
                                family, st);
    }
    detail::BinomialCd solver(x, y, st);
    solver.solve(lambda, ctrl.tol, ctrl.max_sweeps);
    return detail::to_model(solver.standardized_coefs(), solver.standardized_intercept(),
                            lambda, family, st);
}

// Penalized objective on the standardized scale: mean squared error / 2
// (gaussian) or the average negative log-likelihood (binomial) plus the
// l1 penalty on standardized coefficients. Used by the tests' reference
// minimizers; not needed in the fitting hot path.
inline double penalized_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const LassoModel& model) {
    const auto n = static_cast<double>(x.rows());
    Eigen::VectorXd lin = (x * model.coefficients).array() + model.intercept;
    const double l1 = model.coefficients.cwiseProduct(model.scale).lpNorm<1>();
    if (model.family == Family::gaussian)
        return (y - lin).squaredNorm() / (2.0 * n) + model.penalty * l1;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double eta = lin[i];
        // log(1 + e^eta) - y*eta, stable for large |eta|
        nll += (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta))) -
               y[i] * eta;
    }
    return nll / n + model.penalty * l1;
}

inline double deviance(Family family, const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
    if (family == Family::gaussian) return (y - pred).squaredNorm() / static_cast<double>(y.size());
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double p = std::clamp(pred[i], 1e-12, 1.0 - 1e-12);
        dev += y[i] == 1.0 ? -2.0 * std::log(p) : -2.0 * std::log(1.0 - p);
    }
    return dev / static_cast<double>(y.size());
}

// Log-spaced grid from lambda_max (smallest penalty zeroing every
// coefficient) down to 1e-3 * lambda_max, descending.
inline std::vector<double> lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       Family family, int grid_size) {
    detail::check_xy(x, y, family);
    if (grid_size < 1) throw ValidationError("lasso: grid_size must be positive");
    const auto st = detail::column_stats(x);
    double lmax;
    if (family == Family::gaussian) {
        detail::GaussianCd solver(x, y, st);
        lmax = solver.lambda_max();
    } else {
        detail::BinomialCd solver(x, y, st);
        lmax = solver.lambda_max();
    }
    if (lmax <= 0.0) lmax = 1e-3;  // constant response; any penalty is equivalent
    std::vector<double> grid(static_cast<size_t>(grid_size));
    if (grid_size == 1) {
        grid[0] = lmax;
        return grid;
    }
    const double lmin = 1e-3 * lmax;
    const double step = (std::log(lmax) - std::log(lmin)) / (grid_size - 1);
    for (int k = 0; k < grid_size; ++k) grid[static_cast<size_t>(k)] = std::exp(std::log(lmax) - k * step);
    return grid;
}

namespace detail {

// Warm-started fits along a descending penalty grid; returns out-of-grid
// predictions on a validation set for each penalty.
template <class Solver>
Eigen::MatrixXd path_predictions(const Eigen::MatrixXd& xtr, const Eigen::VectorXd& ytr,
                                 const Eigen::MatrixXd& xval, const std::vector<double>& grid,
                                 Family family, const LassoControl& ctrl) {
    const auto st = column_stats(xtr);
    Solver solver(xtr, ytr, st);
    Eigen::MatrixXd preds(xval.rows(), static_cast<Eigen::Index>(grid.size()));
    for (size_t k = 0; k < grid.size(); ++k) {
        solver.solve(grid[k], ctrl.tol, ctrl.max_sweeps);
        LassoModel m;
        if constexpr (std::is_same_v<Solver, GaussianCd>)
            m = to_model(solver.standardized_coefs(), solver.response_mean(), grid[k], family, st);
        else
            m = to_model(solver.standardized_coefs(), solver.standardized_intercept(), grid[k],
                         family, st);
        preds.col(static_cast<Eigen::Index>(k)) = predict(m, xval);
    }
    return preds;
}

inline uint64_t splitmix64(uint64_t v) {
    v += 0x9e3779b97f4a7c15ULL;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
    return v ^ (v >> 31);
}

}  // namespace detail

// K-fold cross-validated penalty choice over a log-spaced grid: the
// largest penalty whose mean out-of-fold deviance is within one standard
// error of the minimizer (the glmnet default). The internal fold split is
// a deterministic function of the data size only, so identical inputs
// always select the identical penalty.
inline double cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Family family,
                        int folds, int grid_size, const LassoControl& ctrl = {}) {
    detail::check_xy(x, y, family);
    if (folds < 2) throw ValidationError("cv_lambda: need at least 2 folds");
    const Eigen::Index n = x.rows();
    if (n < folds) throw ValidationError("cv_lambda: fewer observations than folds");

    const std::vector<double> grid = lambda_grid(x, y, family, grid_size);
    if (grid.size() == 1) return grid[0];

    std::vector<int> assignment(static_cast<size_t>(n));
    {
        std::vector<Eigen::Index> order(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        std::mt19937_64 rng(detail::splitmix64(0x5c5ee1a1u ^ static_cast<uint64_t>(n)));
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index i = 0; i < n; ++i)
            assignment[static_cast<size_t>(order[static_cast<size_t>(i)])] =
                static_cast<int>(i % folds);
    }

    Eigen::MatrixXd dev_fold(folds, static_cast<Eigen::Index>(grid.size()));
    for (int k = 0; k < folds; ++k) {
        std::vector<Eigen::Index> tr, va;
        for (Eigen::Index i = 0; i < n; ++i)
            (assignment[static_cast<size_t>(i)] == k ? va : tr).push_back(i);
        Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), x.cols());
        Eigen::VectorXd ytr(static_cast<Eigen::Index>(tr.size()));
        Eigen::MatrixXd xva(static_cast<Eigen::Index>(va.size()), x.cols());
        Eigen::VectorXd yva(static_cast<Eigen::Index>(va.size()));
        for (size_t i = 0; i < tr.size(); ++i) {
            xtr.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
            ytr[static_cast<Eigen::Index>(i)] = y[tr[i]];
        }
        for (size_t i = 0; i < va.size(); ++i) {
            xva.row(static_cast<Eigen::Index>(i)) = x.row(va[i]);
            yva[static_cast<Eigen::Index>(i)] = y[va[i]];
        }
        Eigen::MatrixXd preds =
            family == Family::gaussian
                ? detail::path_predictions<detail::GaussianCd>(xtr, ytr, xva, grid, family, ctrl)
                : detail::path_predictions<detail::BinomialCd>(xtr, ytr, xva, grid, family, ctrl);
        for (size_t g = 0; g < grid.size(); ++g)
            dev_fold(k, static_cast<Eigen::Index>(g)) =
                deviance(family, yva, preds.col(static_cast<Eigen::Index>(g)));
    }

    const Eigen::VectorXd mean_dev = dev_fold.colwise().mean();
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < mean_dev.size(); ++g)
        if (mean_dev[g] < mean_dev[best]) best = g;  // descending grid: ties keep larger lambda
    // one-standard-error rule (glmnet default): the largest lambda whose mean
    // out-of-fold deviance is within one standard error of the minimum
    const Eigen::VectorXd centered =
        dev_fold.col(best).array() - mean_dev[best];
    const double se_best = std::sqrt(centered.squaredNorm() /
                                     (static_cast<double>(folds - 1) * folds));
    Eigen::Index chosen = best;
    for (Eigen::Index g = 0; g < best; ++g)
        if (mean_dev[g] <= mean_dev[best] + se_best) { chosen = g; break; }
    return grid[static_cast<size_t>(chosen)];
}

inline LassoModel fit_lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Family family,
                               int folds, int grid_size, const LassoControl& ctrl = {}) {
    const double lambda = cv_lambda(x, y, family, folds, grid_size, ctrl);
    return fit_lasso(x, y, family, lambda, ctrl);
}

}  // namespace homtest
