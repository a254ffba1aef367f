#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "homtest/dataset.hpp"
#include "homtest/errors.hpp"
#include "homtest/nuisance.hpp"

namespace homtest {

// Per-observation score values, excluding the -theta term.
struct ScoreSample {
    Eigen::VectorXd psi;        // full length; only retained entries enter theta_hat
    std::vector<bool> trimmed;  // true = excluded by the trim rule
    double theta_hat = 0.0;     // mean of psi over retained observations
    // per-site breakdown over retained observations
    Eigen::VectorXd site_mean_dd;     // mean double difference per z
    Eigen::VectorXd site_mean_dd_sq;  // mean squared double difference per z

    Eigen::Index n_retained() const {
        Eigen::Index c = 0;
        for (bool t : trimmed)
            if (!t) ++c;
        return c;
    }
};

// An observation is retained iff every estimated propensity that enters
// its score with a nonzero indicator (the own cell and the matching
// complement cells) lies in [epsilon, 1-epsilon].
inline std::vector<bool> trim_mask(const SiteDataset& data, const NuisanceFit& fit,
                                   double epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 0.5))
        throw ValidationError("trim: epsilon must lie in [0, 0.5)");
    const Eigen::Index n = data.n();
    const int L = fit.num_sites();
    const bool clate = fit.mode == Mode::clate;
    std::vector<bool> trimmed(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto arm =
            static_cast<size_t>(clate ? (*data.w)[i] : data.d[i]);
        const int zi = data.z[i];
        auto bad = [&](double prob) { return prob < epsilon || prob > 1.0 - epsilon; };
        const NuisanceSlice& own = fit.slices[static_cast<size_t>(zi - 1)];
        if (bad(clate ? own.pi[arm][i] : own.p[arm][i])) {
            trimmed[static_cast<size_t>(i)] = true;
            continue;
        }
        for (int z = 1; z <= L; ++z) {
            if (z == zi) continue;
            const NuisanceSlice& s = fit.slices[static_cast<size_t>(z - 1)];
            if (bad(clate ? s.pi_c[arm][i] : s.p_c[arm][i])) {
                trimmed[static_cast<size_t>(i)] = true;
                break;
            }
        }
    }
    return trimmed;
}

namespace detail {

inline double safe_weight(double indicator, double prob) {
    if (indicator == 0.0) return 0.0;
    if (prob <= 0.0) throw OverlapError("score: zero propensity on a retained observation");
    return indicator / prob;
}

template <class PerObs>
ScoreSample reduce_score(const SiteDataset& data, int num_sites,
                         const std::vector<bool>& trimmed, PerObs&& per_obs) {
    const Eigen::Index n = data.n();
    ScoreSample out;
    out.trimmed = trimmed;
    out.psi = Eigen::VectorXd::Zero(n);
    out.site_mean_dd = Eigen::VectorXd::Zero(num_sites);
    out.site_mean_dd_sq = Eigen::VectorXd::Zero(num_sites);
    Eigen::Index kept = 0;
    double sum = 0.0;
    Eigen::VectorXd dd(num_sites);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (trimmed[static_cast<size_t>(i)]) continue;
        const double psi = per_obs(i, dd);
        out.psi[i] = psi;
        sum += psi;
        out.site_mean_dd += dd;
        out.site_mean_dd_sq += dd.cwiseProduct(dd);
        ++kept;
    }
    if (kept == 0) throw DegenerateSampleError("score: every observation was trimmed");
    out.theta_hat = sum / static_cast<double>(kept);
    out.site_mean_dd /= static_cast<double>(kept);
    out.site_mean_dd_sq /= static_cast<double>(kept);
    return out;
}

}  // namespace detail

// Double-difference orthogonal score: squared plus linear double
// differences of conditional means, each debiased with inverse-propensity
// weighted residuals, summed over sites.
inline ScoreSample cate_score(const SiteDataset& data, const NuisanceFit& fit,
                              const std::vector<bool>& trimmed) {
    if (fit.mode == Mode::clate) throw ValidationError("cate_score: fit was made for clate");
    const int L = fit.num_sites();
    return detail::reduce_score(
        data, L, trimmed, [&](Eigen::Index i, Eigen::VectorXd& dd_out) {
            const double y = data.y[i];
            const int di = data.d[i];
            const int zi = data.z[i];
            double psi = 0.0;
            for (int z = 1; z <= L; ++z) {
                const NuisanceSlice& s = fit.slices[static_cast<size_t>(z - 1)];
                const double dd = s.mu[1][i] - s.mu[0][i] - s.mu_c[1][i] + s.mu_c[0][i];
                double aug = 0.0;
                if (zi == z) {
                    const double sign = di == 1 ? 1.0 : -1.0;
                    aug += sign * (y - s.mu[static_cast<size_t>(di)][i]) *
                           detail::safe_weight(1.0, s.p[static_cast<size_t>(di)][i]);
                } else {
                    const double sign = di == 1 ? -1.0 : 1.0;
                    aug += sign * (y - s.mu_c[static_cast<size_t>(di)][i]) *
                           detail::safe_weight(1.0, s.p_c[static_cast<size_t>(di)][i]);
                }
                psi += dd * dd + 2.0 * dd * aug + dd + aug;
                dd_out[z - 1] = dd;
            }
            return psi;
        });
}

// Cross-product orthogonal score for instrumented designs: reduced-form
// and first-stage contrasts are debiased jointly and combined as
// g_z h_{z-} - g_{z-} h_z.
inline ScoreSample clate_score(const SiteDataset& data, const NuisanceFit& fit,
                               const std::vector<bool>& trimmed) {
    if (fit.mode != Mode::clate) throw ValidationError("clate_score: fit was made for cate");
    if (!data.w) throw ValidationError("clate_score: instrument required");
    const int L = fit.num_sites();
    return detail::reduce_score(
        data, L, trimmed, [&](Eigen::Index i, Eigen::VectorXd& dd_out) {
            const double y = data.y[i];
            const double d = static_cast<double>(data.d[i]);
            const int wi = (*data.w)[i];
            const int zi = data.z[i];
            const auto warm = static_cast<size_t>(wi);
            const double wsign = wi == 1 ? 1.0 : -1.0;
            double psi = 0.0;
            for (int z = 1; z <= L; ++z) {
                const NuisanceSlice& s = fit.slices[static_cast<size_t>(z - 1)];
                const double gbar = s.m[1][i] - s.m[0][i];
                const double gbar_c = s.m_c[1][i] - s.m_c[0][i];
                const double hbar = s.r[1][i] - s.r[0][i];
                const double hbar_c = s.r_c[1][i] - s.r_c[0][i];
                // augmentations: only the cell matching (w_i, z_i) is nonzero
                double ay = 0.0, ay_c = 0.0, ad = 0.0, ad_c = 0.0;
                if (zi == z) {
                    const double wgt = detail::safe_weight(1.0, s.pi[warm][i]);
                    ay = wsign * (y - s.m[warm][i]) * wgt;
                    ad = wsign * (d - s.r[warm][i]) * wgt;
                } else {
                    const double wgt = detail::safe_weight(1.0, s.pi_c[warm][i]);
                    ay_c = wsign * (y - s.m_c[warm][i]) * wgt;
                    ad_c = wsign * (d - s.r_c[warm][i]) * wgt;
                }
                const double g = gbar + ay, g_c = gbar_c + ay_c;
                const double h = hbar + ad, h_c = hbar_c + ad_c;
                const double theta_bar = gbar * hbar_c - gbar_c * hbar;
                const double theta_dr = g * h_c - g_c * h;
                const double aug_y = ay * h_c - ay_c * h;
                const double aug_d = g * ad_c - g_c * ad;
                psi += theta_bar * theta_bar + theta_dr + 2.0 * theta_bar * (aug_y + aug_d);
                dd_out[z - 1] = theta_bar;
            }
            return psi;
        });
}

enum class ScoreKind { cate, clate };

// Mean score over all observations with no trimming; the moment map used
// by the orthogonality probe.
inline double mean_score(ScoreKind kind, const SiteDataset& data, const NuisanceFit& fit) {
    std::vector<bool> keep_all(static_cast<size_t>(data.n()), false);
    const ScoreSample s = kind == ScoreKind::cate ? cate_score(data, fit, keep_all)
                                                  : clate_score(data, fit, keep_all);
    return s.theta_hat;
}

namespace detail {

inline void axpy_block(std::array<Eigen::VectorXd, 2>& dst,
                       const std::array<Eigen::VectorXd, 2>& dir, double t) {
    for (size_t a = 0; a < 2; ++a)
        if (dir[a].size() > 0) dst[a] += t * dir[a];
}

}  // namespace detail

// eta0 + t * direction, fieldwise; direction blocks that were left empty
// stay untouched.
inline NuisanceFit perturbed_nuisances(const NuisanceFit& truth, const NuisanceFit& direction,
                                       double t) {
    NuisanceFit out = truth;
    for (size_t zi = 0; zi < out.slices.size(); ++zi) {
        NuisanceSlice& s = out.slices[zi];
        const NuisanceSlice& d = direction.slices[zi];
        detail::axpy_block(s.mu, d.mu, t);
        detail::axpy_block(s.mu_c, d.mu_c, t);
        detail::axpy_block(s.p, d.p, t);
        detail::axpy_block(s.p_c, d.p_c, t);
        detail::axpy_block(s.m, d.m, t);
        detail::axpy_block(s.m_c, d.m_c, t);
        detail::axpy_block(s.r, d.r, t);
        detail::axpy_block(s.r_c, d.r_c, t);
        detail::axpy_block(s.pi, d.pi, t);
        detail::axpy_block(s.pi_c, d.pi_c, t);
    }
    return out;
}

// M(eta0 + t*deta) - M(eta0) on the given sample, where M is the mean
// score excluding the -theta term. With orthogonal scores the difference
// should decay quadratically in t.
inline double orthogonality_probe(ScoreKind kind, const SiteDataset& data,
                                  const NuisanceFit& truth, const NuisanceFit& direction,
                                  double t) {
    if (t == 0.0) return 0.0;
    const NuisanceFit shifted = perturbed_nuisances(truth, direction, t);
    return mean_score(kind, data, shifted) - mean_score(kind, data, truth);
}

}  // namespace homtest
