#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "homtest/dataset.hpp"
#include "homtest/errors.hpp"
#include "homtest/folds.hpp"
#include "homtest/lasso.hpp"

namespace homtest {

struct LearnerConfig {
    int cv_folds = 5;     // internal folds for penalty selection
    int grid_size = 25;   // penalty grid points
    LassoControl control;
};

// Out-of-fold predictions needed by the scores for one site z: the
// own-site cell and the pooled complement cell (all sites != z).
struct NuisanceSlice {
    int z = 0;
    // CATE / DiD, indexed by treatment arm d
    std::array<Eigen::VectorXd, 2> mu, mu_c;  // outcome means
    std::array<Eigen::VectorXd, 2> p, p_c;    // joint propensities Pr(D=d, Z in cell | X)
    // CLATE, indexed by instrument arm w
    std::array<Eigen::VectorXd, 2> m, m_c;    // E[Y | W=w, ...]
    std::array<Eigen::VectorXd, 2> r, r_c;    // E[D | W=w, ...]
    std::array<Eigen::VectorXd, 2> pi, pi_c;  // Pr(W=w, Z in cell | X)
};

struct NuisanceFit {
    Mode mode = Mode::cate;
    std::vector<NuisanceSlice> slices;  // index z-1

    int num_sites() const { return static_cast<int>(slices.size()); }
};

// Models are cached per (role, arm, fold, set-of-sites) so that identical
// training subsets are fit exactly once. With two sites the complement of
// site 1 is site 2's own cell, and both read the same cached model.
struct ModelCache {
    std::map<std::tuple<int, int, int, uint64_t>, LassoModel> models;
};

namespace detail {

enum NuisanceRole : int { role_mu = 0, role_m = 1, role_r = 2, role_p = 3, role_pi = 4 };

inline uint64_t site_mask_own(int z) { return uint64_t{1} << (z - 1); }

inline uint64_t site_mask_complement(int z, int num_sites) {
    const uint64_t all =
        num_sites == 64 ? ~uint64_t{0} : (uint64_t{1} << num_sites) - 1;
    return all & ~site_mask_own(z);
}

inline bool mask_has(uint64_t mask, int z) { return (mask >> (z - 1)) & 1; }

inline std::string describe_cell(NuisanceRole role, int arm, uint64_t mask, int fold,
                                 int num_sites) {
    std::ostringstream os;
    switch (role) {
        case role_mu: os << "outcome mean, d=" << arm; break;
        case role_m: os << "reduced-form mean, w=" << arm; break;
        case role_r: os << "first-stage mean, w=" << arm; break;
        case role_p: os << "joint propensity, d=" << arm; break;
        case role_pi: os << "instrument propensity, w=" << arm; break;
    }
    os << ", sites {";
    bool first = true;
    for (int z = 1; z <= num_sites; ++z) {
        if (!mask_has(mask, z)) continue;
        if (!first) os << ",";
        os << z;
        first = false;
    }
    os << "}, fold " << fold;
    return os.str();
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x,
                                   const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

inline LassoModel constant_binomial_model(Eigen::Index p, double value) {
    LassoModel model;
    model.family = Family::binomial;
    model.coefficients = Eigen::VectorXd::Zero(p);
    model.center = Eigen::VectorXd::Zero(p);
    model.scale = Eigen::VectorXd::Ones(p);
    model.intercept = value >= 0.5 ? kLinkClamp : -kLinkClamp;
    return model;
}

class CrossFitter {
  public:
    CrossFitter(const SiteDataset& data, const FoldPlan& plan, const LearnerConfig& cfg,
                ModelCache& cache)
        : data_(data), plan_(plan), cfg_(cfg), cache_(cache) {}

    // Fills the slice vectors for site z in the given mode.
    NuisanceSlice fit_slice(int z, Mode mode) {
        NuisanceSlice slice;
        slice.z = z;
        const Eigen::Index n = data_.n();
        const int L = data_.num_sites;
        auto init = [n](std::array<Eigen::VectorXd, 2>& a) {
            a[0] = Eigen::VectorXd::Zero(n);
            a[1] = Eigen::VectorXd::Zero(n);
        };
        const uint64_t own = site_mask_own(z);
        const uint64_t comp = site_mask_complement(z, L);

        for (int k = 1; k <= plan_.num_folds; ++k) {
            const std::vector<Eigen::Index> infold = plan_.in_fold(k);
            const std::vector<Eigen::Index> oof = plan_.out_of_fold(k);
            const Eigen::MatrixXd x_in = gather_rows(data_.x, infold);
            if (mode == Mode::cate || mode == Mode::did) {
                if (slice.mu[0].size() == 0) {
                    init(slice.mu); init(slice.mu_c); init(slice.p); init(slice.p_c);
                }
                for (int d = 0; d < 2; ++d) {
                    scatter(slice.mu[static_cast<size_t>(d)], infold,
                            predict_cell(role_mu, d, own, k, oof, x_in));
                    scatter(slice.mu_c[static_cast<size_t>(d)], infold,
                            predict_cell(role_mu, d, comp, k, oof, x_in));
                    scatter(slice.p[static_cast<size_t>(d)], infold,
                            predict_cell(role_p, d, own, k, oof, x_in));
                    scatter(slice.p_c[static_cast<size_t>(d)], infold,
                            predict_cell(role_p, d, comp, k, oof, x_in));
                }
            } else {
                if (slice.m[0].size() == 0) {
                    init(slice.m); init(slice.m_c); init(slice.r); init(slice.r_c);
                    init(slice.pi); init(slice.pi_c);
                }
                for (int w = 0; w < 2; ++w) {
                    scatter(slice.m[static_cast<size_t>(w)], infold,
                            predict_cell(role_m, w, own, k, oof, x_in));
                    scatter(slice.m_c[static_cast<size_t>(w)], infold,
                            predict_cell(role_m, w, comp, k, oof, x_in));
                    scatter(slice.r[static_cast<size_t>(w)], infold,
                            predict_cell(role_r, w, own, k, oof, x_in));
                    scatter(slice.r_c[static_cast<size_t>(w)], infold,
                            predict_cell(role_r, w, comp, k, oof, x_in));
                    scatter(slice.pi[static_cast<size_t>(w)], infold,
                            predict_cell(role_pi, w, own, k, oof, x_in));
                    scatter(slice.pi_c[static_cast<size_t>(w)], infold,
                            predict_cell(role_pi, w, comp, k, oof, x_in));
                }
            }
        }
        return slice;
    }

  private:
    static void scatter(Eigen::VectorXd& dst, const std::vector<Eigen::Index>& idx,
                        const Eigen::VectorXd& values) {
        for (size_t i = 0; i < idx.size(); ++i) dst[idx[i]] = values[static_cast<Eigen::Index>(i)];
    }

    Eigen::VectorXd predict_cell(NuisanceRole role, int arm, uint64_t mask, int fold,
                                 const std::vector<Eigen::Index>& oof,
                                 const Eigen::MatrixXd& x_in) {
        const auto key = std::make_tuple(static_cast<int>(role), arm, fold, mask);
        auto it = cache_.models.find(key);
        if (it == cache_.models.end())
            it = cache_.models.emplace(key, fit_cell(role, arm, mask, fold, oof)).first;
        return predict(it->second, x_in);
    }

    LassoModel fit_cell(NuisanceRole role, int arm, uint64_t mask, int fold,
                        const std::vector<Eigen::Index>& oof) {
        std::vector<Eigen::Index> rows;
        Family family = Family::binomial;
        std::vector<double> resp;
        switch (role) {
            case role_mu:
                family = Family::gaussian;
                for (Eigen::Index i : oof)
                    if (data_.d[i] == arm && mask_has(mask, data_.z[i])) {
                        rows.push_back(i);
                        resp.push_back(data_.y[i]);
                    }
                break;
            case role_m:
                family = Family::gaussian;
                for (Eigen::Index i : oof)
                    if ((*data_.w)[i] == arm && mask_has(mask, data_.z[i])) {
                        rows.push_back(i);
                        resp.push_back(data_.y[i]);
                    }
                break;
            case role_r:
                for (Eigen::Index i : oof)
                    if ((*data_.w)[i] == arm && mask_has(mask, data_.z[i])) {
                        rows.push_back(i);
                        resp.push_back(static_cast<double>(data_.d[i]));
                    }
                break;
            case role_p:
                for (Eigen::Index i : oof) {
                    rows.push_back(i);
                    resp.push_back(data_.d[i] == arm && mask_has(mask, data_.z[i]) ? 1.0 : 0.0);
                }
                break;
            case role_pi:
                for (Eigen::Index i : oof) {
                    rows.push_back(i);
                    resp.push_back((*data_.w)[i] == arm && mask_has(mask, data_.z[i]) ? 1.0
                                                                                      : 0.0);
                }
                break;
        }
        if (rows.size() < 2)
            throw InsufficientCellError(
                "empty training cell: " +
                describe_cell(role, arm, mask, fold, data_.num_sites));
        const Eigen::MatrixXd xsub = gather_rows(data_.x, rows);
        const Eigen::VectorXd ysub =
            Eigen::Map<const Eigen::VectorXd>(resp.data(), static_cast<Eigen::Index>(resp.size()));
        if (role == role_r) {
            // perfect (non-)compliance within an instrument arm is a valid
            // configuration: fall back to a constant model at the link clamp
            const double mean = ysub.mean();
            if (mean <= 0.0 || mean >= 1.0)
                return constant_binomial_model(data_.x.cols(), mean);
        }
        try {
            return fit_lasso_cv(xsub, ysub, family, cfg_.cv_folds, cfg_.grid_size, cfg_.control);
        } catch (const DegenerateResponseError&) {
            throw InsufficientCellError(
                "degenerate training cell: " +
                describe_cell(role, arm, mask, fold, data_.num_sites));
        }
    }

    const SiteDataset& data_;
    const FoldPlan& plan_;
    LearnerConfig cfg_;
    ModelCache& cache_;
};

}  // namespace detail

inline NuisanceSlice fit_nuisances_cate(const SiteDataset& data, const FoldPlan& plan, int z,
                                        const LearnerConfig& cfg = {},
                                        ModelCache* cache = nullptr) {
    if (z < 1 || z > data.num_sites) throw ValidationError("fit_nuisances: site index out of range");
    ModelCache local;
    detail::CrossFitter fitter(data, plan, cfg, cache ? *cache : local);
    return fitter.fit_slice(z, Mode::cate);
}

inline NuisanceSlice fit_nuisances_clate(const SiteDataset& data, const FoldPlan& plan, int z,
                                         const LearnerConfig& cfg = {},
                                         ModelCache* cache = nullptr) {
    if (z < 1 || z > data.num_sites) throw ValidationError("fit_nuisances: site index out of range");
    if (!data.w) throw ValidationError("fit_nuisances_clate: instrument required");
    ModelCache local;
    detail::CrossFitter fitter(data, plan, cfg, cache ? *cache : local);
    return fitter.fit_slice(z, Mode::clate);
}

inline NuisanceFit fit_all_nuisances(const SiteDataset& data, const FoldPlan& plan, Mode mode,
                                     const LearnerConfig& cfg = {}) {
    if (data.num_sites > 64)
        throw ValidationError("fit_all_nuisances: at most 64 sites supported");
    NuisanceFit fit;
    fit.mode = mode;
    ModelCache cache;
    for (int z = 1; z <= data.num_sites; ++z) {
        fit.slices.push_back(mode == Mode::clate
                                 ? fit_nuisances_clate(data, plan, z, cfg, &cache)
                                 : fit_nuisances_cate(data, plan, z, cfg, &cache));
    }
    return fit;
}

}  // namespace homtest
