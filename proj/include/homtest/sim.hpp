#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "homtest/dataset.hpp"
#include "homtest/engine.hpp"
#include "homtest/errors.hpp"
#include "homtest/score.hpp"

namespace homtest {

enum class Design { experimental, mixed };

inline const char* design_name(Design d) {
    return d == Design::experimental ? "experimental" : "mixed";
}

inline Design parse_design(const std::string& s) {
    if (s == "experimental") return Design::experimental;
    if (s == "mixed") return Design::mixed;
    throw ValidationError("unknown design: " + s);
}

// Two-site data generating process. Covariates are independent standard
// normals; the numeric site indicator is Bernoulli(pi_site) and site 2
// carries the extra treatment effect delta. In the mixed design site 2
// stays randomized while site 1 assigns treatment by a threshold rule
// with confounding strength rho.
struct DgpConfig {
    Eigen::Index n = 2000;
    int p = 100;
    double delta = 0.0;     // effect heterogeneity across sites
    double rho = 0.0;       // confounding strength in observational sites
    double q = 0.5;         // treatment probability in experimental sites
    double pi_site = 0.5;   // probability of the experimental site indicator
    int beta_nonzeros = 10;
    // Kept weak on purpose: the squared double-difference term pays a
    // second-order penalty of -2*E[(dd_hat - dd)^2], so the covariate
    // signal must stay below what the per-cell learners would chase for
    // the test to hold its nominal size at the simulated sample sizes.
    double beta_value = 0.02;
    Design design = Design::experimental;
    uint64_t seed = 1;
};

inline void validate_dgp(const DgpConfig& cfg) {
    if (cfg.n < 50) throw ValidationError("dgp: n must be at least 50");
    if (cfg.p < 1) throw ValidationError("dgp: p must be positive");
    if (!(cfg.q > 0.0 && cfg.q < 1.0)) throw ValidationError("dgp: q must lie in (0,1)");
    if (!(cfg.pi_site > 0.0 && cfg.pi_site < 1.0))
        throw ValidationError("dgp: pi_site must lie in (0,1)");
    if (cfg.beta_nonzeros < 0) throw ValidationError("dgp: beta_nonzeros must be nonnegative");
}

inline Eigen::VectorXd dgp_beta(const DgpConfig& cfg) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p);
    beta.head(std::min(cfg.beta_nonzeros, cfg.p)).setConstant(cfg.beta_value);
    return beta;
}

namespace detail {

inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ (stream + 1));
}

}  // namespace detail

inline SiteDataset generate(const DgpConfig& cfg, uint64_t rep_seed) {
    validate_dgp(cfg);
    std::mt19937_64 rng(rep_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Eigen::VectorXd beta = dgp_beta(cfg);

    SiteDataset data;
    data.num_sites = 2;
    data.x.resize(cfg.n, cfg.p);
    data.y.resize(cfg.n);
    data.d.resize(cfg.n);
    data.z.resize(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        for (int j = 0; j < cfg.p; ++j) data.x(i, j) = normal(rng);
        const double xb = data.x.row(i).dot(beta);
        const int znum = unif(rng) < cfg.pi_site ? 1 : 0;
        const double u = normal(rng);
        const double v = normal(rng);
        int d;
        if (cfg.design == Design::experimental || znum == 1) {
            d = unif(rng) < cfg.q ? 1 : 0;
        } else {
            d = xb + cfg.rho * u + v > 0.0 ? 1 : 0;
        }
        data.z[i] = znum + 1;
        data.d[i] = d;
        data.y[i] = d + d * xb + cfg.delta * d * znum + xb + u;
    }
    return data;
}

// Population double-difference functional of the two-site DGP: each site
// contributes delta^2 from the squared term while the linear terms cancel
// by antisymmetry.
inline double dgp_theta0(const DgpConfig& cfg) { return 2.0 * cfg.delta * cfg.delta; }

// Closed-form nuisances of the experimental design, for oracle checks and
// orthogonality probes.
inline NuisanceFit analytic_nuisances_experimental(const SiteDataset& data,
                                                   const DgpConfig& cfg) {
    if (cfg.design != Design::experimental)
        throw ValidationError("analytic nuisances are available for the experimental design");
    const Eigen::VectorXd beta = dgp_beta(cfg);
    const Eigen::VectorXd xb = data.x * beta;
    const Eigen::Index n = data.n();
    NuisanceFit fit;
    fit.mode = Mode::cate;
    fit.slices.resize(2);
    const double pz[2] = {1.0 - cfg.pi_site, cfg.pi_site};  // Pr(site z), z = 1,2
    for (int z = 1; z <= 2; ++z) {
        NuisanceSlice& s = fit.slices[static_cast<size_t>(z - 1)];
        s.z = z;
        const int other = 3 - z;
        for (int d = 0; d < 2; ++d) {
            const double znum_own = z - 1, znum_other = other - 1;
            s.mu[static_cast<size_t>(d)] =
                (d * (1.0 + cfg.delta * znum_own) + (1.0 + d) * xb.array()).matrix();
            s.mu_c[static_cast<size_t>(d)] =
                (d * (1.0 + cfg.delta * znum_other) + (1.0 + d) * xb.array()).matrix();
            const double pd = d == 1 ? cfg.q : 1.0 - cfg.q;
            s.p[static_cast<size_t>(d)] = Eigen::VectorXd::Constant(n, pd * pz[z - 1]);
            s.p_c[static_cast<size_t>(d)] = Eigen::VectorXd::Constant(n, pd * pz[other - 1]);
        }
    }
    return fit;
}

// Minimal instrumented design for property tests: a random instrument,
// compliance only when assigned, complier share varying with the first
// covariate, and treatment effects that are equal across sites when
// delta = 0 (equal Wald ratios site by site).
struct IvDgpConfig {
    Eigen::Index n = 2000;
    int p = 5;
    double delta = 0.0;
    double beta_value = 0.5;
    int beta_nonzeros = 3;
    double pi_w = 0.5;
    double pi_site = 0.5;
    uint64_t seed = 1;
};

inline Eigen::VectorXd iv_beta(const IvDgpConfig& cfg) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p);
    beta.head(std::min(cfg.beta_nonzeros, cfg.p)).setConstant(cfg.beta_value);
    return beta;
}

// Complier share varies with the first covariate and with the site, so the
// two sites have genuinely different first stages; the Wald ratio is still
// equal across sites whenever delta = 0.
inline double iv_complier_prob(double x1, int znum) {
    return logistic(0.5 + 0.8 * x1 + 0.4 * znum);
}

inline SiteDataset generate_iv(const IvDgpConfig& cfg, uint64_t rep_seed) {
    if (cfg.n < 50) throw ValidationError("iv dgp: n must be at least 50");
    std::mt19937_64 rng(rep_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Eigen::VectorXd beta = iv_beta(cfg);

    SiteDataset data;
    data.num_sites = 2;
    data.x.resize(cfg.n, cfg.p);
    data.y.resize(cfg.n);
    data.d.resize(cfg.n);
    data.z.resize(cfg.n);
    Eigen::VectorXi w(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        for (int j = 0; j < cfg.p; ++j) data.x(i, j) = normal(rng);
        const double xb = data.x.row(i).dot(beta);
        const int znum = unif(rng) < cfg.pi_site ? 1 : 0;
        const int wi = unif(rng) < cfg.pi_w ? 1 : 0;
        const int complier = unif(rng) < iv_complier_prob(data.x(i, 0), znum) ? 1 : 0;
        const int d = wi * complier;
        const double tau = 1.0 + xb + cfg.delta * znum;
        data.z[i] = znum + 1;
        data.d[i] = d;
        w[i] = wi;
        data.y[i] = d * tau + xb + normal(rng);
    }
    data.w = w;
    return data;
}

inline NuisanceFit analytic_nuisances_iv(const SiteDataset& data, const IvDgpConfig& cfg) {
    const Eigen::VectorXd beta = iv_beta(cfg);
    const Eigen::VectorXd xb = data.x * beta;
    const Eigen::Index n = data.n();
    std::array<Eigen::VectorXd, 2> pc;  // complier probability by site index
    for (int site = 0; site < 2; ++site) {
        pc[static_cast<size_t>(site)].resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            pc[static_cast<size_t>(site)][i] = iv_complier_prob(data.x(i, 0), site);
    }
    NuisanceFit fit;
    fit.mode = Mode::clate;
    fit.slices.resize(2);
    const double pz[2] = {1.0 - cfg.pi_site, cfg.pi_site};
    for (int z = 1; z <= 2; ++z) {
        NuisanceSlice& s = fit.slices[static_cast<size_t>(z - 1)];
        s.z = z;
        const int other = 3 - z;
        auto tau = [&](int site) {
            return (1.0 + cfg.delta * (site - 1) + xb.array()).matrix();
        };
        const Eigen::VectorXd& pc_own = pc[static_cast<size_t>(z - 1)];
        const Eigen::VectorXd& pc_comp = pc[static_cast<size_t>(other - 1)];
        s.m[1] = (pc_own.array() * tau(z).array() + xb.array()).matrix();
        s.m[0] = xb;
        s.m_c[1] = (pc_comp.array() * tau(other).array() + xb.array()).matrix();
        s.m_c[0] = xb;
        s.r[1] = pc_own;
        s.r[0] = Eigen::VectorXd::Zero(n);
        s.r_c[1] = pc_comp;
        s.r_c[0] = Eigen::VectorXd::Zero(n);
        for (int w = 0; w < 2; ++w) {
            const double pw = w == 1 ? cfg.pi_w : 1.0 - cfg.pi_w;
            s.pi[static_cast<size_t>(w)] = Eigen::VectorXd::Constant(n, pw * pz[z - 1]);
            s.pi_c[static_cast<size_t>(w)] = Eigen::VectorXd::Constant(n, pw * pz[other - 1]);
        }
    }
    return fit;
}

// Minimal panel design for property tests: a time-invariant unobserved
// component correlated with treatment cancels in the outcome difference,
// so parallel trends holds by construction.
struct PanelDgpConfig {
    Eigen::Index n = 2000;
    int p = 5;
    double delta = 0.0;
    double beta_value = 0.5;
    int beta_nonzeros = 3;
    double confounder_shift = 0.7;  // shift of the fixed effect among treated
    uint64_t seed = 1;
};

inline SiteDataset generate_panel(const PanelDgpConfig& cfg, uint64_t rep_seed) {
    if (cfg.n < 50) throw ValidationError("panel dgp: n must be at least 50");
    std::mt19937_64 rng(rep_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p);
    beta.head(std::min(cfg.beta_nonzeros, cfg.p)).setConstant(cfg.beta_value);

    SiteDataset data;
    data.num_sites = 2;
    data.x.resize(cfg.n, cfg.p);
    data.y.resize(cfg.n);
    data.d.resize(cfg.n);
    data.z.resize(cfg.n);
    Eigen::VectorXd pre(cfg.n), post(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        for (int j = 0; j < cfg.p; ++j) data.x(i, j) = normal(rng);
        const double xb = data.x.row(i).dot(beta);
        const int znum = unif(rng) < 0.5 ? 1 : 0;
        const int d = unif(rng) < 0.5 ? 1 : 0;
        const double fixed = normal(rng) + cfg.confounder_shift * d;
        pre[i] = xb + fixed + normal(rng);
        post[i] = xb + fixed + 1.0 + d * (1.0 + xb + cfg.delta * znum) + normal(rng);
        data.z[i] = znum + 1;
        data.d[i] = d;
    }
    data.y_pre = pre;
    data.y_post = post;
    data.y = post - pre;
    return data;
}

// --- perturbation directions for the orthogonality probe -------------------

enum class NuisanceBlock { outcome_means, treatment_means, propensities };

namespace detail {

inline Eigen::VectorXd bounded_direction(const Eigen::MatrixXd& x, double coef) {
    Eigen::VectorXd v(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) v[i] = coef * std::tanh(x(i, 0));
    return v;
}

}  // namespace detail

// A smooth bounded perturbation of one nuisance block, with distinct
// weights per (arm, site) cell. The same underlying cell function feeds
// both the own-site and the complement view of each slice, so the
// direction is consistent across slices (two-site designs only).
inline NuisanceFit probe_direction(const SiteDataset& data, Mode mode, NuisanceBlock block,
                                   double amplitude) {
    if (data.num_sites != 2)
        throw ValidationError("probe_direction: two-site designs only");
    if (mode != Mode::clate && block == NuisanceBlock::treatment_means)
        throw ValidationError("probe_direction: treatment means exist only in clate mode");
    // distinct cell weights, indexed [arm][site-1]
    const double cell[2][2] = {{1.0, -0.6}, {0.7, 0.4}};
    NuisanceFit dir;
    dir.mode = mode == Mode::clate ? Mode::clate : Mode::cate;
    dir.slices.resize(2);
    for (int z = 1; z <= 2; ++z) {
        NuisanceSlice& s = dir.slices[static_cast<size_t>(z - 1)];
        s.z = z;
        const int other = 3 - z;
        for (int a = 0; a < 2; ++a) {
            const Eigen::VectorXd own =
                detail::bounded_direction(data.x, amplitude * cell[a][z - 1]);
            const Eigen::VectorXd comp =
                detail::bounded_direction(data.x, amplitude * cell[a][other - 1]);
            const auto arm = static_cast<size_t>(a);
            if (mode == Mode::clate) {
                switch (block) {
                    case NuisanceBlock::outcome_means: s.m[arm] = own; s.m_c[arm] = comp; break;
                    case NuisanceBlock::treatment_means: s.r[arm] = own; s.r_c[arm] = comp; break;
                    case NuisanceBlock::propensities: s.pi[arm] = own; s.pi_c[arm] = comp; break;
                }
            } else {
                if (block == NuisanceBlock::outcome_means) {
                    s.mu[arm] = own;
                    s.mu_c[arm] = comp;
                } else {
                    s.p[arm] = own;
                    s.p_c[arm] = comp;
                }
            }
        }
    }
    return dir;
}

// --- Monte Carlo harness ----------------------------------------------------

struct SimReport {
    std::string scenario;
    Eigen::Index n = 0;
    double mean_theta = 0.0;
    double std_theta = 0.0;
    double mean_se = 0.0;
    double reject_rate_5pct = 0.0;
    double mean_n_eff = 0.0;
    int replications = 0;  // attempted
    int failures = 0;      // excluded from the aggregates
};

inline std::string scenario_id(const DgpConfig& cfg) {
    std::ostringstream os;
    os << design_name(cfg.design) << "_delta" << cfg.delta;
    if (cfg.design == Design::mixed) os << "_rho" << cfg.rho;
    return os.str();
}

inline SimReport run_scenario(const DgpConfig& dgp, const TestConfig& test, int replications,
                              std::vector<TestResult>* per_rep = nullptr) {
    if (replications < 1) throw ValidationError("run_scenario: R must be at least 1");
    validate_dgp(dgp);
    SimReport rep;
    rep.scenario = scenario_id(dgp);
    rep.n = dgp.n;
    rep.replications = replications;
    std::vector<double> thetas;
    double sum_se = 0.0, sum_neff = 0.0;
    int rejected = 0;
    for (int r = 0; r < replications; ++r) {
        const uint64_t rep_seed = detail::mix_seed(dgp.seed, static_cast<uint64_t>(r));
        try {
            const SiteDataset data = generate(dgp, rep_seed);
            TestConfig cfg = test;
            cfg.seed = detail::splitmix64(rep_seed);
            const TestResult res = run_test(data, cfg);
            thetas.push_back(res.theta_hat);
            sum_se += res.se;
            sum_neff += static_cast<double>(res.n_eff);
            if (res.p_value < 0.05) ++rejected;
            if (per_rep) per_rep->push_back(res);
        } catch (const Error&) {
            ++rep.failures;
        }
    }
    const auto succ = static_cast<double>(thetas.size());
    if (succ > 0) {
        double mean = 0.0;
        for (double t : thetas) mean += t;
        mean /= succ;
        double ssq = 0.0;
        for (double t : thetas) ssq += (t - mean) * (t - mean);
        rep.mean_theta = mean;
        rep.std_theta = succ > 1 ? std::sqrt(ssq / (succ - 1)) : 0.0;
        rep.mean_se = sum_se / succ;
        rep.mean_n_eff = sum_neff / succ;
        rep.reject_rate_5pct = static_cast<double>(rejected) / succ;
    }
    return rep;
}

inline std::string sim_report_header() {
    return "scenario\tN\ttheta_hat\tstd\tmean_se\treject_5pct\tn_eff_mean\tR\tfailures";
}

inline std::string sim_report_row(const SimReport& r) {
    std::ostringstream os;
    os << r.scenario << "\t" << r.n << "\t" << format_double(r.mean_theta) << "\t"
       << format_double(r.std_theta) << "\t" << format_double(r.mean_se) << "\t"
       << format_double(r.reject_rate_5pct) << "\t" << format_double(r.mean_n_eff) << "\t"
       << r.replications << "\t" << r.failures;
    return os.str();
}

}  // namespace homtest
