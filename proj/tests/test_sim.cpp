#include <gtest/gtest.h>

#include <cmath>

#include "homtest/sim.hpp"

using namespace homtest;

TEST(Dgp, Validation) {
    DgpConfig bad;
    bad.n = 10;
    EXPECT_THROW(generate(bad, 1), ValidationError);
    bad = DgpConfig{};
    bad.q = 1.0;
    EXPECT_THROW(generate(bad, 1), ValidationError);
    bad = DgpConfig{};
    bad.pi_site = 0.0;
    EXPECT_THROW(generate(bad, 1), ValidationError);
    bad = DgpConfig{};
    bad.beta_nonzeros = -1;
    EXPECT_THROW(generate(bad, 1), ValidationError);
    EXPECT_THROW(parse_design("other"), ValidationError);
}

TEST(Dgp, EmpiricalMomentsMatch) {
    DgpConfig dgp;
    dgp.n = 20000;
    dgp.p = 5;
    const SiteDataset data = generate(dgp, 2);
    double dbar = 0.0, zbar = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        dbar += data.d[i];
        zbar += data.z[i] - 1;
    }
    dbar /= static_cast<double>(data.n());
    zbar /= static_cast<double>(data.n());
    const double tol = 3.0 * std::sqrt(0.25 / static_cast<double>(data.n()));
    EXPECT_NEAR(dbar, dgp.q, tol);
    EXPECT_NEAR(zbar, dgp.pi_site, tol);
    EXPECT_NEAR(data.x.col(0).mean(), 0.0, 0.03);
}

TEST(Dgp, HomogeneousEffectWhenDeltaZero) {
    // E[Y|D=1,x,z] - E[Y|D=0,x,z] = 1 + x'beta regardless of z, so the
    // analytic double differences vanish identically
    DgpConfig dgp;
    dgp.n = 500;
    dgp.p = 5;
    dgp.delta = 0.0;
    const SiteDataset data = generate(dgp, 3);
    const NuisanceFit fit = analytic_nuisances_experimental(data, dgp);
    for (const NuisanceSlice& s : fit.slices) {
        const Eigen::VectorXd dd = s.mu[1] - s.mu[0] - s.mu_c[1] + s.mu_c[0];
        EXPECT_NEAR(dd.lpNorm<Eigen::Infinity>(), 0.0, 1e-12);
    }
    EXPECT_DOUBLE_EQ(dgp_theta0(dgp), 0.0);
    DgpConfig het = dgp;
    het.delta = 1.0;
    EXPECT_DOUBLE_EQ(dgp_theta0(het), 2.0);
}

TEST(Dgp, MixedDesignConfoundsObservationalSite) {
    DgpConfig dgp;
    dgp.n = 30000;
    dgp.p = 5;
    dgp.beta_value = 0.5;  // strong signal so the covariance is visible
    dgp.design = Design::mixed;
    dgp.rho = 0.5;
    const SiteDataset data = generate(dgp, 4);
    // site 2 (numeric z=1) stays randomized; site 1 assigns by threshold,
    // so treatment correlates with x'beta there
    const Eigen::VectorXd beta = dgp_beta(dgp);
    double cov_obs = 0.0, cov_exp = 0.0, mean_obs = 0.0, mean_exp = 0.0;
    Eigen::Index n_obs = 0, n_exp = 0;
    const Eigen::VectorXd xb = data.x * beta;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.z[i] == 1) { mean_obs += data.d[i]; ++n_obs; }
        else { mean_exp += data.d[i]; ++n_exp; }
    }
    mean_obs /= static_cast<double>(n_obs);
    mean_exp /= static_cast<double>(n_exp);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.z[i] == 1) cov_obs += (data.d[i] - mean_obs) * xb[i];
        else cov_exp += (data.d[i] - mean_exp) * xb[i];
    }
    cov_obs /= static_cast<double>(n_obs);
    cov_exp /= static_cast<double>(n_exp);
    EXPECT_GT(cov_obs, 0.2);
    EXPECT_NEAR(cov_exp, 0.0, 0.05);
}

TEST(Dgp, SeedReproducibility) {
    DgpConfig dgp;
    dgp.n = 200;
    dgp.p = 3;
    const SiteDataset a = generate(dgp, 77);
    const SiteDataset b = generate(dgp, 77);
    EXPECT_TRUE((a.y.array() == b.y.array()).all());
    EXPECT_TRUE((a.x.array() == b.x.array()).all());
    const SiteDataset c = generate(dgp, 78);
    EXPECT_FALSE((a.y.array() == c.y.array()).all());
}

TEST(IvDgp, ComplierStructure) {
    IvDgpConfig iv;
    iv.n = 20000;
    iv.p = 3;
    const SiteDataset data = generate_iv(iv, 5);
    ASSERT_TRUE(data.w.has_value());
    Eigen::Index treated_without_assignment = 0;
    double compliers_given_w1 = 0.0;
    Eigen::Index n_w1 = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if ((*data.w)[i] == 0 && data.d[i] == 1) ++treated_without_assignment;
        if ((*data.w)[i] == 1) { compliers_given_w1 += data.d[i]; ++n_w1; }
    }
    EXPECT_EQ(treated_without_assignment, 0);  // no always-takers by construction
    // complier share averages logistic(0.5 + 0.8 x1 + 0.4 znum) ~ 0.65
    // over x1 ~ N(0,1) and znum ~ Bernoulli(0.5)
    EXPECT_NEAR(compliers_given_w1 / static_cast<double>(n_w1), 0.65, 0.04);
}

TEST(PanelDgp, ParallelTrendsByConstruction) {
    PanelDgpConfig panel;
    panel.n = 30000;
    panel.p = 3;
    panel.delta = 0.0;
    const SiteDataset data = generate_panel(panel, 6);
    ASSERT_TRUE(data.y_pre.has_value());
    // untreated trend is 1 regardless of the treated-group confounder shift
    double trend_ctrl = 0.0;
    Eigen::Index n_ctrl = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        if (data.d[i] == 0) { trend_ctrl += data.y[i]; ++n_ctrl; }
    EXPECT_NEAR(trend_ctrl / static_cast<double>(n_ctrl), 1.0, 0.05);
    // but the fixed effect does confound the pre-period level
    double pre_t = 0.0, pre_c = 0.0;
    Eigen::Index nt = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.d[i] == 1) { pre_t += (*data.y_pre)[i]; ++nt; }
        else pre_c += (*data.y_pre)[i];
    }
    EXPECT_GT(pre_t / static_cast<double>(nt) - pre_c / static_cast<double>(n_ctrl), 0.4);
}

TEST(Scenario, SingleReplicationRejectIsBinary) {
    DgpConfig dgp;
    dgp.n = 300;
    dgp.p = 3;
    TestConfig tc;
    tc.learner.grid_size = 10;
    const SimReport rep = run_scenario(dgp, tc, 1);
    EXPECT_EQ(rep.replications, 1);
    EXPECT_EQ(rep.failures, 0);
    EXPECT_TRUE(rep.reject_rate_5pct == 0.0 || rep.reject_rate_5pct == 1.0);
    EXPECT_EQ(rep.n, 300);
}

TEST(Scenario, DeterministicReports) {
    DgpConfig dgp;
    dgp.n = 250;
    dgp.p = 3;
    TestConfig tc;
    tc.learner.grid_size = 8;
    const SimReport a = run_scenario(dgp, tc, 3);
    const SimReport b = run_scenario(dgp, tc, 3);
    EXPECT_EQ(sim_report_row(a), sim_report_row(b));
    EXPECT_THROW(run_scenario(dgp, tc, 0), ValidationError);
}

TEST(Scenario, PerRepLogAndAggregates) {
    DgpConfig dgp;
    dgp.n = 250;
    dgp.p = 3;
    TestConfig tc;
    tc.learner.grid_size = 8;
    std::vector<TestResult> log;
    const SimReport rep = run_scenario(dgp, tc, 4, &log);
    ASSERT_EQ(log.size(), 4u);
    double mean = 0.0;
    for (const TestResult& r : log) mean += r.theta_hat;
    EXPECT_NEAR(rep.mean_theta, mean / 4.0, 1e-12);
    EXPECT_EQ(scenario_id(dgp), "experimental_delta0");
    dgp.design = Design::mixed;
    dgp.rho = 0.5;
    EXPECT_EQ(scenario_id(dgp), "mixed_delta0_rho0.5");
}
