#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "homtest/dataset.hpp"
#include "homtest/errors.hpp"
#include "homtest/folds.hpp"
#include "homtest/nuisance.hpp"
#include "homtest/score.hpp"

namespace homtest {

struct TestConfig {
    int folds = 5;
    double epsilon = 0.05;  // trim threshold in [0, 0.5)
    uint64_t seed = 1;
    Mode mode = Mode::cate;
    LearnerConfig learner;
};

struct TestResult {
    double theta_hat = 0.0;
    double se = 0.0;
    double p_value = 1.0;
    Eigen::Index n = 0;
    Eigen::Index n_eff = 0;      // retained after trimming
    Eigen::Index n_trimmed = 0;
    double n_eff_kish = 0.0;     // weighted diagnostic, not used for inference
    Eigen::VectorXd per_site_mean_dd;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double two_sided_p(double theta_hat, double se) {
    return std::erfc(std::abs(theta_hat / se) / std::sqrt(2.0));
}

inline TestResult run_test(const SiteDataset& input, const TestConfig& cfg) {
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 0.5))
        throw ValidationError("run_test: epsilon must lie in [0, 0.5)");
    if (cfg.folds < 2) throw ValidationError("run_test: need at least 2 folds");
    validate_dataset(input, cfg.mode);
    const SiteDataset data = cfg.mode == Mode::did ? did_transform(input) : input;
    const Mode fit_mode = cfg.mode == Mode::clate ? Mode::clate : Mode::cate;

    const FoldPlan plan = make_folds(data.n(), cfg.folds, cfg.seed);
    const NuisanceFit fit = fit_all_nuisances(data, plan, fit_mode, cfg.learner);
    const std::vector<bool> trimmed = trim_mask(data, fit, cfg.epsilon);
    const ScoreSample score = fit_mode == Mode::clate ? clate_score(data, fit, trimmed)
                                                      : cate_score(data, fit, trimmed);

    TestResult res;
    res.n = data.n();
    res.n_eff = score.n_retained();
    res.n_trimmed = res.n - res.n_eff;
    res.theta_hat = score.theta_hat;
    res.per_site_mean_dd = score.site_mean_dd;

    double ssq = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (score.trimmed[static_cast<size_t>(i)]) continue;
        const double dev = score.psi[i] - score.theta_hat;
        ssq += dev * dev;
    }
    if (res.n_eff < 2 || ssq <= 0.0)
        throw DegenerateVarianceError("run_test: score variance is zero");
    const double var = ssq / static_cast<double>(res.n_eff - 1);
    res.se = std::sqrt(var / static_cast<double>(res.n_eff));
    res.p_value = two_sided_p(res.theta_hat, res.se);

    // Kish effective size under inverse own-cell propensity weights
    {
        double sw = 0.0, sw2 = 0.0;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            if (score.trimmed[static_cast<size_t>(i)]) continue;
            const NuisanceSlice& s = fit.slices[static_cast<size_t>(data.z[i] - 1)];
            const auto arm = static_cast<size_t>(fit_mode == Mode::clate ? (*data.w)[i]
                                                                         : data.d[i]);
            const double w = 1.0 / (fit_mode == Mode::clate ? s.pi[arm][i] : s.p[arm][i]);
            sw += w;
            sw2 += w * w;
        }
        res.n_eff_kish = sw2 > 0.0 ? sw * sw / sw2 : 0.0;
    }
    return res;
}

struct BalanceRow {
    std::string name;
    double mean_control = 0.0, sd_control = 0.0;
    double mean_treated = 0.0, sd_treated = 0.0;
    double smd = 0.0;
    bool zero_spread = false;  // pooled SD was zero; SMD reported as 0
};

// Standardized mean differences between treatment arms,
// SMD = (mean_t - mean_c) / sqrt((s_t^2 + s_c^2) / 2).
inline std::vector<BalanceRow> balance_table(const SiteDataset& data,
                                             const std::vector<std::string>& names) {
    validate_dataset(data, Mode::cate);
    if (names.size() != static_cast<size_t>(data.x.cols()))
        throw ValidationError("balance_table: one name per covariate required");
    std::vector<BalanceRow> rows;
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
        BalanceRow row;
        row.name = names[static_cast<size_t>(j)];
        double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
        Eigen::Index n0 = 0, n1 = 0;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double v = data.x(i, j);
            if (data.d[i] == 1) {
                s1 += v; q1 += v * v; ++n1;
            } else {
                s0 += v; q0 += v * v; ++n0;
            }
        }
        row.mean_control = s0 / static_cast<double>(n0);
        row.mean_treated = s1 / static_cast<double>(n1);
        const double v0 = std::max(q0 / n0 - row.mean_control * row.mean_control, 0.0) *
                          (static_cast<double>(n0) / std::max<double>(n0 - 1, 1));
        const double v1 = std::max(q1 / n1 - row.mean_treated * row.mean_treated, 0.0) *
                          (static_cast<double>(n1) / std::max<double>(n1 - 1, 1));
        row.sd_control = std::sqrt(v0);
        row.sd_treated = std::sqrt(v1);
        const double pooled = std::sqrt((v0 + v1) / 2.0);
        if (pooled > 0.0) {
            row.smd = (row.mean_treated - row.mean_control) / pooled;
        } else {
            row.smd = 0.0;
            row.zero_spread = true;
        }
        rows.push_back(row);
    }
    return rows;
}

// --- result serialization -------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Flat key=value record, one pair per line; parses back exactly.
inline std::string to_record(const TestResult& res, const TestConfig& cfg) {
    std::ostringstream os;
    os << "mode=" << mode_name(cfg.mode) << "\n";
    os << "theta_hat=" << format_double(res.theta_hat) << "\n";
    os << "se=" << format_double(res.se) << "\n";
    os << "p_value=" << format_double(res.p_value) << "\n";
    os << "n=" << res.n << "\n";
    os << "n_eff=" << res.n_eff << "\n";
    os << "n_trimmed=" << res.n_trimmed << "\n";
    os << "n_eff_kish=" << format_double(res.n_eff_kish) << "\n";
    os << "epsilon=" << format_double(cfg.epsilon) << "\n";
    os << "K=" << cfg.folds << "\n";
    os << "seed=" << cfg.seed << "\n";
    return os.str();
}

inline std::map<std::string, std::string> parse_record(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto pos = line.find('=');
        if (pos == std::string::npos)
            throw ValidationError("record: malformed line: " + line);
        kv[line.substr(0, pos)] = line.substr(pos + 1);
    }
    return kv;
}

inline std::string human_table(const TestResult& res, const TestConfig& cfg) {
    std::ostringstream os;
    char buf[160];
    os << "test of effect homogeneity across sites (" << mode_name(cfg.mode) << " mode)\n";
    std::snprintf(buf, sizeof(buf), "  theta_hat  %12.6f\n  se         %12.6f\n  p_value    %12.6f\n",
                  res.theta_hat, res.se, res.p_value);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "  n          %12lld\n  n_eff      %12lld\n  n_trimmed  %12lld\n",
                  static_cast<long long>(res.n), static_cast<long long>(res.n_eff),
                  static_cast<long long>(res.n_trimmed));
    os << buf;
    std::snprintf(buf, sizeof(buf), "  epsilon    %12.3f\n  folds      %12d\n", cfg.epsilon,
                  cfg.folds);
    os << buf;
    for (Eigen::Index z = 0; z < res.per_site_mean_dd.size(); ++z) {
        std::snprintf(buf, sizeof(buf), "  mean double difference, site %lld: %.6f\n",
                      static_cast<long long>(z + 1), res.per_site_mean_dd[z]);
        os << buf;
    }
    return os.str();
}

}  // namespace homtest
