// Command-line front end: run the homogeneity test on a delimited file,
// run Monte Carlo scenarios, or print a covariate balance table.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "homtest/homtest.hpp"

namespace {

using homtest::ColumnRef;

// Flags override config-file keys override defaults.
class Settings {
  public:
    explicit Settings(std::map<std::string, std::string> cfg) : cfg_(std::move(cfg)) {}

    std::string str(const CLI::Option* opt, const std::string& flag_value,
                    const std::string& key, const std::string& fallback = "") const {
        if (opt && opt->count() > 0) return flag_value;
        const auto it = cfg_.find(key);
        return it != cfg_.end() ? it->second : fallback;
    }
    double num(const CLI::Option* opt, double flag_value, const std::string& key,
               double fallback) const {
        if (opt && opt->count() > 0) return flag_value;
        const auto it = cfg_.find(key);
        return it != cfg_.end() ? std::stod(it->second) : fallback;
    }
    long long integer(const CLI::Option* opt, long long flag_value, const std::string& key,
                      long long fallback) const {
        if (opt && opt->count() > 0) return flag_value;
        const auto it = cfg_.find(key);
        return it != cfg_.end() ? std::stoll(it->second) : fallback;
    }

  private:
    std::map<std::string, std::string> cfg_;
};

struct SchemaFlags {
    std::string input, outcome, treatment, site, covariates, instrument, pre, post;
    CLI::Option *o_input = nullptr, *o_outcome = nullptr, *o_treatment = nullptr,
                *o_site = nullptr, *o_covariates = nullptr, *o_instrument = nullptr,
                *o_pre = nullptr, *o_post = nullptr;

    void add(CLI::App* app) {
        o_input = app->add_option("--input,-i", input, "delimited input file (csv or tsv)");
        o_outcome = app->add_option("--outcome,-y", outcome, "outcome column (name or #pos)");
        o_treatment = app->add_option("--treatment,-d", treatment, "treatment column");
        o_site = app->add_option("--site,-z", site, "site column");
        o_covariates = app->add_option("--covariates,-x", covariates,
                                       "comma-separated covariate columns, or 'rest'");
        o_instrument = app->add_option("--instrument,-w", instrument,
                                       "instrument column (clate mode)");
        o_pre = app->add_option("--pre", pre, "pre-period outcome column (did mode)");
        o_post = app->add_option("--post", post, "post-period outcome column (did mode)");
    }

    std::pair<std::string, homtest::IngestOptions> resolve(const Settings& s,
                                                           homtest::Mode mode,
                                                           long long min_site_size) const {
        homtest::IngestOptions opt;
        opt.mode = mode;
        opt.min_site_size = static_cast<Eigen::Index>(min_site_size);
        opt.schema.outcome = ColumnRef{s.str(o_outcome, outcome, "outcome")};
        opt.schema.treatment = ColumnRef{s.str(o_treatment, treatment, "treatment")};
        opt.schema.site = ColumnRef{s.str(o_site, site, "site")};
        opt.schema.covariates =
            homtest::parse_column_list(s.str(o_covariates, covariates, "covariates"));
        opt.schema.instrument = ColumnRef{s.str(o_instrument, instrument, "instrument")};
        opt.schema.outcome_pre = ColumnRef{s.str(o_pre, pre, "outcome_pre")};
        opt.schema.outcome_post = ColumnRef{s.str(o_post, post, "outcome_post")};
        const std::string path = s.str(o_input, input, "input");
        if (path.empty()) throw homtest::ValidationError("no input file given");
        return {path, opt};
    }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw homtest::IoError("cannot open output file: " + path);
    out << text;
}

int run_cmd_test(const Settings& s, const SchemaFlags& schema, const CLI::Option* o_mode,
                 const std::string& mode_flag, const CLI::Option* o_eps, double eps_flag,
                 const CLI::Option* o_folds, long long folds_flag, const CLI::Option* o_seed,
                 long long seed_flag, const CLI::Option* o_minsite, long long minsite_flag,
                 const CLI::Option* o_out, const std::string& out_flag) {
    const homtest::Mode mode = homtest::parse_mode(s.str(o_mode, mode_flag, "mode", "cate"));
    const long long min_site = s.integer(o_minsite, minsite_flag, "min_site_size", 0);
    const auto [path, opt] = schema.resolve(s, mode, min_site);
    homtest::IngestReport report;
    const homtest::SiteDataset data = homtest::ingest(path, opt, &report);
    std::cout << homtest::ingest_summary(report);

    homtest::TestConfig cfg;
    cfg.mode = mode;
    cfg.epsilon = s.num(o_eps, eps_flag, "epsilon", 0.05);
    cfg.folds = static_cast<int>(s.integer(o_folds, folds_flag, "folds", 5));
    cfg.seed = static_cast<uint64_t>(s.integer(o_seed, seed_flag, "seed", 1));
    const homtest::TestResult res = homtest::run_test(data, cfg);
    std::cout << homtest::human_table(res, cfg);
    const std::string record = homtest::to_record(res, cfg);
    const std::string out = s.str(o_out, out_flag, "out");
    if (!out.empty()) write_file(out, record);
    else std::cout << record;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"homogeneity test for treatment effects across sites"};
    app.require_subcommand(1);

    std::string config_path;

    // --- test -------------------------------------------------------------
    CLI::App* test = app.add_subcommand("test", "run the homogeneity test on a data file");
    test->add_option("--config,-c", config_path, "flat key=value config file");
    SchemaFlags test_schema;
    test_schema.add(test);
    std::string mode_flag = "cate", out_flag;
    double eps_flag = 0.05;
    long long folds_flag = 5, seed_flag = 1, minsite_flag = 0;
    CLI::Option* o_mode = test->add_option("--mode,-m", mode_flag, "cate | clate | did");
    CLI::Option* o_eps = test->add_option("--epsilon,-e", eps_flag, "propensity trim threshold");
    CLI::Option* o_folds = test->add_option("--folds,-K", folds_flag, "cross-fitting folds");
    CLI::Option* o_seed = test->add_option("--seed", seed_flag, "fold-assignment seed");
    CLI::Option* o_minsite =
        test->add_option("--min-site-size", minsite_flag, "drop sites smaller than this");
    CLI::Option* o_out = test->add_option("--out,-o", out_flag, "machine-readable record file");

    // --- simulate ---------------------------------------------------------
    CLI::App* sim = app.add_subcommand("simulate", "run Monte Carlo scenarios");
    std::string design_flag = "experimental", preset, sim_out, per_rep_path;
    double delta_flag = 0.0, rho_flag = 0.0, sim_eps = 0.05;
    std::vector<long long> n_list{2000};
    long long reps_flag = 1000, sim_seed = 1, sim_folds = 5, p_flag = 100;
    sim->add_option("--design", design_flag, "experimental | mixed");
    sim->add_option("--delta", delta_flag, "effect heterogeneity");
    sim->add_option("--rho", rho_flag, "confounding strength (mixed design)");
    sim->add_option("--n,-n", n_list, "sample sizes");
    sim->add_option("--reps,-R", reps_flag, "replications per scenario");
    sim->add_option("--seed", sim_seed, "scenario seed");
    sim->add_option("--folds,-K", sim_folds, "cross-fitting folds");
    sim->add_option("--epsilon,-e", sim_eps, "trim threshold");
    sim->add_option("--p", p_flag, "covariate dimension");
    double beta_value_flag = homtest::DgpConfig{}.beta_value;
    long long beta_s_flag = homtest::DgpConfig{}.beta_nonzeros;
    sim->add_option("--beta-value", beta_value_flag, "value of the nonzero coefficients");
    sim->add_option("--beta-s", beta_s_flag, "number of nonzero coefficients");
    sim->add_option("--preset", preset, "named scenario grid: size-power");
    sim->add_option("--out,-o", sim_out, "summary table file");
    sim->add_option("--per-rep", per_rep_path, "per-replication log file");

    // --- balance ----------------------------------------------------------
    CLI::App* bal = app.add_subcommand("balance", "covariate balance (SMD) between arms");
    bal->add_option("--config,-c", config_path, "flat key=value config file");
    SchemaFlags bal_schema;
    bal_schema.add(bal);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::map<std::string, std::string> cfg;
        if (!config_path.empty()) cfg = homtest::read_config(config_path);
        const Settings settings(std::move(cfg));

        if (test->parsed()) {
            return run_cmd_test(settings, test_schema, o_mode, mode_flag, o_eps, eps_flag,
                                o_folds, folds_flag, o_seed, seed_flag, o_minsite,
                                minsite_flag, o_out, out_flag);
        }

        if (sim->parsed()) {
            struct Scenario {
                homtest::Design design;
                double delta, rho;
            };
            std::vector<Scenario> scenarios;
            if (preset == "size-power") {
                scenarios = {{homtest::Design::experimental, 0.0, 0.0},
                             {homtest::Design::experimental, 1.0, 0.0},
                             {homtest::Design::mixed, 0.0, 0.0},
                             {homtest::Design::mixed, 0.0, 0.5},
                             {homtest::Design::mixed, 1.0, 0.0},
                             {homtest::Design::mixed, 1.0, 0.5}};
                n_list = {500, 2000, 8000};
            } else if (preset.empty()) {
                scenarios = {{homtest::parse_design(design_flag), delta_flag, rho_flag}};
            } else {
                throw homtest::ValidationError("unknown preset: " + preset);
            }
            std::ostringstream table;
            table << homtest::sim_report_header() << "\n";
            std::vector<homtest::TestResult> per_rep;
            for (const Scenario& sc : scenarios) {
                for (long long n : n_list) {
                    homtest::DgpConfig dgp;
                    dgp.design = sc.design;
                    dgp.delta = sc.delta;
                    dgp.rho = sc.rho;
                    dgp.n = static_cast<Eigen::Index>(n);
                    dgp.p = static_cast<int>(p_flag);
                    dgp.beta_value = beta_value_flag;
                    dgp.beta_nonzeros = static_cast<int>(beta_s_flag);
                    dgp.seed = static_cast<uint64_t>(sim_seed);
                    homtest::TestConfig tc;
                    tc.epsilon = sim_eps;
                    tc.folds = static_cast<int>(sim_folds);
                    const homtest::SimReport rep = homtest::run_scenario(
                        dgp, tc, static_cast<int>(reps_flag),
                        per_rep_path.empty() ? nullptr : &per_rep);
                    const std::string row = homtest::sim_report_row(rep);
                    table << row << "\n";
                    std::cout << row << std::endl;
                }
            }
            if (!sim_out.empty()) write_file(sim_out, table.str());
            if (!per_rep_path.empty()) {
                std::ostringstream log;
                log << "theta_hat\tse\tp_value\tn_eff\n";
                for (const homtest::TestResult& r : per_rep)
                    log << homtest::format_double(r.theta_hat) << "\t"
                        << homtest::format_double(r.se) << "\t"
                        << homtest::format_double(r.p_value) << "\t" << r.n_eff << "\n";
                write_file(per_rep_path, log.str());
            }
            return 0;
        }

        if (bal->parsed()) {
            const auto [path, opt] = bal_schema.resolve(settings, homtest::Mode::cate, 0);
            homtest::IngestReport report;
            const homtest::SiteDataset data = homtest::ingest(path, opt, &report);
            const auto rows = homtest::balance_table(data, report.covariate_names);
            std::printf("%-24s %12s %12s %12s %12s %10s\n", "covariate", "mean_ctrl",
                        "sd_ctrl", "mean_treat", "sd_treat", "smd");
            for (const auto& r : rows)
                std::printf("%-24s %12.4f %12.4f %12.4f %12.4f %10.4f\n", r.name.c_str(),
                            r.mean_control, r.sd_control, r.mean_treated, r.sd_treated, r.smd);
            return 0;
        }
    } catch (const homtest::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const homtest::DegenerateSampleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const homtest::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
