// Command-line driver: one subcommand per workflow step, from synthetic data
// generation through solving, oracles, benchmarks, and full experiments.
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "coarse/benchmarks.hpp"
#include "coarse/harness.hpp"
#include "coarse/oracle.hpp"
#include "coarse/surplus.hpp"

namespace {

using namespace coarse;

struct SolverFlags {
    lloyd::SolverConfig config;
    void attach(CLI::App* cmd) {
        cmd->add_option("--segments,-L", config.num_treatments, "number of treatments");
        cmd->add_option("--starts", config.num_starts, "multistart count");
        cmd->add_option("--tol", config.tolerance, "treatment-value change tolerance");
        cmd->add_option("--max-iter", config.max_iterations, "iteration cap");
        cmd->add_option("--update", update_rule, "update rule: exact|barycenter");
        cmd->add_option("--round-step", config.round_step, "ex-ante rounding step (0 = off)");
        cmd->add_option("--menu-cost", menu_cost, "none | linear:delta | quadratic:delta");
        cmd->add_option("--seed", config.seed, "random seed");
        cmd->add_option("--threads", config.threads, "worker threads");
        cmd->add_flag("--allow-holdout", config.allow_holdout,
                      "send negative-profit individuals to a no-treatment cell");
        cmd->add_flag("--zero-intercept", config.zero_intercept,
                      "force alpha = 0 before solving");
    }
    lloyd::SolverConfig resolve() {
        config.update_rule = lloyd::parse_update_rule(update_rule);
        config.menu_cost = lloyd::MenuCost::parse(menu_cost);
        return config;
    }
    std::string update_rule = "exact";
    std::string menu_cost = "none";
};

std::string config_echo(const lloyd::SolverConfig& c) {
    std::string s;
    s += "segments=" + std::to_string(c.num_treatments);
    s += " starts=" + std::to_string(c.num_starts);
    s += " tol=" + util::dtos(c.tolerance);
    s += " max_iter=" + std::to_string(c.max_iterations);
    s += " update=" + std::string(lloyd::update_rule_name(c.update_rule));
    s += " round_step=" + util::dtos(c.round_step);
    s += " menu_cost=" + c.menu_cost.to_string();
    s += " allow_holdout=" + std::string(c.allow_holdout ? "true" : "false");
    s += " zero_intercept=" + std::string(c.zero_intercept ? "true" : "false");
    return s;
}

std::vector<FeasibleTreatment> parse_arms(const std::vector<std::string>& items) {
    std::vector<FeasibleTreatment> arms;
    for (const auto& s : items) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
            throw config_error("arm '" + s + "' must look like dim:value");
        arms.push_back({static_cast<int32_t>(util::parse_int(s.substr(0, colon)) - 1),
                        util::parse_double(s.substr(colon + 1))});
    }
    return arms;
}

void print_report(const ProfitReport& report) {
    std::cout << "total_profit=" << util::dtos(report.total_profit)
              << " total_regret=" << util::dtos(report.total_regret)
              << " squared_regret=" << util::dtos(report.squared_regret) << "\n";
    for (size_t k = 0; k < report.per_segment.size(); ++k) {
        const auto& s = report.per_segment[k];
        std::cout << "  segment " << (k + 1) << ": dim=" << (s.treatment.dim + 1)
                  << " value=" << util::dtos(s.treatment.value) << " members=" << s.members
                  << " profit=" << util::dtos(s.profit) << "\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"coarse treatment personalization: pick L unique single-dimension "
                 "treatments and assign every individual to one of them"};
    app.require_subcommand(1);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "generate a synthetic population");
    int64_t synth_n = 10000;
    uint64_t synth_seed = 0;
    bool synth_seed_set = false;
    std::string synth_out, synth_preset = "promo";
    int synth_covariates = 5;
    bool synth_unlinked = false;
    synth->add_option("--n", synth_n, "population size");
    synth->add_option("--seed", synth_seed, "random seed (mandatory)")
        ->required()
        ->each([&](const std::string&) { synth_seed_set = true; });
    synth->add_option("--preset", synth_preset, "generator preset (promo)");
    synth->add_option("--covariates", synth_covariates, "covariate count");
    synth->add_flag("--unlinked-covariates", synth_unlinked,
                    "covariates independent of the response parameters");
    synth->add_option("--output,-o", synth_out, "population CSV path")->required();

    // --- fit ---
    auto* fit = app.add_subcommand("fit", "fit response curves from per-arm estimates");
    std::string fit_arms, fit_costs, fit_out, fit_report;
    std::vector<double> fit_bounds;
    double beta_floor = 1e-6;
    bool keep_all = false;
    fit->add_option("--arms", fit_arms, "arm estimates CSV (id,dim,level,cate)")->required();
    fit->add_option("--costs", fit_costs, "cost scales CSV (id,cost_scale_1..D)");
    fit->add_option("--upper-bounds", fit_bounds, "per-dimension upper bounds")->required();
    fit->add_option("--beta-floor", beta_floor, "responsiveness floor");
    fit->add_flag("--keep-all", keep_all, "skip the responsiveness filter");
    fit->add_option("--output,-o", fit_out, "population CSV path")->required();
    fit->add_option("--report", fit_report, "per-individual fit CSV path");

    // --- validate ---
    auto* validate = app.add_subcommand("validate", "held-out arm validation of the fit");
    std::string val_arms, val_out;
    int val_dim = 1;
    uint64_t val_seed = 0;
    validate->add_option("--arms", val_arms, "arm estimates CSV")->required();
    validate->add_option("--dim", val_dim, "dimension (1-based)");
    validate->add_option("--seed", val_seed, "seed for the holdout draw")->required();
    validate->add_option("--output,-o", val_out, "held-out pair CSV path");

    // --- solve ---
    auto* solve = app.add_subcommand("solve", "run the segmentation solver");
    std::string solve_pop, solve_out, solve_trace;
    int menu_lmax = 0;
    SolverFlags solve_flags;
    solve->add_option("--population,-p", solve_pop, "population CSV")->required();
    solve_flags.attach(solve);
    solve->add_option("--choose-segments", menu_lmax,
                      "pick L in 1..this by profit net of the menu cost");
    solve->add_option("--output,-o", solve_out, "policy JSON path");
    solve->add_option("--trace", solve_trace, "iteration trace JSONL path");

    // --- oracle ---
    auto* oracle_cmd = app.add_subcommand("oracle", "brute-force and timing oracles");
    std::string oracle_pop, oracle_mode = "grid", oracle_out;
    int oracle_l = 1, oracle_g = 10;
    int64_t oracle_cap = 10'000'000;
    bool oracle_zero = false;
    SolverFlags oracle_flags;
    oracle_cmd->add_option("--population,-p", oracle_pop, "population CSV")->required();
    oracle_cmd->add_option("--mode", oracle_mode, "grid | refine | speed");
    oracle_cmd->add_option("--segments,-L", oracle_l, "number of treatments");
    oracle_cmd->add_option("--grid-points", oracle_g, "grid points per dimension");
    oracle_cmd->add_option("--cap", oracle_cap, "enumeration cap");
    oracle_cmd->add_flag("--include-zero", oracle_zero, "include level 0 in the grid");
    oracle_cmd->add_option("--seed", oracle_flags.config.seed, "random seed");
    oracle_cmd->add_option("--threads", oracle_flags.config.threads, "worker threads");
    oracle_cmd->add_option("--starts", oracle_flags.config.num_starts, "solver starts");
    oracle_cmd->add_option("--output,-o", oracle_out, "policy JSON path");

    // --- benchmark ---
    auto* bench = app.add_subcommand("benchmark", "classical segmentation baselines");
    std::string bench_pop, bench_method = "blanket", bench_out;
    int bench_l = 1;
    std::vector<std::string> bench_arms;
    int bench_starts = 5;
    uint64_t bench_seed = 0;
    int bench_threads = 1;
    std::vector<double> bench_fixed;
    bench->add_option("--population,-p", bench_pop, "population CSV")->required();
    bench->add_option("--method", bench_method,
                      "kmeans-covariates|kmeans-preferences|kmeans-optimal-levels|abtest|blanket");
    bench->add_option("--segments,-L", bench_l, "clusters / subset size");
    bench->add_option("--arms", bench_arms, "A/B arms as dim:value");
    bench->add_option("--fixed", bench_fixed,
                      "fixed blanket as 'dim value' (e.g. --fixed 2 10)")
        ->expected(2);
    bench->add_option("--starts", bench_starts, "k-means starts");
    bench->add_option("--seed", bench_seed, "random seed");
    bench->add_option("--threads", bench_threads, "worker threads");
    bench->add_option("--output,-o", bench_out, "policy JSON path");

    // --- surplus ---
    auto* surplus_cmd = app.add_subcommand("surplus", "welfare decomposition of a policy");
    std::string sur_pop, sur_policy, sur_out;
    int sur_threads = 1;
    surplus_cmd->add_option("--population,-p", sur_pop, "population CSV")->required();
    surplus_cmd->add_option("--policy", sur_policy, "policy JSON")->required();
    surplus_cmd->add_option("--threads", sur_threads, "worker threads");
    surplus_cmd->add_option("--output,-o", sur_out, "per-treatment surplus CSV path");

    // --- bootstrap ---
    auto* boot = app.add_subcommand("bootstrap", "second-step bootstrap of a method");
    std::string boot_pop, boot_method = "coarse", boot_out;
    int boot_b = 100;
    std::vector<std::string> boot_arms;
    bool boot_identity = false;
    SolverFlags boot_flags;
    boot->add_option("--population,-p", boot_pop, "population CSV")->required();
    boot->add_option("--method", boot_method, "coarse|kmeans-*|abtest|blanket");
    boot->add_option("--b", boot_b, "replicate count");
    boot->add_option("--arms", boot_arms, "A/B arms as dim:value");
    boot->add_flag("--identity", boot_identity, "identity resample (testing hook)");
    boot_flags.attach(boot);
    boot->add_option("--output,-o", boot_out, "replicate CSV path");

    // --- experiment ---
    auto* exp = app.add_subcommand("experiment", "run a full report bundle from a spec file");
    std::string exp_spec;
    int exp_threads = 1;
    exp->add_option("--spec", exp_spec, "experiment spec (key = value lines)")->required();
    exp->add_option("--threads", exp_threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        if (synth_preset != "promo")
            throw config_error("unknown preset: '" + synth_preset + "'");
        harness::SynthConfig cfg = harness::promo_preset(synth_n, synth_seed);
        cfg.covariate_count = synth_covariates;
        cfg.covariates_linked = !synth_unlinked;
        const Population pop = harness::generate_population(cfg);
        harness::save_population(pop, synth_out);
        std::cout << "wrote " << pop.size() << " individuals to " << synth_out << "\n";
        return 0;
    }

    if (fit->parsed()) {
        const auto arms = harness::load_arm_estimates(fit_arms);
        TreatmentSpace space{fit_bounds, {}};
        std::vector<std::vector<double>> scales;
        if (!fit_costs.empty()) {
            scales = harness::load_cost_scales(fit_costs, arms.dims(), arms.ids);
        } else {
            scales.assign(arms.dims(), std::vector<double>(arms.size(), 1.0));
        }
        auto fitted = calibrate::fit_population(arms, space, scales);
        for (int d = 0; d < fitted.population.dims(); ++d)
            std::cout << "dimension " << (d + 1)
                      << ": mean R^2 = " << util::dtos(fitted.mean_r_squared[d]) << "\n";
        if (!fit_report.empty()) {
            std::ofstream rep(fit_report);
            rep << "id";
            for (int d = 0; d < arms.dims(); ++d)
                rep << ",alpha_" << (d + 1) << ",beta_" << (d + 1) << ",r2_" << (d + 1);
            rep << "\n";
            for (int64_t i = 0; i < fitted.population.size(); ++i) {
                rep << fitted.population.ids()[i];
                for (int d = 0; d < arms.dims(); ++d)
                    rep << ',' << util::dtos(fitted.population.alpha(d)[i]) << ','
                        << util::dtos(fitted.population.beta(d)[i]) << ','
                        << util::dtos(fitted.r_squared[d][i]);
                rep << "\n";
            }
        }
        if (keep_all) {
            harness::save_population(fitted.population, fit_out);
            std::cout << "kept all " << fitted.population.size() << " individuals\n";
        } else {
            const auto filtered = calibrate::filter_population(fitted.population, beta_floor);
            harness::save_population(filtered.kept, fit_out);
            std::cout << "kept " << filtered.kept.size() << ", dropped "
                      << filtered.dropped_ids.size() << " unresponsive individuals\n";
        }
        return 0;
    }

    if (validate->parsed()) {
        const auto arms = harness::load_arm_estimates(val_arms);
        const int dim = val_dim - 1;
        if (dim < 0 || dim >= arms.dims()) throw config_error("--dim out of range");
        const auto k = static_cast<int32_t>(arms.levels[dim].size());
        std::mt19937_64 rng(val_seed);
        std::uniform_int_distribution<int32_t> draw(0, k - 1);
        std::vector<int32_t> holdout(arms.size());
        for (auto& h : holdout) h = draw(rng);
        const auto result = calibrate::honest_validate(arms, dim, holdout);
        std::cout << "held-out correlation (dimension " << val_dim
                  << "): " << util::dtos(result.correlation) << "\n";
        if (!val_out.empty()) {
            std::ofstream out(val_out);
            out << "id,holdout_level,predicted,actual\n";
            for (int64_t i = 0; i < arms.size(); ++i)
                out << arms.ids[i] << ',' << util::dtos(arms.levels[dim][holdout[i]]) << ','
                    << util::dtos(result.predicted[i]) << ','
                    << util::dtos(result.actual[i]) << "\n";
        }
        return 0;
    }

    if (solve->parsed()) {
        const Population pop = harness::load_population(solve_pop);
        lloyd::SolverConfig cfg = solve_flags.resolve();
        lloyd::SolveResult result;
        if (menu_lmax > 0) {
            auto menu = lloyd::solve_menu(pop, cfg, menu_lmax);
            std::cout << "chose L=" << menu.best_l << " by profit net of menu cost\n";
            for (size_t l = 1; l <= menu.net_profit_by_l.size(); ++l)
                std::cout << "  L=" << l
                          << " net_profit=" << util::dtos(menu.net_profit_by_l[l - 1])
                          << "\n";
            cfg.num_treatments = menu.best_l;
            result = std::move(menu.result);
        } else {
            result = lloyd::solve(pop, cfg);
        }
        std::cout << "termination: " << result.trace.termination_reason << " after "
                  << result.trace.iterations.size() << " iterations (start "
                  << result.trace.winning_start << ")\n";
        if (cfg.menu_cost.kind != lloyd::MenuCost::Kind::kNone)
            std::cout << "objective with menu cost: " << util::dtos(result.objective)
                      << "\n";
        print_report(result.report);
        if (result.policy.holdout_count > 0)
            std::cout << "holdout cell: " << result.policy.holdout_count
                      << " individuals\n";
        if (!solve_out.empty())
            harness::save_policy({pop.space(), result.policy, cfg.seed, config_echo(cfg)},
                                 solve_out);
        if (!solve_trace.empty()) harness::save_trace(result.trace, solve_trace);
        return 0;
    }

    if (oracle_cmd->parsed()) {
        const Population pop = harness::load_population(oracle_pop);
        lloyd::SolverConfig cfg = oracle_flags.resolve();
        cfg.num_treatments = oracle_l;
        if (oracle_mode == "grid") {
            oracle::GridConfig gc{oracle_g, oracle_zero, oracle_cap, cfg.threads};
            const auto result = oracle::grid_solve(pop, oracle_l, gc);
            print_report(result.report);
            if (!oracle_out.empty())
                harness::save_policy({pop.space(), result.policy, cfg.seed, "oracle=grid"},
                                     oracle_out);
        } else if (oracle_mode == "refine") {
            oracle::RefineConfig rc;
            rc.seed = cfg.seed;
            rc.threads = cfg.threads;
            const auto result = oracle::refine_solve(pop, oracle_l, rc);
            print_report(result.report);
            if (!oracle_out.empty())
                harness::save_policy({pop.space(), result.policy, cfg.seed, "oracle=refine"},
                                     oracle_out);
        } else if (oracle_mode == "speed") {
            const auto report = oracle::speed_benchmark(pop, oracle_l, oracle_g, cfg);
            std::cout << "solver: " << util::dtos(report.lloyd_seconds) << " s, profit "
                      << util::dtos(report.lloyd_profit) << "\n";
            std::cout << "grid:   " << util::dtos(report.grid_seconds) << " s, profit "
                      << util::dtos(report.grid_profit) << "\n";
            std::cout << "speedup: " << util::dtos(report.ratio) << "x (n=" << pop.size()
                      << ", L=" << oracle_l << ", G=" << oracle_g
                      << ", threads=" << cfg.threads << ")\n";
        } else {
            throw config_error("unknown oracle mode: '" + oracle_mode + "'");
        }
        return 0;
    }

    if (bench->parsed()) {
        const Population pop = harness::load_population(bench_pop);
        SegmentedPolicy policy;
        ProfitReport report;
        if (bench_method == "blanket") {
            std::optional<int> dim;
            std::optional<double> value;
            if (!bench_fixed.empty()) {
                dim = static_cast<int>(bench_fixed[0]) - 1;
                value = bench_fixed[1];
            }
            auto result = benchmarks::blanket(pop, dim, value, bench_threads);
            std::cout << "blanket: dim=" << (result.treatment.dim + 1)
                      << " value=" << util::dtos(result.treatment.value) << "\n";
            policy = std::move(result.policy);
            report = std::move(result.report);
        } else if (bench_method == "abtest") {
            auto arms = parse_arms(bench_arms);
            if (arms.empty()) throw config_error("abtest needs --arms");
            auto result = benchmarks::ab_test_policy(pop, arms, bench_l, bench_threads);
            policy = std::move(result.policy);
            report = std::move(result.report);
        } else {
            benchmarks::SegmentFeature feature;
            if (bench_method == "kmeans-covariates")
                feature = benchmarks::SegmentFeature::kCovariates;
            else if (bench_method == "kmeans-preferences")
                feature = benchmarks::SegmentFeature::kPreferences;
            else if (bench_method == "kmeans-optimal-levels")
                feature = benchmarks::SegmentFeature::kOptimalLevels;
            else
                throw config_error("unknown method: '" + bench_method + "'");
            auto result = benchmarks::segment_then_personalize(pop, bench_l, feature,
                                                               bench_starts, bench_seed,
                                                               bench_threads);
            policy = std::move(result.policy);
            report = std::move(result.report);
        }
        print_report(report);
        if (!bench_out.empty())
            harness::save_policy(
                {pop.space(), policy, bench_seed, "benchmark=" + bench_method}, bench_out);
        return 0;
    }

    if (surplus_cmd->parsed()) {
        const Population pop = harness::load_population(sur_pop);
        const auto file = harness::load_policy(sur_policy);
        const auto gran = granular::solve(pop, sur_threads);
        const auto report =
            surplus::surplus_decomposition(pop, file.policy, gran, {}, sur_threads);
        std::cout << "dTS=" << util::dtos(report.total_dts)
                  << " dCS=" << util::dtos(report.total_dcs)
                  << " dPS=" << util::dtos(report.total_dps) << "\n";
        std::cout << "share positive: dTS=" << util::dtos(report.share_dts_pos)
                  << " dCS=" << util::dtos(report.share_dcs_pos)
                  << " dPS=" << util::dtos(report.share_dps_pos) << "\n";
        if (!sur_out.empty()) {
            std::ofstream out(sur_out);
            out << "treatment,dim,value,members,mean_dts,dts_pos_share,mean_dcs,"
                   "dcs_pos_share,mean_dps,dps_pos_share\n";
            for (size_t k = 0; k < report.per_treatment.size(); ++k) {
                const auto& t = report.per_treatment[k];
                out << (k + 1) << ',' << (t.treatment.dim + 1) << ','
                    << util::dtos(t.treatment.value) << ',' << t.members << ','
                    << util::dtos(t.mean_dts) << ',' << util::dtos(t.share_dts_pos) << ','
                    << util::dtos(t.mean_dcs) << ',' << util::dtos(t.share_dcs_pos) << ','
                    << util::dtos(t.mean_dps) << ',' << util::dtos(t.share_dps_pos) << "\n";
            }
        }
        return 0;
    }

    if (boot->parsed()) {
        const Population pop = harness::load_population(boot_pop);
        lloyd::SolverConfig cfg = boot_flags.resolve();
        auto arms = parse_arms(boot_arms);
        if (arms.empty() && boot_method == "abtest")
            throw config_error("abtest bootstrap needs --arms");
        const int l = cfg.num_treatments;
        std::function<double(const Population&)> fn;
        if (boot_method == "coarse") {
            lloyd::SolverConfig inner = cfg;
            inner.threads = 1;
            fn = [inner](const Population& p) {
                return lloyd::solve(p, inner).report.total_profit;
            };
        } else if (boot_method == "blanket") {
            fn = [](const Population& p) {
                return benchmarks::blanket(p).report.total_profit;
            };
        } else if (boot_method == "abtest") {
            fn = [arms, l](const Population& p) {
                return benchmarks::ab_test_policy(p, arms, std::min<int>(l, arms.size()))
                    .report.total_profit;
            };
        } else {
            benchmarks::SegmentFeature feature;
            if (boot_method == "kmeans-covariates")
                feature = benchmarks::SegmentFeature::kCovariates;
            else if (boot_method == "kmeans-preferences")
                feature = benchmarks::SegmentFeature::kPreferences;
            else if (boot_method == "kmeans-optimal-levels")
                feature = benchmarks::SegmentFeature::kOptimalLevels;
            else
                throw config_error("unknown method: '" + boot_method + "'");
            const int starts = cfg.num_starts;
            const uint64_t seed = cfg.seed;
            fn = [feature, l, starts, seed](const Population& p) {
                return benchmarks::segment_then_personalize(p, l, feature, starts, seed)
                    .report.total_profit;
            };
        }
        const auto result = harness::bootstrap_second_step(
            pop, boot_b, fn, util::mix64(cfg.seed, 0xB007), cfg.threads, boot_identity);
        std::cout << "replicates=" << boot_b << " mean=" << util::dtos(result.mean)
                  << " sd=" << util::dtos(result.sd) << "\n";
        if (!boot_out.empty()) {
            std::ofstream out(boot_out);
            out << "replicate,profit\n";
            for (size_t r = 0; r < result.replicates.size(); ++r)
                out << r << ',' << util::dtos(result.replicates[r]) << "\n";
        }
        return 0;
    }

    if (exp->parsed()) {
        const auto spec = harness::ExperimentSpec::parse_file(exp_spec);
        harness::run_experiment(spec, exp_threads, std::cout);
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const coarse::config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const coarse::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
