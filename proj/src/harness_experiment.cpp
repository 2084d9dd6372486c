#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "coarse/benchmarks.hpp"
#include "coarse/harness.hpp"
#include "coarse/surplus.hpp"

namespace coarse::harness {

namespace {

const std::set<std::string> kKnownMethods = {
    "coarse",          "kmeans-covariates", "kmeans-preferences",
    "kmeans-optimal-levels", "abtest",      "blanket"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        const size_t pos = s.find(',', start);
        if (pos == std::string::npos) {
            const std::string item = trim(s.substr(start));
            if (!item.empty()) out.push_back(item);
            break;
        }
        const std::string item = trim(s.substr(start, pos - start));
        if (!item.empty()) out.push_back(item);
        start = pos + 1;
    }
    return out;
}

FeasibleTreatment parse_arm(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw config_error("arm '" + s + "' must look like dim:value, e.g. 1:2.5");
    const int dim = static_cast<int>(util::parse_int(trim(s.substr(0, colon)))) - 1;
    if (dim < 0) throw config_error("arm '" + s + "': dim must be >= 1");
    return {static_cast<int32_t>(dim), util::parse_double(trim(s.substr(colon + 1)))};
}

std::vector<FeasibleTreatment> default_arms(const Population& pop) {
    std::vector<FeasibleTreatment> arms;
    const std::vector<std::vector<double>> levels = {{2, 3, 4, 5}, {5, 10, 15, 20}};
    for (int d = 0; d < pop.dims() && d < 2; ++d)
        for (double v : levels[d])
            if (v <= pop.upper_bound(d)) arms.push_back({static_cast<int32_t>(d), v});
    if (arms.empty())  // fall back to quartiles of the first dimension
        for (int q = 1; q <= 4; ++q)
            arms.push_back({0, pop.upper_bound(0) * q / 4.0});
    return arms;
}

}  // namespace

ExperimentSpec ExperimentSpec::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open experiment spec: " + path);
    ExperimentSpec spec;
    std::vector<std::string> arm_strings;
    std::string line;
    int64_t line_no = 0;
    bool seed_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) +
                               ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "population") spec.population = value;
            else if (key == "synth_preset") spec.synth_preset = value;
            else if (key == "synth_n") spec.synth_n = util::parse_int(value);
            else if (key == "seed") { spec.seed = static_cast<uint64_t>(util::parse_int(value)); seed_seen = true; }
            else if (key == "l_min") spec.l_min = static_cast<int>(util::parse_int(value));
            else if (key == "l_max") spec.l_max = static_cast<int>(util::parse_int(value));
            else if (key == "methods") spec.methods = split_list(value);
            else if (key == "arms") arm_strings = split_list(value);
            else if (key == "round_steps") {
                spec.round_steps.clear();
                for (const auto& s : split_list(value))
                    spec.round_steps.push_back(util::parse_double(s));
            }
            else if (key == "bootstrap_b") spec.bootstrap_b = static_cast<int>(util::parse_int(value));
            else if (key == "starts") spec.solver.num_starts = static_cast<int>(util::parse_int(value));
            else if (key == "tol") spec.solver.tolerance = util::parse_double(value);
            else if (key == "max_iter") spec.solver.max_iterations = static_cast<int>(util::parse_int(value));
            else if (key == "update") spec.solver.update_rule = lloyd::parse_update_rule(value);
            else if (key == "menu_cost") spec.solver.menu_cost = lloyd::MenuCost::parse(value);
            else if (key == "allow_holdout") spec.solver.allow_holdout = (value == "true" || value == "1");
            else if (key == "zero_intercept") spec.solver.zero_intercept = (value == "true" || value == "1");
            else if (key == "output_dir") spec.output_dir = value;
            else throw config_error("unknown key '" + key + "'");
        } catch (const data_error& e) {
            throw config_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!seed_seen) throw config_error(path + ": a 'seed' entry is mandatory");
    spec.solver.seed = spec.seed;
    for (const auto& s : arm_strings) spec.arms.push_back(parse_arm(s));
    for (const auto& m : spec.methods)
        if (!kKnownMethods.count(m)) throw config_error("unknown method name: '" + m + "'");
    if (spec.l_min < 1 || spec.l_max < spec.l_min)
        throw config_error("need 1 <= l_min <= l_max");
    for (double s : spec.round_steps)
        if (!(s > 0.0)) throw config_error("round_steps must be > 0");
    return spec;
}

std::string ExperimentSpec::canonical() const {
    std::string s;
    s += "population=" + population + "\n";
    s += "synth_preset=" + synth_preset + "\n";
    s += "synth_n=" + std::to_string(synth_n) + "\n";
    s += "seed=" + std::to_string(seed) + "\n";
    s += "l_min=" + std::to_string(l_min) + "\n";
    s += "l_max=" + std::to_string(l_max) + "\n";
    s += "methods=";
    for (size_t i = 0; i < methods.size(); ++i) s += (i ? "," : "") + methods[i];
    s += "\narms=";
    for (size_t i = 0; i < arms.size(); ++i)
        s += (i ? "," : "") + std::to_string(arms[i].dim + 1) + ":" + util::dtos(arms[i].value);
    s += "\nround_steps=";
    for (size_t i = 0; i < round_steps.size(); ++i)
        s += (i ? "," : "") + util::dtos(round_steps[i]);
    s += "\nbootstrap_b=" + std::to_string(bootstrap_b) + "\n";
    s += "starts=" + std::to_string(solver.num_starts) + "\n";
    s += "tol=" + util::dtos(solver.tolerance) + "\n";
    s += "max_iter=" + std::to_string(solver.max_iterations) + "\n";
    s += "update=" + std::string(lloyd::update_rule_name(solver.update_rule)) + "\n";
    s += "menu_cost=" + solver.menu_cost.to_string() + "\n";
    s += "allow_holdout=" + std::string(solver.allow_holdout ? "true" : "false") + "\n";
    s += "zero_intercept=" + std::string(solver.zero_intercept ? "true" : "false") + "\n";
    return s;
}

namespace {

struct MethodCell {
    double profit = 0.0;
    std::vector<FeasibleTreatment> treatments;
};

// One benchmark cell (method, l). Throws config_error on unusable requests.
MethodCell run_benchmark(const Population& pop, const std::string& method, int l,
                         std::span<const FeasibleTreatment> arms,
                         const lloyd::SolverConfig& solver, int threads) {
    MethodCell cell;
    if (method == "kmeans-covariates" || method == "kmeans-preferences" ||
        method == "kmeans-optimal-levels") {
        benchmarks::SegmentFeature feature = benchmarks::SegmentFeature::kCovariates;
        if (method == "kmeans-preferences")
            feature = benchmarks::SegmentFeature::kPreferences;
        else if (method == "kmeans-optimal-levels")
            feature = benchmarks::SegmentFeature::kOptimalLevels;
        auto bp = benchmarks::segment_then_personalize(pop, l, feature, solver.num_starts,
                                                       util::mix64(solver.seed, l), threads);
        cell.profit = bp.report.total_profit;
        cell.treatments = std::move(bp.policy.treatments);
    } else if (method == "abtest") {
        const int l_eff = std::min<int>(l, static_cast<int>(arms.size()));
        auto bp = benchmarks::ab_test_policy(pop, arms, l_eff, threads);
        cell.profit = bp.report.total_profit;
        cell.treatments = std::move(bp.policy.treatments);
    } else if (method == "blanket") {
        auto bp = benchmarks::blanket(pop, {}, {}, threads);
        cell.profit = bp.report.total_profit;
        cell.treatments = {bp.treatment};
    } else {
        throw config_error("unknown method name: '" + method + "'");
    }
    return cell;
}

std::function<double(const Population&)> method_profit_fn(const std::string& method, int l,
                                                          std::vector<FeasibleTreatment> arms,
                                                          lloyd::SolverConfig solver) {
    solver.threads = 1;  // replicates run in the worker pool
    solver.num_treatments = l;
    return [method, l, arms = std::move(arms), solver](const Population& p) -> double {
        if (method == "coarse") return lloyd::solve(p, solver).report.total_profit;
        return run_benchmark(p, method, l, arms, solver, 1).profit;
    };
}

}  // namespace

void run_experiment(const ExperimentSpec& spec, int threads, std::ostream& log) {
    namespace fs = std::filesystem;
    ExperimentSpec cfg = spec;
    cfg.solver.threads = threads;

    Population pop = cfg.population == "synth"
                         ? [&] {
                               if (cfg.synth_preset != "promo")
                                   throw config_error("unknown synth preset: '" +
                                                      cfg.synth_preset + "'");
                               return generate_population(promo_preset(cfg.synth_n, cfg.seed));
                           }()
                         : load_population(cfg.population);
    if (cfg.solver.zero_intercept) {
        pop.zero_intercepts();
        cfg.solver.zero_intercept = false;  // applied once, up front
    }
    if (cfg.arms.empty()) cfg.arms = default_arms(pop);
    for (const auto& a : cfg.arms) pop.check_treatment(a);

    fs::create_directories(cfg.output_dir);
    fs::create_directories(cfg.output_dir + "/traces");

    log << "population: n=" << pop.size() << " dims=" << pop.dims() << "\n";

    const granular::GranularPolicy gran_policy = granular::granular_policy(pop, threads);
    const double granular_profit = gran_policy.report.total_profit;
    log << "granular ceiling: " << util::dtos(granular_profit) << " ("
        << gran_policy.unique_treatments << " unique treatments at 3 sig figs)\n";

    // benchmark cells first; their treatment sets become solver seeds
    std::vector<std::string> bench_methods;
    for (const auto& m : cfg.methods)
        if (m != "coarse") bench_methods.push_back(m);
    std::map<std::string, std::map<int, MethodCell>> bench;
    for (const auto& m : bench_methods)
        for (int l = cfg.l_min; l <= cfg.l_max; ++l) {
            bench[m][l] = run_benchmark(pop, m, l, cfg.arms, cfg.solver, threads);
            log << m << " l=" << l << " profit=" << util::dtos(bench[m][l].profit) << "\n";
        }

    lloyd::SeedProvider seeds = [&](int l) {
        std::vector<lloyd::SeedSet> out;
        for (const auto& m : bench_methods) {
            const auto it = bench.at(m).find(l);
            if (it != bench.at(m).end()) out.push_back(it->second.treatments);
        }
        return out;
    };
    const bool want_coarse =
        std::find(cfg.methods.begin(), cfg.methods.end(), "coarse") != cfg.methods.end();
    std::vector<lloyd::SolveResult> chain;
    if (want_coarse) {
        chain = lloyd::solve_chain(pop, cfg.solver, cfg.l_max, seeds);
        for (int l = cfg.l_min; l <= cfg.l_max; ++l)
            log << "coarse l=" << l
                << " profit=" << util::dtos(chain[l - 1].report.total_profit) << "\n";
    }

    // (a)+(b) profit vs L with the granular ceiling and ratio columns
    {
        std::ofstream out(cfg.output_dir + "/profit_vs_l.csv");
        out << "l";
        for (const auto& m : cfg.methods) out << "," << m;
        out << ",granular";
        for (const auto& m : cfg.methods) out << ",ratio_" << m;
        out << "\n";
        for (int l = cfg.l_min; l <= cfg.l_max; ++l) {
            out << l;
            std::vector<double> profits;
            for (const auto& m : cfg.methods)
                profits.push_back(m == "coarse" ? chain[l - 1].report.total_profit
                                                : bench.at(m).at(l).profit);
            for (double p : profits) out << "," << util::dtos(p);
            out << "," << util::dtos(granular_profit);
            for (double p : profits) out << "," << util::dtos(p / granular_profit);
            out << "\n";
        }
    }

    // (c) rounding comparison: ex-ante chains from coarse to fine steps, each
    // warm-started from the previous step's solutions; ex-post from the
    // unrounded chain
    if (want_coarse && !cfg.round_steps.empty()) {
        std::vector<double> steps = cfg.round_steps;
        std::sort(steps.begin(), steps.end(), std::greater<>());
        std::map<double, std::vector<lloyd::SolveResult>> exante;
        const std::vector<lloyd::SolveResult>* prev = nullptr;
        for (double step : steps) {
            lloyd::SolverConfig rc = cfg.solver;
            rc.round_step = step;
            lloyd::SeedProvider rounded_seeds = [&, prev](int l) {
                std::vector<lloyd::SeedSet> out;
                if (prev) out.push_back((*prev)[l - 1].policy.treatments);
                out.push_back(chain[l - 1].policy.treatments);
                return out;
            };
            exante[step] = lloyd::solve_chain(pop, rc, cfg.l_max, rounded_seeds);
            prev = &exante[step];
        }
        std::sort(steps.begin(), steps.end());  // emit finest first

        std::ofstream out(cfg.output_dir + "/rounding.csv");
        out << "l";
        for (double s : steps) out << ",exante_" << util::dtos(s);
        for (double s : steps)
            out << ",expost_" << util::dtos(s) << ",expost_effective_" << util::dtos(s);
        out << "\n";
        for (int l = cfg.l_min; l <= cfg.l_max; ++l) {
            out << l;
            for (double s : steps)
                out << "," << util::dtos(exante[s][l - 1].report.total_profit);
            for (double s : steps) {
                const auto ep = lloyd::round_policy_expost(pop, chain[l - 1].policy, s,
                                                           cfg.solver.allow_holdout, threads);
                out << "," << util::dtos(ep.report.total_profit) << ","
                    << ep.effective_treatments;
            }
            out << "\n";
        }
    }

    // (d) surplus vs L for the coarse policy
    if (want_coarse) {
        const granular::GranularSolution gran = granular::solve(pop, threads);
        std::ofstream out(cfg.output_dir + "/surplus_vs_l.csv");
        out << "l,dts,dts_pos_share,dcs,dcs_pos_share,dps,dps_pos_share\n";
        for (int l = cfg.l_min; l <= cfg.l_max; ++l) {
            const auto rep =
                surplus::surplus_decomposition(pop, chain[l - 1].policy, gran, {}, threads);
            out << l << "," << util::dtos(rep.total_dts) << ","
                << util::dtos(rep.share_dts_pos) << "," << util::dtos(rep.total_dcs) << ","
                << util::dtos(rep.share_dcs_pos) << "," << util::dtos(rep.total_dps) << ","
                << util::dtos(rep.share_dps_pos) << "\n";
        }
    }

    // (e) solve traces
    if (want_coarse)
        for (int l = cfg.l_min; l <= cfg.l_max; ++l)
            save_trace(chain[l - 1].trace,
                       cfg.output_dir + "/traces/coarse_l" + std::to_string(l) + ".jsonl");

    if (cfg.bootstrap_b > 0) {
        std::ofstream summary(cfg.output_dir + "/bootstrap_summary.csv");
        std::ofstream reps(cfg.output_dir + "/bootstrap_replicates.csv");
        summary << "method,l,mean,sd\n";
        reps << "method,l,replicate,profit\n";
        for (const auto& m : cfg.methods)
            for (int l = cfg.l_min; l <= cfg.l_max; ++l) {
                const auto res = bootstrap_second_step(
                    pop, cfg.bootstrap_b, method_profit_fn(m, l, cfg.arms, cfg.solver),
                    util::mix64(cfg.seed, util::fnv1a64(m), static_cast<uint64_t>(l)),
                    threads);
                summary << m << "," << l << "," << util::dtos(res.mean) << ","
                        << util::dtos(res.sd) << "\n";
                for (size_t r = 0; r < res.replicates.size(); ++r)
                    reps << m << "," << l << "," << r << ","
                         << util::dtos(res.replicates[r]) << "\n";
                log << "bootstrap " << m << " l=" << l << " mean=" << util::dtos(res.mean)
                    << " sd=" << util::dtos(res.sd) << "\n";
            }
    }

    // manifest: everything emitted traces back to (seed, config hash)
    {
        nlohmann::ordered_json j;
        j["schema"] = "experiment-manifest-v1";
        j["seed"] = cfg.seed;
        const std::string canon = cfg.canonical();
        j["config"] = canon;
        j["config_hash"] = util::fnv1a64(canon);
        j["population"] = cfg.population;
        j["n"] = pop.size();
        j["dims"] = pop.dims();
        j["granular_profit"] = granular_profit;
        j["granular_unique_treatments"] = gran_policy.unique_treatments;
        j["kernel_backend"] = kernels::backend_name(kernels::active_backend());
        auto& files = j["files"] = nlohmann::ordered_json::array();
        files.push_back("profit_vs_l.csv");
        if (want_coarse && !cfg.round_steps.empty()) files.push_back("rounding.csv");
        if (want_coarse) files.push_back("surplus_vs_l.csv");
        if (cfg.bootstrap_b > 0) {
            files.push_back("bootstrap_summary.csv");
            files.push_back("bootstrap_replicates.csv");
        }
        if (want_coarse)
            for (int l = cfg.l_min; l <= cfg.l_max; ++l)
                files.push_back("traces/coarse_l" + std::to_string(l) + ".jsonl");
        std::ofstream out(cfg.output_dir + "/manifest.json");
        out << j.dump(1) << "\n";
    }
    log << "report bundle written to " << cfg.output_dir << "\n";
}

}  // namespace coarse::harness
