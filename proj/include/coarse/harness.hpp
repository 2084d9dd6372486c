#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "coarse/calibrate.hpp"
#include "coarse/lloyd.hpp"
#include "coarse/types.hpp"

namespace coarse::harness {

// --- population synthesis ---------------------------------------------------

struct LogNormalSpec {
    double location = 0.0;
    double scale = 1.0;
};

struct NormalSpec {
    double mean = 0.0;
    double stddev = 1.0;
};

struct CostScaleSpec {
    enum class Kind { kConstant, kLogNormalOver100 };
    Kind kind = Kind::kConstant;
    double value = 1.0;    // kConstant
    LogNormalSpec spend;   // kLogNormalOver100: scale = spend draw / 100
};

struct SynthConfig {
    int64_t n = 0;
    int dims = 2;
    std::vector<double> upper_bounds;
    std::vector<LogNormalSpec> beta_dist;   // per dimension
    std::vector<CostScaleSpec> cost_dist;   // per dimension
    NormalSpec alpha_dist{0.0, 0.25};
    uint64_t seed = 0;
    bool seed_set = false;  // seed is mandatory
    int covariate_count = 0;
    bool covariates_linked = false;  // first dims covariates track beta + noise

    void validate() const;
};

// Two-dimensional promotion setting: dollar-off up to 5 (unit cost), and
// percentage-off up to 20 with scale = past spend / 100.
SynthConfig promo_preset(int64_t n, uint64_t seed);

Population generate_population(const SynthConfig& config);

// --- files -------------------------------------------------------------------

// Delimited text with header id,alpha_1..D,beta_1..D,cost_scale_1..D[,x_*].
// Bounds are carried in a '# upper_bounds=' comment line.
Population load_population(const std::string& path);
void save_population(const Population& pop, const std::string& path);

// Long-format CSV: id,dim,level,cate. Arm levels must be shared within a
// dimension across individuals.
calibrate::ArmEstimates load_arm_estimates(const std::string& path);
void save_arm_estimates(const calibrate::ArmEstimates& arms, const std::string& path);

// Wide CSV id,cost_scale_1..D. Empty cells are median-imputed per dimension.
std::vector<std::vector<double>> load_cost_scales(const std::string& path, int dims,
                                                  const std::vector<std::string>& ids);

struct PolicyFile {
    TreatmentSpace space;
    SegmentedPolicy policy;
    uint64_t seed = 0;
    std::string config_echo;
};

void save_policy(const PolicyFile& file, const std::string& path);
PolicyFile load_policy(const std::string& path);

void save_trace(const lloyd::SolveTrace& trace, const std::string& path);  // JSON lines

// --- bootstrap ----------------------------------------------------------------

struct BootstrapResult {
    std::vector<double> replicates;
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation; 0 when B < 2
};

// Resample individuals with replacement, holding fitted parameters fixed, and
// rerun only the segmentation step through `method`.
BootstrapResult bootstrap_second_step(const Population& pop, int b,
                                      const std::function<double(const Population&)>& method,
                                      uint64_t seed, int threads = 1,
                                      bool identity_resample = false);

// --- experiment orchestration ---------------------------------------------------

struct ExperimentSpec {
    std::string population = "synth";  // "synth" or a population file path
    std::string synth_preset = "promo";
    int64_t synth_n = 10000;
    uint64_t seed = 0;
    int l_min = 1;
    int l_max = 10;
    std::vector<std::string> methods{"coarse",
                                     "kmeans-covariates",
                                     "kmeans-preferences",
                                     "kmeans-optimal-levels",
                                     "abtest",
                                     "blanket"};
    std::vector<FeasibleTreatment> arms;  // A/B arms; default promo arms
    std::vector<double> round_steps{0.25, 0.5, 1.0};
    int bootstrap_b = 0;
    lloyd::SolverConfig solver;  // L and threads ignored; per-cell values used
    std::string output_dir = "experiment-out";

    static ExperimentSpec parse_file(const std::string& path);
    // Canonical key=value form; excludes thread count so report bundles are
    // identical across thread counts.
    std::string canonical() const;
};

void run_experiment(const ExperimentSpec& spec, int threads, std::ostream& log);

}  // namespace coarse::harness
