#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsmmse/replica_theory.hpp"
#include "bsmmse/source_model.hpp"

namespace bsmmse {

enum TrialFlag : unsigned
{
    kTrialOk = 0,
    kJitterUsed = 1u << 0,
    kTrialFailed = 1u << 1,
};

struct TrialResult
{
    std::uint64_t seed = 0;
    PatternIndex component;
    double se_mmse = 0;   // ||x - x_mmse||^2 / N
    double se_genie = 0;  // ||x - x_genie||^2 / N
    unsigned flags = kTrialOk;
    std::string failure;  // message when kTrialFailed is set

    bool failed() const { return (flags & kTrialFailed) != 0; }
};

/// One seeded realization: draws x, A and n, then scores the MMSE and
/// genie-aided estimates. Fully determined by (config, seed).
TrialResult run_trial(const SystemConfig& config, const std::vector<MixtureComponent>& components,
                      std::uint64_t seed);

/// Sum in a fixed binary-tree order over the index sequence.
double pairwise_sum(std::span<const double> values);

struct ExperimentResult
{
    SystemConfig config;
    std::uint64_t master_seed = 0;
    int trials = 0;         // requested
    int failed_trials = 0;  // excluded from the averages
    int jittered_trials = 0;
    double mse_mmse = 0;
    double ci95_mmse = 0;  // NaN when fewer than two trials succeeded
    double mse_genie = 0;
    double ci95_genie = 0;
    double mse_theory = 0;
    double realized_beta = 0;
    ReplicaSolution theory;
    std::chrono::milliseconds wall_time{0};
    std::vector<TrialResult> trial_results;

    bool ci_defined() const { return trials - failed_trials >= 2; }
};

/// Worker count from BLOCKSPARSE_THREADS, else hardware concurrency.
int default_parallelism();

/// Runs trials with seeds derive_trial_seed(master_seed, i) on up to
/// `parallelism` threads. Results do not depend on the thread count.
/// Throws std::runtime_error when every trial fails.
ExperimentResult run_experiment(const SystemConfig& config, int n_trials, std::uint64_t master_seed,
                                int parallelism);

struct EstimatorComparison
{
    double mse_mmse = 0;
    double mse_genie = 0;
    double mse_theory = 0;
    double mmse_over_genie = 0;
    double mmse_over_theory = 0;
    double genie_over_theory = 0;
    double combined_ci95 = 0;
    bool corollary_consistent = false;
    std::string note;
};

/// Checks |mse_mmse - mse_genie| <= max(0.05 mse_genie, 2 * combined CI),
/// with the combined CI taken as sqrt(ci_mmse^2 + ci_genie^2).
EstimatorComparison compare_estimators(const ExperimentResult& experiment);

}  // namespace bsmmse
