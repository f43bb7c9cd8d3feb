#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bsmmse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Identifies mixture component (k,l): k active blocks in the l-th
/// lexicographic arrangement. Both are 1-based.
struct PatternIndex
{
    int k = 0;
    int l = 0;

    friend bool operator==(const PatternIndex&, const PatternIndex&) = default;
};

std::string to_string(const PatternIndex& p);

/// Per-pattern prior weights, indexed [k-1][l-1].
using MixtureWeights = std::vector<std::vector<double>>;

/// Full problem description. Build through make_config() so the derived
/// fields (Q, M, realized beta) stay consistent.
struct SystemConfig
{
    int n = 0;        // signal length
    int q = 0;        // block length
    int r = 0;        // block count
    int k_max = 0;    // largest number of active blocks
    int m = 0;        // measurement count
    double beta = 0;  // realized N / M
    double sigma2 = 0;
    double sigma_x2 = 1;
    double delta2 = 0;
    MixtureWeights weights;

    /// Prior mass of all patterns with k active blocks.
    double weight_of_k(int k) const;

    /// (1/N) E||x||^2 conditioned on k active blocks.
    double signal_power(int k) const;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Number of k-subsets of R blocks.
std::uint64_t binomial(int n, int k);

/// omega_{k,l} = 1 / sum_k C(R,k) for every pattern.
MixtureWeights uniform_weights(int r, int k_max);

/// Derives Q = N/R and M = round(N/beta) and records the realized beta.
SystemConfig make_config(int n, int r, int k_max, double beta, double sigma2,
                         double sigma_x2, double delta2, MixtureWeights weights);

struct MixtureComponent
{
    int k = 0;
    int l = 0;
    std::vector<int> support;  // sorted 1-based block indices
    Vector cov_diag;           // diagonal of D_{k,l}
    double weight = 0;

    PatternIndex index() const { return {k, l}; }
};

/// All k-subsets of {1..R} in lexicographic order; position+1 is the pattern
/// index l.
std::vector<std::vector<int>> enumerate_patterns(int r, int k);

/// Builds D_{k,l} for the given support. The pattern index l is recovered
/// from the lexicographic rank of the support.
MixtureComponent build_component(const std::vector<int>& support, const SystemConfig& config);

/// Every component (k = 1..K, l = 1..L_k) in canonical order.
std::vector<MixtureComponent> build_components(const SystemConfig& config);

struct SourceDraw
{
    Vector x;
    std::size_t component = 0;  // position in the component list
};

SourceDraw sample_source(const std::vector<MixtureComponent>& components, Rng& rng);

struct MeasurementInstance
{
    Vector x;
    PatternIndex component;
    Matrix a;
    Vector noise;
    Vector y;
};

/// Draws A with IID N(0, 1/M) entries and n ~ N(0, sigma2 I); y = A x + n.
MeasurementInstance sample_measurement(const Vector& x, const SystemConfig& config, Rng& rng);

/// Per-trial generator derived from (master seed, trial index).
std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial_index);
Rng make_rng(std::uint64_t seed);

}  // namespace bsmmse
