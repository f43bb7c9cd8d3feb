#pragma once

#include <vector>

#include "bsmmse/source_model.hpp"

namespace bsmmse {

struct SolverOptions
{
    double tol = 1e-12;
    int max_iter = 10000;
    double damping = 0.5;
};

struct FixedPointResult
{
    double xi2 = 0;
    int iterations = 0;
    bool converged = false;
    bool multiple_solutions = false;  // more than one root found in [sigma2, xi2_0]
    double residual = 0;              // xi2 - sigma2 - beta * mse(xi2)
};

/// Asymptotic per-component MSE of the equivalent AWGN channel: scalar
/// Gaussian MMSE d xi2 / (d + xi2) averaged over active (d = sigma_x2) and
/// inactive (d = delta2) blocks.
double awgn_component_mse(double xi2, int k, int r, double sigma_x2, double delta2);

/// Equivalent noise variance xi2 = sigma2 + beta * mse(xi2) for pattern size k.
///
/// Damped Picard iteration from xi2_0 = sigma2 + beta * signal power. The map
/// is increasing, so iterating from above lands on the largest fixed point. A
/// sign sweep over [sigma2, xi2_0] flags additional roots and, if the
/// iteration stalls, bisects the topmost bracket. Converged means
/// |residual| <= tol * max(1, xi2).
FixedPointResult solve_fixed_point(int k, int r, double beta, double sigma2, double sigma_x2, double delta2,
                                   const SolverOptions& options = {});

/// Strict block-sparse (delta2 -> 0, sigma_x2 = 1) solution with load
/// beta_k = (k/R) beta.
double closed_form_xi(int k, int r, double beta, double sigma2);

/// Tse-Hanly effective noise variance at load beta_eff for unit-power users:
/// the positive root of xi^4 + xi^2 (1 - beta_eff - sigma2) - sigma2 = 0.
double tse_hanly_reference(double beta_eff, double sigma2);

struct ReplicaSolution
{
    std::vector<PatternIndex> components;  // canonical order
    std::vector<double> xi2;
    std::vector<double> component_mse;
    std::vector<int> iterations;
    double total_mse = 0;
    bool converged = true;
    bool multiple_fixed_points = false;

    /// Mean of xi2 over the patterns with k active blocks.
    double xi2_of_k(int k) const;
};

/// Asymptotic MMSE of the configured system: per-pattern fixed points
/// (closed form when delta2 = 0) weighted by the prior.
ReplicaSolution theoretical_mmse(const SystemConfig& config, const SolverOptions& options = {});

}  // namespace bsmmse
