#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsmmse/source_model.hpp"

namespace bsmmse {

/// A covariance that could not be factored even after the jitter retry.
class NumericalError : public std::runtime_error
{
public:
    NumericalError(const std::string& what, PatternIndex component)
        : std::runtime_error(what + " [component " + to_string(component) + "]"), component_(component)
    {
    }

    PatternIndex component() const noexcept { return component_; }

private:
    PatternIndex component_;
};

/// The requested operation does not support a problem of this size.
class UnsupportedSize : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

struct ComponentEvidence
{
    PatternIndex component;
    double log_evidence = 0;      // log p_{k,l}(y | A)
    double posterior_weight = 0;  // omega_{k,l} p_{k,l}(y|A) / p(y|A)
};

struct EstimateReport
{
    Vector estimate;
    std::vector<ComponentEvidence> evidences;
    std::vector<Vector> component_estimates;  // Wiener estimate per component, same order
    PatternIndex map_component;
    bool jitter_used = false;
};

/// log N(y | 0, A diag(cov_diag) A^T + sigma2 I) via a Cholesky factor.
double component_log_evidence(const Vector& y, const Matrix& a, const Vector& cov_diag, double sigma2);

/// D A^T (A D A^T + sigma2 I)^{-1} y, solved against one factorization.
Vector wiener_estimate(const Vector& y, const Matrix& a, const Vector& cov_diag, double sigma2);

/// Normalized omega_i exp(log_evidence_i), evaluated in the log domain.
std::vector<double> posterior_weights(std::span<const double> log_evidences, std::span<const double> priors);

/// Exact posterior mean of a Gaussian-mixture source. Factors every
/// component's M x M measurement covariance directly; works for arbitrary
/// diagonal covariances.
EstimateReport mmse_estimate(const Vector& y, const Matrix& a, const std::vector<MixtureComponent>& components,
                             double sigma2);

/// Conditional MMSE estimate given the true sparsity pattern.
Vector genie_estimate(const Vector& y, const Matrix& a, const MixtureComponent& true_component, double sigma2);

/// Same posterior mean as mmse_estimate(), specialized to covariances that
/// take the value sigma_x2 on active blocks and delta2 elsewhere.
///
/// The pattern-independent part B = sigma2 I + delta2 A A^T is factored
/// once; each component then adds a rank-kQ term (sigma_x2 - delta2) A_S A_S^T
/// handled through the Woodbury identity and the matrix determinant lemma,
/// so the per-component work is a kQ x kQ factorization instead of M x M.
class BlockSparseEstimator
{
public:
    BlockSparseEstimator(const Vector& y, const Matrix& a, const SystemConfig& config);

    struct Fit
    {
        double log_evidence = 0;
        Vector estimate;
    };

    Fit fit(const MixtureComponent& component) const;
    EstimateReport estimate(const std::vector<MixtureComponent>& components) const;

    bool jitter_used() const { return jitter_used_; }

private:
    int m_ = 0;
    int q_ = 0;
    double sigma_x2_ = 0;
    double delta2_ = 0;
    double log_det_base_ = 0;
    double quad_base_ = 0;  // y^T B^{-1} y
    Matrix gram_;           // A^T B^{-1} A
    Vector proj_;           // A^T B^{-1} y
    bool jitter_used_ = false;
};

struct GridAxis
{
    double lower = -1;
    double upper = 1;
    int points = 101;
};

/// Posterior mean by trapezoidal quadrature of the joint density over a
/// rectangular grid; coordinates with zero prior variance are pinned at 0.
/// Test oracle for N <= 3.
Vector oracle_posterior_mean(const Vector& y, const Matrix& a, const std::vector<MixtureComponent>& components,
                             double sigma2, const std::vector<GridAxis>& grid);

}  // namespace bsmmse
