#include "bsmmse/mmse_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bsmmse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kJitterScale = 1e-12;

void check_dimensions(const Vector& y, const Matrix& a, const Vector& cov_diag)
{
    if (a.rows() != y.size())
        throw std::invalid_argument("A has " + std::to_string(a.rows()) + " rows but y has length " +
                                    std::to_string(y.size()));
    if (a.cols() != cov_diag.size())
        throw std::invalid_argument("A has " + std::to_string(a.cols()) + " columns but cov_diag has length " +
                                    std::to_string(cov_diag.size()));
    if ((cov_diag.array() < 0).any())
        throw std::invalid_argument("cov_diag must be non-negative");
}

struct CovarianceFactor
{
    Eigen::LLT<Matrix> llt;
    bool jittered = false;

    double log_det() const { return 2.0 * llt.matrixLLT().diagonal().array().log().sum(); }
};

// Factors A diag(d) A^T + sigma2 I. On failure, retries once with sigma2
// raised by 1e-12 trace / M.
CovarianceFactor factor_covariance(const Matrix& a, const Vector& cov_diag, double sigma2, PatternIndex who)
{
    const Eigen::Index m = a.rows();
    Matrix cov = Matrix::Identity(m, m) * sigma2;
    const Matrix scaled = a * cov_diag.cwiseSqrt().asDiagonal();
    cov.selfadjointView<Eigen::Lower>().rankUpdate(scaled);

    CovarianceFactor f;
    f.llt.compute(cov);
    if (f.llt.info() == Eigen::Success)
        return f;

    const double jitter = kJitterScale * cov.diagonal().sum() / static_cast<double>(m);
    cov.diagonal().array() += jitter;
    f.llt.compute(cov);
    f.jittered = true;
    if (jitter <= 0 || f.llt.info() != Eigen::Success)
        throw NumericalError("measurement covariance is not positive definite", who);
    return f;
}

double log_density(const CovarianceFactor& f, const Vector& y)
{
    const Vector z = f.llt.matrixL().solve(y);
    return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + f.log_det() + z.squaredNorm());
}

Vector wiener_from_factor(const CovarianceFactor& f, const Vector& y, const Matrix& a, const Vector& cov_diag)
{
    const Vector v = f.llt.solve(y);
    return cov_diag.cwiseProduct(a.transpose() * v);
}

EstimateReport assemble_report(const std::vector<MixtureComponent>& components, std::vector<double> log_evidences,
                               std::vector<Vector> estimates, bool jitter_used)
{
    std::vector<double> priors;
    priors.reserve(components.size());
    for (const auto& c : components)
        priors.push_back(c.weight);
    const std::vector<double> weights = posterior_weights(log_evidences, priors);

    EstimateReport report;
    report.jitter_used = jitter_used;
    report.estimate = Vector::Zero(estimates.front().size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        report.evidences.push_back({components[i].index(), log_evidences[i], weights[i]});
        report.estimate += weights[i] * estimates[i];
        if (weights[i] > weights[best])
            best = i;
    }
    report.map_component = components[best].index();
    report.component_estimates = std::move(estimates);
    return report;
}

}  // namespace

double component_log_evidence(const Vector& y, const Matrix& a, const Vector& cov_diag, double sigma2)
{
    check_dimensions(y, a, cov_diag);
    return log_density(factor_covariance(a, cov_diag, sigma2, {}), y);
}

Vector wiener_estimate(const Vector& y, const Matrix& a, const Vector& cov_diag, double sigma2)
{
    check_dimensions(y, a, cov_diag);
    if ((cov_diag.array() == 0).all())
        return Vector::Zero(cov_diag.size());
    return wiener_from_factor(factor_covariance(a, cov_diag, sigma2, {}), y, a, cov_diag);
}

std::vector<double> posterior_weights(std::span<const double> log_evidences, std::span<const double> priors)
{
    if (log_evidences.size() != priors.size())
        throw std::invalid_argument("posterior_weights: log_evidences and priors differ in length");
    if (priors.empty())
        throw std::invalid_argument("posterior_weights: empty input");

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(priors.size(), kNegInf);
    double peak = kNegInf;
    for (std::size_t i = 0; i < priors.size(); ++i) {
        if (!(priors[i] >= 0))
            throw std::invalid_argument("posterior_weights: priors must be non-negative");
        if (std::isnan(log_evidences[i]))
            throw std::invalid_argument("posterior_weights: NaN log-evidence");
        if (priors[i] > 0)
            logs[i] = std::log(priors[i]) + log_evidences[i];
        peak = std::max(peak, logs[i]);
    }
    if (peak == kNegInf)
        throw std::invalid_argument("posterior_weights: all priors are zero");

    double total = 0;
    for (double& v : logs) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : logs)
        v /= total;
    return logs;
}

EstimateReport mmse_estimate(const Vector& y, const Matrix& a, const std::vector<MixtureComponent>& components,
                             double sigma2)
{
    if (components.empty())
        throw std::invalid_argument("mmse_estimate: empty component list");
    std::vector<double> log_evidences;
    std::vector<Vector> estimates;
    bool jitter = false;
    for (const auto& c : components) {
        check_dimensions(y, a, c.cov_diag);
        const CovarianceFactor f = factor_covariance(a, c.cov_diag, sigma2, c.index());
        jitter = jitter || f.jittered;
        log_evidences.push_back(log_density(f, y));
        estimates.push_back(wiener_from_factor(f, y, a, c.cov_diag));
    }
    return assemble_report(components, std::move(log_evidences), std::move(estimates), jitter);
}

Vector genie_estimate(const Vector& y, const Matrix& a, const MixtureComponent& true_component, double sigma2)
{
    check_dimensions(y, a, true_component.cov_diag);
    return wiener_from_factor(factor_covariance(a, true_component.cov_diag, sigma2, true_component.index()), y, a,
                              true_component.cov_diag);
}

BlockSparseEstimator::BlockSparseEstimator(const Vector& y, const Matrix& a, const SystemConfig& config)
    : m_(config.m), q_(config.q), sigma_x2_(config.sigma_x2), delta2_(config.delta2)
{
    if (a.rows() != config.m || a.cols() != config.n || y.size() != config.m)
        throw std::invalid_argument("BlockSparseEstimator: A must be M x N and y of length M");

    const double sigma2 = config.sigma2;
    if (delta2_ == 0 && sigma2 > 0) {
        // B = sigma2 I
        log_det_base_ = m_ * std::log(sigma2);
        quad_base_ = y.squaredNorm() / sigma2;
        proj_ = a.transpose() * y / sigma2;
        gram_ = Matrix::Zero(a.cols(), a.cols());
        gram_.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / sigma2);
    } else {
        Matrix base = Matrix::Identity(m_, m_) * sigma2;
        base.selfadjointView<Eigen::Lower>().rankUpdate(a, delta2_);
        Eigen::LLT<Matrix> llt(base);
        if (llt.info() != Eigen::Success) {
            // Jitter relative to the full-support covariance, whose trace is
            // sigma_x2 ||A||_F^2 + M sigma2.
            const double jitter = kJitterScale * (sigma_x2_ * a.squaredNorm() + m_ * sigma2) / m_;
            base.diagonal().array() += jitter;
            llt.compute(base);
            jitter_used_ = true;
            if (jitter <= 0 || llt.info() != Eigen::Success)
                throw NumericalError("shared covariance sigma2 I + delta2 A A^T is not positive definite", {});
        }
        const auto lower = llt.matrixL();
        log_det_base_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        Matrix whitened = lower.solve(a);
        const Vector wy = lower.solve(y);
        quad_base_ = wy.squaredNorm();
        proj_ = whitened.transpose() * wy;
        gram_ = Matrix::Zero(a.cols(), a.cols());
        gram_.selfadjointView<Eigen::Lower>().rankUpdate(whitened.transpose());
    }
    gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
}

BlockSparseEstimator::Fit BlockSparseEstimator::fit(const MixtureComponent& component) const
{
    if (component.cov_diag.size() != gram_.rows())
        throw std::invalid_argument("BlockSparseEstimator: component dimension mismatch");
    const double boost = sigma_x2_ - delta2_;
    const auto& support = component.support;
    const Eigen::Index s = static_cast<Eigen::Index>(support.size()) * q_;

    Matrix core = Matrix::Identity(s, s);
    Vector proj_s(s);
    for (std::size_t i = 0; i < support.size(); ++i) {
        const Eigen::Index ri = static_cast<Eigen::Index>(support[i] - 1) * q_;
        proj_s.segment(static_cast<Eigen::Index>(i) * q_, q_) = proj_.segment(ri, q_);
        for (std::size_t j = 0; j <= i; ++j) {
            const Eigen::Index rj = static_cast<Eigen::Index>(support[j] - 1) * q_;
            core.block(static_cast<Eigen::Index>(i) * q_, static_cast<Eigen::Index>(j) * q_, q_, q_) +=
                boost * gram_.block(ri, rj, q_, q_);
        }
    }
    Eigen::LLT<Matrix> llt(core);
    if (llt.info() != Eigen::Success)
        throw NumericalError("support-restricted capacitance matrix is not positive definite", component.index());

    const Vector h = llt.solve(proj_s);
    const double log_det = log_det_base_ + 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = quad_base_ - boost * proj_s.dot(h);

    Fit out;
    out.log_evidence = -0.5 * (m_ * kLog2Pi + log_det + quad);
    Vector v = proj_;
    for (std::size_t i = 0; i < support.size(); ++i) {
        const Eigen::Index ri = static_cast<Eigen::Index>(support[i] - 1) * q_;
        v.noalias() -= boost * gram_.middleCols(ri, q_) * h.segment(static_cast<Eigen::Index>(i) * q_, q_);
    }
    out.estimate = component.cov_diag.cwiseProduct(v);
    return out;
}

EstimateReport BlockSparseEstimator::estimate(const std::vector<MixtureComponent>& components) const
{
    if (components.empty())
        throw std::invalid_argument("BlockSparseEstimator: empty component list");
    std::vector<double> log_evidences;
    std::vector<Vector> estimates;
    log_evidences.reserve(components.size());
    estimates.reserve(components.size());
    for (const auto& c : components) {
        Fit f = fit(c);
        log_evidences.push_back(f.log_evidence);
        estimates.push_back(std::move(f.estimate));
    }
    return assemble_report(components, std::move(log_evidences), std::move(estimates), jitter_used_);
}

Vector oracle_posterior_mean(const Vector& y, const Matrix& a, const std::vector<MixtureComponent>& components,
                             double sigma2, const std::vector<GridAxis>& grid)
{
    const Eigen::Index n = a.cols();
    if (n > 3)
        throw UnsupportedSize("oracle_posterior_mean: quadrature supports N <= 3, got N = " + std::to_string(n));
    if (components.empty())
        throw std::invalid_argument("oracle_posterior_mean: empty component list");
    if (static_cast<Eigen::Index>(grid.size()) != n)
        throw std::invalid_argument("oracle_posterior_mean: need one grid axis per coordinate");
    if (!(sigma2 > 0))
        throw std::invalid_argument("oracle_posterior_mean: sigma2 must be positive");
    for (const auto& ax : grid)
        if (ax.points < 2 || !(ax.upper > ax.lower))
            throw std::invalid_argument("oracle_posterior_mean: each axis needs >= 2 points over a non-empty range");

    // Log of the joint density p(y | x) omega_c N(x_free; 0, D_free) times the
    // trapezoid weight, for every grid point of every component. Visited twice:
    // once to find the peak, once to accumulate.
    auto for_each_node = [&](auto&& visit) {
        for (const auto& comp : components) {
            if (!(comp.weight > 0))
                continue;
            std::vector<Eigen::Index> free;
            for (Eigen::Index i = 0; i < n; ++i)
                if (comp.cov_diag[i] > 0)
                    free.push_back(i);
            double log_prior_norm = std::log(comp.weight);
            for (Eigen::Index i : free)
                log_prior_norm -= 0.5 * (kLog2Pi + std::log(comp.cov_diag[i]));

            std::vector<int> idx(free.size(), 0);
            Vector x = Vector::Zero(n);
            for (;;) {
                double log_w = log_prior_norm;
                for (std::size_t j = 0; j < free.size(); ++j) {
                    const GridAxis& ax = grid[static_cast<std::size_t>(free[j])];
                    const double step = (ax.upper - ax.lower) / (ax.points - 1);
                    const double xi = ax.lower + step * idx[j];
                    x[free[j]] = xi;
                    log_w += std::log(step);
                    if (idx[j] == 0 || idx[j] == ax.points - 1)
                        log_w += std::log(0.5);
                    log_w -= 0.5 * xi * xi / comp.cov_diag[free[j]];
                }
                const double resid = (y - a * x).squaredNorm();
                log_w -= 0.5 * resid / sigma2;
                visit(log_w, x);

                std::size_t j = 0;
                for (; j < free.size(); ++j) {
                    if (++idx[j] < grid[static_cast<std::size_t>(free[j])].points)
                        break;
                    idx[j] = 0;
                }
                if (j == free.size())
                    break;
            }
        }
    };

    double peak = -std::numeric_limits<double>::infinity();
    for_each_node([&](double log_w, const Vector&) { peak = std::max(peak, log_w); });
    if (!std::isfinite(peak))
        throw std::invalid_argument("oracle_posterior_mean: no component carries prior mass");

    double mass = 0;
    Vector first_moment = Vector::Zero(n);
    for_each_node([&](double log_w, const Vector& x) {
        const double w = std::exp(log_w - peak);
        mass += w;
        first_moment += w * x;
    });
    return first_moment / mass;
}

}  // namespace bsmmse
