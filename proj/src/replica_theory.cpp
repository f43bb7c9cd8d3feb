#include "bsmmse/replica_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bsmmse {

namespace {

double scalar_mmse(double variance, double xi2)
{
    if (variance == 0 || xi2 == 0)
        return 0;
    if (std::isinf(xi2))
        return variance;
    return variance * xi2 / (variance + xi2);
}

constexpr int kSweepPoints = 4001;

}  // namespace

double awgn_component_mse(double xi2, int k, int r, double sigma_x2, double delta2)
{
    if (!(xi2 >= 0))
        throw std::invalid_argument("awgn_component_mse: xi2 must be non-negative");
    if (k < 0 || k > r || r < 1)
        throw std::invalid_argument("awgn_component_mse: need 0 <= k <= R");
    const double active = static_cast<double>(k) / r;
    return active * scalar_mmse(sigma_x2, xi2) + (1.0 - active) * scalar_mmse(delta2, xi2);
}

double tse_hanly_reference(double beta_eff, double sigma2)
{
    if (!(beta_eff >= 0) || !(sigma2 >= 0))
        throw std::invalid_argument("tse_hanly_reference: beta_eff and sigma2 must be non-negative");
    if (beta_eff == 0)
        return sigma2;
    const double b = beta_eff + sigma2 - 1.0;
    const double root = std::sqrt(4.0 * sigma2 + b * b);
    // Pick the cancellation-free form of the positive root.
    if (b >= 0)
        return 0.5 * (b + root);
    return 2.0 * sigma2 / (root - b);
}

double closed_form_xi(int k, int r, double beta, double sigma2)
{
    if (r < 1 || k < 0 || k > r)
        throw std::invalid_argument("closed_form_xi: need 0 <= k <= R");
    return tse_hanly_reference(static_cast<double>(k) / r * beta, sigma2);
}

FixedPointResult solve_fixed_point(int k, int r, double beta, double sigma2, double sigma_x2, double delta2,
                                   const SolverOptions& options)
{
    if (!(options.tol > 0))
        throw std::invalid_argument("solve_fixed_point: tol must be positive");
    if (!(beta >= 0) || !(sigma2 >= 0))
        throw std::invalid_argument("solve_fixed_point: beta and sigma2 must be non-negative");

    FixedPointResult out;
    if (beta == 0) {
        out.xi2 = sigma2;
        out.converged = true;
        return out;
    }

    auto map = [&](double xi2) { return sigma2 + beta * awgn_component_mse(xi2, k, r, sigma_x2, delta2); };
    auto residual = [&](double xi2) { return xi2 - map(xi2); };
    auto small_enough = [&](double xi2, double res) { return std::abs(res) <= options.tol * std::max(1.0, xi2); };

    const double power = static_cast<double>(k) / r * sigma_x2 + (1.0 - static_cast<double>(k) / r) * delta2;
    const double start = sigma2 + beta * power;

    double xi2 = start;
    double res = residual(xi2);
    while (!small_enough(xi2, res) && out.iterations < options.max_iter) {
        xi2 = (1.0 - options.damping) * xi2 + options.damping * map(xi2);
        res = residual(xi2);
        ++out.iterations;
    }
    out.converged = small_enough(xi2, res);

    // Roots of the residual in (lo, start]: residual(sigma2) <= 0 <= residual(start).
    if (start > sigma2) {
        const double lo = sigma2 > 0 ? sigma2 : start * 1e-12;
        std::vector<std::pair<double, double>> brackets;
        double prev_x = lo;
        double prev_r = residual(lo);
        if (prev_r == 0 && sigma2 > 0)
            brackets.emplace_back(lo, lo);
        const double ratio = std::log(start / lo) / (kSweepPoints - 1);
        for (int i = 1; i < kSweepPoints; ++i) {
            const double x = i == kSweepPoints - 1 ? start : lo * std::exp(ratio * i);
            const double r_x = residual(x);
            if ((prev_r < 0 && r_x >= 0) || (prev_r > 0 && r_x <= 0))
                brackets.emplace_back(prev_x, x);
            prev_x = x;
            prev_r = r_x;
        }
        out.multiple_solutions = brackets.size() > 1;

        if (!out.converged && !brackets.empty()) {
            auto [a, b] = brackets.back();
            double ra = residual(a);
            for (int i = 0; i < 200 && b > a; ++i) {
                const double mid = 0.5 * (a + b);
                if (mid <= a || mid >= b)
                    break;
                const double r_mid = residual(mid);
                if ((r_mid < 0) == (ra < 0)) {
                    a = mid;
                    ra = r_mid;
                } else {
                    b = mid;
                }
            }
            const double ra_fin = residual(a);
            const double rb_fin = residual(b);
            const double cand = std::abs(ra_fin) <= std::abs(rb_fin) ? a : b;
            const double cand_res = residual(cand);
            if (std::abs(cand_res) < std::abs(res)) {
                xi2 = cand;
                res = cand_res;
            }
            out.converged = small_enough(xi2, res);
        }
    }
    out.xi2 = xi2;
    out.residual = res;
    return out;
}

double ReplicaSolution::xi2_of_k(int k) const
{
    double sum = 0;
    int count = 0;
    for (std::size_t i = 0; i < components.size(); ++i)
        if (components[i].k == k) {
            sum += xi2[i];
            ++count;
        }
    if (count == 0)
        throw std::invalid_argument("xi2_of_k: no pattern with k = " + std::to_string(k));
    return sum / count;
}

ReplicaSolution theoretical_mmse(const SystemConfig& config, const SolverOptions& options)
{
    config.validate();
    ReplicaSolution sol;
    for (int k = 1; k <= config.k_max; ++k) {
        const auto& row = config.weights[static_cast<std::size_t>(k - 1)];
        for (std::size_t l = 0; l < row.size(); ++l) {
            double xi2 = 0;
            int iterations = 0;
            if (config.delta2 == 0) {
                // Unit-power closed form rescaled to sigma_x2.
                const double beta_k = static_cast<double>(k) / config.r * config.beta;
                xi2 = config.sigma_x2 * tse_hanly_reference(beta_k, config.sigma2 / config.sigma_x2);
            } else {
                const FixedPointResult fp =
                    solve_fixed_point(k, config.r, config.beta, config.sigma2, config.sigma_x2, config.delta2, options);
                xi2 = fp.xi2;
                iterations = fp.iterations;
                sol.converged = sol.converged && fp.converged;
                sol.multiple_fixed_points = sol.multiple_fixed_points || fp.multiple_solutions;
            }
            const double mse = awgn_component_mse(xi2, k, config.r, config.sigma_x2, config.delta2);
            sol.components.push_back({k, static_cast<int>(l) + 1});
            sol.xi2.push_back(xi2);
            sol.component_mse.push_back(mse);
            sol.iterations.push_back(iterations);
            sol.total_mse += row[l] * mse;
        }
    }
    return sol;
}

}  // namespace bsmmse
