#include <doctest.h>

#include <cmath>

#include "bsmmse/replica_theory.hpp"
#include "oracles.hpp"

using namespace bsmmse;

TEST_CASE("awgn_component_mse reductions")
{
    for (double xi2 : {1e-3, 0.2, 1.0, 7.5})
        CHECK(awgn_component_mse(xi2, 3, 3, 1.0, 0.0) == doctest::Approx(xi2 / (xi2 + 1)).epsilon(1e-15));
    CHECK(awgn_component_mse(0.0, 2, 4, 1.0, 0.1) == 0.0);
    CHECK(awgn_component_mse(1e-300, 2, 4, 1.0, 0.1) <= 1e-299);

    // Per-block scalar Gaussian MMSE summed over blocks, divided by R.
    const double xi2 = 0.2;
    const double per_block = 2 * (1.0 * xi2 / (1.0 + xi2)) + 2 * 0.0;
    CHECK(awgn_component_mse(xi2, 2, 4, 1.0, 0.0) == doctest::Approx(per_block / 4).epsilon(1e-15));
    CHECK(awgn_component_mse(xi2, 2, 4, 1.0, 0.0) == doctest::Approx(0.0833333333333333).epsilon(1e-14));

    // Saturates at the prior power.
    CHECK(awgn_component_mse(1e12, 1, 4, 2.0, 0.3) == doctest::Approx(0.25 * 2.0 + 0.75 * 0.3).epsilon(1e-10));
    CHECK(awgn_component_mse(INFINITY, 1, 4, 2.0, 0.3) == doctest::Approx(0.725));
    CHECK_THROWS_AS(awgn_component_mse(-1.0, 1, 2, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("closed_form_xi analytic values")
{
    for (double sigma2 : {0.0, 1e-3, 0.1, 1.0, 4.0})
        CHECK(closed_form_xi(0, 8, 2.0, sigma2) == sigma2);
    CHECK(tse_hanly_reference(0.5, 0.0) == 0.0);
    CHECK(tse_hanly_reference(1.5, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(closed_form_xi(1, 2, 1.0, 0.1) == doctest::Approx(0.17416573867739416).epsilon(1e-14));
    CHECK(closed_form_xi(1, 2, 1.0, 0.1) ==
          doctest::Approx(oracle::bisect_unit_power_fixed_point(0.5, 0.1)).epsilon(1e-13));
}

TEST_CASE("closed form solves the rationalized quartic")
{
    for (double beta_k : {0.0, 0.03125, 0.25, 0.5, 0.999, 1.0, 1.001, 2.0, 4.0})
        for (double sigma2 : {0.0, 1e-6, 1e-3, 0.1, 1.0, 10.0}) {
            const double x = tse_hanly_reference(beta_k, sigma2);
            const double b = 1.0 - beta_k - sigma2;
            const double scale = std::max({x * x, std::abs(x * b), sigma2, 1e-300});
            CHECK(std::abs(x * x + x * b - sigma2) <= 1e-12 * scale);
            if (sigma2 > 0)
                CHECK(x == doctest::Approx(oracle::bisect_unit_power_fixed_point(beta_k, sigma2)).epsilon(1e-12));
        }
}

TEST_CASE("tse_hanly_reference is increasing in the load")
{
    for (double sigma2 : {1e-3, 0.1, 1.0}) {
        double prev = tse_hanly_reference(0.0, sigma2);
        for (int i = 1; i <= 100; ++i) {
            const double now = tse_hanly_reference(0.05 * i, sigma2);
            CHECK(now > prev);
            prev = now;
        }
        CHECK(tse_hanly_reference(0.75, sigma2) == closed_form_xi(3, 8, 2.0, sigma2));
    }
}

TEST_CASE("solve_fixed_point")
{
    SUBCASE("zero load returns the noise variance")
    {
        const auto fp = solve_fixed_point(1, 4, 0.0, 0.3, 1.0, 0.1);
        CHECK(fp.xi2 == 0.3);
        CHECK(fp.converged);
    }
    SUBCASE("near-strict sparsity agrees with the closed form")
    {
        const auto fp = solve_fixed_point(1, 2, 1.0, 0.1, 1.0, 1e-12);
        CHECK(fp.converged);
        CHECK(std::abs(fp.xi2 - closed_form_xi(1, 2, 1.0, 0.1)) <= 1e-8);
    }
    SUBCASE("self-residual on a grid")
    {
        const SolverOptions opts;
        for (double beta : {0.25, 0.5, 1.0, 2.0, 4.0})
            for (double sigma2 : {1e-3, 1e-2, 0.1, 1.0, 10.0})
                for (double delta2 : {1e-6, 0.05}) {
                    const auto fp = solve_fixed_point(3, 8, beta, sigma2, 1.0, delta2, opts);
                    CHECK(fp.converged);
                    CHECK_FALSE(fp.multiple_solutions);
                    const double res = fp.xi2 - sigma2 - beta * awgn_component_mse(fp.xi2, 3, 8, 1.0, delta2);
                    CHECK(std::abs(res) <= opts.tol * std::max(1.0, fp.xi2));
                    CHECK(fp.xi2 >= sigma2);
                }
    }
    SUBCASE("stalled iteration falls back to bracket bisection")
    {
        SolverOptions opts;
        opts.max_iter = 3;
        const auto fp = solve_fixed_point(2, 4, 2.0, 0.1, 1.0, 1e-6, opts);
        CHECK(fp.iterations == 3);
        CHECK(fp.converged);
        CHECK(std::abs(fp.residual) <= opts.tol * std::max(1.0, fp.xi2));
        CHECK(fp.xi2 == doctest::Approx(closed_form_xi(2, 4, 2.0, 0.1)).epsilon(1e-5));
    }
    SUBCASE("slow contraction near unit load still converges")
    {
        const auto fp = solve_fixed_point(8, 8, 1.0, 1e-6, 1.0, 1e-12);
        CHECK(fp.converged);
        CHECK(fp.xi2 == doctest::Approx(tse_hanly_reference(1.0, 1e-6)).epsilon(1e-6));
    }
    SUBCASE("noiseless overload lands on the positive root")
    {
        const auto fp = solve_fixed_point(4, 4, 1.5, 0.0, 1.0, 0.0);
        CHECK(fp.converged);
        CHECK(fp.xi2 == doctest::Approx(0.5).epsilon(1e-10));
    }
    CHECK_THROWS_AS(solve_fixed_point(1, 2, 1.0, 0.1, 1.0, 0.0, SolverOptions{0.0, 10, 0.5}), std::invalid_argument);
}

TEST_CASE("theoretical_mmse")
{
    SUBCASE("strict sparsity composes the closed form")
    {
        const auto config = make_config(2, 2, 1, 2.0, 0.1, 1.0, 0.0, {{0.5, 0.5}});
        const auto sol = theoretical_mmse(config);
        const double xi2 = closed_form_xi(1, 2, 2.0, 0.1);
        CHECK(sol.total_mse == doctest::Approx(0.5 * xi2 / (xi2 + 1)).epsilon(1e-14));
        const auto fp = solve_fixed_point(1, 2, 2.0, 0.1, 1.0, 0.0);
        CHECK(sol.xi2[0] == doctest::Approx(fp.xi2).epsilon(1e-10));
    }
    SUBCASE("very large noise saturates at the prior power")
    {
        const auto config = make_config(80, 8, 2, 2.0, 1e8, 1.0, 1e-6, uniform_weights(8, 2));
        const auto sol = theoretical_mmse(config);
        double prior = 0;
        for (int k = 1; k <= 2; ++k)
            prior += config.weight_of_k(k) * config.signal_power(k);
        CHECK(std::abs(sol.total_mse - prior) <= 1e-4 * prior);
        CHECK(sol.converged);
    }
    SUBCASE("only the per-k mass matters")
    {
        MixtureWeights spread = {{0.1, 0.05, 0.05, 0.1}, {0.3, 0.0, 0.1, 0.1, 0.1, 0.1}};
        MixtureWeights even = {{0.075, 0.075, 0.075, 0.075}, {0.7 / 6, 0.7 / 6, 0.7 / 6, 0.7 / 6, 0.7 / 6, 0.7 / 6}};
        for (double delta2 : {0.0, 1e-6, 0.05}) {
            const auto a = theoretical_mmse(make_config(40, 4, 2, 1.5, 0.1, 1.0, delta2, spread));
            const auto b = theoretical_mmse(make_config(40, 4, 2, 1.5, 0.1, 1.0, delta2, even));
            CHECK(a.total_mse == doctest::Approx(b.total_mse).epsilon(1e-12));
        }
    }
    SUBCASE("xi2 is pattern independent and never below the noise")
    {
        const SolverOptions opts;
        const auto config = make_config(80, 8, 3, 2.0, 0.05, 1.0, 1e-4, uniform_weights(8, 3));
        const auto sol = theoretical_mmse(config, opts);
        for (std::size_t i = 0; i < sol.components.size(); ++i) {
            CHECK(sol.xi2[i] >= config.sigma2);
            CHECK(std::abs(sol.xi2[i] - sol.xi2_of_k(sol.components[i].k)) <= 10 * opts.tol);
            CHECK(sol.component_mse[i] >= 0);
            CHECK(sol.component_mse[i] <= config.signal_power(sol.components[i].k));
        }
    }
    SUBCASE("unit-power closed form rescales to other active variances")
    {
        const auto strict = theoretical_mmse(make_config(40, 4, 2, 2.0, 0.3, 2.5, 0.0, uniform_weights(4, 2)));
        const auto near = theoretical_mmse(make_config(40, 4, 2, 2.0, 0.3, 2.5, 1e-13, uniform_weights(4, 2)));
        for (std::size_t i = 0; i < strict.xi2.size(); ++i)
            CHECK(strict.xi2[i] == doctest::Approx(near.xi2[i]).epsilon(1e-9));
        CHECK(strict.total_mse == doctest::Approx(near.total_mse).epsilon(1e-9));
    }
    SUBCASE("monotone in noise and load, bounded by the zero estimator")
    {
        for (double delta2 : {0.0, 1e-6}) {
            double prev = 0;
            for (double s : {1e-4, 1e-3, 1e-2, 0.03, 0.1, 0.3, 1.0, 3.0}) {
                const auto config = make_config(1200, 8, 2, 2.0, s, 1.0, delta2, uniform_weights(8, 2));
                const double mse = theoretical_mmse(config).total_mse;
                CHECK(mse >= prev);
                double prior = 0;
                for (int k = 1; k <= 2; ++k)
                    prior += config.weight_of_k(k) * config.signal_power(k);
                CHECK(mse <= prior);
                prev = mse;
            }
            prev = 0;
            for (double beta : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0}) {
                const double mse =
                    theoretical_mmse(make_config(1200, 8, 2, beta, 0.1, 1.0, delta2, uniform_weights(8, 2))).total_mse;
                CHECK(mse >= prev);
                prev = mse;
            }
        }
    }
}
