#include "bsmmse/source_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bsmmse {

std::string to_string(const PatternIndex& p)
{
    return "(" + std::to_string(p.k) + "," + std::to_string(p.l) + ")";
}

std::uint64_t binomial(int n, int k)
{
    if (k < 0 || k > n)
        return 0;
    k = std::min(k, n - k);
    std::uint64_t result = 1;
    for (int i = 1; i <= k; ++i)
        result = result * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return result;
}

double SystemConfig::weight_of_k(int k) const
{
    const auto& row = weights.at(static_cast<std::size_t>(k - 1));
    return std::accumulate(row.begin(), row.end(), 0.0);
}

double SystemConfig::signal_power(int k) const
{
    const double active = static_cast<double>(k) / r;
    return active * sigma_x2 + (1.0 - active) * delta2;
}

void SystemConfig::validate() const
{
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("invalid " + field + ": " + why);
    };
    if (n < 1) fail("n", "must be positive");
    if (q < 1) fail("q", "must be positive");
    if (r < 1) fail("r", "must be positive");
    if (static_cast<long long>(q) * r != n)
        fail("n", "N = " + std::to_string(n) + " is not Q*R = " + std::to_string(q) + "*" + std::to_string(r));
    if (k_max < 1 || k_max > r) fail("k_max", "must satisfy 1 <= K <= R");
    if (m < 1) fail("m", "must be positive");
    if (!(beta > 0) || std::abs(beta * m - n) > 1e-9 * n)
        fail("beta", "must equal N/M");
    if (!(sigma2 >= 0) || !std::isfinite(sigma2)) fail("sigma2", "must be a finite non-negative number");
    if (!(sigma_x2 > 0) || !std::isfinite(sigma_x2)) fail("sigma_x2", "must be positive");
    if (!(delta2 >= 0)) fail("delta2", "must be non-negative");
    if (!(delta2 < sigma_x2)) fail("delta2", "must be smaller than sigma_x2");
    if (static_cast<int>(weights.size()) != k_max)
        fail("weights", "expected one row per k = 1.." + std::to_string(k_max));
    double total = 0;
    for (int k = 1; k <= k_max; ++k) {
        const auto& row = weights[static_cast<std::size_t>(k - 1)];
        if (row.size() != binomial(r, k))
            fail("weights", "row k=" + std::to_string(k) + " needs C(R,k) = " + std::to_string(binomial(r, k)) + " entries");
        for (double w : row) {
            if (!(w >= 0) || !std::isfinite(w))
                fail("weights", "entries must be finite and non-negative");
            total += w;
        }
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os.precision(17);
        os << "weights sum to " << total << ", expected 1";
        fail("weights", os.str());
    }
}

MixtureWeights uniform_weights(int r, int k_max)
{
    if (k_max < 1 || k_max > r)
        throw std::invalid_argument("invalid k_max: must satisfy 1 <= K <= R");
    std::uint64_t patterns = 0;
    for (int k = 1; k <= k_max; ++k)
        patterns += binomial(r, k);
    const double omega = 1.0 / static_cast<double>(patterns);
    MixtureWeights w;
    for (int k = 1; k <= k_max; ++k)
        w.emplace_back(binomial(r, k), omega);
    return w;
}

SystemConfig make_config(int n, int r, int k_max, double beta, double sigma2, double sigma_x2,
                         double delta2, MixtureWeights weights)
{
    if (r < 1 || n < 1 || n % r != 0)
        throw std::invalid_argument("invalid n: N must be a positive multiple of R");
    if (!(beta > 0) || !std::isfinite(beta))
        throw std::invalid_argument("invalid beta: must be positive");
    SystemConfig c;
    c.n = n;
    c.r = r;
    c.q = n / r;
    c.k_max = k_max;
    c.m = std::max(1, static_cast<int>(std::lround(n / beta)));
    c.beta = static_cast<double>(n) / c.m;
    c.sigma2 = sigma2;
    c.sigma_x2 = sigma_x2;
    c.delta2 = delta2;
    c.weights = std::move(weights);
    c.validate();
    return c;
}

std::vector<std::vector<int>> enumerate_patterns(int r, int k)
{
    if (k < 1 || k > r)
        throw std::invalid_argument("enumerate_patterns: need 1 <= k <= R, got k=" + std::to_string(k) +
                                    ", R=" + std::to_string(r));
    std::vector<std::vector<int>> out;
    out.reserve(binomial(r, k));
    std::vector<int> current(static_cast<std::size_t>(k));
    std::iota(current.begin(), current.end(), 1);
    for (;;) {
        out.push_back(current);
        // Advance the rightmost index that still has room.
        int i = k - 1;
        while (i >= 0 && current[static_cast<std::size_t>(i)] == r - k + i + 1)
            --i;
        if (i < 0)
            break;
        ++current[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j)
            current[static_cast<std::size_t>(j)] = current[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

namespace {

// Lexicographic rank (1-based) of a sorted k-subset of {1..r}.
int pattern_rank(const std::vector<int>& support, int r)
{
    const int k = static_cast<int>(support.size());
    std::uint64_t rank = 0;
    int prev = 0;
    for (int i = 0; i < k; ++i) {
        for (int v = prev + 1; v < support[static_cast<std::size_t>(i)]; ++v)
            rank += binomial(r - v, k - i - 1);
        prev = support[static_cast<std::size_t>(i)];
    }
    return static_cast<int>(rank) + 1;
}

}  // namespace

MixtureComponent build_component(const std::vector<int>& support, const SystemConfig& config)
{
    if (support.empty())
        throw std::invalid_argument("build_component: support must be non-empty");
    std::vector<int> sorted = support;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("build_component: support has repeated blocks");
    if (sorted.front() < 1 || sorted.back() > config.r)
        throw std::invalid_argument("build_component: block index out of range 1.." + std::to_string(config.r));

    MixtureComponent c;
    c.k = static_cast<int>(sorted.size());
    c.l = pattern_rank(sorted, config.r);
    c.cov_diag = Vector::Constant(config.n, config.delta2);
    for (int block : sorted)
        c.cov_diag.segment(static_cast<Eigen::Index>(block - 1) * config.q, config.q).setConstant(config.sigma_x2);
    if (c.k <= static_cast<int>(config.weights.size()))
        c.weight = config.weights[static_cast<std::size_t>(c.k - 1)].at(static_cast<std::size_t>(c.l - 1));
    c.support = std::move(sorted);
    return c;
}

std::vector<MixtureComponent> build_components(const SystemConfig& config)
{
    std::vector<MixtureComponent> out;
    for (int k = 1; k <= config.k_max; ++k)
        for (const auto& support : enumerate_patterns(config.r, k))
            out.push_back(build_component(support, config));
    return out;
}

SourceDraw sample_source(const std::vector<MixtureComponent>& components, Rng& rng)
{
    if (components.empty())
        throw std::invalid_argument("sample_source: empty component list");
    std::vector<double> w;
    w.reserve(components.size());
    for (const auto& c : components)
        w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    SourceDraw draw;
    draw.component = pick(rng);
    const Vector& d = components[draw.component].cov_diag;
    std::normal_distribution<double> gauss(0.0, 1.0);
    draw.x.resize(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double z = gauss(rng);
        draw.x[i] = d[i] > 0 ? std::sqrt(d[i]) * z : 0.0;
    }
    return draw;
}

MeasurementInstance sample_measurement(const Vector& x, const SystemConfig& config, Rng& rng)
{
    if (x.size() != config.n)
        throw std::invalid_argument("sample_measurement: x has length " + std::to_string(x.size()) +
                                    ", expected N = " + std::to_string(config.n));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double a_scale = 1.0 / std::sqrt(static_cast<double>(config.m));
    const double n_scale = std::sqrt(config.sigma2);

    MeasurementInstance inst;
    inst.x = x;
    inst.a.resize(config.m, config.n);
    double* a = inst.a.data();
    for (Eigen::Index i = 0; i < inst.a.size(); ++i)
        a[i] = a_scale * gauss(rng);
    inst.noise.resize(config.m);
    for (Eigen::Index i = 0; i < config.m; ++i)
        inst.noise[i] = n_scale * gauss(rng);
    inst.y.noalias() = inst.a * x;
    inst.y += inst.noise;
    return inst;
}

std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial_index)
{
    // splitmix64 finalizer over a Weyl-sequence offset of the master seed.
    std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (trial_index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng make_rng(std::uint64_t seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Rng(seq);
}

}  // namespace bsmmse
