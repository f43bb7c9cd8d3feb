#include "bsmmse/sweep.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "bsmmse/replica_theory.hpp"

namespace bsmmse {

std::string to_string(SweepAxis axis)
{
    switch (axis) {
    case SweepAxis::sigma2: return "sigma2";
    case SweepAxis::beta: return "beta";
    case SweepAxis::k_max: return "K";
    case SweepAxis::delta2: return "delta2";
    }
    return "?";
}

SweepAxis parse_axis(const std::string& name)
{
    if (name == "sigma2") return SweepAxis::sigma2;
    if (name == "beta") return SweepAxis::beta;
    if (name == "K" || name == "k" || name == "k_max") return SweepAxis::k_max;
    if (name == "delta2") return SweepAxis::delta2;
    throw ConfigError("invalid axis: '" + name + "' (expected sigma2, beta, K or delta2)");
}

namespace {

// Everything a config file or flag set can specify; unset means "not given".
struct RawSettings
{
    std::optional<int> n, r, k_max, trials, threads;
    std::optional<double> beta, sigma2, snr_db, sigma_x2, delta2;
    std::optional<std::string> weights, axis, values, output, format;
    std::optional<std::uint64_t> seed;
    std::map<std::pair<int, int>, double> pattern_weights;  // w_<k>_<l>
    std::map<int, double> k_weights;                        // k_<k>, split evenly over l

    void override_with(const RawSettings& o)
    {
        auto take = [](auto& dst, const auto& src) {
            if (src) dst = src;
        };
        take(n, o.n); take(r, o.r); take(k_max, o.k_max); take(trials, o.trials); take(threads, o.threads);
        take(beta, o.beta); take(sigma2, o.sigma2); take(snr_db, o.snr_db); take(sigma_x2, o.sigma_x2);
        take(delta2, o.delta2); take(weights, o.weights); take(axis, o.axis); take(values, o.values);
        take(output, o.output); take(format, o.format); take(seed, o.seed);
        if (o.snr_db) sigma2.reset();
        else if (o.sigma2) snr_db.reset();
    }
};

std::vector<double> parse_value_list(const std::string& text)
{
    std::vector<double> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        std::istringstream tok(token);
        std::string piece;
        while (tok >> piece) {
            try {
                std::size_t used = 0;
                out.push_back(std::stod(piece, &used));
                if (used != piece.size())
                    throw std::invalid_argument(piece);
            } catch (const std::exception&) {
                throw ConfigError("invalid values: cannot parse '" + piece + "' as a number");
            }
        }
    }
    if (out.empty())
        throw ConfigError("invalid values: list is empty");
    return out;
}

template <class T>
std::optional<T> get_field(const boost::property_tree::ptree& tree, const std::string& path)
{
    const auto child = tree.get_child_optional(boost::property_tree::ptree::path_type(path, '/'));
    if (!child)
        return std::nullopt;
    std::string text = child->data();
    // Strip trailing inline comments.
    if (const auto hash = text.find_first_of("#;"); hash != std::string::npos)
        text.erase(hash);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
        text.pop_back();
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else {
        std::istringstream in(text);
        T value{};
        if (!(in >> value) || !(in >> std::ws).eof())
            throw ConfigError("invalid " + path + ": cannot parse '" + text + "'");
        return value;
    }
}

RawSettings read_ini(const std::string& path)
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("malformed config file " + path + ": " + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
    }
    static const std::map<std::string, std::vector<std::string>> known = {
        {"system", {"n", "r", "k_max", "beta", "sigma2", "snr_db", "sigma_x2", "delta2", "weights"}},
        {"sweep", {"axis", "values", "trials", "seed", "threads"}},
        {"output", {"path", "format"}},
        {"weights", {}},
    };
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end())
            throw ConfigError("unknown section [" + section + "] in " + path);
        for (const auto& [key, _] : body) {
            if (section == "weights")
                continue;
            if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
                throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
        }
    }

    RawSettings s;
    s.n = get_field<int>(tree, "system/n");
    s.r = get_field<int>(tree, "system/r");
    s.k_max = get_field<int>(tree, "system/k_max");
    s.beta = get_field<double>(tree, "system/beta");
    s.sigma2 = get_field<double>(tree, "system/sigma2");
    s.snr_db = get_field<double>(tree, "system/snr_db");
    if (s.sigma2 && s.snr_db)
        throw ConfigError("invalid system/snr_db: give either sigma2 or snr_db, not both");
    s.sigma_x2 = get_field<double>(tree, "system/sigma_x2");
    s.delta2 = get_field<double>(tree, "system/delta2");
    s.weights = get_field<std::string>(tree, "system/weights");
    s.axis = get_field<std::string>(tree, "sweep/axis");
    s.values = get_field<std::string>(tree, "sweep/values");
    s.trials = get_field<int>(tree, "sweep/trials");
    s.seed = get_field<std::uint64_t>(tree, "sweep/seed");
    s.threads = get_field<int>(tree, "sweep/threads");
    s.output = get_field<std::string>(tree, "output/path");
    s.format = get_field<std::string>(tree, "output/format");

    if (const auto w = tree.get_child_optional("weights")) {
        static const std::regex pattern_key(R"(w_(\d+)_(\d+))");
        static const std::regex k_key(R"(k_(\d+))");
        for (const auto& [key, _] : *w) {
            const double value = *get_field<double>(tree, "weights/" + key);
            std::smatch m;
            if (std::regex_match(key, m, pattern_key))
                s.pattern_weights[{std::stoi(m[1]), std::stoi(m[2])}] = value;
            else if (std::regex_match(key, m, k_key))
                s.k_weights[std::stoi(m[1])] = value;
            else
                throw ConfigError("invalid weights key '" + key + "' (expected w_<k>_<l> or k_<k>)");
        }
        if (!s.weights && (!s.pattern_weights.empty() || !s.k_weights.empty()))
            s.weights = "explicit";
    }
    return s;
}

MixtureWeights resolve_weights(const RawSettings& s, int r, int k_max)
{
    const std::string mode = s.weights.value_or("uniform");
    if (mode == "uniform") {
        if (!s.pattern_weights.empty() || !s.k_weights.empty())
            throw ConfigError("invalid weights: [weights] entries given but weights = uniform");
        return uniform_weights(r, k_max);
    }
    if (mode != "explicit")
        throw ConfigError("invalid weights: '" + mode + "' (expected uniform or explicit)");
    if (s.pattern_weights.empty() && s.k_weights.empty())
        throw ConfigError("invalid weights: explicit mode needs a [weights] section");

    MixtureWeights w;
    for (int k = 1; k <= k_max; ++k)
        w.emplace_back(binomial(r, k), 0.0);
    for (const auto& [k, total] : s.k_weights) {
        if (k < 1 || k > k_max)
            throw ConfigError("invalid weights: k_" + std::to_string(k) + " outside 1..K");
        auto& row = w[static_cast<std::size_t>(k - 1)];
        for (double& v : row)
            v = total / static_cast<double>(row.size());
    }
    for (const auto& [kl, value] : s.pattern_weights) {
        const auto [k, l] = kl;
        if (k < 1 || k > k_max)
            throw ConfigError("invalid weights: w_" + std::to_string(k) + "_" + std::to_string(l) + " has k outside 1..K");
        if (s.k_weights.contains(k))
            throw ConfigError("invalid weights: k_" + std::to_string(k) + " and w_" + std::to_string(k) +
                              "_* both given");
        auto& row = w[static_cast<std::size_t>(k - 1)];
        if (l < 1 || static_cast<std::size_t>(l) > row.size())
            throw ConfigError("invalid weights: w_" + std::to_string(k) + "_" + std::to_string(l) +
                              " has l outside 1..C(R,k)");
        row[static_cast<std::size_t>(l - 1)] = value;
    }
    return w;
}

SweepSpec resolve(const RawSettings& s)
{
    auto require = [](const auto& field, const char* name) {
        if (!field)
            throw ConfigError(std::string("missing required field '") + name + "'");
        return *field;
    };
    const int n = require(s.n, "n");
    const int r = require(s.r, "r");
    const int k_max = require(s.k_max, "k_max");
    const double beta = require(s.beta, "beta");
    const double sigma_x2 = s.sigma_x2.value_or(1.0);
    const SweepAxis axis = s.axis ? parse_axis(*s.axis) : SweepAxis::sigma2;
    std::vector<double> values;
    if (s.values)
        values = parse_value_list(*s.values);
    double sigma2 = 0;
    if (s.snr_db)
        sigma2 = sigma_x2 * std::pow(10.0, -*s.snr_db / 10.0);
    else if (s.sigma2 || axis != SweepAxis::sigma2 || values.empty())
        sigma2 = require(s.sigma2, "sigma2");
    else
        sigma2 = values.front();

    SweepSpec spec;
    spec.requested_beta = beta;
    spec.uniform_weights = s.weights.value_or("uniform") == "uniform";
    try {
        spec.base = make_config(n, r, k_max, beta, sigma2, sigma_x2, s.delta2.value_or(0.0),
                                resolve_weights(s, r, k_max));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    spec.axis = axis;
    if (s.values) {
        spec.values = values;
    } else {
        switch (spec.axis) {
        case SweepAxis::sigma2: spec.values = {spec.base.sigma2}; break;
        case SweepAxis::beta: spec.values = {beta}; break;
        case SweepAxis::k_max: spec.values = {static_cast<double>(k_max)}; break;
        case SweepAxis::delta2: spec.values = {spec.base.delta2}; break;
        }
    }
    spec.trials = s.trials.value_or(200);
    if (spec.trials < 0)
        throw ConfigError("invalid trials: must be non-negative");
    spec.master_seed = s.seed.value_or(0);
    spec.parallelism = s.threads.value_or(0);
    if (spec.parallelism < 0)
        throw ConfigError("invalid threads: must be non-negative");
    spec.output_path = s.output.value_or("");
    if (s.format) {
        if (*s.format == "csv") spec.format = OutputFormat::csv;
        else if (*s.format == "json") spec.format = OutputFormat::json;
        else throw ConfigError("invalid format: '" + *s.format + "' (expected csv or json)");
    } else if (spec.output_path.ends_with(".json")) {
        spec.format = OutputFormat::json;
    }

    if (spec.axis == SweepAxis::k_max && !spec.uniform_weights)
        throw ConfigError("invalid axis: sweeping K requires weights = uniform");
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        try {
            (void)spec.point(i);
        } catch (const std::invalid_argument& e) {
            std::ostringstream os;
            os << "invalid values: sweep point " << to_string(spec.axis) << " = " << spec.values[i] << ": "
               << e.what();
            throw ConfigError(os.str());
        }
    }
    return spec;
}

}  // namespace

SystemConfig SweepSpec::point(std::size_t i) const
{
    const double v = values.at(i);
    SystemConfig c = base;
    switch (axis) {
    case SweepAxis::sigma2:
        c.sigma2 = v;
        break;
    case SweepAxis::beta:
        c = make_config(base.n, base.r, base.k_max, v, base.sigma2, base.sigma_x2, base.delta2, base.weights);
        break;
    case SweepAxis::k_max: {
        const int k = static_cast<int>(std::lround(v));
        if (k != v)
            throw std::invalid_argument("K must be an integer");
        c.k_max = k;
        c.weights = bsmmse::uniform_weights(base.r, k);
        break;
    }
    case SweepAxis::delta2:
        c.delta2 = v;
        break;
    }
    c.validate();
    return c;
}

SweepSpec parse_config_file(const std::string& path)
{
    return resolve(read_ini(path));
}

SweepSpec parse_config(const std::vector<std::string>& args)
{
    CLI::App app{"block-sparse MMSE sweep"};
    app.allow_config_extras(false);
    RawSettings flags;
    std::string config_path;
    app.add_option("--config", config_path, "INI configuration file");
    app.add_option("--n", flags.n, "signal length N");
    app.add_option("--r", flags.r, "number of blocks R");
    app.add_option("--k-max", flags.k_max, "largest number of active blocks K");
    app.add_option("--beta", flags.beta, "load N/M");
    app.add_option("--sigma2", flags.sigma2, "noise variance");
    app.add_option("--snr-db", flags.snr_db, "sets sigma2 = sigma_x2 * 10^(-SNR/10)");
    app.add_option("--sigma-x2", flags.sigma_x2, "active-block variance");
    app.add_option("--delta2", flags.delta2, "inactive-block variance");
    app.add_option("--weights", flags.weights, "uniform or explicit");
    app.add_option("--axis", flags.axis, "sigma2, beta, K or delta2");
    app.add_option("--values", flags.values, "comma-separated sweep values");
    app.add_option("--trials", flags.trials, "Monte Carlo trials per point (0: theory only)");
    app.add_option("--seed", flags.seed, "master seed");
    app.add_option("--threads", flags.threads, "worker threads (default: BLOCKSPARSE_THREADS or all cores)");
    app.add_option("--output", flags.output, "output file (default: stdout)");
    app.add_option("--format", flags.format, "csv or json");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string("invalid command line: ") + e.what());
    }
    if (flags.sigma2 && flags.snr_db)
        throw ConfigError("invalid snr_db: give either --sigma2 or --snr-db, not both");

    RawSettings merged = config_path.empty() ? RawSettings{} : read_ini(config_path);
    merged.override_with(flags);
    return resolve(merged);
}

std::vector<SweepRow> evaluate_sweep(const SweepSpec& spec, std::ostream* log)
{
    const int parallelism = spec.parallelism > 0 ? spec.parallelism : default_parallelism();
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        SweepRow row;
        row.axis = spec.axis;
        row.value = spec.values[i];
        row.trials = spec.trials;
        row.seed = spec.master_seed;
        const auto started = std::chrono::steady_clock::now();
        try {
            row.config = spec.point(i);
            row.theory = theoretical_mmse(row.config);
            if (spec.trials > 0) {
                row.experiment = run_experiment(row.config, spec.trials, spec.master_seed, parallelism);
                row.comparison = compare_estimators(row.experiment);
                row.simulated = true;
            }
            if (!row.theory.converged)
                row.status = "fixed point did not converge";
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
        row.experiment.wall_time =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
        if (log) {
            *log << to_string(row.axis) << " = " << row.value << ": theory " << row.theory.total_mse;
            if (row.simulated)
                *log << ", mmse " << row.experiment.mse_mmse << " +/- " << row.experiment.ci95_mmse << ", genie "
                     << row.experiment.mse_genie;
            *log << " [" << row.status << ", " << row.experiment.wall_time.count() << " ms]\n";
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

const std::vector<std::string> kCsvColumns = {
    "axis",         "value",     "n",          "m",           "q",
    "r",            "k_max",     "beta_realized", "sigma2",    "delta2",
    "trials",       "mse_theory", "mse_mc_mmse", "ci95_mmse",  "mse_mc_genie",
    "ci95_genie",   "failed_trials", "converged", "seed",      "wall_time_ms",
    "sigma_x2",     "weights",   "status",
};

namespace {

std::string num(double v)
{
    if (std::isnan(v))
        return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Weights as "k1 weights|k2 weights|...", entries separated by ';'.
std::string encode_weights(const MixtureWeights& w)
{
    std::string out;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (k) out += '|';
        for (std::size_t l = 0; l < w[k].size(); ++l) {
            if (l) out += ';';
            out += num(w[k][l]);
        }
    }
    return out;
}

std::string csv_safe(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r' || c == '"')
            c = ' ';
    return s;
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<SweepRow>& rows)
{
    for (std::size_t i = 0; i < kCsvColumns.size(); ++i)
        out << (i ? "," : "") << kCsvColumns[i];
    out << '\n';
    for (const SweepRow& row : rows) {
        const SystemConfig& c = row.config;
        const ExperimentResult& e = row.experiment;
        std::vector<std::string> cells = {
            to_string(row.axis), num(row.value), std::to_string(c.n), std::to_string(c.m), std::to_string(c.q),
            std::to_string(c.r), std::to_string(c.k_max), num(c.beta), num(c.sigma2), num(c.delta2),
            std::to_string(row.trials), num(row.theory.total_mse),
            row.simulated ? num(e.mse_mmse) : "", row.simulated ? num(e.ci95_mmse) : "",
            row.simulated ? num(e.mse_genie) : "", row.simulated ? num(e.ci95_genie) : "",
            row.simulated ? std::to_string(e.failed_trials) : "", row.theory.converged ? "true" : "false",
            std::to_string(row.seed), std::to_string(e.wall_time.count()), num(c.sigma_x2),
            encode_weights(c.weights), csv_safe(row.status),
        };
        for (std::size_t i = 0; i < cells.size(); ++i)
            out << (i ? "," : "") << cells[i];
        out << '\n';
    }
}

void write_json(std::ostream& out, const SweepSpec& spec, const std::vector<SweepRow>& rows)
{
    using nlohmann::json;
    auto nullable = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json doc;
    doc["axis"] = to_string(spec.axis);
    doc["requested_beta"] = spec.requested_beta;
    doc["master_seed"] = spec.master_seed;
    doc["trials"] = spec.trials;
    doc["rows"] = json::array();
    for (const SweepRow& row : rows) {
        const SystemConfig& c = row.config;
        json j;
        j["axis"] = to_string(row.axis);
        j["value"] = row.value;
        j["n"] = c.n;
        j["m"] = c.m;
        j["q"] = c.q;
        j["r"] = c.r;
        j["k_max"] = c.k_max;
        j["beta_realized"] = c.beta;
        j["sigma2"] = c.sigma2;
        j["sigma_x2"] = c.sigma_x2;
        j["delta2"] = c.delta2;
        j["weights"] = c.weights;
        j["trials"] = row.trials;
        j["seed"] = row.seed;
        j["mse_theory"] = row.theory.total_mse;
        j["converged"] = row.theory.converged;
        j["multiple_fixed_points"] = row.theory.multiple_fixed_points;
        json per_k = json::array();
        for (int k = 1; k <= c.k_max && row.status.rfind("error", 0) != 0; ++k) {
            const double beta_k = static_cast<double>(k) / c.r * c.beta;
            per_k.push_back({{"k", k},
                             {"weight", c.weight_of_k(k)},
                             {"xi2", row.theory.xi2_of_k(k)},
                             {"beta_k", beta_k},
                             {"tse_hanly_xi2_scaled_load", c.sigma_x2 * tse_hanly_reference(beta_k, c.sigma2 / c.sigma_x2)},
                             {"tse_hanly_xi2_full_load", c.sigma_x2 * tse_hanly_reference(c.beta, c.sigma2 / c.sigma_x2)}});
        }
        j["per_k"] = per_k;
        if (row.simulated) {
            const ExperimentResult& e = row.experiment;
            j["mse_mc_mmse"] = e.mse_mmse;
            j["ci95_mmse"] = nullable(e.ci95_mmse);
            j["mse_mc_genie"] = e.mse_genie;
            j["ci95_genie"] = nullable(e.ci95_genie);
            j["failed_trials"] = e.failed_trials;
            j["jittered_trials"] = e.jittered_trials;
            j["corollary_consistent"] = row.comparison.corollary_consistent;
            if (!row.comparison.note.empty())
                j["note"] = row.comparison.note;
        } else {
            j["mse_mc_mmse"] = nullptr;
            j["ci95_mmse"] = nullptr;
            j["mse_mc_genie"] = nullptr;
            j["ci95_genie"] = nullptr;
            j["failed_trials"] = nullptr;
        }
        j["wall_time_ms"] = row.experiment.wall_time.count();
        j["status"] = row.status;
        doc["rows"].push_back(std::move(j));
    }
    out << doc.dump(2) << '\n';
}

int run_sweep(const SweepSpec& spec, std::ostream* log)
{
    const std::vector<SweepRow> rows = evaluate_sweep(spec, log);
    auto emit = [&](std::ostream& out) {
        if (spec.format == OutputFormat::json)
            write_json(out, spec, rows);
        else
            write_csv(out, rows);
        out.flush();
        return static_cast<bool>(out);
    };
    bool written = false;
    if (spec.output_path.empty()) {
        written = emit(std::cout);
    } else {
        std::ofstream file(spec.output_path, std::ios::binary | std::ios::trunc);
        written = file && emit(file);
    }
    if (!written) {
        if (log)
            *log << "error: cannot write " << (spec.output_path.empty() ? "<stdout>" : spec.output_path) << '\n';
        return 2;
    }
    for (const SweepRow& row : rows)
        if (!row.ok())
            return 1;
    return 0;
}

}  // namespace bsmmse
