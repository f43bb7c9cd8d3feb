#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsmmse/monte_carlo.hpp"
#include "bsmmse/source_model.hpp"

namespace bsmmse {

/// Malformed or inconsistent configuration. The message names the field.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum class SweepAxis { sigma2, beta, k_max, delta2 };
enum class OutputFormat { csv, json };

std::string to_string(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);

struct SweepSpec
{
    SystemConfig base;
    double requested_beta = 0;  // before rounding M
    bool uniform_weights = true;
    SweepAxis axis = SweepAxis::sigma2;
    std::vector<double> values;
    int trials = 200;
    std::uint64_t master_seed = 0;
    int parallelism = 0;  // 0: default_parallelism()
    std::string output_path;
    OutputFormat format = OutputFormat::csv;

    /// Resolved configuration for sweep point i.
    SystemConfig point(std::size_t i) const;
};

/// Builds a validated spec from command-line style arguments (without the
/// program name). `--config FILE` loads an INI file first; explicit flags
/// override file values. Throws ConfigError.
SweepSpec parse_config(const std::vector<std::string>& args);

/// Reads only the INI file.
SweepSpec parse_config_file(const std::string& path);

struct SweepRow
{
    SweepAxis axis = SweepAxis::sigma2;
    double value = 0;
    SystemConfig config;
    int trials = 0;
    std::uint64_t seed = 0;
    ReplicaSolution theory;
    bool simulated = false;
    ExperimentResult experiment;  // valid when simulated
    EstimatorComparison comparison;
    std::string status = "ok";

    bool ok() const { return status == "ok" && theory.converged; }
};

/// Computes one row per sweep point. Per-point failures go to `status`.
std::vector<SweepRow> evaluate_sweep(const SweepSpec& spec, std::ostream* log = nullptr);

extern const std::vector<std::string> kCsvColumns;

void write_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_json(std::ostream& out, const SweepSpec& spec, const std::vector<SweepRow>& rows);

/// Evaluates the sweep and writes spec.output_path (stdout when empty).
/// Returns 0 when every point succeeded and every fixed point converged,
/// 1 otherwise, and 2 on I/O failure.
int run_sweep(const SweepSpec& spec, std::ostream* log = nullptr);

}  // namespace bsmmse
