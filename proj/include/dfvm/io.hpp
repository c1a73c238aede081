#pragma once

#include "dfvm/loss.hpp"
#include "dfvm/network.hpp"
#include "dfvm/problems.hpp"
#include "dfvm/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfvm {

/// Parameter file: a short text header followed by little-endian doubles.
void save_params(const ParamSet& params, const std::filesystem::path& path);
void write_params(const ParamSet& params, std::ostream& out);
ParamSet load_params(const std::filesystem::path& path);
ParamSet read_params(std::istream& in);

/// step,loss,interior,boundary,re,re0,seconds (re0 empty for stationary problems).
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out);
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a training run depends on. Fields left unset take the
/// problem's defaults when resolved.
struct RunConfig {
    // [problem]
    std::string problem;  // required
    std::size_t dim = 2;
    double horizon = 1.0;
    // [method]
    Method method = Method::DfvmCube;
    // [network]
    Architecture architecture = Architecture::ResNet;
    std::optional<std::size_t> width;
    std::size_t depth = 3;
    // [loss]
    std::optional<double> eps;
    std::optional<std::size_t> k;
    double lambda = 1.0;
    LowerOrderRule lower_order = LowerOrderRule::CenterPoint;
    FluxEstimator estimator = FluxEstimator::AdGradient;
    double difference_step = 0.0;
    double pinn_step = 1e-4;
    bool antithetic = true;
    bool qmc = true;
    // [train]
    std::size_t steps = 20000;
    double lr = 1e-3;
    double lr_decay = 1.0;
    std::size_t decay_steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<std::size_t> interior_points;
    std::optional<std::size_t> boundary_points;
    bool resample = true;
    std::size_t eval_every = 500;
    std::size_t eval_points = 100000;
    std::size_t eval_points_initial = 10000;
    std::uint64_t seed = 0;
    // [output]
    std::string output_dir;

    /// Fills every optional field from the problem defaults. Throws
    /// ConfigError naming the field when the problem is missing or unknown.
    RunConfig resolved() const;

    PdeProblem make_problem() const;
    NetworkConfig network() const;
    LossConfig loss() const;
    TrainConfig train() const;
};

/// Sets `section.key` from its text form. Throws ConfigError naming the key
/// for unknown keys or unparsable values.
void set_option(RunConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> option_keys();

/// INI-style text: [section] headers, key = value lines, # or ; comments.
/// Errors name the source and line.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key, resolved, in a form parse_run_config reads back exactly.
std::string to_ini(const RunConfig& config);

}  // namespace dfvm
