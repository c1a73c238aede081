#pragma once

#include "dfvm/loss.hpp"
#include "dfvm/network.hpp"
#include "dfvm/problems.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace dfvm {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// One Adam update in place. Throws on a non-finite gradient, leaving
/// parameters and state untouched.
void adam_step(std::vector<double>& params, std::span<const double> grad, AdamState& state, const AdamConfig& config,
               double lr);

/// ||u - u*|| / ||u*|| over the rows of `points`.
double relative_l2(const Field& u, const ScalarFn& exact, const Matrix& points);

struct TrainConfig {
    std::size_t steps = 20000;
    double lr = 1e-3;
    /// lr * decay^(step / decay_steps); decay = 1 keeps the rate constant.
    double lr_decay = 1.0;
    std::size_t decay_steps = 1000;
    AdamConfig adam;
    std::size_t interior_points = 2000;
    std::size_t boundary_points = 600;
    bool resample = true;
    std::size_t eval_every = 500;
    std::size_t eval_points = 100000;
    /// Extra evaluation set at t = t0 for time-dependent problems.
    std::size_t eval_points_initial = 10000;
    std::uint64_t seed = 0;
    /// Where checkpoint.bin goes; empty disables checkpoints.
    std::filesystem::path run_dir;

    double lr_at(std::size_t step) const;
    void validate() const;
};

/// One metrics row. `re_initial` is NaN for stationary problems.
struct MetricsRow {
    std::size_t step = 0;
    double loss = 0.0;
    double interior = 0.0;
    double boundary = 0.0;
    double re = 0.0;
    double re_initial = 0.0;
    double seconds = 0.0;
};

struct StepTimings {
    double sampling = 0.0;
    double loss = 0.0;
    double backward = 0.0;
    double update = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ParamSet params;
    std::vector<MetricsRow> metrics;
    std::vector<double> loss_history;  // loss at every step, before the update
    StepTimings timings;
};

/// Raised when the loss or gradient becomes non-finite. The last finite
/// parameters are in `params` (and in the checkpoint when enabled).
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(const std::string& what, std::size_t step, ParamSet params)
        : std::runtime_error(what), step_(step), params_(std::move(params)) {}
    std::size_t step() const { return step_; }
    const ParamSet& params() const { return params_; }

private:
    std::size_t step_;
    ParamSet params_;
};

using MetricsCallback = std::function<void(const MetricsRow&)>;

/// Fixed evaluation points for a problem: interior samples, and for
/// time-dependent problems a second set at t = t0 (empty otherwise).
std::pair<Matrix, Matrix> evaluation_sets(const PdeProblem& problem, const TrainConfig& config);

TrainResult train(const PdeProblem& problem, const NetworkConfig& net, const LossConfig& loss,
                  const TrainConfig& config, const MetricsCallback& on_metrics = {});

/// Mean wall-clock seconds of one full training step (sampling, loss,
/// backward, update) over `steps` steps after one warm-up step.
double time_training_step(const PdeProblem& problem, const NetworkConfig& net, const LossConfig& loss,
                          const TrainConfig& config, std::size_t steps);

}  // namespace dfvm
