#include "dfvm/train.hpp"

#include "dfvm/io.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace dfvm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Seed streams: per-step sampling and control-volume draws, plus fixed sets.
constexpr std::uint64_t kInteriorStream = 0;
constexpr std::uint64_t kBoundaryStream = 1;
constexpr std::uint64_t kVolumeStream = 2;
constexpr std::uint64_t kInitStream = 0x1000;
constexpr std::uint64_t kEvalStream = 0x2000;
constexpr std::uint64_t kEvalInitialStream = 0x2001;
constexpr std::uint64_t kFinalLossStream = 0x3000;

std::uint64_t step_seed(std::uint64_t seed, std::size_t step, std::uint64_t stream) {
    return derive_seed(derive_seed(seed, step), stream);
}

struct Batch {
    Matrix interior;
    Matrix boundary;
};

class Sampler {
public:
    Sampler(const PdeProblem& problem, const LossConfig& loss, const TrainConfig& config)
        : problem_(problem), config_(config),
          domain_(problem.domain.with_margin(loss.kind == LossKind::Pinn ? 0.0 : loss.cv.radius)) {}

    Batch draw(std::size_t step) const {
        const std::size_t s = config_.resample ? step : 0;
        return {sample_interior(domain_, config_.interior_points, step_seed(config_.seed, s, kInteriorStream)),
                sample_boundary(problem_.domain, config_.boundary_points, step_seed(config_.seed, s, kBoundaryStream))};
    }

private:
    const PdeProblem& problem_;
    const TrainConfig& config_;
    Domain domain_;
};

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

void adam_step(std::vector<double>& params, std::span<const double> grad, AdamState& state, const AdamConfig& config,
               double lr) {
    if (grad.size() != params.size()) {
        throw std::invalid_argument("adam: gradient has " + std::to_string(grad.size()) + " entries, expected " +
                                    std::to_string(params.size()));
    }
    if (!all_finite(grad)) throw std::runtime_error("adam: gradient is not finite");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        const double mh = state.m[i] / c1;
        const double vh = state.v[i] / c2;
        params[i] -= lr * mh / (std::sqrt(vh) + config.eps);
    }
}

double relative_l2(const Field& u, const ScalarFn& exact, const Matrix& points) {
    if (points.rows() == 0) throw std::invalid_argument("relative_l2: no points");
    const std::vector<double> v = u.values(points);
    double num = 0.0, den = 0.0;
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
        const double e = exact(row_span(points, r));
        const double diff = v[static_cast<std::size_t>(r)] - e;
        num += diff * diff;
        den += e * e;
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2: exact solution vanishes on the evaluation set");
    return std::sqrt(num / den);
}

double TrainConfig::lr_at(std::size_t step) const {
    if (lr_decay == 1.0) return lr;
    return lr * std::pow(lr_decay, static_cast<double>(step) / static_cast<double>(decay_steps));
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr decay must be in (0, 1]");
    if (decay_steps == 0) throw std::invalid_argument("decay steps must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        throw std::invalid_argument("Adam betas must be in [0, 1)");
    }
    if (!(adam.eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
    if (interior_points == 0 || boundary_points == 0) throw std::invalid_argument("point counts must be positive");
    if (eval_every == 0) throw std::invalid_argument("eval_every must be positive");
    if (eval_points == 0) throw std::invalid_argument("eval_points must be positive");
}

std::pair<Matrix, Matrix> evaluation_sets(const PdeProblem& problem, const TrainConfig& config) {
    Matrix interior = sample_interior(problem.domain, config.eval_points, derive_seed(config.seed, kEvalStream));
    Matrix initial;
    if (problem.kind == OperatorKind::Parabolic && config.eval_points_initial > 0) {
        initial = sample_interior(problem.domain, config.eval_points_initial,
                                  derive_seed(config.seed, kEvalInitialStream));
        initial.col(initial.cols() - 1).setConstant(problem.domain.t0());
    }
    return {std::move(interior), std::move(initial)};
}

TrainResult train(const PdeProblem& problem, const NetworkConfig& net, const LossConfig& loss,
                  const TrainConfig& config, const MetricsCallback& on_metrics) {
    config.validate();
    loss.validate();
    net.validate();
    if (net.input_dim != problem.input_dim()) {
        throw std::invalid_argument("network input dimension " + std::to_string(net.input_dim) +
                                    " does not match the problem (" + std::to_string(problem.input_dim()) + ")");
    }
    const Sampler sampler(problem, loss, config);
    const auto [eval_set, eval_initial] = evaluation_sets(problem, config);
    const std::filesystem::path checkpoint =
        config.run_dir.empty() ? std::filesystem::path{} : config.run_dir / "checkpoint.bin";

    TrainResult result;
    result.params = init_params(net, derive_seed(config.seed, kInitStream));
    result.loss_history.reserve(config.steps);
    AdamState adam;
    double elapsed = 0.0;

    auto record = [&](std::size_t step, const ResidualBatch& batch) {
        const NetworkField field(result.params);
        MetricsRow row;
        row.step = step;
        row.loss = batch.loss;
        row.interior = batch.interior_loss;
        row.boundary = batch.boundary_loss;
        row.re = relative_l2(field, problem.exact, eval_set);
        row.re_initial = eval_initial.rows() > 0 ? relative_l2(field, problem.exact, eval_initial)
                                                 : std::numeric_limits<double>::quiet_NaN();
        row.seconds = elapsed;
        result.metrics.push_back(row);
        if (!checkpoint.empty()) save_params(result.params, checkpoint);
        if (on_metrics) on_metrics(row);
    };

    auto abort = [&](std::size_t step, const std::string& why) {
        if (!checkpoint.empty()) save_params(result.params, checkpoint);
        throw TrainingAborted("training diverged at step " + std::to_string(step) + ": " + why +
                                  (checkpoint.empty() ? "" : "; last finite parameters saved to " + checkpoint.string()),
                              step, result.params);
    };

    for (std::size_t step = 0; step < config.steps; ++step) {
        const auto t_step = Clock::now();
        const Batch batch = sampler.draw(step);
        const double t_sample = seconds_since(t_step);

        LossAndGradient lg;
        try {
            lg = loss_and_gradient(result.params, problem, batch.interior, batch.boundary, loss,
                                   step_seed(config.seed, step, kVolumeStream));
        } catch (const std::runtime_error& e) {
            abort(step, e.what());
        }
        if (!all_finite(lg.gradient)) abort(step, "gradient is not finite");
        result.loss_history.push_back(lg.batch.loss);
        const double before_update = seconds_since(t_step);

        // Row `step` describes the parameters that produced this loss.
        if (step % config.eval_every == 0) record(step, lg.batch);

        const auto t_update = Clock::now();
        adam_step(result.params.values, lg.gradient, adam, config.adam, config.lr_at(step));
        const double update = seconds_since(t_update);

        const double total = before_update + update;
        result.timings.sampling += t_sample;
        result.timings.loss += lg.forward_seconds;
        result.timings.backward += lg.backward_seconds;
        result.timings.update += update;
        result.timings.total += total;
        elapsed += total;
    }

    {
        const Batch batch = sampler.draw(config.steps);
        LossAndGradient lg;
        try {
            lg = loss_and_gradient(result.params, problem, batch.interior, batch.boundary, loss,
                                   step_seed(config.seed, config.steps, kFinalLossStream), false);
        } catch (const std::runtime_error& e) {
            abort(config.steps, e.what());
        }
        record(config.steps, lg.batch);
    }
    return result;
}

double time_training_step(const PdeProblem& problem, const NetworkConfig& net, const LossConfig& loss,
                          const TrainConfig& config, std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("time_training_step: steps must be positive");
    config.validate();
    const Sampler sampler(problem, loss, config);
    ParamSet params = init_params(net, derive_seed(config.seed, kInitStream));
    AdamState adam;
    auto one = [&](std::size_t step) {
        const Batch batch = sampler.draw(step);
        const LossAndGradient lg = loss_and_gradient(params, problem, batch.interior, batch.boundary, loss,
                                                     step_seed(config.seed, step, kVolumeStream));
        adam_step(params.values, lg.gradient, adam, config.adam, config.lr_at(step));
    };
    one(0);
    const auto t0 = Clock::now();
    for (std::size_t s = 1; s <= steps; ++s) one(s);
    return seconds_since(t0) / static_cast<double>(steps);
}

}  // namespace dfvm
