#include "dfvm/bench.hpp"

#include "dfvm/field.hpp"
#include "dfvm/problems.hpp"
#include "dfvm/sampling.hpp"
#include "dfvm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace dfvm {

namespace {

using Clock = std::chrono::steady_clock;

// Keeps results observable so timed work is not optimized away.
volatile double g_sink = 0.0;

template <typename F>
double min_seconds(std::size_t repeats, F&& f) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        g_sink = g_sink + f();
        best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return best;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

std::vector<BenchRow> bench_derivatives(const BenchConfig& config) {
    if (config.points == 0 || config.repeats == 0) throw std::invalid_argument("bench: points and repeats must be positive");
    std::vector<BenchRow> rows;
    for (std::size_t d : config.dims) {
        NetworkConfig net{config.kind, d, config.width, config.depth};
        net.validate();
        const NetworkField u(init_params(net, derive_seed(config.seed, d)));
        const PdeProblem problem = poisson_highdim(d);
        const Matrix x =
            sample_interior(problem.domain.with_margin(0.01), config.points, derive_seed(config.seed, 1000 + d));
        const CoefficientField a = CoefficientField::identity(d);
        LossConfig cube = LossConfig::for_method(Method::DfvmCube, config.cube_eps);

        BenchRow row;
        row.dim = d;
        row.forward = min_seconds(config.repeats, [&] { return u.values(x)[0]; });
        row.gradient = min_seconds(config.repeats, [&] { return u.gradients(x)(0, 0); });
        row.brute = min_seconds(config.repeats, [&] {
            double s = 0.0;
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                s += divest::brute_divergence(u, a, row_span(x, r), config.brute_step, config.brute_mode);
            }
            return s;
        });
        row.cube_flux = min_seconds(config.repeats, [&] {
            const ResidualPlan plan = plan_dfvm(problem, x, cube, config.seed);
            return evaluate_plan(u, plan).flux[0];
        });
        rows.push_back(row);
    }
    return rows;
}

std::string bench_header() { return "dim,forward_s,gradient_s,brute_s,cube_flux_s"; }

std::string format_bench_row(const BenchRow& r) {
    return std::to_string(r.dim) + ',' + fmt(r.forward) + ',' + fmt(r.gradient) + ',' + fmt(r.brute) + ',' +
           fmt(r.cube_flux);
}

std::vector<StepTimingRow> bench_training_steps(const std::vector<std::size_t>& dims,
                                                const std::vector<Method>& methods, std::size_t width,
                                                std::size_t depth, std::size_t steps, std::uint64_t seed) {
    std::vector<StepTimingRow> rows;
    for (std::size_t d : dims) {
        const PdeProblem problem = poisson_highdim(d);
        const NetworkConfig net{Architecture::ResNet, d, width, depth};
        TrainConfig train;
        train.interior_points = problem.default_interior;
        train.boundary_points = problem.default_boundary;
        train.seed = seed;
        for (Method m : methods) {
            const LossConfig loss = LossConfig::for_method(m, problem.default_eps);
            rows.push_back({d, m, time_training_step(problem, net, loss, train, steps)});
        }
    }
    return rows;
}

std::string step_timing_header() { return "dim,method,seconds_per_step"; }

std::string format_step_timing_row(const StepTimingRow& r) {
    return std::to_string(r.dim) + ',' + to_string(r.method) + ',' + fmt(r.seconds_per_step);
}

}  // namespace dfvm
