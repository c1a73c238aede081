#pragma once

#include "dfvm/divest.hpp"
#include "dfvm/loss.hpp"
#include "dfvm/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dfvm {

struct BenchConfig {
    std::vector<std::size_t> dims{2, 10, 50};
    Architecture kind = Architecture::ResNet;
    std::size_t width = 64;
    std::size_t depth = 3;
    std::size_t points = 100;
    /// Each timing is the minimum over this many repetitions.
    std::size_t repeats = 3;
    std::uint64_t seed = 0;
    divest::BruteMode brute_mode = divest::BruteMode::Dense;
    double brute_step = 1e-4;
    double cube_eps = 1e-3;
};

/// Seconds to process `points` points at one dimension.
struct BenchRow {
    std::size_t dim = 0;
    double forward = 0.0;    // network values
    double gradient = 0.0;   // input gradients
    double brute = 0.0;      // second-order divergence by the difference oracle
    double cube_flux = 0.0;  // cube control-volume flux
};

std::vector<BenchRow> bench_derivatives(const BenchConfig& config);
std::string bench_header();
std::string format_bench_row(const BenchRow& row);

struct StepTimingRow {
    std::size_t dim = 0;
    Method method = Method::DfvmCube;
    double seconds_per_step = 0.0;
};

/// Mean seconds per training step on poisson-hd at each dimension, for each
/// method, at the problem's default point counts and the given network.
std::vector<StepTimingRow> bench_training_steps(const std::vector<std::size_t>& dims,
                                                const std::vector<Method>& methods, std::size_t width,
                                                std::size_t depth, std::size_t steps, std::uint64_t seed);
std::string step_timing_header();
std::string format_step_timing_row(const StepTimingRow& row);

}  // namespace dfvm
