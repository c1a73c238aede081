#pragma once

#include "dfvm/field.hpp"
#include "dfvm/network.hpp"
#include "dfvm/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dfvm::testing {

inline Matrix random_points(std::size_t n, std::size_t d, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
    return x;
}

/// Parameters with nonzero biases so every code path is exercised.
inline ParamSet random_params(const NetworkConfig& cfg, std::uint64_t seed, double bias_scale = 0.3) {
    ParamSet p = init_params(cfg, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> dist(-bias_scale, bias_scale);
    for (std::size_t l = 0; l < p.layout.layers().size(); ++l) {
        for (double& b : p.biases(l)) b = dist(rng);
    }
    return p;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

/// |got - want| / max(|want|, floor), for quantities that can be near zero.
inline double rel_err_floor(double got, double want, double floor) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

/// u(x) = sum_m a_m sin(w_m . x + phi_m) + x^T Q x / 2 with random
/// coefficients: smooth, non-polynomial, cheap, with an exact gradient.
inline AnalyticField random_smooth_field(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
    constexpr int kModes = 3;
    struct Mode {
        double amp, phi;
        std::vector<double> w;
    };
    std::vector<Mode> modes;
    for (int m = 0; m < kModes; ++m) {
        Mode mode{n01(rng), phase(rng), std::vector<double>(d)};
        for (double& w : mode.w) w = n01(rng);
        modes.push_back(std::move(mode));
    }
    Eigen::MatrixXd q(d, d);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = 0.5 * n01(rng);
    q = (0.5 * (q + q.transpose())).eval();
    auto value = [modes, q, d](std::span<const double> x) {
        double s = 0.0;
        for (const Mode& m : modes) {
            double arg = m.phi;
            for (std::size_t i = 0; i < d; ++i) arg += m.w[i] * x[i];
            s += m.amp * std::sin(arg);
        }
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(d));
        return s + 0.5 * xv.dot(q * xv);
    };
    auto gradient = [modes, q, d](std::span<const double> x, std::span<double> g) {
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(d));
        const Eigen::VectorXd qx = q * xv;
        for (std::size_t i = 0; i < d; ++i) g[i] = qx(static_cast<Eigen::Index>(i));
        for (const Mode& m : modes) {
            double arg = m.phi;
            for (std::size_t i = 0; i < d; ++i) arg += m.w[i] * x[i];
            const double c = m.amp * std::cos(arg);
            for (std::size_t i = 0; i < d; ++i) g[i] += c * m.w[i];
        }
    };
    return AnalyticField(d, value, gradient);
}

/// +-e_1, ..., +-e_d: antithetic and exact for every quadratic form.
inline Matrix axis_directions(std::size_t d) {
    Matrix dirs = Matrix::Zero(static_cast<Eigen::Index>(2 * d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        dirs(static_cast<Eigen::Index>(2 * i), static_cast<Eigen::Index>(i)) = 1.0;
        dirs(static_cast<Eigen::Index>(2 * i + 1), static_cast<Eigen::Index>(i)) = -1.0;
    }
    return dirs;
}

/// Least-squares slope of log(err) against log(h).
inline double empirical_order(const std::vector<double>& h, const std::vector<double>& err) {
    const std::size_t n = h.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(h[i]);
        my += std::log(err[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (std::log(h[i]) - mx) * (std::log(err[i]) - my);
        sxx += (std::log(h[i]) - mx) * (std::log(h[i]) - mx);
    }
    return sxy / sxx;
}

}  // namespace dfvm::testing
