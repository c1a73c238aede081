#include "dfvm/problems.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace dfvm {

namespace {

using std::numbers::pi;

double sum_sq(std::span<const double> x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

// alpha(x) = 1 + |x|^2 over the first `dim` coordinates.
CoefficientField one_plus_sq(std::size_t dim) {
    return CoefficientField::scalar(
        dim, [dim](std::span<const double> x) { return 1.0 + sum_sq(x, dim); },
        [dim](std::span<const double> x, std::span<double> g) {
            for (std::size_t i = 0; i < dim; ++i) g[i] = 2.0 * x[i];
        });
}

}  // namespace

PdeProblem poisson_highdim(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("poisson-hd: dimension must be positive");
    const double d = static_cast<double>(dim);
    auto mean = [d](std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / d; };
    PdeProblem p;
    p.name = "poisson-hd";
    p.domain = Domain::hypercube(0.0, 1.0, dim);
    p.a = CoefficientField::identity(dim);
    p.f = [=](std::span<const double> x) { return (std::sin(mean(x)) - 2.0) / d; };
    p.exact = [=](std::span<const double> x) {
        const double s = mean(x);
        return s * s + std::sin(s);
    };
    p.g = p.exact;
    p.exact_gradient = [=](std::span<const double> x, std::span<double> g) {
        const double s = mean(x);
        for (double& gi : g) gi = (2.0 * s + std::cos(s)) / d;
    };
    p.exact_hessian = [=](std::span<const double> x) {
        const double s = mean(x);
        return Matrix::Constant(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim),
                                (2.0 - std::sin(s)) / (d * d));
    };
    p.default_eps = 1e-3;
    p.default_interior = 2000;
    p.default_boundary = 100 * dim;
    p.default_width = 128;
    return p;
}

PdeProblem poisson_lshape() {
    PdeProblem p;
    p.name = "poisson-lshape";
    p.domain = Domain::lshape(2);
    p.a = one_plus_sq(2);
    p.f = [](std::span<const double> x) {
        const double s1 = std::sin(pi / 2 * x[0]), c1 = std::cos(pi / 2 * x[0]);
        const double s2 = std::sin(pi / 2 * x[1]), c2 = std::cos(pi / 2 * x[1]);
        return pi * pi / 2 * (1.0 + x[0] * x[0] + x[1] * x[1]) * s1 * c2 + pi * x[1] * s1 * s2 -
               pi * x[0] * c1 * c2;
    };
    p.exact = [](std::span<const double> x) { return std::sin(pi / 2 * x[0]) * std::cos(pi / 2 * x[1]); };
    p.g = [](std::span<const double> x) { return std::sin(pi / 2 * x[0]) * std::cos(pi / 2 * x[1]); };
    p.exact_gradient = [](std::span<const double> x, std::span<double> g) {
        const double s1 = std::sin(pi / 2 * x[0]), c1 = std::cos(pi / 2 * x[0]);
        const double s2 = std::sin(pi / 2 * x[1]), c2 = std::cos(pi / 2 * x[1]);
        g[0] = pi / 2 * c1 * c2;
        g[1] = -pi / 2 * s1 * s2;
    };
    p.exact_hessian = [](std::span<const double> x) {
        const double s1 = std::sin(pi / 2 * x[0]), c1 = std::cos(pi / 2 * x[0]);
        const double s2 = std::sin(pi / 2 * x[1]), c2 = std::cos(pi / 2 * x[1]);
        const double q = pi * pi / 4;
        Matrix h(2, 2);
        h << -q * s1 * c2, -q * c1 * s2, -q * c1 * s2, -q * s1 * c2;
        return h;
    };
    p.default_eps = 1e-3;
    p.default_interior = 2000;
    p.default_boundary = 600;
    p.default_width = 40;
    return p;
}

PdeProblem nonlinear_elliptic(std::size_t dim) {
    if (dim < 2) throw std::invalid_argument("nonlinear: dimension must be at least 2");
    auto rho0 = [](std::span<const double> x) { return pi * x[0] * x[0] / 2 + x[1] * x[1] / 2; };
    PdeProblem p;
    p.name = "nonlinear";
    p.domain = Domain::hypercube(-1.0, 1.0, dim);
    p.a = one_plus_sq(dim);
    p.grad_sq_coeff = 0.5;
    p.f = [=](std::span<const double> x) {
        const double r0 = rho0(x);
        const double r1 = pi * pi * x[0] * x[0] / 4 + x[1] * x[1] / 4;
        const double a = 1.0 + sum_sq(x, dim);
        const double c = std::cos(r0);
        return 4 * r1 * a * std::sin(r0) - 4 * r0 * c - (pi + 1) * a * c + 2 * r1 * c * c;
    };
    p.exact = [=](std::span<const double> x) { return std::sin(rho0(x)); };
    p.g = [=](std::span<const double> x) { return std::sin(rho0(x)); };
    p.exact_gradient = [=](std::span<const double> x, std::span<double> g) {
        const double c = std::cos(rho0(x));
        for (double& gi : g) gi = 0.0;
        g[0] = c * pi * x[0];
        g[1] = c * x[1];
    };
    p.exact_hessian = [=](std::span<const double> x) {
        const double r0 = rho0(x);
        const double s = std::sin(r0), c = std::cos(r0);
        const auto n = static_cast<Eigen::Index>(dim);
        Matrix h = Matrix::Zero(n, n);
        h(0, 0) = -s * pi * pi * x[0] * x[0] + c * pi;
        h(1, 1) = -s * x[1] * x[1] + c;
        h(0, 1) = h(1, 0) = -s * pi * x[0] * x[1];
        return h;
    };
    p.default_eps = 1e-5;
    p.default_interior = 10000;
    p.default_boundary = 60 * dim;
    p.default_width = 40;
    return p;
}

PdeProblem black_scholes(double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("black-scholes: horizon must be positive");
    constexpr double kRate = 0.05;
    constexpr double kVol2 = 0.16;  // 0.4^2
    constexpr double kGrowth = kRate + kVol2;
    const double T = horizon;
    PdeProblem p;
    p.name = "black-scholes";
    p.kind = OperatorKind::Parabolic;
    p.domain = Domain::spacetime(Domain::hypercube(0.0, 2.0, 2), 0.0, T);
    // -u_t - 0.08 div(diag(x^2) grad u) + 0.05 u + 0.11 x . grad u = 0
    p.a = CoefficientField::diagonal(
        2,
        [](std::span<const double> x, std::span<double> d) {
            d[0] = 0.5 * kVol2 * x[0] * x[0];
            d[1] = 0.5 * kVol2 * x[1] * x[1];
        },
        [](std::span<const double> x, std::span<double> d) {
            d[0] = kVol2 * x[0];
            d[1] = kVol2 * x[1];
        });
    p.b = [](std::span<const double> x, std::span<double> b) {
        b[0] = (kVol2 - kRate) * x[0];
        b[1] = (kVol2 - kRate) * x[1];
    };
    p.c = [](std::span<const double>) { return kRate; };
    p.time_coeff = -1.0;
    p.f = [](std::span<const double>) { return 0.0; };
    p.exact = [=](std::span<const double> x) {
        return std::exp(kGrowth * (T - x[2])) * (x[0] * x[0] + x[1] * x[1]);
    };
    p.g = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
    p.exact_gradient = [=](std::span<const double> x, std::span<double> g) {
        const double e = std::exp(kGrowth * (T - x[2]));
        g[0] = 2.0 * x[0] * e;
        g[1] = 2.0 * x[1] * e;
        g[2] = -kGrowth * e * (x[0] * x[0] + x[1] * x[1]);
    };
    p.exact_hessian = [=](std::span<const double> x) {
        return Matrix(2.0 * std::exp(kGrowth * (T - x[2])) * Matrix::Identity(2, 2));
    };
    p.default_eps = 1e-3;
    p.default_interior = 1000;
    p.default_boundary = 1000;
    p.default_width = 64;
    return p;
}

std::vector<std::string> problem_names() { return {"poisson-hd", "poisson-lshape", "nonlinear", "black-scholes"}; }

PdeProblem make_problem(const std::string& name, std::size_t dim, double horizon) {
    if (name == "poisson-hd") return poisson_highdim(dim);
    if (name == "poisson-lshape") return poisson_lshape();
    if (name == "nonlinear") return nonlinear_elliptic(dim);
    if (name == "black-scholes") return black_scholes(horizon);
    throw std::invalid_argument("unknown problem '" + name + "'");
}

double strong_residual(const PdeProblem& p, std::span<const double> x, double u, std::span<const double> grad,
                       const Matrix& hessian) {
    const std::size_t d = p.spatial_dim();
    const Matrix a = p.a.matrix(x);
    const std::vector<double> div_a = p.a.divergence(x);
    double div_flux = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        div_flux += div_a[j] * grad[j];
        for (std::size_t i = 0; i < d; ++i) {
            div_flux += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                        hessian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    double r = -div_flux - p.f(x);
    if (p.b) {
        std::vector<double> b(d);
        p.b(x, b);
        for (std::size_t i = 0; i < d; ++i) r += b[i] * grad[i];
    }
    if (p.c) r += p.c(x) * u;
    if (p.kind == OperatorKind::Parabolic) r += p.time_coeff * grad[d];
    if (p.grad_sq_coeff != 0.0) r += p.grad_sq_coeff * sum_sq(grad, d);
    return r;
}

double exact_residual(const PdeProblem& p, std::span<const double> x) {
    std::vector<double> grad(p.input_dim());
    p.exact_gradient(x, grad);
    return strong_residual(p, x, p.exact(x), grad, p.exact_hessian(x));
}

AnalyticField exact_field(const PdeProblem& p) { return AnalyticField(p.input_dim(), p.exact, p.exact_gradient); }

}  // namespace dfvm
