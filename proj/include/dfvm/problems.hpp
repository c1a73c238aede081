#pragma once

#include "dfvm/field.hpp"
#include "dfvm/sampling.hpp"
#include "dfvm/types.hpp"

#include <string>
#include <vector>

namespace dfvm {

enum class OperatorKind { Elliptic, Parabolic };

/// L u - f = 0 in the domain, u = g on the boundary (or at t = T), with
///
///   L u = -div(A grad_x u) + B . grad_x u + c u + time_coeff u_t + grad_sq_coeff |grad_x u|^2.
///
/// Points carry time as the last coordinate for parabolic problems.
struct PdeProblem {
    std::string name;
    OperatorKind kind = OperatorKind::Elliptic;
    Domain domain = Domain::hypercube(0.0, 1.0, 1);
    CoefficientField a = CoefficientField::identity(1);
    VectorFn b;  // empty means B = 0
    ScalarFn c;  // empty means c = 0
    ScalarFn f;
    double time_coeff = 0.0;
    double grad_sq_coeff = 0.0;
    ScalarFn g;
    ScalarFn exact;
    VectorFn exact_gradient;  // all input coordinates
    MatrixFn exact_hessian;   // spatial block only

    // Experiment defaults.
    double default_eps = 1e-3;
    std::size_t default_interior = 2000;
    std::size_t default_boundary = 600;
    std::size_t default_width = 40;

    std::size_t spatial_dim() const { return domain.spatial_dim(); }
    std::size_t input_dim() const { return domain.input_dim(); }
};

/// -Lap u = f on (0,1)^d, u = (mean x)^2 + sin(mean x).
PdeProblem poisson_highdim(std::size_t dim);
/// -div((1 + |x|^2) grad u) = f on (-1,1)^2 \ [0,1)^2, u = sin(pi x1 / 2) cos(pi x2 / 2).
PdeProblem poisson_lshape();
/// -div((1 + |x|^2) grad u) + |grad u|^2 / 2 = f on (-1,1)^d, u = sin(pi x1^2 / 2 + x2^2 / 2).
PdeProblem nonlinear_elliptic(std::size_t dim);
/// Black-Scholes in divergence form on [0,2]^2 x [0,T], terminal data |x|^2.
PdeProblem black_scholes(double horizon = 1.0);

/// By CLI name: poisson-hd, poisson-lshape, nonlinear, black-scholes. `dim`
/// is ignored by the fixed-dimension problems.
PdeProblem make_problem(const std::string& name, std::size_t dim, double horizon = 1.0);
std::vector<std::string> problem_names();

/// L u - f at x given u, its full input gradient and its spatial Hessian.
double strong_residual(const PdeProblem& problem, std::span<const double> x, double u,
                       std::span<const double> grad, const Matrix& hessian);
/// Strong residual of the exact solution.
double exact_residual(const PdeProblem& problem, std::span<const double> x);

/// The exact solution as a Field (value and gradient).
AnalyticField exact_field(const PdeProblem& problem);

}  // namespace dfvm
