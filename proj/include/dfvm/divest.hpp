#pragma once

#include "dfvm/field.hpp"
#include "dfvm/types.hpp"

#include <span>

/// Stochastic estimators of div(A grad u)(x*) built from values or first
/// derivatives of u on a sphere of radius r around x*, plus a dense
/// central-difference oracle.
///
/// `dirs` holds one unit direction per row; every estimator is exact on
/// quadratics when the directions come in antithetic pairs.
namespace dfvm::divest {

/// (d / (k r)) sum_j (A grad u . n_j)(x* + r n_j), using exact input gradients.
double q1_sphere_ad(const Field& u, const CoefficientField& a, std::span<const double> x, double r,
                    const Matrix& dirs);

/// Q1 with each flux replaced by a central difference of u along A n_j:
/// (d / (2 k r eps)) sum_j [u(x_j + eps A n_j) - u(x_j - eps A n_j)], x_j = x* + r n_j.
double q2_sphere_diff(const Field& u, const CoefficientField& a, std::span<const double> x, double r, double eps_fd,
                      const Matrix& dirs);

/// A = alpha I only: (d / (2 k r^2)) sum_j alpha(x* + r n_j) [u(x* + 2 r n_j) - u(x*)].
double q3_sphere_onesided(const Field& u, const CoefficientField& a, std::span<const double> x, double r,
                          const Matrix& dirs);

/// Laplacian for constant unit alpha: (2d / (k r^2)) [sum_j u(x* + r n_j) - k u(x*)].
double q4_constant_alpha(const Field& u, std::span<const double> x, double r, const Matrix& dirs);

/// A = alpha I via div(alpha grad u) = alpha Lap u + grad alpha . grad u:
/// alpha(x*) Q4 + [u(x* + r grad alpha) - u(x* - r grad alpha)] / (2r).
double q5_split(const Field& u, const CoefficientField& a, std::span<const double> x, double r, const Matrix& dirs);

enum class BruteMode {
    Dense,   // all d^2 terms of sum_ij d_i(A_ij d_j u), whatever the kind of A
    Scalar,  // A = alpha I: only the d diagonal terms
};

/// Second-order central differences of div(A grad u) with step h.
double brute_divergence(const Field& u, const CoefficientField& a, std::span<const double> x, double h = 1e-4,
                        BruteMode mode = BruteMode::Dense);

}  // namespace dfvm::divest
