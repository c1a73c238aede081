#pragma once

#include "dfvm/network.hpp"
#include "dfvm/types.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dfvm {

/// Scalar function on R^dim with first derivatives, evaluated in batches
/// (one point per row).
class Field {
public:
    virtual ~Field() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> values(const Matrix& x) const = 0;
    virtual Matrix gradients(const Matrix& x) const = 0;

    double value(std::span<const double> x) const;
    std::vector<double> gradient(std::span<const double> x) const;
};

using ScalarFn = std::function<double(std::span<const double>)>;
/// Writes a vector-valued result into the output span.
using VectorFn = std::function<void(std::span<const double>, std::span<double>)>;
using MatrixFn = std::function<Matrix(std::span<const double>)>;

class AnalyticField final : public Field {
public:
    AnalyticField(std::size_t dim, ScalarFn value, VectorFn gradient);

    std::size_t dim() const override { return dim_; }
    std::vector<double> values(const Matrix& x) const override;
    Matrix gradients(const Matrix& x) const override;

private:
    std::size_t dim_;
    ScalarFn value_;
    VectorFn gradient_;
};

/// u_theta for a fixed parameter set. Gradients come from the reverse pass.
class NetworkField final : public Field {
public:
    explicit NetworkField(ParamSet params) : params_(std::move(params)) {}

    std::size_t dim() const override { return params_.config.input_dim; }
    std::vector<double> values(const Matrix& x) const override { return eval_network(params_, x); }
    Matrix gradients(const Matrix& x) const override { return input_gradient(params_, x); }
    const ParamSet& params() const { return params_; }

private:
    ParamSet params_;
};

/// Built-in analytic fields, by name:
///   sumsq   |x|^2
///   sinsum  sin(sum x_i / d)
///   sin1    sin(x_1)
///   linear  sum_i (i + 1) x_i
///   const   1
///   gauss   exp(-|x|^2 / 2)
std::unique_ptr<AnalyticField> make_test_field(const std::string& name, std::size_t dim);
/// Exact Laplacian of a built-in field.
double test_field_laplacian(const std::string& name, std::span<const double> x);
std::vector<std::string> test_field_names();

/// Diffusion coefficient A(x) acting on the first `dim` coordinates of a point
/// (any trailing coordinates, such as time, are ignored).
class CoefficientField {
public:
    enum class Kind { Identity, Scalar, Diagonal, General };

    /// constant * I
    static CoefficientField identity(std::size_t dim, double scale = 1.0);
    /// alpha(x) * I, with grad alpha available.
    static CoefficientField scalar(std::size_t dim, ScalarFn alpha, VectorFn grad_alpha);
    /// diag(a_1(x), ..., a_d(x)); `diag_derivative` gives d a_i / d x_i.
    static CoefficientField diagonal(std::size_t dim, VectorFn diag, VectorFn diag_derivative);
    /// Full symmetric matrix; `divergence` gives sum_i d A_ij / d x_i for each j.
    static CoefficientField general(std::size_t dim, MatrixFn matrix, VectorFn divergence);

    Kind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    bool is_scalar() const { return kind_ == Kind::Identity || kind_ == Kind::Scalar; }

    /// out = A(x) v (fast path per kind).
    void apply(std::span<const double> x, std::span<const double> v, std::span<double> out) const;
    /// Dense A(x), the general evaluator.
    Matrix matrix(std::span<const double> x) const;
    /// alpha(x) for scalar kinds; throws otherwise.
    double alpha(std::span<const double> x) const;
    std::vector<double> grad_alpha(std::span<const double> x) const;
    /// sum_i d A_ij / d x_i, j = 1..dim.
    std::vector<double> divergence(std::span<const double> x) const;

private:
    Kind kind_ = Kind::Identity;
    std::size_t dim_ = 0;
    double scale_ = 1.0;
    ScalarFn alpha_;
    VectorFn vec_;    // grad alpha, diagonal entries
    VectorFn vec2_;   // diagonal derivative, divergence
    MatrixFn matrix_;
};

}  // namespace dfvm
