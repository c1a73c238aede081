#include "dfvm/field.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dfvm {

namespace {

Matrix one_row(std::span<const double> x) {
    return Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
}

}  // namespace

double Field::value(std::span<const double> x) const { return values(one_row(x)).front(); }

std::vector<double> Field::gradient(std::span<const double> x) const {
    const Matrix g = gradients(one_row(x));
    return {g.data(), g.data() + g.size()};
}

AnalyticField::AnalyticField(std::size_t dim, ScalarFn value, VectorFn gradient)
    : dim_(dim), value_(std::move(value)), gradient_(std::move(gradient)) {}

std::vector<double> AnalyticField::values(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != dim_) throw std::invalid_argument("field: point dimension mismatch");
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) out[static_cast<std::size_t>(r)] = value_(row_span(x, r));
    return out;
}

Matrix AnalyticField::gradients(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != dim_) throw std::invalid_argument("field: point dimension mismatch");
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) gradient_(row_span(x, r), row_span(g, r));
    return g;
}

std::vector<std::string> test_field_names() { return {"sumsq", "sinsum", "sin1", "linear", "const", "gauss"}; }

std::unique_ptr<AnalyticField> make_test_field(const std::string& name, std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("test field dimension must be positive");
    const double d = static_cast<double>(dim);
    auto sum = [](std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0); };
    auto sumsq = [](std::span<const double> x) { return std::inner_product(x.begin(), x.end(), x.begin(), 0.0); };
    if (name == "sumsq") {
        return std::make_unique<AnalyticField>(
            dim, sumsq, [](std::span<const double> x, std::span<double> g) {
                for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
            });
    }
    if (name == "sinsum") {
        return std::make_unique<AnalyticField>(
            dim, [=](std::span<const double> x) { return std::sin(sum(x) / d); },
            [=](std::span<const double> x, std::span<double> g) {
                const double c = std::cos(sum(x) / d) / d;
                for (double& gi : g) gi = c;
            });
    }
    if (name == "sin1") {
        return std::make_unique<AnalyticField>(
            dim, [](std::span<const double> x) { return std::sin(x[0]); },
            [](std::span<const double> x, std::span<double> g) {
                for (double& gi : g) gi = 0.0;
                g[0] = std::cos(x[0]);
            });
    }
    if (name == "linear") {
        return std::make_unique<AnalyticField>(
            dim,
            [](std::span<const double> x) {
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(i + 1) * x[i];
                return s;
            },
            [](std::span<const double>, std::span<double> g) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i + 1);
            });
    }
    if (name == "const") {
        return std::make_unique<AnalyticField>(
            dim, [](std::span<const double>) { return 1.0; },
            [](std::span<const double>, std::span<double> g) {
                for (double& gi : g) gi = 0.0;
            });
    }
    if (name == "gauss") {
        return std::make_unique<AnalyticField>(
            dim, [=](std::span<const double> x) { return std::exp(-0.5 * sumsq(x)); },
            [=](std::span<const double> x, std::span<double> g) {
                const double e = std::exp(-0.5 * sumsq(x));
                for (std::size_t i = 0; i < x.size(); ++i) g[i] = -x[i] * e;
            });
    }
    throw std::invalid_argument("unknown field '" + name + "'");
}

double test_field_laplacian(const std::string& name, std::span<const double> x) {
    const double d = static_cast<double>(x.size());
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    const double r2 = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
    if (name == "sumsq") return 2.0 * d;
    if (name == "sinsum") return -std::sin(s / d) / d;
    if (name == "sin1") return -std::sin(x[0]);
    if (name == "linear" || name == "const") return 0.0;
    if (name == "gauss") return (r2 - d) * std::exp(-0.5 * r2);
    throw std::invalid_argument("unknown field '" + name + "'");
}

CoefficientField CoefficientField::identity(std::size_t dim, double scale) {
    CoefficientField a;
    a.kind_ = Kind::Identity;
    a.dim_ = dim;
    a.scale_ = scale;
    return a;
}

CoefficientField CoefficientField::scalar(std::size_t dim, ScalarFn alpha, VectorFn grad_alpha) {
    CoefficientField a;
    a.kind_ = Kind::Scalar;
    a.dim_ = dim;
    a.alpha_ = std::move(alpha);
    a.vec_ = std::move(grad_alpha);
    return a;
}

CoefficientField CoefficientField::diagonal(std::size_t dim, VectorFn diag, VectorFn diag_derivative) {
    CoefficientField a;
    a.kind_ = Kind::Diagonal;
    a.dim_ = dim;
    a.vec_ = std::move(diag);
    a.vec2_ = std::move(diag_derivative);
    return a;
}

CoefficientField CoefficientField::general(std::size_t dim, MatrixFn matrix, VectorFn divergence) {
    CoefficientField a;
    a.kind_ = Kind::General;
    a.dim_ = dim;
    a.matrix_ = std::move(matrix);
    a.vec2_ = std::move(divergence);
    return a;
}

void CoefficientField::apply(std::span<const double> x, std::span<const double> v, std::span<double> out) const {
    switch (kind_) {
        case Kind::Identity:
            for (std::size_t i = 0; i < dim_; ++i) out[i] = scale_ * v[i];
            return;
        case Kind::Scalar: {
            const double a = alpha_(x);
            for (std::size_t i = 0; i < dim_; ++i) out[i] = a * v[i];
            return;
        }
        case Kind::Diagonal: {
            std::vector<double> diag(dim_);
            vec_(x, diag);
            for (std::size_t i = 0; i < dim_; ++i) out[i] = diag[i] * v[i];
            return;
        }
        case Kind::General: {
            const Matrix a = matrix_(x);
            for (std::size_t i = 0; i < dim_; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < dim_; ++j) s += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * v[j];
                out[i] = s;
            }
            return;
        }
    }
}

Matrix CoefficientField::matrix(std::span<const double> x) const {
    const auto n = static_cast<Eigen::Index>(dim_);
    switch (kind_) {
        case Kind::Identity: return scale_ * Matrix::Identity(n, n);
        case Kind::Scalar: return alpha_(x) * Matrix::Identity(n, n);
        case Kind::Diagonal: {
            std::vector<double> diag(dim_);
            vec_(x, diag);
            Matrix m = Matrix::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i) m(i, i) = diag[static_cast<std::size_t>(i)];
            return m;
        }
        case Kind::General: return matrix_(x);
    }
    return {};
}

double CoefficientField::alpha(std::span<const double> x) const {
    if (kind_ == Kind::Identity) return scale_;
    if (kind_ == Kind::Scalar) return alpha_(x);
    throw std::invalid_argument("coefficient is not of the form alpha(x) I");
}

std::vector<double> CoefficientField::grad_alpha(std::span<const double> x) const {
    std::vector<double> g(dim_, 0.0);
    if (kind_ == Kind::Identity) return g;
    if (kind_ == Kind::Scalar) {
        vec_(x, g);
        return g;
    }
    throw std::invalid_argument("coefficient is not of the form alpha(x) I");
}

std::vector<double> CoefficientField::divergence(std::span<const double> x) const {
    std::vector<double> out(dim_, 0.0);
    switch (kind_) {
        case Kind::Identity: break;
        case Kind::Scalar: vec_(x, out); break;
        case Kind::Diagonal:
        case Kind::General: vec2_(x, out); break;
    }
    return out;
}

}  // namespace dfvm
