#include "dfvm/problems.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace dfvm;

namespace {

double max_exact_residual(const PdeProblem& p, std::size_t n, std::uint64_t seed) {
    const Matrix x = sample_interior(p.domain, n, seed);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) worst = std::max(worst, std::abs(exact_residual(p, row_span(x, i))));
    return worst;
}

}  // namespace

TEST(PoissonHd, ExactResidual) {
    EXPECT_LE(max_exact_residual(poisson_highdim(10), 1000, 1), 1e-10);
    EXPECT_LE(max_exact_residual(poisson_highdim(2), 1000, 2), 1e-10);
}

TEST(PoissonHd, Values) {
    const PdeProblem p = poisson_highdim(5);
    EXPECT_EQ(p.exact(Point(5, 0.0)), 0.0);
    EXPECT_NEAR(p.exact(Point(5, 1.0)), 1.0 + std::sin(1.0), 1e-15);
    EXPECT_EQ(p.default_boundary, 500u);
}

TEST(LShape, ExactResidualAndValues) {
    const PdeProblem p = poisson_lshape();
    EXPECT_LE(max_exact_residual(p, 1000, 3), 1e-8);
    EXPECT_NEAR(p.exact(Point{-1.0, 0.0}), -1.0, 1e-15);
    EXPECT_NEAR(p.exact(Point{0.0, -1.0}), 0.0, 1e-15);
}

TEST(Nonlinear, ExactResidualAndValues) {
    const PdeProblem p = nonlinear_elliptic(5);
    EXPECT_LE(max_exact_residual(p, 1000, 4), 1e-8);
    EXPECT_EQ(p.exact(Point(5, 0.0)), 0.0);
    Point x{0.3, -0.4, 0.1, 0.2, -0.6};
    const double u = p.exact(x);
    x[2] = -0.9;
    x[4] = 0.7;
    EXPECT_EQ(p.exact(x), u);
    EXPECT_EQ(p.default_eps, 1e-5);
}

TEST(Nonlinear, NeedsTwoDimensions) {
    EXPECT_THROW(nonlinear_elliptic(1), std::invalid_argument);
}

TEST(BlackScholes, ExactResidualAndValues) {
    const PdeProblem p = black_scholes();
    EXPECT_LE(max_exact_residual(p, 1000, 5), 1e-8);
    EXPECT_EQ(p.input_dim(), 3u);
    EXPECT_EQ(p.kind, OperatorKind::Parabolic);
    const Matrix x = sample_interior(p.domain, 100, 6);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        EXPECT_DOUBLE_EQ(p.exact(Point{x(i, 0), x(i, 1), 1.0}), x(i, 0) * x(i, 0) + x(i, 1) * x(i, 1));
        EXPECT_EQ(p.exact(Point{0.0, 0.0, x(i, 2)}), 0.0);
    }
}

TEST(BlackScholes, GrowthRateMatchesCoefficients) {
    // u_t = -0.21 u: the diffusion gives -0.08 * 6 u, reaction 0.05 u and
    // drift 0.22 u, i.e. u = |x|^2 exp(0.21 (T - t)).
    const PdeProblem p = black_scholes();
    const Point x{0.7, 1.3, 0.25};
    EXPECT_NEAR(p.exact(x), (0.49 + 1.69) * std::exp(0.21 * 0.75), 1e-14);
}

TEST(AllProblems, BoundaryDataMatchesExact) {
    for (const std::string& name : problem_names()) {
        const PdeProblem p = make_problem(name, 4);
        const Matrix xb = sample_boundary(p.domain, 1000, 7);
        for (Eigen::Index i = 0; i < xb.rows(); ++i) {
            EXPECT_LE(std::abs(p.g(row_span(xb, i)) - p.exact(row_span(xb, i))), 1e-12) << name;
        }
    }
}

TEST(AllProblems, CoefficientSymmetric) {
    for (const std::string& name : problem_names()) {
        const PdeProblem p = make_problem(name, 3);
        const Matrix x = sample_interior(p.domain, 50, 8);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Matrix a = p.a.matrix(row_span(x, i));
            EXPECT_LE((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0) << name;
        }
    }
}

TEST(AllProblems, StrongResidualOfExactMatchesHelper) {
    for (const std::string& name : problem_names()) {
        const PdeProblem p = make_problem(name, 3);
        const Matrix x = sample_interior(p.domain, 20, 9);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const auto xi = row_span(x, i);
            std::vector<double> g(p.input_dim());
            p.exact_gradient(xi, g);
            EXPECT_EQ(strong_residual(p, xi, p.exact(xi), g, p.exact_hessian(xi)), exact_residual(p, xi));
        }
    }
}

TEST(AllProblems, ExactGradientMatchesDifferences) {
    for (const std::string& name : problem_names()) {
        const PdeProblem p = make_problem(name, 3);
        const AnalyticField u = exact_field(p);
        const Matrix x = sample_interior(p.domain, 20, 10);
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const std::vector<double> g = u.gradient(row_span(x, i));
            for (std::size_t j = 0; j < p.input_dim(); ++j) {
                Point xp(row_span(x, i).begin(), row_span(x, i).end()), xm = xp;
                xp[j] += h;
                xm[j] -= h;
                EXPECT_NEAR(g[j], (p.exact(xp) - p.exact(xm)) / (2 * h), 1e-7) << name;
            }
        }
    }
}

TEST(Registry, NamesAndErrors) {
    EXPECT_EQ(problem_names(), (std::vector<std::string>{"poisson-hd", "poisson-lshape", "nonlinear", "black-scholes"}));
    EXPECT_EQ(make_problem("poisson-hd", 7).spatial_dim(), 7u);
    EXPECT_EQ(make_problem("poisson-lshape", 7).spatial_dim(), 2u);
    EXPECT_THROW(make_problem("heat", 2), std::invalid_argument);
}
