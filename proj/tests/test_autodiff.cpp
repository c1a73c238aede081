#include "dfvm/autodiff.hpp"
#include "dfvm/network.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

using namespace dfvm;
using namespace dfvm::ad;
using dfvm::testing::random_params;
using dfvm::testing::random_points;

TEST(Tensor, ShapeMustMatchData) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
    EXPECT_NO_THROW(Tensor({2, 3}, std::vector<double>(6)));
}

TEST(Tensor, StorageIsCacheLineAligned) {
    // Vectorized reductions must see the same alignment on every run.
    for (std::size_t n : {1, 3, 7, 100}) {
        const Tensor t({n}, std::vector<double>(n, 1.0));
        EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.data().data()) % 64, 0u);
        Tensor u = t;
        EXPECT_EQ(reinterpret_cast<std::uintptr_t>(u.data().data()) % 64, 0u);
    }
}

TEST(Tensor, CheckedRejectsNonFinite) {
    EXPECT_THROW(Tensor::checked({2}, {1.0, NAN}), std::invalid_argument);
    EXPECT_THROW(Tensor::checked({1}, {INFINITY}), std::invalid_argument);
    EXPECT_NO_THROW(Tensor::checked({2}, {1.0, 2.0}));
}

TEST(Record, AddIsComponentwise) {
    Tape t;
    const NodeId a = t.constant(Tensor::vector({1, 2}));
    const NodeId b = t.constant(Tensor::vector({3, 4}));
    const Tensor& s = t.value(t.add(a, b));
    EXPECT_EQ(s[0], 4.0);
    EXPECT_EQ(s[1], 6.0);
}

TEST(Record, TanhOfZero) {
    Tape t;
    EXPECT_EQ(t.value(t.tanh(t.constant(Tensor::vector({0.0}))))[0], 0.0);
}

TEST(Record, MatMulSelectsColumn) {
    Tape t;
    const NodeId w = t.constant(Tensor({2, 3}, {1, 0, 0, 0, 1, 0}));
    const NodeId x = t.constant(Tensor::vector({1, 0, 0}));
    const Tensor& y = t.value(t.matmul(w, x));
    ASSERT_EQ(y.shape(), (Tensor::Shape{2}));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 0.0);
}

TEST(Record, ShapeMismatchNamesOpAndShapes) {
    Tape t;
    const NodeId a = t.constant(Tensor({2, 3}));
    const NodeId b = t.constant(Tensor({2, 2}));
    try {
        t.matmul(a, b);
        FAIL() << "expected an exception";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(2,2)"), std::string::npos) << msg;
    }
    EXPECT_THROW(t.add(t.constant(Tensor({3})), t.constant(Tensor({4}))), std::invalid_argument);
}

TEST(Backward, SumOfSquares) {
    Tape t;
    const NodeId x = t.variable(Tensor::vector({1, 2, 3}));
    const Gradients g = t.backward(t.sum(t.square(x)));
    EXPECT_EQ(g[x][0], 2.0);
    EXPECT_EQ(g[x][1], 4.0);
    EXPECT_EQ(g[x][2], 6.0);
}

TEST(Backward, TanhOfProductMatchesDifference) {
    const double xv = 0.5;
    auto f = [&](double w) { return std::tanh(w * xv); };
    Tape t;
    const NodeId w = t.variable(Tensor::vector({1.0}));
    const NodeId x = t.constant(Tensor::vector({xv}));
    const Gradients g = t.backward(t.sum(t.tanh(t.mul(w, x))));
    const double h = 1e-6;
    const double fd = (f(1.0 + h) - f(1.0 - h)) / (2 * h);
    const double closed = xv * (1.0 - std::tanh(xv) * std::tanh(xv));
    EXPECT_NEAR(g[w][0], closed, 1e-15);
    EXPECT_LE(std::abs(g[w][0] - fd) / std::abs(fd), 1e-8);
}

TEST(Backward, ConstantRootGivesZeros) {
    Tape t;
    const NodeId v = t.variable(Tensor::vector({1, 2}));
    const NodeId c = t.constant(Tensor::scalar(3.0));
    const Gradients g = t.backward(c);
    EXPECT_EQ(g[v][0], 0.0);
    EXPECT_EQ(g[v][1], 0.0);
}

TEST(Backward, RejectsNonScalarRoot) {
    Tape t;
    const NodeId v = t.variable(Tensor::vector({1, 2}));
    EXPECT_THROW(t.backward(t.square(v)), std::invalid_argument);
}

// Every primitive against central differences: the root is a random linear
// functional of the op output, so all adjoint entries are exercised.
namespace {

using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

void check_op(const std::vector<Tensor>& inputs, const Builder& build, double tol = 1e-8) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n01;
    Tensor probe;
    auto eval = [&](const std::vector<Tensor>& in, Gradients* grads, std::vector<NodeId>* ids) {
        Tape t;
        std::vector<NodeId> leaves;
        for (const Tensor& x : in) leaves.push_back(t.variable(x));
        const NodeId out = build(t, leaves);
        if (probe.size() == 0) {
            std::vector<double> w(t.value(out).size());
            for (double& v : w) v = n01(rng);
            probe = Tensor(t.value(out).shape(), w);
        }
        const NodeId root = t.sum(t.mul(out, t.constant(probe)));
        if (grads) *grads = t.backward(root);
        if (ids) *ids = leaves;
        return t.value(root).item();
    };
    Gradients g;
    std::vector<NodeId> ids;
    eval(inputs, &g, &ids);
    const double h = 1e-6;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[k][i] += h;
            minus[k][i] -= h;
            const double fd = (eval(plus, nullptr, nullptr) - eval(minus, nullptr, nullptr)) / (2 * h);
            EXPECT_NEAR(g[ids[k]][i], fd, tol * std::max(1.0, std::abs(fd))) << "input " << k << " entry " << i;
        }
    }
}

Tensor randn(Tensor::Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = 0.7 * n01(rng);
    return t;
}

}  // namespace

TEST(Backward, EveryPrimitiveMatchesDifferences) {
    check_op({randn({3, 2}, 1), randn({3, 2}, 2)}, [](Tape& t, auto& in) { return t.add(in[0], in[1]); });
    check_op({randn({3, 2}, 1), randn({2}, 2)}, [](Tape& t, auto& in) { return t.add(in[0], in[1]); });
    check_op({randn({3, 2}, 3), randn({3, 2}, 4)}, [](Tape& t, auto& in) { return t.mul(in[0], in[1]); });
    check_op({randn({3, 4}, 5), randn({4, 2}, 6)}, [](Tape& t, auto& in) { return t.matmul(in[0], in[1]); });
    check_op({randn({3, 4}, 5), randn({2, 4}, 6)},
             [](Tape& t, auto& in) { return t.matmul(in[0], in[1], MatMulMode::NT); });
    check_op({randn({4, 3}, 5), randn({4, 2}, 6)},
             [](Tape& t, auto& in) { return t.matmul(in[0], in[1], MatMulMode::TN); });
    check_op({randn({2, 3}, 7), randn({3}, 8)}, [](Tape& t, auto& in) { return t.matmul(in[0], in[1]); });
    check_op({randn({3, 2}, 9)}, [](Tape& t, auto& in) { return t.tanh(in[0]); });
    check_op({randn({3, 2}, 10)}, [](Tape& t, auto& in) { return t.scale(in[0], -1.5, 0.25); });
    check_op({randn({3, 2}, 11)}, [](Tape& t, auto& in) { return t.square(in[0]); });
    check_op({randn({3, 2}, 12)}, [](Tape& t, auto& in) { return t.sum(in[0]); });
    check_op({randn({3, 2}, 13)}, [](Tape& t, auto& in) { return t.row_sum(in[0]); });
    check_op({randn({3, 4}, 14)}, [](Tape& t, auto& in) { return t.column(in[0], 2); });
    check_op({randn({3, 4}, 15)}, [](Tape& t, auto& in) { return t.reshape(in[0], {4, 3}); });
    check_op({randn({3, 4}, 16)}, [](Tape& t, auto& in) { return t.mean(in[0]); });
    check_op({randn({5, 3}, 17), randn({4, 3}, 18), randn({4}, 19)},
             [](Tape& t, auto& in) { return t.affine(in[0], in[1], in[2]); });
    check_op({randn({5, 3}, 20), randn({4, 3}, 21), randn({4}, 22)},
             [](Tape& t, auto& in) { return t.affine_tanh(in[0], in[1], in[2]); });
    check_op({randn({3, 2}, 23)}, [](Tape& t, auto& in) { return t.tanh_slope(in[0]); });
}

TEST(Backward, FusedOpsEqualTheirExpansion) {
    const Tensor h = randn({6, 3}, 30), w = randn({4, 3}, 31), b = randn({4}, 32);
    Tape t;
    const NodeId hn = t.constant(h), wn = t.constant(w), bn = t.constant(b);
    const Tensor& fused = t.value(t.affine_tanh(hn, wn, bn));
    const Tensor& plain = t.value(t.tanh(t.add(t.matmul(hn, wn, MatMulMode::NT), bn)));
    for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused[i], plain[i], 1e-15);
    const NodeId y = t.tanh(t.constant(h));
    const Tensor& slope = t.value(t.tanh_slope(y));
    for (std::size_t i = 0; i < slope.size(); ++i) EXPECT_NEAR(slope[i], 1.0 - std::pow(std::tanh(h[i]), 2), 1e-15);
}

TEST(Backward, IsLinearInTheRoot) {
    const Tensor x = randn({4, 3}, 40);
    auto grads = [&](double a, double b) {
        Tape t;
        const NodeId v = t.variable(x);
        const NodeId f = t.sum(t.square(t.tanh(v)));
        const NodeId g = t.sum(t.mul(v, t.tanh(v)));
        const Gradients gr = t.backward(t.add(t.scale(f, a), t.scale(g, b)));
        return gr[v];
    };
    const Tensor combined = grads(2.0, -3.0);
    const Tensor gf = grads(1.0, 0.0);
    const Tensor gg = grads(0.0, 1.0);
    for (std::size_t i = 0; i < combined.size(); ++i) EXPECT_NEAR(combined[i], 2.0 * gf[i] - 3.0 * gg[i], 1e-12);
}

TEST(Backward, IsDeterministic) {
    const NetworkConfig cfg{Architecture::ResNet, 3, 16, 2};
    const ParamSet p = random_params(cfg, 5);
    const Matrix x = random_points(32, 3, -1, 1, 6);
    auto run = [&] {
        Tape t;
        const NetworkNodes nodes = bind_params(t, p, true);
        const NodeId xn = t.constant(Tensor({32, 3}, std::vector<double>(x.data(), x.data() + x.size())));
        const ForwardTrace tr = record_forward(t, cfg, nodes, xn, false);
        return gather_gradient(t.backward(t.sum(t.square(tr.output))), nodes, p);
    };
    EXPECT_EQ(run(), run());
}

TEST(InputGradient, LinearLayer) {
    // The networks always have a tanh layer; at x = 0 it is the identity to
    // first order, so u behaves like [2, -1] . x there.
    const NetworkConfig cfg{Architecture::Fcnn, 2, 2, 1};
    ParamSet p = ParamSet::zeros(cfg);
    auto w = p.weights(0);
    w[0] = 1.0;  // hidden 0 <- x0
    w[3] = 1.0;  // hidden 1 <- x1
    auto head = p.weights(1);
    head[0] = 2.0;
    head[1] = -1.0;
    const std::vector<double> g = input_gradient(p, std::vector<double>{0.0, 0.0});
    EXPECT_DOUBLE_EQ(g[0], 2.0);
    EXPECT_DOUBLE_EQ(g[1], -1.0);
}

TEST(InputGradient, AtOriginEqualsWeightProduct) {
    // With zero biases every pre-activation vanishes at x = 0, so the
    // gradient is the plain product of the weight matrices.
    const NetworkConfig cfg{Architecture::Fcnn, 3, 5, 3};
    const ParamSet p = init_params(cfg, 11);
    Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(3, 3);
    for (std::size_t l = 0; l < p.layout.layers().size(); ++l) {
        const LayerShape& s = p.layout.layers()[l];
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
            p.weights(l).data(), static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
        prod = (w * prod).eval();
    }
    const std::vector<double> g = input_gradient(p, std::vector<double>{0.0, 0.0, 0.0});
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(g[static_cast<std::size_t>(j)], prod(0, j), 1e-15);
}

TEST(InputGradient, DimensionMismatchThrows) {
    const ParamSet p = init_params({Architecture::ResNet, 3, 8, 1}, 1);
    EXPECT_THROW(input_gradient(p, std::vector<double>{0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(eval_network(p, Matrix::Zero(4, 2)), std::invalid_argument);
}

// Lighter version of the 200-net acceptance sweep.
TEST(InputGradient, RandomNetsMatchDifferences) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const NetworkConfig cfg{trial % 2 ? Architecture::ResNet : Architecture::Fcnn,
                                static_cast<std::size_t>(1 + rng() % 5), static_cast<std::size_t>(2 + rng() % 15),
                                static_cast<std::size_t>(1 + rng() % 4)};
        const ParamSet p = random_params(cfg, rng());
        const Matrix x = random_points(1, cfg.input_dim, -1, 1, rng());
        const std::vector<double> g = input_gradient(p, row_span(x, 0));
        const double h = 1e-5;
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < cfg.input_dim; ++j) {
            Point xp(row_span(x, 0).begin(), row_span(x, 0).end()), xm = xp;
            xp[j] += h;
            xm[j] -= h;
            const double fd = (eval_network(p, xp) - eval_network(p, xm)) / (2 * h);
            num += (g[j] - fd) * (g[j] - fd);
            den += fd * fd;
        }
        EXPECT_LE(std::sqrt(num / std::max(den, 1e-300)), 1e-5) << "trial " << trial;
    }
}

TEST(InputGradient, TapeExpressionMatchesReversePass) {
    for (Architecture kind : {Architecture::Fcnn, Architecture::ResNet}) {
        const NetworkConfig cfg{kind, 4, 12, 3};
        const ParamSet p = random_params(cfg, 3);
        const Matrix x = random_points(7, 4, -1, 1, 4);
        Tape t;
        const NetworkNodes nodes = bind_params(t, p, false);
        const NodeId xn = t.constant(Tensor({7, 4}, std::vector<double>(x.data(), x.data() + x.size())));
        const ForwardTrace tr = record_forward(t, cfg, nodes, xn, true);
        const Tensor& g = t.value(record_input_gradient(t, cfg, nodes, tr));
        const Matrix ref = input_gradient(p, x);
        for (Eigen::Index i = 0; i < 7; ++i) {
            for (Eigen::Index j = 0; j < 4; ++j) {
                EXPECT_NEAR(g.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)), ref(i, j), 1e-13);
            }
        }
    }
}
