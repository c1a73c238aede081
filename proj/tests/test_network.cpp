#include "dfvm/network.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dfvm;
using dfvm::testing::random_params;
using dfvm::testing::random_points;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> weight_map(const ParamSet& p, std::size_t layer) {
    const LayerShape& s = p.layout.layers()[layer];
    return {p.weights(layer).data(), static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in)};
}

Eigen::VectorXd bias_vec(const ParamSet& p, std::size_t layer) {
    const auto b = p.biases(layer);
    return Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
}

}  // namespace

TEST(Layout, CountMatchesClosedForm) {
    for (Architecture kind : {Architecture::Fcnn, Architecture::ResNet}) {
        for (std::size_t d : {1, 2, 10}) {
            for (std::size_t m : {8, 40, 64, 128}) {
                for (std::size_t depth : {1, 3}) {
                    const NetworkConfig cfg{kind, d, m, depth};
                    const ParamLayout layout = ParamLayout::for_config(cfg);
                    std::size_t total = 0;
                    for (const LayerShape& s : layout.layers()) {
                        EXPECT_EQ(s.offset, total);
                        total += s.size();
                    }
                    EXPECT_EQ(total, layout.size());
                    EXPECT_EQ(parameter_count(cfg), layout.size());
                }
            }
        }
    }
}

TEST(Layout, FlatRoundTrip) {
    const NetworkConfig cfg{Architecture::ResNet, 3, 8, 2};
    const ParamSet p = random_params(cfg, 1);
    const ParamSet q = ParamSet::from_flat(cfg, p.values);
    EXPECT_EQ(p.values, q.values);
    EXPECT_THROW(ParamSet::from_flat(cfg, std::vector<double>(p.size() + 1)), std::invalid_argument);
}

TEST(Config, RejectsZeroDepthOrWidth) {
    EXPECT_THROW((NetworkConfig{Architecture::ResNet, 2, 8, 0}.validate()), std::invalid_argument);
    EXPECT_THROW((NetworkConfig{Architecture::Fcnn, 2, 0, 2}.validate()), std::invalid_argument);
    EXPECT_THROW((NetworkConfig{Architecture::Fcnn, 0, 8, 2}.validate()), std::invalid_argument);
    EXPECT_EQ(parse_architecture("resnet"), Architecture::ResNet);
    EXPECT_EQ(parse_architecture("fcnn"), Architecture::Fcnn);
    EXPECT_THROW(parse_architecture("mlp"), std::invalid_argument);
}

TEST(Init, Deterministic) {
    const NetworkConfig cfg{Architecture::ResNet, 5, 40, 3};
    EXPECT_EQ(init_params(cfg, 42).values, init_params(cfg, 42).values);
    EXPECT_NE(init_params(cfg, 42).values, init_params(cfg, 43).values);
}

TEST(Init, ZeroBiases) {
    const ParamSet p = init_params({Architecture::ResNet, 5, 40, 3}, 7);
    for (std::size_t l = 0; l < p.layout.layers().size(); ++l) {
        for (double b : p.biases(l)) EXPECT_EQ(b, 0.0);
    }
}

TEST(Init, WeightSpreadMatchesUniformBound) {
    // Uniform(-1/sqrt(40), 1/sqrt(40)) has standard deviation 1/sqrt(3 * 40).
    const ParamSet p = init_params({Architecture::ResNet, 2, 40, 1}, 3);
    const auto w = p.weights(1);  // first 40 x 40 block layer
    ASSERT_EQ(w.size(), 1600u);
    double mean = 0.0, sq = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double v : w) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(w.size() - 1));
    const double expected = 1.0 / std::sqrt(3.0 * 40.0);
    EXPECT_LE(std::abs(sd - expected) / expected, 0.2);
    for (double v : w) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(40.0));
}

TEST(Fcnn, ZeroParamsGiveZero) {
    const ParamSet p = ParamSet::zeros({Architecture::Fcnn, 3, 8, 2});
    for (double v : eval_fcnn(p, random_points(10, 3, -1, 1, 1))) EXPECT_EQ(v, 0.0);
}

TEST(Fcnn, SingleUnitIsTanh) {
    const NetworkConfig cfg{Architecture::Fcnn, 3, 1, 1};
    ParamSet p = ParamSet::zeros(cfg);
    p.weights(0)[0] = 1.0;  // [1, 0, 0]
    p.weights(1)[0] = 1.0;  // linear head
    const Matrix x = random_points(20, 3, -2, 2, 2);
    const std::vector<double> u = eval_fcnn(p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) EXPECT_DOUBLE_EQ(u[static_cast<std::size_t>(i)], std::tanh(x(i, 0)));
}

TEST(Fcnn, BatchedEqualsPerPoint) {
    const ParamSet p = random_params({Architecture::Fcnn, 4, 16, 3}, 5);
    const Matrix x = random_points(33, 4, -1, 1, 6);
    const std::vector<double> batch = eval_fcnn(p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        EXPECT_NEAR(batch[static_cast<std::size_t>(i)], eval_network(p, row_span(x, i)), 1e-15);
    }
}

TEST(ResNet, ZeroBlocksActAsIdentity) {
    const NetworkConfig cfg{Architecture::ResNet, 3, 8, 3};
    ParamSet p = random_params(cfg, 9);
    // Layers: lift, (W1, W2) per block, head. Zero every block parameter.
    for (std::size_t l = 1; l + 1 < p.layout.layers().size(); ++l) {
        for (double& v : p.weights(l)) v = 0.0;
        for (double& v : p.biases(l)) v = 0.0;
    }
    const std::size_t head = p.layout.layers().size() - 1;
    const Matrix x = random_points(10, 3, -1, 1, 10);
    const std::vector<double> u = eval_resnet(p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::VectorXd lifted = weight_map(p, 0) * x.row(i).transpose() + bias_vec(p, 0);
        const double ref = (weight_map(p, head) * lifted)(0) + p.biases(head)[0];
        EXPECT_NEAR(u[static_cast<std::size_t>(i)], ref, 1e-15);
    }
}

TEST(ResNet, OneBlockMatchesHandComposition) {
    const NetworkConfig cfg{Architecture::ResNet, 2, 6, 1};
    const ParamSet p = random_params(cfg, 12);
    const Matrix x = random_points(10, 2, -1, 1, 13);
    const std::vector<double> u = eval_resnet(p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::VectorXd h0 = weight_map(p, 0) * x.row(i).transpose() + bias_vec(p, 0);
        const Eigen::VectorXd a = (weight_map(p, 1) * h0 + bias_vec(p, 1)).array().tanh();
        const Eigen::VectorXd h1 = (weight_map(p, 2) * a + bias_vec(p, 2)).array().tanh().matrix() + h0;
        const double ref = (weight_map(p, 3) * h1)(0) + p.biases(3)[0];
        EXPECT_NEAR(u[static_cast<std::size_t>(i)], ref, 1e-15);
    }
}

TEST(ResNet, BatchedEqualsPerPoint) {
    const ParamSet p = random_params({Architecture::ResNet, 5, 16, 3}, 14);
    const Matrix x = random_points(33, 5, -1, 1, 15);
    const std::vector<double> batch = eval_resnet(p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        EXPECT_NEAR(batch[static_cast<std::size_t>(i)], eval_network(p, row_span(x, i)), 1e-15);
    }
}

TEST(Network, TapeForwardMatchesEvaluator) {
    for (Architecture kind : {Architecture::Fcnn, Architecture::ResNet}) {
        const NetworkConfig cfg{kind, 3, 10, 2};
        const ParamSet p = random_params(cfg, 16);
        const Matrix x = random_points(9, 3, -1, 1, 17);
        ad::Tape t;
        const NetworkNodes nodes = bind_params(t, p, false);
        const ad::NodeId xn = t.constant(ad::Tensor({9, 3}, std::vector<double>(x.data(), x.data() + x.size())));
        const ad::Tensor& out = t.value(record_forward(t, cfg, nodes, xn, false).output);
        const std::vector<double> ref = eval_network(p, x);
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-14);
    }
}

TEST(Network, DirectionalDerivativeMatchesGradient) {
    const NetworkConfig cfg{Architecture::ResNet, 4, 12, 2};
    const ParamSet p = random_params(cfg, 18);
    const Matrix x = random_points(8, 4, -1, 1, 19);
    const Matrix v = random_points(8, 4, -1, 1, 20);
    ad::Tape t;
    const NetworkNodes nodes = bind_params(t, p, false);
    const ad::NodeId xn = t.constant(ad::Tensor({8, 4}, std::vector<double>(x.data(), x.data() + x.size())));
    const ad::NodeId vn = t.constant(ad::Tensor({8, 4}, std::vector<double>(v.data(), v.data() + v.size())));
    const ForwardTrace tr = record_forward(t, cfg, nodes, xn, true);
    const ad::Tensor& jvp = t.value(record_directional_derivative(t, cfg, nodes, tr, vn));
    const Matrix g = input_gradient(p, x);
    for (Eigen::Index i = 0; i < 8; ++i) {
        EXPECT_NEAR(jvp[static_cast<std::size_t>(i)], g.row(i).dot(v.row(i)), 1e-13);
    }
}

TEST(Network, GradientFiniteEverywhere) {
    const ParamSet p = random_params({Architecture::ResNet, 2, 16, 3}, 21);
    const Matrix x = random_points(50, 2, -1e3, 1e3, 22);
    EXPECT_TRUE(input_gradient(p, x).allFinite());
}
