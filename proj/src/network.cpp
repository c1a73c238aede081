#include "dfvm/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dfvm {

using ad::MatMulMode;
using ad::NodeId;
using ad::Tape;
using ad::Tensor;

std::string to_string(Architecture kind) { return kind == Architecture::Fcnn ? "fcnn" : "resnet"; }

Architecture parse_architecture(const std::string& name) {
    if (name == "fcnn") return Architecture::Fcnn;
    if (name == "resnet") return Architecture::ResNet;
    throw std::invalid_argument("unknown architecture '" + name + "' (expected fcnn or resnet)");
}

void NetworkConfig::validate() const {
    if (input_dim == 0) throw std::invalid_argument("network input_dim must be positive");
    if (width == 0) throw std::invalid_argument("network width must be positive");
    if (depth == 0) throw std::invalid_argument("network depth must be at least 1");
}

ParamLayout ParamLayout::for_config(const NetworkConfig& config) {
    config.validate();
    ParamLayout layout;
    auto push = [&](std::size_t out, std::size_t in) {
        layout.layers_.push_back(LayerShape{out, in, layout.size_});
        layout.size_ += out * in + out;
    };
    const std::size_t m = config.width;
    push(m, config.input_dim);
    const std::size_t inner = config.kind == Architecture::Fcnn ? config.depth - 1 : 2 * config.depth;
    for (std::size_t k = 0; k < inner; ++k) push(m, m);
    push(1, m);
    return layout;
}

std::size_t parameter_count(const NetworkConfig& config) {
    const std::size_t d = config.input_dim, m = config.width, l = config.depth;
    const std::size_t io = d * m + m + m + 1;
    if (config.kind == Architecture::Fcnn) return io + (l - 1) * (m * m + m);
    return io + 2 * l * (m * m + m);
}

ParamSet ParamSet::zeros(const NetworkConfig& config) {
    ParamSet p;
    p.config = config;
    p.layout = ParamLayout::for_config(config);
    p.values.assign(p.layout.size(), 0.0);
    return p;
}

ParamSet ParamSet::from_flat(const NetworkConfig& config, std::vector<double> flat) {
    ParamSet p = zeros(config);
    if (flat.size() != p.values.size()) {
        throw std::invalid_argument("parameter vector has " + std::to_string(flat.size()) + " entries, layout needs " +
                                    std::to_string(p.values.size()));
    }
    p.values = std::move(flat);
    return p;
}

std::span<double> ParamSet::weights(std::size_t layer) {
    const LayerShape& s = layout.layers().at(layer);
    return {values.data() + s.offset, s.weight_count()};
}

std::span<const double> ParamSet::weights(std::size_t layer) const {
    const LayerShape& s = layout.layers().at(layer);
    return {values.data() + s.offset, s.weight_count()};
}

std::span<double> ParamSet::biases(std::size_t layer) {
    const LayerShape& s = layout.layers().at(layer);
    return {values.data() + s.offset + s.weight_count(), s.out};
}

std::span<const double> ParamSet::biases(std::size_t layer) const {
    const LayerShape& s = layout.layers().at(layer);
    return {values.data() + s.offset + s.weight_count(), s.out};
}

ParamSet init_params(const NetworkConfig& config, std::uint64_t seed) {
    ParamSet p = ParamSet::zeros(config);
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < p.layout.layers().size(); ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.layout.layers()[k].in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : p.weights(k)) w = dist(rng);
    }
    return p;
}

NetworkNodes bind_params(Tape& tape, const ParamSet& params, bool trainable) {
    NetworkNodes nodes;
    for (std::size_t k = 0; k < params.layout.layers().size(); ++k) {
        const LayerShape& s = params.layout.layers()[k];
        const auto w = params.weights(k);
        const auto b = params.biases(k);
        Tensor wt({s.out, s.in}, std::vector<double>(w.begin(), w.end()));
        Tensor bt({s.out}, std::vector<double>(b.begin(), b.end()));
        nodes.weights.push_back(trainable ? tape.variable(std::move(wt)) : tape.constant(std::move(wt)));
        nodes.biases.push_back(trainable ? tape.variable(std::move(bt)) : tape.constant(std::move(bt)));
    }
    return nodes;
}

std::vector<double> gather_gradient(const ad::Gradients& grads, const NetworkNodes& nodes, const ParamSet& params) {
    std::vector<double> flat(params.size(), 0.0);
    for (std::size_t k = 0; k < nodes.weights.size(); ++k) {
        const LayerShape& s = params.layout.layers()[k];
        const Tensor& gw = grads[nodes.weights[k]];
        const Tensor& gb = grads[nodes.biases[k]];
        std::copy(gw.data().begin(), gw.data().end(), flat.begin() + static_cast<std::ptrdiff_t>(s.offset));
        std::copy(gb.data().begin(), gb.data().end(),
                  flat.begin() + static_cast<std::ptrdiff_t>(s.offset + s.weight_count()));
    }
    return flat;
}

namespace {

NodeId affine(Tape& tape, const NetworkNodes& nodes, std::size_t layer, NodeId h) {
    return tape.affine(h, nodes.weights[layer], nodes.biases[layer]);
}

NodeId dense_tanh(Tape& tape, const NetworkNodes& nodes, std::size_t layer, NodeId h, bool keep_slopes,
                  std::vector<NodeId>& slopes) {
    const NodeId y = tape.affine_tanh(h, nodes.weights[layer], nodes.biases[layer]);
    if (keep_slopes) slopes.push_back(tape.tanh_slope(y));
    return y;
}

void check_input(const Tape& tape, const NetworkConfig& config, NodeId x, const char* what) {
    const Tensor& v = tape.value(x);
    if (v.rank() != 2 || v.cols() != config.input_dim) {
        throw std::invalid_argument(std::string(what) + ": expected points of dimension " +
                                    std::to_string(config.input_dim) + ", got shape " + ad::to_string(v.shape()));
    }
}

}  // namespace

ForwardTrace record_forward(Tape& tape, const NetworkConfig& config, const NetworkNodes& nodes, NodeId x,
                            bool keep_slopes) {
    check_input(tape, config, x, "network forward");
    ForwardTrace trace;
    const std::size_t head = nodes.weights.size() - 1;
    NodeId h = x;
    if (config.kind == Architecture::Fcnn) {
        for (std::size_t k = 0; k < head; ++k) h = dense_tanh(tape, nodes, k, h, keep_slopes, trace.slopes);
    } else {
        h = affine(tape, nodes, 0, h);
        for (std::size_t b = 0; b < config.depth; ++b) {
            const NodeId a = dense_tanh(tape, nodes, 1 + 2 * b, h, keep_slopes, trace.slopes);
            const NodeId c = dense_tanh(tape, nodes, 2 + 2 * b, a, keep_slopes, trace.slopes);
            h = tape.add(c, h);
        }
    }
    trace.output = tape.column(affine(tape, nodes, head, h), 0);
    return trace;
}

NodeId record_directional_derivative(Tape& tape, const NetworkConfig& config, const NetworkNodes& nodes,
                                     const ForwardTrace& trace, NodeId directions) {
    check_input(tape, config, directions, "directional derivative");
    const std::size_t head = nodes.weights.size() - 1;
    if (trace.slopes.size() != head - (config.kind == Architecture::ResNet ? 1 : 0)) {
        throw std::invalid_argument("directional derivative needs a forward trace recorded with slopes");
    }
    NodeId t = directions;
    if (config.kind == Architecture::Fcnn) {
        for (std::size_t k = 0; k < head; ++k) {
            t = tape.mul(tape.matmul(t, nodes.weights[k], MatMulMode::NT), trace.slopes[k]);
        }
    } else {
        t = tape.matmul(t, nodes.weights[0], MatMulMode::NT);
        for (std::size_t b = 0; b < config.depth; ++b) {
            const NodeId ta = tape.mul(tape.matmul(t, nodes.weights[1 + 2 * b], MatMulMode::NT), trace.slopes[2 * b]);
            const NodeId tc =
                tape.mul(tape.matmul(ta, nodes.weights[2 + 2 * b], MatMulMode::NT), trace.slopes[2 * b + 1]);
            t = tape.add(tc, t);
        }
    }
    return tape.column(tape.matmul(t, nodes.weights[head], MatMulMode::NT), 0);
}

NodeId record_input_gradient(Tape& tape, const NetworkConfig& config, const NetworkNodes& nodes,
                             const ForwardTrace& trace) {
    const std::size_t head = nodes.weights.size() - 1;
    if (trace.slopes.size() != head - (config.kind == Architecture::ResNet ? 1 : 0)) {
        throw std::invalid_argument("input gradient needs a forward trace recorded with slopes");
    }
    const std::size_t n = tape.value(trace.output).rows();
    const NodeId ones = tape.constant(Tensor({n, 1}, 1.0));
    NodeId g = tape.matmul(ones, nodes.weights[head]);
    if (config.kind == Architecture::Fcnn) {
        for (std::size_t k = head; k-- > 0;) g = tape.matmul(tape.mul(g, trace.slopes[k]), nodes.weights[k]);
    } else {
        for (std::size_t b = config.depth; b-- > 0;) {
            const NodeId gc = tape.mul(g, trace.slopes[2 * b + 1]);
            const NodeId ga = tape.mul(tape.matmul(gc, nodes.weights[2 + 2 * b]), trace.slopes[2 * b]);
            g = tape.add(g, tape.matmul(ga, nodes.weights[1 + 2 * b]));
        }
        g = tape.matmul(g, nodes.weights[0]);
    }
    return g;
}

namespace {

Tensor points_tensor(const Matrix& x) {
    return Tensor({static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols())},
                  std::vector<double>(x.data(), x.data() + x.size()));
}

std::vector<double> eval_as(const ParamSet& params, const Matrix& x, Architecture expected) {
    if (params.config.kind != expected) {
        throw std::invalid_argument("parameter set is for a " + to_string(params.config.kind) + " network");
    }
    return eval_network(params, x);
}

}  // namespace

std::vector<double> eval_fcnn(const ParamSet& params, const Matrix& x) {
    return eval_as(params, x, Architecture::Fcnn);
}

std::vector<double> eval_resnet(const ParamSet& params, const Matrix& x) {
    return eval_as(params, x, Architecture::ResNet);
}

std::vector<double> eval_network(const ParamSet& params, const Matrix& x) {
    Tape tape;
    const NetworkNodes nodes = bind_params(tape, params, false);
    const NodeId xn = tape.constant(points_tensor(x));
    const ForwardTrace trace = record_forward(tape, params.config, nodes, xn, false);
    const auto out = tape.value(trace.output).data();
    return {out.begin(), out.end()};
}

double eval_network(const ParamSet& params, std::span<const double> x) {
    Matrix m = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    return eval_network(params, m).front();
}

Matrix input_gradient(const ParamSet& params, const Matrix& x) {
    Tape tape;
    const NetworkNodes nodes = bind_params(tape, params, false);
    const NodeId xn = tape.variable(points_tensor(x));
    const ForwardTrace trace = record_forward(tape, params.config, nodes, xn, false);
    const ad::Gradients grads = tape.backward(tape.sum(trace.output));
    return Eigen::Map<const Matrix>(grads[xn].data().data(), x.rows(), x.cols());
}

std::vector<double> input_gradient(const ParamSet& params, std::span<const double> x) {
    Matrix m = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    Matrix g = input_gradient(params, m);
    return {g.data(), g.data() + g.size()};
}

}  // namespace dfvm
