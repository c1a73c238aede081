#include "dfvm/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dfvm::ad {

namespace {

#if defined(__GLIBC__)
// Tape buffers are large and short-lived. Keeping them in the heap instead of
// mapping fresh pages for each one avoids a page-fault storm on every step.
const bool kHeapTuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
}();
#endif

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;
using ArrayMap = Eigen::Map<Eigen::ArrayXd>;

std::size_t shape_size(const Tensor::Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ConstMatMap as_matrix(const Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

MatMap as_matrix(Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

ConstArrayMap as_array(const Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.size())};
}

ArrayMap as_array(Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.size())};
}

// tanh as 1 - 2 / (exp(2x) + 1): vectorizes, absolute error at the 1e-16 level.
template <typename Expr>
auto tanh_of(const Expr& x) {
    return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " + to_string(a.shape()) +
                                " and " + to_string(b.shape()));
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
    return a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1];
}

// Operand dimensions of a matmul after applying the transpose mode.
struct MatMulDims {
    std::size_t m, k, n;
};

MatMulDims matmul_dims(const Tensor& a, const Tensor& b, MatMulMode mode) {
    if (a.rank() != 2 || b.rank() == 0) shape_error(Op::MatMul, a, b);
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    switch (mode) {
        case MatMulMode::NN:
            if (ac != br) shape_error(Op::MatMul, a, b);
            return {ar, ac, bc};
        case MatMulMode::NT:
            if (ac != bc) shape_error(Op::MatMul, a, b);
            return {ar, ac, br};
        case MatMulMode::TN:
            if (ar != br) shape_error(Op::MatMul, a, b);
            return {ac, ar, bc};
    }
    shape_error(Op::MatMul, a, b);
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_.size() > 2) throw std::invalid_argument("tensor rank above 2 is not supported");
    if (shape_size(shape_) != data_.size()) {
        throw std::invalid_argument("tensor shape " + to_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::checked(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) throw std::invalid_argument("tensor contains NaN or Inf");
    return t;
}

Tensor Tensor::vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

double Tensor::item() const {
    if (data_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + to_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string to_string(const Tensor::Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    if (shape.size() == 1) os << ',';
    os << ')';
    return os.str();
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::Tanh: return "tanh";
        case Op::Scale: return "scale";
        case Op::Square: return "square";
        case Op::Sum: return "sum";
        case Op::RowSum: return "row_sum";
        case Op::Column: return "column";
        case Op::Reshape: return "reshape";
        case Op::Affine: return "affine";
        case Op::AffineTanh: return "affine_tanh";
        case Op::TanhSlope: return "tanh_slope";
    }
    return "?";
}

NodeId Tape::variable(Tensor value) {
    nodes_.push_back(Node{Op::Leaf, {}, {}, std::move(value), true});
    return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value) {
    nodes_.push_back(Node{Op::Leaf, {}, {}, std::move(value), false});
    return nodes_.size() - 1;
}

NodeId Tape::matmul(NodeId a, NodeId b, MatMulMode mode) {
    OpArgs args;
    args.mode = mode;
    return record(Op::MatMul, {a, b}, args);
}

NodeId Tape::scale(NodeId a, double alpha, double beta) {
    OpArgs args;
    args.alpha = alpha;
    args.beta = beta;
    return record(Op::Scale, {a}, args);
}

NodeId Tape::column(NodeId a, std::size_t index) {
    OpArgs args;
    args.index = index;
    return record(Op::Column, {a}, args);
}

NodeId Tape::reshape(NodeId a, Tensor::Shape shape) {
    OpArgs args;
    args.shape = std::move(shape);
    return record(Op::Reshape, {a}, args);
}

NodeId Tape::mean(NodeId a) {
    const auto n = static_cast<double>(value(a).size());
    return scale(sum(a), 1.0 / n);
}

NodeId Tape::record(Op op, std::initializer_list<NodeId> inputs, const OpArgs& args) {
    if (op == Op::Leaf) throw std::invalid_argument("record: leaves are created with variable()/constant()");
    std::vector<NodeId> ins(inputs);
    bool grad = false;
    for (NodeId id : ins) {
        if (id >= nodes_.size()) throw std::out_of_range(std::string(op_name(op)) + ": unknown input node");
        grad = grad || nodes_[id].requires_grad;
    }
    Tensor v = forward(op, ins, args);
    nodes_.push_back(Node{op, std::move(ins), args, std::move(v), grad});
    return nodes_.size() - 1;
}

Tensor Tape::forward(Op op, const std::vector<NodeId>& in, const OpArgs& args) const {
    const auto arity = [&](std::size_t n) {
        if (in.size() != n) {
            throw std::invalid_argument(std::string(op_name(op)) + ": expected " + std::to_string(n) + " inputs");
        }
    };
    switch (op) {
        case Op::Add: {
            arity(2);
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            Tensor out = a;
            if (a.shape() == b.shape()) {
                as_array(out) += as_array(b);
            } else if (is_row_broadcast(a, b)) {
                as_matrix(out).rowwise() += as_matrix(b).transpose().row(0);
            } else {
                shape_error(op, a, b);
            }
            return out;
        }
        case Op::Mul: {
            arity(2);
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            if (a.shape() != b.shape()) shape_error(op, a, b);
            Tensor out = a;
            as_array(out) *= as_array(b);
            return out;
        }
        case Op::MatMul: {
            arity(2);
            const Tensor& a = value(in[0]);
            const Tensor& b = value(in[1]);
            const MatMulDims dims = matmul_dims(a, b, args.mode);
            Tensor out = (b.rank() == 1 && args.mode == MatMulMode::NN) ? Tensor({dims.m})
                                                                        : Tensor({dims.m, dims.n});
            auto c = as_matrix(out);
            switch (args.mode) {
                case MatMulMode::NN: c.noalias() = as_matrix(a) * as_matrix(b); break;
                case MatMulMode::NT: c.noalias() = as_matrix(a) * as_matrix(b).transpose(); break;
                case MatMulMode::TN: c.noalias() = as_matrix(a).transpose() * as_matrix(b); break;
            }
            return out;
        }
        case Op::Tanh: {
            arity(1);
            const Tensor& a = value(in[0]);
            Tensor out(a.shape());
            as_array(out) = tanh_of(as_array(a));
            return out;
        }
        case Op::Affine:
        case Op::AffineTanh: {
            arity(3);
            const Tensor& h = value(in[0]);
            const Tensor& w = value(in[1]);
            const Tensor& b = value(in[2]);
            if (h.rank() != 2 || w.rank() != 2 || h.cols() != w.cols()) shape_error(op, h, w);
            if (b.rank() != 1 || b.size() != w.rows()) shape_error(op, w, b);
            Tensor out({h.rows(), w.rows()});
            auto z = as_matrix(out);
            z.noalias() = as_matrix(h) * as_matrix(w).transpose();
            z.rowwise() += as_matrix(b).transpose().row(0);
            if (op == Op::AffineTanh) as_array(out) = tanh_of(as_array(out));
            return out;
        }
        case Op::TanhSlope: {
            arity(1);
            const Tensor& y = value(in[0]);
            Tensor out(y.shape());
            as_array(out) = 1.0 - as_array(y).square();
            return out;
        }
        case Op::Scale: {
            arity(1);
            Tensor out = value(in[0]);
            as_array(out) = args.alpha * as_array(out) + args.beta;
            return out;
        }
        case Op::Square: {
            arity(1);
            Tensor out = value(in[0]);
            as_array(out) = as_array(out).square();
            return out;
        }
        case Op::Sum: {
            arity(1);
            return Tensor::scalar(as_array(value(in[0])).sum());
        }
        case Op::RowSum: {
            arity(1);
            const Tensor& a = value(in[0]);
            if (a.rank() != 2) throw std::invalid_argument("row_sum: expected rank 2, got " + to_string(a.shape()));
            Tensor out({a.rows()});
            as_matrix(out) = as_matrix(a).rowwise().sum();
            return out;
        }
        case Op::Column: {
            arity(1);
            const Tensor& a = value(in[0]);
            if (a.rank() != 2 || args.index >= a.cols()) {
                throw std::invalid_argument("column: index " + std::to_string(args.index) + " out of range for " +
                                            to_string(a.shape()));
            }
            Tensor out({a.rows()});
            as_matrix(out) = as_matrix(a).col(static_cast<Eigen::Index>(args.index));
            return out;
        }
        case Op::Reshape: {
            arity(1);
            const Tensor& a = value(in[0]);
            if (shape_size(args.shape) != a.size()) {
                throw std::invalid_argument("reshape: cannot view " + to_string(a.shape()) + " as " +
                                            to_string(args.shape));
            }
            return Tensor(args.shape, std::vector<double>(a.data().begin(), a.data().end()));
        }
        case Op::Leaf: break;
    }
    throw std::logic_error("forward: unhandled op");
}

namespace {

void add_into(std::vector<Tensor>& adjoints, NodeId id, Tensor contribution) {
    Tensor& slot = adjoints[id];
    if (slot.size() == 0 && contribution.size() != 0) {
        slot = std::move(contribution);
    } else {
        as_array(slot) += as_array(contribution);
    }
}

}  // namespace

void Tape::accumulate(const Node& node, const Tensor& adj, std::vector<Tensor>& adjoints) const {
    const auto needs = [&](std::size_t i) { return nodes_[node.inputs[i]].requires_grad; };
    switch (node.op) {
        case Op::Add: {
            const Tensor& b = value(node.inputs[1]);
            if (needs(0)) add_into(adjoints, node.inputs[0], adj);
            if (needs(1)) {
                if (b.shape() == adj.shape()) {
                    add_into(adjoints, node.inputs[1], adj);
                } else {
                    Tensor gb(b.shape());
                    as_matrix(gb) = as_matrix(adj).colwise().sum().transpose();
                    add_into(adjoints, node.inputs[1], std::move(gb));
                }
            }
            return;
        }
        case Op::Mul: {
            if (needs(0)) {
                Tensor g = adj;
                as_array(g) *= as_array(value(node.inputs[1]));
                add_into(adjoints, node.inputs[0], std::move(g));
            }
            if (needs(1)) {
                Tensor g = adj;
                as_array(g) *= as_array(value(node.inputs[0]));
                add_into(adjoints, node.inputs[1], std::move(g));
            }
            return;
        }
        case Op::MatMul: {
            const Tensor& a = value(node.inputs[0]);
            const Tensor& b = value(node.inputs[1]);
            const auto dc = as_matrix(adj);
            if (needs(0)) {
                Tensor ga(a.shape());
                auto g = as_matrix(ga);
                switch (node.args.mode) {
                    case MatMulMode::NN: g.noalias() = dc * as_matrix(b).transpose(); break;
                    case MatMulMode::NT: g.noalias() = dc * as_matrix(b); break;
                    case MatMulMode::TN: g.noalias() = as_matrix(b) * dc.transpose(); break;
                }
                add_into(adjoints, node.inputs[0], std::move(ga));
            }
            if (needs(1)) {
                Tensor gb(b.shape());
                auto g = as_matrix(gb);
                switch (node.args.mode) {
                    case MatMulMode::NN: g.noalias() = as_matrix(a).transpose() * dc; break;
                    case MatMulMode::NT: g.noalias() = dc.transpose() * as_matrix(a); break;
                    case MatMulMode::TN: g.noalias() = as_matrix(a) * dc; break;
                }
                add_into(adjoints, node.inputs[1], std::move(gb));
            }
            return;
        }
        case Op::Tanh: {
            Tensor g = adj;
            as_array(g) *= 1.0 - as_array(node.value).square();
            add_into(adjoints, node.inputs[0], std::move(g));
            return;
        }
        case Op::Affine:
        case Op::AffineTanh: {
            const Tensor& h = value(node.inputs[0]);
            const Tensor& w = value(node.inputs[1]);
            Tensor dz_t = adj;
            if (node.op == Op::AffineTanh) as_array(dz_t) *= 1.0 - as_array(node.value).square();
            const auto dz = as_matrix(dz_t);
            if (needs(0)) {
                Tensor gh(h.shape());
                as_matrix(gh).noalias() = dz * as_matrix(w);
                add_into(adjoints, node.inputs[0], std::move(gh));
            }
            if (needs(1)) {
                Tensor gw(w.shape());
                as_matrix(gw).noalias() = dz.transpose() * as_matrix(h);
                add_into(adjoints, node.inputs[1], std::move(gw));
            }
            if (needs(2)) {
                Tensor gb(value(node.inputs[2]).shape());
                as_matrix(gb) = dz.colwise().sum().transpose();
                add_into(adjoints, node.inputs[2], std::move(gb));
            }
            return;
        }
        case Op::TanhSlope: {
            Tensor g = adj;
            as_array(g) *= -2.0 * as_array(value(node.inputs[0]));
            add_into(adjoints, node.inputs[0], std::move(g));
            return;
        }
        case Op::Scale: {
            Tensor g = adj;
            as_array(g) *= node.args.alpha;
            add_into(adjoints, node.inputs[0], std::move(g));
            return;
        }
        case Op::Square: {
            Tensor g = adj;
            as_array(g) *= 2.0 * as_array(value(node.inputs[0]));
            add_into(adjoints, node.inputs[0], std::move(g));
            return;
        }
        case Op::Sum: {
            add_into(adjoints, node.inputs[0], Tensor(value(node.inputs[0]).shape(), adj.item()));
            return;
        }
        case Op::RowSum: {
            const Tensor& a = value(node.inputs[0]);
            Tensor g(a.shape());
            as_matrix(g).colwise() = as_matrix(adj).col(0);
            add_into(adjoints, node.inputs[0], std::move(g));
            return;
        }
        case Op::Column: {
            const Tensor& a = value(node.inputs[0]);
            Tensor g(a.shape());
            as_matrix(g).col(static_cast<Eigen::Index>(node.args.index)) = as_matrix(adj).col(0);
            add_into(adjoints, node.inputs[0], std::move(g));
            return;
        }
        case Op::Reshape: {
            const Tensor& a = value(node.inputs[0]);
            add_into(adjoints, node.inputs[0], Tensor(a.shape(), std::vector<double>(adj.data().begin(), adj.data().end())));
            return;
        }
        case Op::Leaf: return;
    }
}

Gradients Tape::backward(NodeId root) const {
    if (root >= nodes_.size()) throw std::out_of_range("backward: unknown root node");
    if (value(root).size() != 1) {
        throw std::invalid_argument("backward: root must be a scalar, got shape " + to_string(value(root).shape()));
    }
    std::vector<Tensor> adjoints(nodes_.size());
    if (nodes_[root].requires_grad) adjoints[root] = Tensor(value(root).shape(), 1.0);

    for (NodeId id = root + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.requires_grad || adjoints[id].size() == 0) continue;
        if (node.op != Op::Leaf) {
            accumulate(node, adjoints[id], adjoints);
            // Intermediate adjoints are no longer needed once propagated.
            adjoints[id] = Tensor();
        }
    }

    Gradients out;
    out.grads_ = std::move(adjoints);
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        const Node& node = nodes_[id];
        if (node.op == Op::Leaf && node.requires_grad && out.grads_[id].size() == 0) {
            out.grads_[id] = Tensor(node.value.shape());
        }
    }
    return out;
}

}  // namespace dfvm::ad
