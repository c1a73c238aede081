#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace dfvm::ad {

/// Cache-line aligned storage. Vectorized reductions peel a different number
/// of leading elements depending on where a buffer starts, so without a fixed
/// alignment the same computation could round differently from run to run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

/// Dense row-major array of doubles. Rank 0 (scalar), 1 (vector) or 2 (matrix);
/// a rank-2 tensor of shape (rows, cols) holds one sample per row when batched.
class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    /// Like the data constructor but rejects NaN/Inf entries.
    static Tensor checked(Shape shape, std::vector<double> data);
    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    /// Row count: shape[0] for rank >= 1, 1 for scalars.
    std::size_t rows() const;
    /// Column count: shape[1] for rank 2, 1 otherwise.
    std::size_t cols() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double, AlignedAllocator<double>> data_;
};

std::string to_string(const Tensor::Shape& shape);

using NodeId = std::size_t;

enum class Op {
    Leaf,
    Add,       // a + b; b may be a row vector broadcast over the rows of a
    Mul,       // elementwise a * b (equal shapes)
    MatMul,    // a * b, with optional transposes (see MatMulMode)
    Tanh,
    Scale,     // alpha * a + beta
    Square,
    Sum,       // sum of all entries -> scalar
    RowSum,    // (n, m) -> (n,)
    Column,    // (n, m) -> (n,), column `index`
    Reshape,
    Affine,      // (h, W, b) -> h W^T + b
    AffineTanh,  // (h, W, b) -> tanh(h W^T + b)
    TanhSlope,   // y -> 1 - y^2
};

enum class MatMulMode { NN, NT, TN };

const char* op_name(Op op);

/// Extra scalar/integer arguments for ops that take them.
struct OpArgs {
    double alpha = 1.0;
    double beta = 0.0;
    MatMulMode mode = MatMulMode::NN;
    std::size_t index = 0;
    Tensor::Shape shape{};
};

class Gradients {
public:
    /// Gradient of the root w.r.t. variable leaf `id`; zeros if the root does
    /// not depend on it. Intermediate nodes and constants map to empty tensors.
    const Tensor& operator[](NodeId id) const { return grads_.at(id); }
    std::size_t size() const { return grads_.size(); }

private:
    friend class Tape;
    std::vector<Tensor> grads_;
};

/// Append-only record of primitive operations with a single reverse sweep.
///
/// Nodes are stored in creation order, which is a topological order, so
/// backward() walks the vector from the root down to zero. Only first-order
/// derivatives are available: there is no way to differentiate a backward
/// pass. Quantities that need derivatives of derivatives (input gradients
/// inside a loss) are written out as forward expressions on the tape.
class Tape {
public:
    /// Leaf whose gradient is reported by backward().
    NodeId variable(Tensor value);
    /// Leaf that is never differentiated.
    NodeId constant(Tensor value);

    /// Generic entry point. Computes the forward value and appends the node.
    NodeId record(Op op, std::initializer_list<NodeId> inputs, const OpArgs& args = {});

    NodeId add(NodeId a, NodeId b) { return record(Op::Add, {a, b}); }
    NodeId mul(NodeId a, NodeId b) { return record(Op::Mul, {a, b}); }
    NodeId matmul(NodeId a, NodeId b, MatMulMode mode = MatMulMode::NN);
    NodeId tanh(NodeId a) { return record(Op::Tanh, {a}); }
    NodeId scale(NodeId a, double alpha, double beta = 0.0);
    NodeId square(NodeId a) { return record(Op::Square, {a}); }
    NodeId sum(NodeId a) { return record(Op::Sum, {a}); }
    NodeId row_sum(NodeId a) { return record(Op::RowSum, {a}); }
    NodeId column(NodeId a, std::size_t index);
    NodeId reshape(NodeId a, Tensor::Shape shape);
    NodeId mean(NodeId a);
    NodeId affine(NodeId h, NodeId w, NodeId b) { return record(Op::Affine, {h, w, b}); }
    NodeId affine_tanh(NodeId h, NodeId w, NodeId b) { return record(Op::AffineTanh, {h, w, b}); }
    NodeId tanh_slope(NodeId y) { return record(Op::TanhSlope, {y}); }

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar root. The adjoint of the root is 1.
    Gradients backward(NodeId root) const;

private:
    struct Node {
        Op op = Op::Leaf;
        std::vector<NodeId> inputs;
        OpArgs args;
        Tensor value;
        bool requires_grad = false;
    };

    Tensor forward(Op op, const std::vector<NodeId>& inputs, const OpArgs& args) const;
    void accumulate(const Node& node, const Tensor& adjoint, std::vector<Tensor>& adjoints) const;

    std::vector<Node> nodes_;
};

}  // namespace dfvm::ad
