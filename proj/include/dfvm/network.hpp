#pragma once

#include "dfvm/autodiff.hpp"
#include "dfvm/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dfvm {

enum class Architecture { Fcnn, ResNet };

std::string to_string(Architecture kind);
Architecture parse_architecture(const std::string& name);

/// Scalar-output tanh network.
///
/// Fcnn: `depth` hidden layers x -> tanh(W x + b), then an affine head.
/// ResNet: affine lift R^d -> R^width, `depth` residual blocks
/// h -> tanh(W2 tanh(W1 h + b1) + b2) + h, then an affine head.
struct NetworkConfig {
    Architecture kind = Architecture::ResNet;
    std::size_t input_dim = 2;
    std::size_t width = 40;
    std::size_t depth = 3;

    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

struct LayerShape {
    std::size_t out = 0;
    std::size_t in = 0;
    std::size_t offset = 0;  // weights (out x in, row-major) then `out` biases

    std::size_t weight_count() const { return out * in; }
    std::size_t size() const { return out * in + out; }
};

/// Ordered (W_k, b_k) records: hidden layers (Fcnn) or lift + two layers per
/// block (ResNet), always followed by the 1 x width head.
class ParamLayout {
public:
    static ParamLayout for_config(const NetworkConfig& config);

    const std::vector<LayerShape>& layers() const { return layers_; }
    std::size_t size() const { return size_; }

private:
    std::vector<LayerShape> layers_;
    std::size_t size_ = 0;
};

/// Closed-form parameter count, independent of ParamLayout.
std::size_t parameter_count(const NetworkConfig& config);

/// Flat parameter vector plus the layout that gives it structure.
struct ParamSet {
    NetworkConfig config;
    ParamLayout layout;
    std::vector<double> values;

    static ParamSet zeros(const NetworkConfig& config);
    /// Wraps a flat vector; the length must match the layout.
    static ParamSet from_flat(const NetworkConfig& config, std::vector<double> flat);

    std::span<double> weights(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<double> biases(std::size_t layer);
    std::span<const double> biases(std::size_t layer) const;
    std::size_t size() const { return values.size(); }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParamSet init_params(const NetworkConfig& config, std::uint64_t seed);

/// Parameters bound to a tape as leaves.
struct NetworkNodes {
    std::vector<ad::NodeId> weights;
    std::vector<ad::NodeId> biases;
};

/// Binds every (W_k, b_k) as a tape leaf; `trainable` picks variable vs constant.
NetworkNodes bind_params(ad::Tape& tape, const ParamSet& params, bool trainable);

/// Collects the leaf gradients of a bound parameter set into one flat vector.
std::vector<double> gather_gradient(const ad::Gradients& grads, const NetworkNodes& nodes, const ParamSet& params);

/// Output node plus the activation slopes tanh'(z) = 1 - tanh(z)^2 needed by
/// the derivative expressions below.
struct ForwardTrace {
    ad::NodeId output = 0;  // shape (n,)
    std::vector<ad::NodeId> slopes;
};

ForwardTrace record_forward(ad::Tape& tape, const NetworkConfig& config, const NetworkNodes& nodes, ad::NodeId x,
                            bool keep_slopes);

/// Directional derivative of the output along per-row directions (n, d):
/// row i holds grad u(x_i) . v_i. Written as forward tape operations, so the
/// result can itself be differentiated w.r.t. the parameters.
ad::NodeId record_directional_derivative(ad::Tape& tape, const NetworkConfig& config, const NetworkNodes& nodes,
                                         const ForwardTrace& trace, ad::NodeId directions);

/// Full input gradient (n, d) as forward tape operations (chain rule written
/// out layer by layer, from the head back to the input).
ad::NodeId record_input_gradient(ad::Tape& tape, const NetworkConfig& config, const NetworkNodes& nodes,
                                 const ForwardTrace& trace);

/// Batched evaluation; one output per row of x.
std::vector<double> eval_fcnn(const ParamSet& params, const Matrix& x);
std::vector<double> eval_resnet(const ParamSet& params, const Matrix& x);
std::vector<double> eval_network(const ParamSet& params, const Matrix& x);
double eval_network(const ParamSet& params, std::span<const double> x);

/// grad_x u(x) for every row: one forward pass and one reverse pass from the
/// summed output. Valid because row i of the output depends only on row i of x.
Matrix input_gradient(const ParamSet& params, const Matrix& x);
std::vector<double> input_gradient(const ParamSet& params, std::span<const double> x);

}  // namespace dfvm
