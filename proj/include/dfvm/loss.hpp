#pragma once

#include "dfvm/field.hpp"
#include "dfvm/network.hpp"
#include "dfvm/problems.hpp"
#include "dfvm/sampling.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dfvm {

enum class LossKind { Dfvm, Pinn };
/// Where the lower-order part B.grad u + c u - f (+ time and gradient-square
/// terms) is evaluated: at the control-volume center, or averaged over the
/// surface nodes.
enum class LowerOrderRule { CenterPoint, CvAverage };
/// How the flux A grad u . n is obtained at each surface node.
enum class FluxEstimator { AdGradient, Difference };

std::string to_string(LowerOrderRule rule);
LowerOrderRule parse_lower_order_rule(const std::string& name);
std::string to_string(FluxEstimator estimator);
FluxEstimator parse_flux_estimator(const std::string& name);

enum class Method { DfvmCube, DfvmSphere, Pinn };
std::string to_string(Method method);
Method parse_method(const std::string& name);
std::vector<std::string> method_names();

struct LossConfig {
    LossKind kind = LossKind::Dfvm;
    ControlVolumeSpec cv;
    double lambda = 1.0;
    LowerOrderRule lower_order = LowerOrderRule::CenterPoint;
    FluxEstimator estimator = FluxEstimator::AdGradient;
    /// Difference step for FluxEstimator::Difference; 0 means the CV radius.
    double difference_step = 0.0;
    /// Central-difference step of the strong-form baseline.
    double pinn_step = 1e-4;

    static LossConfig for_method(Method method, double eps);
    void validate() const;
};

/// Everything needed to evaluate interior residuals at a fixed set of
/// centers, independent of u:
///
///   r_i = sum_rows w * grad u(p) . v           (flux rows, per center)
///       + sum_rows w * u(p)                     (difference rows, per center)
///       + mean_rows [b . grad u + c u + gamma |grad_x u|^2 - f](p)   (lower-order rows)
struct ResidualPlan {
    std::size_t centers = 0;
    std::size_t input_dim = 0;
    std::size_t spatial_dim = 0;

    std::size_t flux_per_center = 0;
    Matrix flux_points;
    Matrix flux_directions;
    std::vector<double> flux_weights;

    std::size_t value_per_center = 0;
    Matrix value_points;
    std::vector<double> value_weights;

    std::size_t lower_per_center = 0;
    Matrix lower_points;
    Matrix lower_b;  // gradient coefficients over all input coordinates (time last)
    std::vector<double> lower_c;
    std::vector<double> lower_f;
    double grad_sq = 0.0;
    bool needs_value = false;
    bool needs_gradient = false;
};

/// DFVM plan; throws if a control volume leaves the domain, naming the center.
ResidualPlan plan_dfvm(const PdeProblem& problem, const Matrix& centers, const LossConfig& config,
                       std::uint64_t seed);
/// Strong-form plan: div(A grad u) by central differences of A grad u with step h.
ResidualPlan plan_pinn(const PdeProblem& problem, const Matrix& centers, double step);
ResidualPlan make_plan(const PdeProblem& problem, const Matrix& centers, const LossConfig& config,
                       std::uint64_t seed);

struct ResidualParts {
    std::vector<double> flux;   // surface part (flux density and/or differences)
    std::vector<double> lower;  // lower-order part
    std::vector<double> total;
};

ResidualParts evaluate_plan(const Field& u, const ResidualPlan& plan);

/// -(1/|V|) surface integral of A grad u . n over the sphere around x, Monte
/// Carlo with the configured directions. Elliptic points only.
double flux_sphere(const Field& u, const CoefficientField& a, std::span<const double> x, const ControlVolumeSpec& cv,
                   std::uint64_t seed);
/// Same on the cube x +- eps with the face quadrature.
double flux_cube(const Field& u, const CoefficientField& a, std::span<const double> x, const ControlVolumeSpec& cv,
                 std::uint64_t seed);
/// -surface integral (not a density) of A grad u . n over an arbitrary box quadrature.
double flux_integral(const Field& u, const CoefficientField& a, const BoxQuadrature& box);

/// Lower-order part at one center under the given rule.
double lower_order_term(const Field& u, const PdeProblem& problem, std::span<const double> x,
                        const LossConfig& config, std::uint64_t seed);

struct ResidualBatch {
    std::vector<double> interior;
    std::vector<double> boundary;
    double interior_loss = 0.0;  // mean interior^2
    double boundary_loss = 0.0;  // mean boundary^2
    double loss = 0.0;           // interior_loss + lambda * boundary_loss
};

/// Residuals and loss of a fixed field (no parameter gradient).
ResidualBatch evaluate_loss(const Field& u, const PdeProblem& problem, const Matrix& interior,
                            const Matrix& boundary, const LossConfig& config, std::uint64_t seed);

struct LossAndGradient {
    ResidualBatch batch;
    std::vector<double> gradient;  // d loss / d params, flat
    double forward_seconds = 0.0;
    double backward_seconds = 0.0;
};

/// Loss of the network and its parameter gradient, recorded on a tape.
/// Throws if the loss is not finite.
LossAndGradient loss_and_gradient(const ParamSet& params, const PdeProblem& problem, const Matrix& interior,
                                  const Matrix& boundary, const LossConfig& config, std::uint64_t seed,
                                  bool want_gradient = true);

}  // namespace dfvm
