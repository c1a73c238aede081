#include "dfvm/loss.hpp"

#include "dfvm/divest.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dfvm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::string describe_point(std::size_t index, std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << "interior point " << index << " (";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ")";
    return os.str();
}

// Full input point from spatial coordinates plus the trailing time of `center`.
void fill_point(Matrix& out, Eigen::Index row, std::span<const double> spatial, std::span<const double> center) {
    for (std::size_t i = 0; i < center.size(); ++i) out(row, idx(i)) = i < spatial.size() ? spatial[i] : center[i];
}

// Seed for one control volume, keyed by its center rather than its index so
// the loss does not depend on the order of the points.
std::uint64_t center_seed(std::uint64_t seed, std::span<const double> center) {
    std::uint64_t s = seed;
    for (double v : center) s = derive_seed(s, std::bit_cast<std::uint64_t>(v));
    return s;
}

struct FluxRows {
    Matrix points;
    Matrix directions;
    std::vector<double> weights;
    std::size_t per_center = 0;
};

FluxRows dfvm_flux_rows(const PdeProblem& problem, const Matrix& centers, const ControlVolumeSpec& cv,
                        std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(centers.rows());
    const std::size_t d = problem.spatial_dim();
    const std::size_t din = problem.input_dim();
    const double eps = cv.radius;
    FluxRows rows;
    rows.per_center = cv.shape == CvShape::Cube ? (d == 1 ? 2 : 2 * d * cv.k) : cv.k;
    const std::size_t total = n * rows.per_center;
    rows.points.resize(idx(total), idx(din));
    rows.directions.setZero(idx(total), idx(din));
    rows.weights.resize(total);

    std::vector<double> unit(d), an(d);
    for (std::size_t c = 0; c < n; ++c) {
        const std::span<const double> center = row_span(centers, idx(c));
        if (!problem.domain.embeds_cube(center, eps * (1.0 - 1e-12))) {
            throw std::invalid_argument("control volume of radius " + std::to_string(eps) + " around " +
                                        describe_point(c, center) + " leaves the domain");
        }
        const std::span<const double> xs = center.first(d);
        const std::uint64_t s = center_seed(seed, center);
        std::size_t r = c * rows.per_center;
        if (cv.shape == CvShape::Cube) {
            const BoxQuadrature quad = cube_quadrature(xs, eps, cv.k, cv.qmc, s);
            for (const FacePoint& fp : quad.faces) {
                fill_point(rows.points, idx(r), fp.point, center);
                std::fill(unit.begin(), unit.end(), 0.0);
                unit[fp.axis] = static_cast<double>(fp.sign);
                problem.a.apply(row_span(rows.points, idx(r)), unit, an);
                for (std::size_t i = 0; i < d; ++i) rows.directions(idx(r), idx(i)) = an[i];
                rows.weights[r] = -fp.weight;
                ++r;
            }
        } else {
            const Matrix dirs = sphere_directions(d, cv.k, cv.antithetic, s);
            const double w = -static_cast<double>(d) / (eps * static_cast<double>(cv.k));
            for (Eigen::Index j = 0; j < dirs.rows(); ++j) {
                for (std::size_t i = 0; i < din; ++i) {
                    rows.points(idx(r), idx(i)) = center[i] + (i < d ? eps * dirs(j, idx(i)) : 0.0);
                }
                problem.a.apply(row_span(rows.points, idx(r)), row_span(dirs, j), an);
                for (std::size_t i = 0; i < d; ++i) rows.directions(idx(r), idx(i)) = an[i];
                rows.weights[r] = w;
                ++r;
            }
        }
    }
    return rows;
}

void fill_lower(ResidualPlan& plan, const PdeProblem& problem, const Matrix& points, std::size_t per_center) {
    const std::size_t d = problem.spatial_dim();
    const std::size_t din = problem.input_dim();
    const auto m = static_cast<std::size_t>(points.rows());
    plan.lower_per_center = per_center;
    plan.lower_points = points;
    plan.lower_b.setZero(idx(m), idx(din));
    plan.lower_c.assign(m, 0.0);
    plan.lower_f.resize(m);
    plan.grad_sq = problem.grad_sq_coeff;
    const bool parabolic = problem.kind == OperatorKind::Parabolic;
    std::vector<double> b(d);
    for (std::size_t r = 0; r < m; ++r) {
        const auto x = row_span(points, idx(r));
        plan.lower_f[r] = problem.f(x);
        if (problem.c) plan.lower_c[r] = problem.c(x);
        if (problem.b) {
            problem.b(x, b);
            for (std::size_t i = 0; i < d; ++i) plan.lower_b(idx(r), idx(i)) = b[i];
        }
        if (parabolic) plan.lower_b(idx(r), idx(d)) = problem.time_coeff;
    }
    plan.needs_value = static_cast<bool>(problem.c);
    plan.needs_gradient = static_cast<bool>(problem.b) || (parabolic && problem.time_coeff != 0.0) ||
                          problem.grad_sq_coeff != 0.0;
}

void check_centers(const PdeProblem& problem, const Matrix& centers) {
    if (centers.rows() == 0) throw std::invalid_argument("residual plan: no interior points");
    if (static_cast<std::size_t>(centers.cols()) != problem.input_dim()) {
        throw std::invalid_argument("residual plan: points have " + std::to_string(centers.cols()) +
                                    " coordinates, problem expects " + std::to_string(problem.input_dim()));
    }
}

std::vector<double> group_reduce(const std::vector<double>& v, std::size_t groups, std::size_t per, double scale) {
    std::vector<double> out(groups, 0.0);
    for (std::size_t g = 0; g < groups; ++g) {
        double s = 0.0;
        for (std::size_t j = 0; j < per; ++j) s += v[g * per + j];
        out[g] = scale * s;
    }
    return out;
}

// Rows below this many per tape keep a chunk's activations in cache.
constexpr std::size_t kChunkRows = 1024;

ad::Tensor to_tensor(const Matrix& m, std::size_t first, std::size_t count) {
    const auto cols = static_cast<std::size_t>(m.cols());
    const double* p = m.data() + first * cols;
    return ad::Tensor({count, cols}, std::vector<double>(p, p + count * cols));
}

ad::Tensor slice(const std::vector<double>& v, std::size_t first, std::size_t count) {
    return ad::Tensor({count}, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(first),
                                                   v.begin() + static_cast<std::ptrdiff_t>(first + count)));
}

ad::NodeId group_reduce(ad::Tape& tape, ad::NodeId v, std::size_t groups, std::size_t per, double scale) {
    ad::NodeId out = v;
    if (per > 1) out = tape.row_sum(tape.reshape(v, {groups, per}));
    return scale == 1.0 ? out : tape.scale(out, scale);
}

double mean_square(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s / static_cast<double>(v.size());
}

}  // namespace

std::string to_string(LowerOrderRule rule) {
    return rule == LowerOrderRule::CenterPoint ? "center-point" : "cv-average";
}

LowerOrderRule parse_lower_order_rule(const std::string& name) {
    if (name == "center-point") return LowerOrderRule::CenterPoint;
    if (name == "cv-average") return LowerOrderRule::CvAverage;
    throw std::invalid_argument("unknown lower-order rule '" + name + "' (expected center-point or cv-average)");
}

std::string to_string(FluxEstimator estimator) {
    return estimator == FluxEstimator::AdGradient ? "ad-gradient" : "difference";
}

FluxEstimator parse_flux_estimator(const std::string& name) {
    if (name == "ad-gradient") return FluxEstimator::AdGradient;
    if (name == "difference") return FluxEstimator::Difference;
    throw std::invalid_argument("unknown flux estimator '" + name + "' (expected ad-gradient or difference)");
}

std::string to_string(Method method) {
    switch (method) {
        case Method::DfvmCube: return "dfvm-cube";
        case Method::DfvmSphere: return "dfvm-sphere";
        case Method::Pinn: return "pinn";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "dfvm-cube") return Method::DfvmCube;
    if (name == "dfvm-sphere") return Method::DfvmSphere;
    if (name == "pinn") return Method::Pinn;
    throw std::invalid_argument("unknown method '" + name + "' (expected dfvm-cube, dfvm-sphere or pinn)");
}

std::vector<std::string> method_names() { return {"dfvm-cube", "dfvm-sphere", "pinn"}; }

LossConfig LossConfig::for_method(Method method, double eps) {
    LossConfig cfg;
    cfg.cv.radius = eps;
    switch (method) {
        case Method::DfvmCube:
            cfg.cv.shape = CvShape::Cube;
            cfg.cv.k = 1;
            break;
        case Method::DfvmSphere:
            cfg.cv.shape = CvShape::Sphere;
            cfg.cv.k = 20;
            break;
        case Method::Pinn: cfg.kind = LossKind::Pinn; break;
    }
    return cfg;
}

void LossConfig::validate() const {
    if (kind == LossKind::Dfvm) cv.validate();
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
    if (!(difference_step >= 0.0)) throw std::invalid_argument("difference step must be >= 0");
    if (!(pinn_step > 0.0)) throw std::invalid_argument("pinn step must be positive");
}

ResidualPlan plan_dfvm(const PdeProblem& problem, const Matrix& centers, const LossConfig& config,
                       std::uint64_t seed) {
    config.validate();
    check_centers(problem, centers);
    FluxRows rows = dfvm_flux_rows(problem, centers, config.cv, seed);
    ResidualPlan plan;
    plan.centers = static_cast<std::size_t>(centers.rows());
    plan.input_dim = problem.input_dim();
    plan.spatial_dim = problem.spatial_dim();

    if (config.lower_order == LowerOrderRule::CvAverage) {
        fill_lower(plan, problem, rows.points, rows.per_center);
    } else {
        fill_lower(plan, problem, centers, 1);
    }

    if (config.estimator == FluxEstimator::AdGradient) {
        plan.flux_per_center = rows.per_center;
        plan.flux_points = std::move(rows.points);
        plan.flux_directions = std::move(rows.directions);
        plan.flux_weights = std::move(rows.weights);
    } else {
        const double delta = config.difference_step > 0.0 ? config.difference_step : config.cv.radius;
        const auto n = rows.points.rows();
        plan.value_per_center = 2 * rows.per_center;
        plan.value_points.resize(2 * n, rows.points.cols());
        plan.value_weights.resize(static_cast<std::size_t>(2 * n));
        for (Eigen::Index r = 0; r < n; ++r) {
            plan.value_points.row(2 * r) = rows.points.row(r) + delta * rows.directions.row(r);
            plan.value_points.row(2 * r + 1) = rows.points.row(r) - delta * rows.directions.row(r);
            const double w = rows.weights[static_cast<std::size_t>(r)] / (2.0 * delta);
            plan.value_weights[static_cast<std::size_t>(2 * r)] = w;
            plan.value_weights[static_cast<std::size_t>(2 * r + 1)] = -w;
        }
    }
    return plan;
}

ResidualPlan plan_pinn(const PdeProblem& problem, const Matrix& centers, double step) {
    check_centers(problem, centers);
    if (!(step > 0.0)) throw std::invalid_argument("pinn step must be positive");
    const std::size_t n = static_cast<std::size_t>(centers.rows());
    const std::size_t d = problem.spatial_dim();
    const std::size_t din = problem.input_dim();
    ResidualPlan plan;
    plan.centers = n;
    plan.input_dim = din;
    plan.spatial_dim = d;
    plan.flux_per_center = 2 * d;
    plan.flux_points.resize(idx(n * 2 * d), idx(din));
    plan.flux_directions.setZero(idx(n * 2 * d), idx(din));
    plan.flux_weights.resize(n * 2 * d);
    std::vector<double> unit(d, 0.0), an(d);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            std::fill(unit.begin(), unit.end(), 0.0);
            unit[j] = 1.0;
            for (int s = 0; s < 2; ++s) {
                const auto r = idx(c * 2 * d + 2 * j + static_cast<std::size_t>(s));
                const double sign = s == 0 ? 1.0 : -1.0;
                plan.flux_points.row(r) = centers.row(idx(c));
                plan.flux_points(r, idx(j)) += sign * step;
                problem.a.apply(row_span(plan.flux_points, r), unit, an);
                for (std::size_t i = 0; i < d; ++i) plan.flux_directions(r, idx(i)) = an[i];
                plan.flux_weights[static_cast<std::size_t>(r)] = -sign / (2.0 * step);
            }
        }
    }
    fill_lower(plan, problem, centers, 1);
    return plan;
}

ResidualPlan make_plan(const PdeProblem& problem, const Matrix& centers, const LossConfig& config,
                       std::uint64_t seed) {
    if (config.kind == LossKind::Pinn) return plan_pinn(problem, centers, config.pinn_step);
    return plan_dfvm(problem, centers, config, seed);
}

ResidualParts evaluate_plan(const Field& u, const ResidualPlan& plan) {
    const std::size_t n = plan.centers;
    ResidualParts parts;
    parts.flux.assign(n, 0.0);
    if (plan.flux_per_center > 0) {
        const Matrix g = u.gradients(plan.flux_points);
        std::vector<double> rows(plan.flux_weights.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            rows[r] = plan.flux_weights[r] * g.row(idx(r)).dot(plan.flux_directions.row(idx(r)));
        }
        parts.flux = group_reduce(rows, n, plan.flux_per_center, 1.0);
    }
    if (plan.value_per_center > 0) {
        std::vector<double> v = u.values(plan.value_points);
        for (std::size_t r = 0; r < v.size(); ++r) v[r] *= plan.value_weights[r];
        const std::vector<double> s = group_reduce(v, n, plan.value_per_center, 1.0);
        for (std::size_t i = 0; i < n; ++i) parts.flux[i] += s[i];
    }

    const std::size_t m = plan.lower_f.size();
    std::vector<double> lower(m);
    std::vector<double> uv;
    Matrix g;
    if (plan.needs_value) uv = u.values(plan.lower_points);
    if (plan.needs_gradient) g = u.gradients(plan.lower_points);
    for (std::size_t r = 0; r < m; ++r) {
        double h = -plan.lower_f[r];
        if (plan.needs_value) h += plan.lower_c[r] * uv[r];
        if (plan.needs_gradient) {
            h += g.row(idx(r)).dot(plan.lower_b.row(idx(r)));
            if (plan.grad_sq != 0.0) h += plan.grad_sq * g.row(idx(r)).head(idx(plan.spatial_dim)).squaredNorm();
        }
        lower[r] = h;
    }
    parts.lower = group_reduce(lower, n, plan.lower_per_center, 1.0 / static_cast<double>(plan.lower_per_center));
    parts.total.resize(n);
    for (std::size_t i = 0; i < n; ++i) parts.total[i] = parts.flux[i] + parts.lower[i];
    return parts;
}

double flux_sphere(const Field& u, const CoefficientField& a, std::span<const double> x, const ControlVolumeSpec& cv,
                   std::uint64_t seed) {
    cv.validate();
    const Matrix dirs = sphere_directions(x.size(), cv.k, cv.antithetic, seed);
    return -divest::q1_sphere_ad(u, a, x, cv.radius, dirs);
}

double flux_integral(const Field& u, const CoefficientField& a, const BoxQuadrature& box) {
    const std::size_t d = box.center.size();
    Matrix pts(idx(box.faces.size()), idx(d));
    for (std::size_t r = 0; r < box.faces.size(); ++r) {
        for (std::size_t i = 0; i < d; ++i) pts(idx(r), idx(i)) = box.faces[r].point[i];
    }
    const Matrix g = u.gradients(pts);
    std::vector<double> unit(d), an(d);
    double total = 0.0;
    for (std::size_t r = 0; r < box.faces.size(); ++r) {
        const FacePoint& fp = box.faces[r];
        std::fill(unit.begin(), unit.end(), 0.0);
        unit[fp.axis] = static_cast<double>(fp.sign);
        a.apply(row_span(pts, idx(r)), unit, an);
        double flux = 0.0;
        for (std::size_t i = 0; i < d; ++i) flux += g(idx(r), idx(i)) * an[i];
        total += fp.weight * flux;
    }
    return -box.volume() * total;
}

double flux_cube(const Field& u, const CoefficientField& a, std::span<const double> x, const ControlVolumeSpec& cv,
                 std::uint64_t seed) {
    cv.validate();
    const BoxQuadrature quad = cube_quadrature(x, cv.radius, cv.k, cv.qmc, seed);
    return flux_integral(u, a, quad) / quad.volume();
}

double lower_order_term(const Field& u, const PdeProblem& problem, std::span<const double> x,
                        const LossConfig& config, std::uint64_t seed) {
    Matrix center(1, idx(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) center(0, idx(i)) = x[i];
    const ResidualPlan plan = make_plan(problem, center, config, seed);
    return evaluate_plan(u, plan).lower[0];
}

ResidualBatch evaluate_loss(const Field& u, const PdeProblem& problem, const Matrix& interior,
                            const Matrix& boundary, const LossConfig& config, std::uint64_t seed) {
    const ResidualPlan plan = make_plan(problem, interior, config, seed);
    ResidualBatch batch;
    batch.interior = evaluate_plan(u, plan).total;
    batch.boundary = u.values(boundary);
    for (Eigen::Index r = 0; r < boundary.rows(); ++r) {
        batch.boundary[static_cast<std::size_t>(r)] -= problem.g(row_span(boundary, r));
    }
    batch.interior_loss = mean_square(batch.interior);
    batch.boundary_loss = mean_square(batch.boundary);
    batch.loss = batch.interior_loss + config.lambda * batch.boundary_loss;
    return batch;
}

LossAndGradient loss_and_gradient(const ParamSet& params, const PdeProblem& problem, const Matrix& interior,
                                  const Matrix& boundary, const LossConfig& config, std::uint64_t seed,
                                  bool want_gradient) {
    if (params.config.input_dim != problem.input_dim()) {
        throw std::invalid_argument("network input dimension " + std::to_string(params.config.input_dim) +
                                    " does not match the problem (" + std::to_string(problem.input_dim()) + ")");
    }
    if (boundary.rows() == 0) throw std::invalid_argument("loss: no boundary points");
    const auto t0 = Clock::now();
    const ResidualPlan plan = make_plan(problem, interior, config, seed);
    const NetworkConfig& net = params.config;
    const std::size_t n = plan.centers;
    const auto nb = static_cast<std::size_t>(boundary.rows());

    LossAndGradient out;
    out.batch.interior.resize(n);
    out.batch.boundary.resize(nb);
    if (want_gradient) out.gradient.assign(params.size(), 0.0);
    double int_sum = 0.0, bnd_sum = 0.0;
    double backward = 0.0;

    // Each chunk is an independent term of the loss: record it, differentiate
    // it and drop the tape, so the working set stays cache-sized.
    auto finish_chunk = [&](ad::Tape& tape, const NetworkNodes& nodes, ad::NodeId res, double weight,
                            std::vector<double>& dest, std::size_t offset, double& sum) {
        const auto values = tape.value(res).data();
        std::copy(values.begin(), values.end(), dest.begin() + static_cast<std::ptrdiff_t>(offset));
        const ad::NodeId term = tape.scale(tape.sum(tape.square(res)), weight);
        sum += tape.value(term).item();
        if (!want_gradient) return;
        const auto tb = Clock::now();
        const std::vector<double> g = gather_gradient(tape.backward(term), nodes, params);
        for (std::size_t i = 0; i < g.size(); ++i) out.gradient[i] += g[i];
        backward += seconds_since(tb);
    };

    const std::size_t rows_per_center = plan.flux_per_center + plan.value_per_center +
                                        (plan.needs_value || plan.needs_gradient ? plan.lower_per_center : 0);
    const std::size_t chunk = std::max<std::size_t>(1, kChunkRows / std::max<std::size_t>(1, rows_per_center));
    for (std::size_t c0 = 0; c0 < n; c0 += chunk) {
        const std::size_t m = std::min(chunk, n - c0);
        ad::Tape tape;
        const NetworkNodes nodes = bind_params(tape, params, want_gradient);
        std::vector<ad::NodeId> pieces;

        if (plan.flux_per_center > 0) {
            const std::size_t r0 = c0 * plan.flux_per_center, rn = m * plan.flux_per_center;
            const ad::NodeId x = tape.constant(to_tensor(plan.flux_points, r0, rn));
            const ad::NodeId v = tape.constant(to_tensor(plan.flux_directions, r0, rn));
            const ForwardTrace trace = record_forward(tape, net, nodes, x, true);
            const ad::NodeId jvp = record_directional_derivative(tape, net, nodes, trace, v);
            const ad::NodeId w = tape.constant(slice(plan.flux_weights, r0, rn));
            pieces.push_back(group_reduce(tape, tape.mul(jvp, w), m, plan.flux_per_center, 1.0));
        }
        if (plan.value_per_center > 0) {
            const std::size_t r0 = c0 * plan.value_per_center, rn = m * plan.value_per_center;
            const ad::NodeId x = tape.constant(to_tensor(plan.value_points, r0, rn));
            const ForwardTrace trace = record_forward(tape, net, nodes, x, false);
            const ad::NodeId w = tape.constant(slice(plan.value_weights, r0, rn));
            pieces.push_back(group_reduce(tape, tape.mul(trace.output, w), m, plan.value_per_center, 1.0));
        }
        {
            const std::size_t r0 = c0 * plan.lower_per_center, rn = m * plan.lower_per_center;
            ad::Tensor neg_f = slice(plan.lower_f, r0, rn);
            for (double& f : neg_f.data()) f = -f;
            std::vector<ad::NodeId> terms{tape.constant(std::move(neg_f))};
            if (plan.needs_value || plan.needs_gradient) {
                const ad::NodeId x = tape.constant(to_tensor(plan.lower_points, r0, rn));
                const ForwardTrace trace = record_forward(tape, net, nodes, x, plan.needs_gradient);
                if (plan.needs_value) terms.push_back(tape.mul(trace.output, tape.constant(slice(plan.lower_c, r0, rn))));
                if (plan.needs_gradient) {
                    const ad::NodeId g = record_input_gradient(tape, net, nodes, trace);
                    if (plan.lower_b.cwiseAbs().maxCoeff() > 0.0) {
                        terms.push_back(tape.row_sum(tape.mul(g, tape.constant(to_tensor(plan.lower_b, r0, rn)))));
                    }
                    if (plan.grad_sq != 0.0) {
                        Matrix mask = Matrix::Zero(idx(rn), idx(plan.input_dim));
                        mask.leftCols(idx(plan.spatial_dim)).setOnes();
                        const ad::NodeId gs = tape.mul(g, tape.constant(to_tensor(mask, 0, rn)));
                        terms.push_back(tape.scale(tape.row_sum(tape.square(gs)), plan.grad_sq));
                    }
                }
            }
            ad::NodeId lower = terms[0];
            for (std::size_t i = 1; i < terms.size(); ++i) lower = tape.add(lower, terms[i]);
            pieces.push_back(group_reduce(tape, lower, m, plan.lower_per_center,
                                          1.0 / static_cast<double>(plan.lower_per_center)));
        }
        ad::NodeId residual = pieces[0];
        for (std::size_t i = 1; i < pieces.size(); ++i) residual = tape.add(residual, pieces[i]);
        finish_chunk(tape, nodes, residual, 1.0 / static_cast<double>(n), out.batch.interior, c0, int_sum);
    }

    for (std::size_t b0 = 0; b0 < nb; b0 += kChunkRows) {
        const std::size_t m = std::min(kChunkRows, nb - b0);
        ad::Tape tape;
        const NetworkNodes nodes = bind_params(tape, params, want_gradient);
        const ForwardTrace bt = record_forward(tape, net, nodes, tape.constant(to_tensor(boundary, b0, m)), false);
        ad::Tensor neg_g({m});
        for (std::size_t r = 0; r < m; ++r) neg_g[r] = -problem.g(row_span(boundary, idx(b0 + r)));
        const ad::NodeId bres = tape.add(bt.output, tape.constant(std::move(neg_g)));
        finish_chunk(tape, nodes, bres, config.lambda / static_cast<double>(nb), out.batch.boundary, b0, bnd_sum);
    }

    out.batch.interior_loss = int_sum;
    out.batch.boundary_loss = config.lambda > 0.0 ? bnd_sum / config.lambda : mean_square(out.batch.boundary);
    out.batch.loss = int_sum + bnd_sum;
    out.backward_seconds = backward;
    out.forward_seconds = seconds_since(t0) - backward;
    if (!std::isfinite(out.batch.loss)) {
        throw std::runtime_error("loss is not finite (interior " + std::to_string(out.batch.interior_loss) +
                                 ", boundary " + std::to_string(out.batch.boundary_loss) + ")");
    }
    return out;
}

}  // namespace dfvm
