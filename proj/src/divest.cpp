#include "dfvm/divest.hpp"

#include <stdexcept>

namespace dfvm::divest {

namespace {

void check(const Field& u, std::span<const double> x, const Matrix& dirs, double r) {
    if (x.size() != u.dim()) throw std::invalid_argument("estimator: point dimension does not match the field");
    if (dirs.rows() == 0) throw std::invalid_argument("estimator: no directions");
    if (static_cast<std::size_t>(dirs.cols()) != u.dim()) {
        throw std::invalid_argument("estimator: direction dimension does not match the field");
    }
    if (!(r > 0.0)) throw std::invalid_argument("estimator: radius must be positive");
}

Eigen::Map<const Eigen::RowVectorXd> as_row(std::span<const double> x) {
    return {x.data(), static_cast<Eigen::Index>(x.size())};
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

double q1_sphere_ad(const Field& u, const CoefficientField& a, std::span<const double> x, double r,
                    const Matrix& dirs) {
    check(u, x, dirs, r);
    const auto k = dirs.rows();
    const auto d = static_cast<double>(x.size());
    Matrix pts = (r * dirs).rowwise() + as_row(x);
    const Matrix grads = u.gradients(pts);
    std::vector<double> an(x.size());
    double total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        a.apply(row_span(pts, j), row_span(dirs, j), an);
        total += grads.row(j).dot(Eigen::Map<const Eigen::RowVectorXd>(an.data(), dirs.cols()));
    }
    return d / (static_cast<double>(k) * r) * total;
}

double q2_sphere_diff(const Field& u, const CoefficientField& a, std::span<const double> x, double r, double eps_fd,
                      const Matrix& dirs) {
    check(u, x, dirs, r);
    if (!(eps_fd > 0.0)) throw std::invalid_argument("q2: difference step must be positive");
    const auto k = dirs.rows();
    const auto d = static_cast<double>(x.size());
    Matrix pts(2 * k, dirs.cols());
    std::vector<double> an(x.size());
    for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::RowVectorXd xj = as_row(x) + r * dirs.row(j);
        a.apply({xj.data(), x.size()}, row_span(dirs, j), an);
        const Eigen::Map<const Eigen::RowVectorXd> step(an.data(), dirs.cols());
        pts.row(2 * j) = xj + eps_fd * step;
        pts.row(2 * j + 1) = xj - eps_fd * step;
    }
    const std::vector<double> v = u.values(pts);
    double total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) total += v[2 * j] - v[2 * j + 1];
    return d / (2.0 * static_cast<double>(k) * r * eps_fd) * total;
}

double q3_sphere_onesided(const Field& u, const CoefficientField& a, std::span<const double> x, double r,
                          const Matrix& dirs) {
    check(u, x, dirs, r);
    if (!a.is_scalar()) throw std::invalid_argument("q3 requires a coefficient of the form alpha(x) I");
    const auto k = dirs.rows();
    const auto d = static_cast<double>(x.size());
    Matrix pts(k + 1, dirs.cols());
    pts.topRows(k) = (2.0 * r * dirs).rowwise() + as_row(x);
    pts.row(k) = as_row(x);
    const std::vector<double> v = u.values(pts);
    double total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::RowVectorXd mid = as_row(x) + r * dirs.row(j);
        total += a.alpha({mid.data(), x.size()}) * (v[j] - v[k]);
    }
    return d / (2.0 * static_cast<double>(k) * r * r) * total;
}

double q4_constant_alpha(const Field& u, std::span<const double> x, double r, const Matrix& dirs) {
    check(u, x, dirs, r);
    const auto k = dirs.rows();
    const auto d = static_cast<double>(x.size());
    Matrix pts(k + 1, dirs.cols());
    pts.topRows(k) = (r * dirs).rowwise() + as_row(x);
    pts.row(k) = as_row(x);
    std::vector<double> v = u.values(pts);
    const double center = v.back();
    v.pop_back();
    return 2.0 * d / (static_cast<double>(k) * r * r) * (sum(v) - static_cast<double>(k) * center);
}

double q5_split(const Field& u, const CoefficientField& a, std::span<const double> x, double r, const Matrix& dirs) {
    if (!a.is_scalar()) throw std::invalid_argument("q5 requires a coefficient of the form alpha(x) I");
    const double lap = q4_constant_alpha(u, x, r, dirs);
    const std::vector<double> ga = a.grad_alpha(x);
    Matrix pts(2, static_cast<Eigen::Index>(x.size()));
    const Eigen::Map<const Eigen::RowVectorXd> g(ga.data(), static_cast<Eigen::Index>(ga.size()));
    pts.row(0) = as_row(x) + r * g;
    pts.row(1) = as_row(x) - r * g;
    const std::vector<double> v = u.values(pts);
    return a.alpha(x) * lap + (v[0] - v[1]) / (2.0 * r);
}

double brute_divergence(const Field& u, const CoefficientField& a, std::span<const double> x, double h,
                        BruteMode mode) {
    if (x.size() != u.dim()) throw std::invalid_argument("brute_divergence: point dimension does not match the field");
    if (!(h > 0.0)) throw std::invalid_argument("brute_divergence: step must be positive");
    if (mode == BruteMode::Scalar && !a.is_scalar()) {
        throw std::invalid_argument("brute_divergence: scalar mode needs a coefficient of the form alpha(x) I");
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    const std::size_t d = x.size();
    const Eigen::RowVectorXd x0 = as_row(x);
    auto shifted = [&](std::initializer_list<std::pair<Eigen::Index, double>> moves) {
        Eigen::RowVectorXd p = x0;
        for (const auto& [i, s] : moves) p(i) += s;
        return p;
    };

    // Layout: [x, x + h e_i, x - h e_i (i = 0..d-1), then 4 corners per ordered pair i != j].
    const bool dense = mode == BruteMode::Dense;
    const Eigen::Index pairs = dense ? n * (n - 1) : 0;
    Matrix pts(1 + 2 * n + 4 * pairs, n);
    pts.row(0) = x0;
    for (Eigen::Index i = 0; i < n; ++i) {
        pts.row(1 + 2 * i) = shifted({{i, h}});
        pts.row(2 + 2 * i) = shifted({{i, -h}});
    }
    Eigen::Index row = 1 + 2 * n;
    if (dense) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                pts.row(row++) = shifted({{i, h}, {j, h}});
                pts.row(row++) = shifted({{i, h}, {j, -h}});
                pts.row(row++) = shifted({{i, -h}, {j, h}});
                pts.row(row++) = shifted({{i, -h}, {j, -h}});
            }
        }
    }
    const std::vector<double> v = u.values(pts);

    auto coeff = [&](const Eigen::RowVectorXd& p) { return a.matrix({p.data(), d}); };
    auto alpha = [&](const Eigen::RowVectorXd& p) { return a.alpha({p.data(), d}); };

    double total = 0.0;
    // d_i(A_ii d_i u): conservative three-point stencil with A at half steps.
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd plus = shifted({{i, 0.5 * h}});
        const Eigen::RowVectorXd minus = shifted({{i, -0.5 * h}});
        const double ap = dense ? coeff(plus)(i, i) : alpha(plus);
        const double am = dense ? coeff(minus)(i, i) : alpha(minus);
        total += (ap * (v[1 + 2 * i] - v[0]) - am * (v[0] - v[2 + 2 * i])) / (h * h);
    }
    if (dense) {
        // d_i(A_ij d_j u), i != j: centered in both directions.
        Eigen::Index base = 1 + 2 * n;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Matrix ap = coeff(shifted({{i, h}}));
            const Matrix am = coeff(shifted({{i, -h}}));
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const auto b = static_cast<std::size_t>(base);
                total += (ap(i, j) * (v[b] - v[b + 1]) - am(i, j) * (v[b + 2] - v[b + 3])) / (4.0 * h * h);
                base += 4;
            }
        }
    }
    return total;
}

}  // namespace dfvm::divest
