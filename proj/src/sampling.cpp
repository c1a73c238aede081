#include "dfvm/sampling.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace dfvm {

namespace {

#include "sobol_table.inc"

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

Domain Domain::hypercube(double lo, double hi, std::size_t dim) {
    if (!(lo < hi)) throw std::invalid_argument("hypercube requires lo < hi");
    if (dim == 0) throw std::invalid_argument("domain dimension must be positive");
    Domain d;
    d.kind_ = DomainKind::Hypercube;
    d.dim_ = dim;
    d.lo_ = lo;
    d.hi_ = hi;
    return d;
}

Domain Domain::lshape(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("domain dimension must be positive");
    Domain d;
    d.kind_ = DomainKind::LShape;
    d.dim_ = dim;
    d.lo_ = -1.0;
    d.hi_ = 1.0;
    return d;
}

Domain Domain::spacetime(const Domain& spatial, double t0, double t1) {
    if (spatial.kind_ != DomainKind::Hypercube) throw std::invalid_argument("space-time domains need a hypercube");
    if (!(t0 < t1)) throw std::invalid_argument("space-time domain requires t0 < t1");
    Domain d = spatial;
    d.kind_ = DomainKind::SpaceTime;
    d.t0_ = t0;
    d.t1_ = t1;
    return d;
}

double Domain::max_margin() const {
    return kind_ == DomainKind::LShape ? 0.5 : 0.5 * (hi_ - lo_);
}

Domain Domain::with_margin(double margin) const {
    if (margin < 0.0) throw std::invalid_argument("margin must be non-negative");
    if (margin >= max_margin()) {
        throw std::invalid_argument("margin " + std::to_string(margin) + " must be below half the domain extent (" +
                                    std::to_string(max_margin()) + ")");
    }
    Domain d = *this;
    d.margin_ = margin;
    return d;
}

bool Domain::contains(std::span<const double> x) const {
    if (x.size() != input_dim()) return false;
    for (std::size_t i = 0; i < dim_; ++i) {
        if (!(x[i] > lo_ && x[i] < hi_)) return false;
    }
    if (kind_ == DomainKind::LShape) {
        return std::any_of(x.begin(), x.end(), [](double v) { return v < 0.0; });
    }
    if (kind_ == DomainKind::SpaceTime) return x[dim_] > t0_ && x[dim_] < t1_;
    return true;
}

bool Domain::embeds_cube(std::span<const double> c, double h) const {
    if (c.size() != input_dim()) return false;
    for (std::size_t i = 0; i < dim_; ++i) {
        if (c[i] - h < lo_ || c[i] + h > hi_) return false;
    }
    if (kind_ == DomainKind::LShape) {
        // The cube misses [0,1)^d iff its upper corner has a coordinate <= 0.
        for (std::size_t i = 0; i < dim_; ++i) {
            if (c[i] + h <= 0.0) return true;
        }
        return false;
    }
    if (kind_ == DomainKind::SpaceTime) return c[dim_] >= t0_ && c[dim_] <= t1_;
    return true;
}

Matrix sample_interior(const Domain& domain, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_interior: n must be at least 1");
    const double m = domain.margin();
    if (m >= domain.max_margin()) throw std::invalid_argument("sample_interior: margin too large for the domain");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(domain.lo() + m, domain.hi() - m);
    std::uniform_real_distribution<double> time(domain.t0(), domain.t1());
    const std::size_t d = domain.spatial_dim();
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(domain.input_dim()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (;;) {
            for (std::size_t i = 0; i < d; ++i) x(r, static_cast<Eigen::Index>(i)) = coord(rng);
            if (domain.kind() != DomainKind::LShape) break;
            bool inside = false;
            for (std::size_t i = 0; i < d; ++i) inside = inside || x(r, static_cast<Eigen::Index>(i)) + m <= 0.0;
            if (inside) break;
        }
        if (domain.kind() == DomainKind::SpaceTime) x(r, static_cast<Eigen::Index>(d)) = time(rng);
    }
    return x;
}

Matrix sample_boundary(const Domain& domain, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_boundary: n must be at least 1");
    std::mt19937_64 rng(seed);
    const std::size_t d = domain.spatial_dim();
    const auto di = static_cast<Eigen::Index>(d);
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(domain.input_dim()));

    if (domain.kind() == DomainKind::SpaceTime) {
        std::uniform_real_distribution<double> coord(domain.lo(), domain.hi());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index i = 0; i < di; ++i) x(r, i) = coord(rng);
            x(r, di) = domain.t1();
        }
        return x;
    }

    if (domain.kind() == DomainKind::Hypercube) {
        std::uniform_int_distribution<std::size_t> face(0, 2 * d - 1);
        std::uniform_real_distribution<double> coord(domain.lo(), domain.hi());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const std::size_t f = face(rng);
            for (Eigen::Index i = 0; i < di; ++i) x(r, i) = coord(rng);
            x(r, static_cast<Eigen::Index>(f / 2)) = (f % 2 == 0) ? domain.lo() : domain.hi();
        }
        return x;
    }

    // L-shape faces: x_j = -1 (measure 2^{d-1}), x_j = +1 minus the removed
    // corner (2^{d-1} - 1), and the cut faces x_j = 0 with the others in [0,1]
    // (measure 1).
    const double full = std::ldexp(1.0, static_cast<int>(d) - 1);
    std::vector<double> weights;
    for (std::size_t j = 0; j < d; ++j) {
        weights.push_back(full);
        weights.push_back(full - 1.0);
        weights.push_back(1.0);
    }
    std::discrete_distribution<std::size_t> face(weights.begin(), weights.end());
    std::uniform_real_distribution<double> outer(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const std::size_t f = face(rng);
        const auto j = static_cast<Eigen::Index>(f / 3);
        const std::size_t type = f % 3;
        if (type == 2) {
            for (Eigen::Index i = 0; i < di; ++i) x(r, i) = unit(rng);
            x(r, j) = 0.0;
            continue;
        }
        for (;;) {
            bool removed = true;
            for (Eigen::Index i = 0; i < di; ++i) {
                if (i == j) continue;
                x(r, i) = outer(rng);
                removed = removed && x(r, i) >= 0.0;
            }
            if (type == 0 || !removed) break;
        }
        x(r, j) = type == 0 ? -1.0 : 1.0;
    }
    return x;
}

Matrix sphere_directions(std::size_t dim, std::size_t k, bool antithetic, std::uint64_t seed) {
    if (dim == 0 || k == 0) throw std::invalid_argument("sphere_directions: dim and k must be positive");
    if (antithetic && k % 2 != 0) throw std::invalid_argument("sphere_directions: antithetic sampling needs even k");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix dirs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
    const Eigen::Index step = antithetic ? 2 : 1;
    for (Eigen::Index r = 0; r < dirs.rows(); r += step) {
        double norm = 0.0;
        do {
            for (Eigen::Index i = 0; i < dirs.cols(); ++i) dirs(r, i) = normal(rng);
            norm = dirs.row(r).norm();
        } while (norm == 0.0);
        dirs.row(r) /= norm;
        if (antithetic) dirs.row(r + 1) = -dirs.row(r);
    }
    return dirs;
}

std::size_t sobol_max_dim() { return kSobolMaxDim; }

Matrix sobol(std::size_t dim, std::size_t n) {
    if (dim == 0 || dim > kSobolMaxDim) {
        throw std::invalid_argument("sobol: dimension " + std::to_string(dim) + " outside 1.." +
                                    std::to_string(kSobolMaxDim));
    }
    if (n > (std::size_t{1} << 32)) throw std::invalid_argument("sobol: at most 2^32 points");
    constexpr int kBits = 32;
    std::vector<std::array<std::uint32_t, kBits>> v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        auto& dir = v[j];
        const std::uint32_t poly = kSobolPoly[j];
        const int s = std::bit_width(poly) - 1;
        if (s == 0) {
            for (int i = 0; i < kBits; ++i) dir[i] = 1u << (kBits - 1 - i);
            continue;
        }
        const std::uint32_t a = (poly >> 1) & ((1u << (s - 1)) - 1u);
        for (int i = 0; i < s && i < kBits; ++i) dir[i] = kSobolInit[j][i] << (kBits - 1 - i);
        for (int i = s; i < kBits; ++i) {
            std::uint32_t x = dir[i - s] ^ (dir[i - s] >> s);
            for (int k = 1; k < s; ++k) {
                if ((a >> (s - 1 - k)) & 1u) x ^= dir[i - k];
            }
            dir[i] = x;
        }
    }
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    std::vector<std::uint32_t> state(dim, 0);
    constexpr double kScale = 1.0 / 4294967296.0;
    for (std::size_t p = 0; p < n; ++p) {
        if (p > 0) {
            const int c = std::countr_one(static_cast<std::uint32_t>(p - 1));
            for (std::size_t j = 0; j < dim; ++j) state[j] ^= v[j][static_cast<std::size_t>(c)];
        }
        for (std::size_t j = 0; j < dim; ++j) {
            out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = state[j] * kScale;
        }
    }
    return out;
}

namespace {

// n x dims offsets in [-1, 1].
Matrix face_offsets(std::size_t dims, std::size_t n, bool qmc, std::mt19937_64& rng) {
    Matrix u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
    if (dims == 0) return u;
    if (qmc) {
        u = sobol(dims, n).array() + 0.5 / static_cast<double>(n);
    } else {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = unit(rng);
    }
    return (2.0 * u.array() - 1.0).matrix();
}

}  // namespace

double BoxQuadrature::volume() const {
    double v = 1.0;
    for (double h : half_widths) v *= 2.0 * h;
    return v;
}

BoxQuadrature cube_quadrature(std::span<const double> center, double eps, std::size_t points_per_face, bool qmc,
                              std::uint64_t seed) {
    const std::size_t d = center.size();
    if (d == 0) throw std::invalid_argument("cube_quadrature: empty center");
    if (!(eps > 0.0)) throw std::invalid_argument("cube_quadrature: eps must be positive");
    if (points_per_face == 0) throw std::invalid_argument("cube_quadrature: need at least one point per face");
    BoxQuadrature box;
    box.center.assign(center.begin(), center.end());
    box.half_widths.assign(d, eps);
    const std::size_t n = d == 1 ? 1 : points_per_face;
    std::mt19937_64 rng(seed);
    box.faces.reserve(2 * d * n);
    for (std::size_t j = 0; j < d; ++j) {
        const Matrix off = face_offsets(d - 1, n, qmc, rng);
        const double w = 1.0 / (2.0 * eps * static_cast<double>(n));
        for (int sign : {1, -1}) {
            for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(n); ++p) {
                FacePoint fp;
                fp.point = box.center;
                Eigen::Index c = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    fp.point[i] += i == j ? sign * eps : eps * off(p, c++);
                }
                fp.axis = j;
                fp.sign = sign;
                fp.weight = w;
                box.faces.push_back(std::move(fp));
            }
        }
    }
    return box;
}

std::vector<FacePoint> cube_face_points(std::span<const double> center, double eps, std::size_t points_per_face,
                                        bool qmc, std::uint64_t seed) {
    return cube_quadrature(center, eps, points_per_face, qmc, seed).faces;
}

std::pair<BoxQuadrature, BoxQuadrature> bisect(const BoxQuadrature& box, std::size_t axis, std::size_t shared_points,
                                               bool qmc, std::uint64_t seed) {
    const std::size_t d = box.center.size();
    if (axis >= d) throw std::invalid_argument("bisect: axis out of range");
    if (shared_points == 0) throw std::invalid_argument("bisect: need at least one shared-face point");
    const double h = box.half_widths[axis];
    const double c = box.center[axis];
    BoxQuadrature lower = box, upper = box;
    lower.faces.clear();
    upper.faces.clear();
    lower.half_widths[axis] = upper.half_widths[axis] = 0.5 * h;
    lower.center[axis] = c - 0.5 * h;
    upper.center[axis] = c + 0.5 * h;

    for (FacePoint fp : box.faces) {
        fp.weight *= 2.0;  // same integral weight, half the volume
        const bool to_lower = fp.axis == axis ? fp.sign < 0 : fp.point[axis] <= c;
        (to_lower ? lower : upper).faces.push_back(std::move(fp));
    }

    std::mt19937_64 rng(seed);
    const std::size_t n = d == 1 ? 1 : shared_points;
    const Matrix off = face_offsets(d - 1, n, qmc, rng);
    const double w = 1.0 / (h * static_cast<double>(n));
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(n); ++p) {
        FacePoint fp;
        fp.point = box.center;
        Eigen::Index col = 0;
        for (std::size_t i = 0; i < d; ++i) {
            if (i != axis) fp.point[i] += box.half_widths[i] * off(p, col++);
        }
        fp.axis = axis;
        fp.weight = w;
        fp.sign = 1;
        lower.faces.push_back(fp);
        fp.sign = -1;
        upper.faces.push_back(std::move(fp));
    }
    return {std::move(lower), std::move(upper)};
}

std::string to_string(CvShape shape) { return shape == CvShape::Sphere ? "sphere" : "cube"; }

CvShape parse_cv_shape(const std::string& name) {
    if (name == "sphere") return CvShape::Sphere;
    if (name == "cube") return CvShape::Cube;
    throw std::invalid_argument("unknown control volume shape '" + name + "' (expected sphere or cube)");
}

void ControlVolumeSpec::validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("control volume radius must be positive");
    if (k == 0) throw std::invalid_argument("control volume needs at least one surface sample");
    if (shape == CvShape::Sphere && antithetic && k % 2 != 0) {
        throw std::invalid_argument("antithetic sphere sampling needs an even sample count");
    }
}

}  // namespace dfvm
