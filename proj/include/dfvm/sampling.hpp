#pragma once

#include "dfvm/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dfvm {

enum class DomainKind { Hypercube, LShape, SpaceTime };

/// Computational domain. Points of a space-time domain carry time as the last
/// coordinate.
class Domain {
public:
    /// (lo, hi)^dim
    static Domain hypercube(double lo, double hi, std::size_t dim);
    /// (-1, 1)^dim \ [0, 1)^dim
    static Domain lshape(std::size_t dim);
    /// spatial x [t0, t1]; the spatial part must be a hypercube.
    static Domain spacetime(const Domain& spatial, double t0, double t1);

    DomainKind kind() const { return kind_; }
    std::size_t spatial_dim() const { return dim_; }
    std::size_t input_dim() const { return kind_ == DomainKind::SpaceTime ? dim_ + 1 : dim_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }

    /// Shrink applied by sample_interior so control volumes stay inside.
    double margin() const { return margin_; }
    Domain with_margin(double margin) const;

    /// Open-interior membership.
    bool contains(std::span<const double> x) const;
    /// True when the closed spatial cube center +- half_width lies in the
    /// closure of the domain.
    bool embeds_cube(std::span<const double> center, double half_width) const;
    /// Largest admissible margin (exclusive).
    double max_margin() const;

private:
    DomainKind kind_ = DomainKind::Hypercube;
    std::size_t dim_ = 1;
    double lo_ = 0.0, hi_ = 1.0;
    double t0_ = 0.0, t1_ = 1.0;
    double margin_ = 0.0;
};

/// Independent child seed for (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// i.i.d. uniform points in the domain shrunk by its margin (rejection for
/// the L-shape). Time is sampled on the full interval.
Matrix sample_interior(const Domain& domain, std::size_t n, std::uint64_t seed);

/// Uniform points on the boundary, faces chosen proportionally to their
/// measure. For space-time domains: terminal points (x, t1).
Matrix sample_boundary(const Domain& domain, std::size_t n, std::uint64_t seed);

/// k unit vectors uniform on S^{d-1} (normalized Gaussians). With
/// `antithetic` the rows come in adjacent pairs (n, -n) and k must be even.
Matrix sphere_directions(std::size_t dim, std::size_t k, bool antithetic, std::uint64_t seed);

/// Unscrambled Sobol sequence in Gray-code order (Joe-Kuo direction
/// numbers). The first point is the origin.
Matrix sobol(std::size_t dim, std::size_t n);
std::size_t sobol_max_dim();

/// One quadrature node on a face of an axis-aligned box. `weight` is the
/// node's share of |face| / |box|, so a flux density is sum(weight * F . n)
/// and a flux integral is volume * sum(weight * F . n).
struct FacePoint {
    Point point;
    std::size_t axis = 0;
    int sign = 1;
    double weight = 0.0;
};

struct BoxQuadrature {
    Point center;
    std::vector<double> half_widths;
    std::vector<FacePoint> faces;

    double volume() const;
};

/// Nodes on the 2d faces of the cube center +- eps. Each face gets
/// `points_per_face` nodes; the free coordinates come from a Sobol set
/// shifted by 1/(2n) (so every 1-D projection of a 2^m set is the midpoint
/// rule) when `qmc`, else uniform draws. Opposite faces share the same free
/// coordinates. In 1-D each face is a single point.
BoxQuadrature cube_quadrature(std::span<const double> center, double eps, std::size_t points_per_face, bool qmc,
                              std::uint64_t seed);
std::vector<FacePoint> cube_face_points(std::span<const double> center, double eps, std::size_t points_per_face,
                                        bool qmc, std::uint64_t seed);

/// Splits a box into lower/upper halves along `axis`. Nodes of the parent
/// faces are handed to the child that contains them; the new interior face
/// gets `shared_points` nodes, identical for both children with opposite
/// normals.
std::pair<BoxQuadrature, BoxQuadrature> bisect(const BoxQuadrature& box, std::size_t axis, std::size_t shared_points,
                                               bool qmc, std::uint64_t seed);

enum class CvShape { Sphere, Cube };

std::string to_string(CvShape shape);
CvShape parse_cv_shape(const std::string& name);

struct ControlVolumeSpec {
    CvShape shape = CvShape::Cube;
    double radius = 1e-3;
    /// Surface samples (sphere) or nodes per face (cube).
    std::size_t k = 1;
    bool antithetic = true;
    bool qmc = true;

    void validate() const;
};

}  // namespace dfvm
