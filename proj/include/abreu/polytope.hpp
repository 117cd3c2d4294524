#pragma once

#include "abreu/error.hpp"
#include "abreu/rational.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace abreu {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Integer lattice vector.
struct LatticeVec {
    std::int64_t a = 0;
    std::int64_t b = 0;

    friend bool operator==(const LatticeVec&, const LatticeVec&) = default;
};

/// Facet inequality  <normal, xi> - offset > 0  (i.e. delta_k > 0 inside).
struct Facet {
    LatticeVec normal;
    Rational offset;
};

struct RationalPoint {
    Rational x;
    Rational y;

    Vec2 to_vec() const { return {x.to_double(), y.to_double()}; }
    friend bool operator==(const RationalPoint&, const RationalPoint&) = default;
};

enum class PolytopeFault {
    NoFacets,
    ZeroNormal,
    NonPrimitiveNormal,
    Unbounded,
    EmptyInterior,
    RedundantFacet,
    NonSimpleVertex,
    BasePointOutside,
};

/// Structural defect that makes a facet list unusable as a polytope at all.
class PolytopeError : public ValidationError {
public:
    PolytopeError(PolytopeFault fault, int facet, const std::string& what)
        : ValidationError(what), fault_(fault), facet_(facet) {}

    PolytopeFault fault() const { return fault_; }
    /// Offending facet index, or -1 when the defect is global.
    int facet() const { return facet_; }

private:
    PolytopeFault fault_;
    int facet_;
};

struct VertexReport {
    RationalPoint point;
    int facet_a = -1;
    int facet_b = -1;
    std::int64_t determinant = 0;
};

struct ValidationReport {
    bool valid = false;
    std::vector<VertexReport> vertices; // counter-clockwise
    std::vector<std::string> problems;
};

/// Checks primitivity, boundedness, nonempty interior and the Delzant
/// determinant condition in exact arithmetic. Structural defects throw
/// PolytopeError; a failing determinant only marks the report invalid.
ValidationReport validate_delzant(std::span<const Facet> facets);

/// A validated 2D Delzant polytope. Immutable.
class Polytope {
public:
    /// Validates and throws PolytopeError / ValidationError if the data is not a
    /// Delzant polytope or the base point is not interior.
    Polytope(std::vector<Facet> facets, Vec2 base_point);

    std::size_t num_facets() const { return facets_.size(); }
    const Facet& facet(std::size_t k) const { return facets_[k]; }
    std::span<const Facet> facets() const { return facets_; }
    const Vec2& normal(std::size_t k) const { return normals_[k]; }
    double offset(std::size_t k) const { return offsets_[k]; }

    /// Vertices in counter-clockwise order.
    std::span<const Vec2> vertices() const { return vertices_; }
    std::span<const RationalPoint> exact_vertices() const { return exact_vertices_; }
    /// Endpoints of facet k, oriented counter-clockwise.
    std::pair<Vec2, Vec2> edge(std::size_t k) const;

    const Vec2& base_point() const { return base_point_; }

    double delta(std::size_t k, const Vec2& xi) const { return normals_[k].dot(xi) - offsets_[k]; }
    double min_delta(const Vec2& xi) const;
    bool contains_interior(const Vec2& xi) const { return min_delta(xi) > 0.0; }

    double diameter() const;
    double area() const;
    Vec2 centroid() const;
    std::pair<Vec2, Vec2> bounding_box() const;

private:
    std::vector<Facet> facets_;
    std::vector<Vec2> normals_;
    std::vector<double> offsets_;
    std::vector<RationalPoint> exact_vertices_;
    std::vector<Vec2> vertices_;
    std::vector<std::array<int, 2>> edge_vertices_;
    Vec2 base_point_;
};

Polytope unit_square(double scale = 1.0);
Polytope standard_simplex();

/// Lattice measure on a facet: d(sigma) ^ d(h_k) = d(mu) with h_k primitive,
/// i.e. density 1/|n_k| against Euclidean arc length.
struct FacetMeasure {
    Vec2 start;
    Vec2 end;
    double density = 0.0; // per unit Euclidean length
    double length = 0.0;
    double mass = 0.0;

    Vec2 point(double t) const { return start + t * (end - start); }
};

FacetMeasure boundary_measure(const Polytope& polytope, std::size_t facet_index);

/// Tensor grid clipped to {min_k delta_k >= h_min}. Node ordering is
/// lexicographic in (i, j), i being the xi_1 index.
class GridSpec {
public:
    struct Node {
        int i = 0;
        int j = 0;
        Vec2 xi;
        int nearest_facet = -1;
    };

    GridSpec(const Polytope& polytope, double h, double h_min);

    double h() const { return h_; }
    double h_min() const { return h_min_; }
    const Vec2& origin() const { return origin_; }
    int extent_i() const { return ni_; }
    int extent_j() const { return nj_; }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::size_t n) const { return nodes_[n]; }
    std::span<const Node> nodes() const { return nodes_; }
    double delta(std::size_t n, std::size_t k) const { return deltas_[n * num_facets_ + k]; }
    std::size_t num_facets() const { return num_facets_; }

    /// Node index at lattice position (i, j), or -1.
    int index(int i, int j) const;
    Vec2 position(int i, int j) const { return origin_ + h_ * Vec2(i, j); }

private:
    double h_;
    double h_min_;
    Vec2 origin_;
    int ni_ = 0;
    int nj_ = 0;
    std::size_t num_facets_ = 0;
    std::vector<Node> nodes_;
    std::vector<double> deltas_;
    std::vector<int> lookup_;
};

/// Affine lattice chart adapted to an edge: first coordinate is delta_k (zero
/// on the edge, positive inside), second completes an integral basis, origin q.
struct EdgeChart {
    Eigen::Matrix<std::int64_t, 2, 2> linear;
    Vec2 origin;

    Vec2 to_chart(const Vec2& xi) const { return linear.cast<double>() * (xi - origin); }
    Vec2 from_chart(const Vec2& eta) const;
};

EdgeChart edge_chart(const Polytope& polytope, std::size_t facet_index, const Vec2& q);

/// Shear (eta_1, eta_2) -> (eta_1, a*eta_1 + eta_2) of edge-chart coordinates
/// and the dual action (x_1, x_2) -> (x_1 - a*x_2, x_2) on gradient coordinates.
Vec2 shear_chart(const Vec2& eta, double a);
Vec2 shear_dual(const Vec2& x, double a);

/// Apply xi -> M xi + t (M in GL(2,Z), t integral) to a facet list.
std::vector<Facet> transform_facets(std::span<const Facet> facets,
                                    const Eigen::Matrix<std::int64_t, 2, 2>& m,
                                    const LatticeVec& t);

} // namespace abreu
