#include "abreu/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace abreu {

namespace {

std::int64_t det2(const LatticeVec& p, const LatticeVec& q)
{
    return p.a * q.b - p.b * q.a;
}

Rational exact_delta(const Facet& f, const RationalPoint& p)
{
    return Rational(f.normal.a) * p.x + Rational(f.normal.b) * p.y - f.offset;
}

// Intersection of the two facet lines, if they are not parallel.
std::optional<RationalPoint> intersect(const Facet& f, const Facet& g)
{
    std::int64_t d = det2(f.normal, g.normal);
    if (d == 0) return std::nullopt;
    // n_f . p = c_f, n_g . p = c_g  (Cramer)
    Rational x = (f.offset * Rational(g.normal.b) - g.offset * Rational(f.normal.b)) / Rational(d);
    Rational y = (g.offset * Rational(f.normal.a) - f.offset * Rational(g.normal.a)) / Rational(d);
    return RationalPoint{x, y};
}

void check_normals(std::span<const Facet> facets)
{
    if (facets.empty()) throw PolytopeError(PolytopeFault::NoFacets, -1, "polytope has no facets");
    for (std::size_t k = 0; k < facets.size(); ++k) {
        const LatticeVec& n = facets[k].normal;
        if (n.a == 0 && n.b == 0)
            throw PolytopeError(PolytopeFault::ZeroNormal, static_cast<int>(k),
                                "facet " + std::to_string(k) + " has a zero normal");
        if (std::gcd(n.a, n.b) != 1)
            throw PolytopeError(PolytopeFault::NonPrimitiveNormal, static_cast<int>(k),
                                "facet " + std::to_string(k) + " normal [" + std::to_string(n.a) + ", " +
                                    std::to_string(n.b) + "] is not primitive");
    }
}

// Recession cone {d : n_k . d >= 0 for all k} is nonzero iff one of its
// extreme rays, each perpendicular to some normal, satisfies every inequality.
void check_bounded(std::span<const Facet> facets)
{
    for (const Facet& f : facets) {
        for (int s : {1, -1}) {
            LatticeVec d{-s * f.normal.b, s * f.normal.a};
            bool in_cone = std::all_of(facets.begin(), facets.end(), [&](const Facet& g) {
                return g.normal.a * d.a + g.normal.b * d.b >= 0;
            });
            if (in_cone)
                throw PolytopeError(PolytopeFault::Unbounded, -1,
                                    "polytope is unbounded in direction [" + std::to_string(d.a) + ", " +
                                        std::to_string(d.b) + "]");
        }
    }
}

struct Corner {
    RationalPoint point;
    std::vector<int> facets;
};

std::vector<Corner> feasible_corners(std::span<const Facet> facets)
{
    std::vector<Corner> corners;
    for (std::size_t a = 0; a < facets.size(); ++a) {
        for (std::size_t b = a + 1; b < facets.size(); ++b) {
            auto p = intersect(facets[a], facets[b]);
            if (!p) continue;
            bool feasible = std::all_of(facets.begin(), facets.end(),
                                        [&](const Facet& f) { return exact_delta(f, *p).sign() >= 0; });
            if (!feasible) continue;
            if (std::none_of(corners.begin(), corners.end(), [&](const Corner& c) { return c.point == *p; }))
                corners.push_back({*p, {}});
        }
    }
    for (Corner& c : corners)
        for (std::size_t k = 0; k < facets.size(); ++k)
            if (exact_delta(facets[k], c.point).sign() == 0) c.facets.push_back(static_cast<int>(k));
    return corners;
}

} // namespace

ValidationReport validate_delzant(std::span<const Facet> facets)
{
    check_normals(facets);
    check_bounded(facets);

    std::vector<Corner> corners = feasible_corners(facets);
    if (corners.size() < 3)
        throw PolytopeError(PolytopeFault::EmptyInterior, -1, "polytope interior is empty");

    // Counter-clockwise order about the vertex average. The average of the
    // corners of a bounded polygon with >= 3 distinct corners is interior
    // unless they are collinear, which the area check below catches.
    Vec2 center = Vec2::Zero();
    for (const Corner& c : corners) center += c.point.to_vec();
    center /= static_cast<double>(corners.size());
    std::sort(corners.begin(), corners.end(), [&](const Corner& p, const Corner& q) {
        Vec2 a = p.point.to_vec() - center;
        Vec2 b = q.point.to_vec() - center;
        return std::atan2(a.y(), a.x()) < std::atan2(b.y(), b.x());
    });
    Rational twice_area(0);
    for (std::size_t v = 0; v < corners.size(); ++v) {
        const RationalPoint& p = corners[v].point;
        const RationalPoint& q = corners[(v + 1) % corners.size()].point;
        twice_area = twice_area + (p.x * q.y - p.y * q.x);
    }
    if (twice_area.sign() <= 0) throw PolytopeError(PolytopeFault::EmptyInterior, -1, "polytope interior is empty");

    ValidationReport report;
    report.valid = true;
    std::vector<int> facet_use(facets.size(), 0);
    for (const Corner& c : corners) {
        for (int k : c.facets) ++facet_use[k];
        if (c.facets.size() != 2)
            throw PolytopeError(PolytopeFault::NonSimpleVertex, c.facets.front(),
                                "vertex (" + c.point.x.str() + ", " + c.point.y.str() + ") lies on " +
                                    std::to_string(c.facets.size()) + " facets");
        VertexReport vr;
        vr.point = c.point;
        vr.facet_a = c.facets[0];
        vr.facet_b = c.facets[1];
        vr.determinant = det2(facets[vr.facet_a].normal, facets[vr.facet_b].normal);
        if (std::abs(vr.determinant) != 1) {
            report.valid = false;
            report.problems.push_back("vertex (" + c.point.x.str() + ", " + c.point.y.str() + "): facets " +
                                      std::to_string(vr.facet_a) + " and " + std::to_string(vr.facet_b) +
                                      " have determinant " + std::to_string(vr.determinant));
        }
        report.vertices.push_back(vr);
    }
    for (std::size_t k = 0; k < facets.size(); ++k)
        if (facet_use[k] != 2)
            throw PolytopeError(PolytopeFault::RedundantFacet, static_cast<int>(k),
                                "facet " + std::to_string(k) + " does not support an edge");
    return report;
}

Polytope::Polytope(std::vector<Facet> facets, Vec2 base_point) : facets_(std::move(facets)), base_point_(base_point)
{
    ValidationReport report = validate_delzant(facets_);
    if (!report.valid) throw ValidationError("not a Delzant polytope: " + report.problems.front());

    for (const Facet& f : facets_) {
        normals_.emplace_back(static_cast<double>(f.normal.a), static_cast<double>(f.normal.b));
        offsets_.push_back(f.offset.to_double());
    }
    for (const VertexReport& v : report.vertices) {
        exact_vertices_.push_back(v.point);
        vertices_.push_back(v.point.to_vec());
    }
    edge_vertices_.assign(facets_.size(), {-1, -1});
    const std::size_t nv = report.vertices.size();
    for (std::size_t v = 0; v < nv; ++v) {
        // Edge between consecutive CCW vertices v and v+1 is the facet they share.
        const VertexReport& p = report.vertices[v];
        const VertexReport& q = report.vertices[(v + 1) % nv];
        for (int k : {p.facet_a, p.facet_b})
            if (k == q.facet_a || k == q.facet_b) edge_vertices_[k] = {static_cast<int>(v), static_cast<int>((v + 1) % nv)};
    }

    if (!contains_interior(base_point_))
        throw PolytopeError(PolytopeFault::BasePointOutside, -1, "base point p_o is not interior");
}

std::pair<Vec2, Vec2> Polytope::edge(std::size_t k) const
{
    return {vertices_[edge_vertices_[k][0]], vertices_[edge_vertices_[k][1]]};
}

double Polytope::min_delta(const Vec2& xi) const
{
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < facets_.size(); ++k) m = std::min(m, delta(k, xi));
    return m;
}

double Polytope::diameter() const
{
    double d = 0.0;
    for (const Vec2& p : vertices_)
        for (const Vec2& q : vertices_) d = std::max(d, (p - q).norm());
    return d;
}

double Polytope::area() const
{
    double twice = 0.0;
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
        const Vec2& p = vertices_[v];
        const Vec2& q = vertices_[(v + 1) % vertices_.size()];
        twice += p.x() * q.y() - p.y() * q.x();
    }
    return 0.5 * twice;
}

Vec2 Polytope::centroid() const
{
    Vec2 c = Vec2::Zero();
    double twice = 0.0;
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
        const Vec2& p = vertices_[v];
        const Vec2& q = vertices_[(v + 1) % vertices_.size()];
        double cross = p.x() * q.y() - p.y() * q.x();
        twice += cross;
        c += cross * (p + q);
    }
    return c / (3.0 * twice);
}

std::pair<Vec2, Vec2> Polytope::bounding_box() const
{
    Vec2 lo = vertices_.front();
    Vec2 hi = vertices_.front();
    for (const Vec2& p : vertices_) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return {lo, hi};
}

Polytope unit_square(double scale)
{
    Rational s = Rational::parse(std::to_string(scale));
    return Polytope({{{1, 0}, Rational(0)}, {{0, 1}, Rational(0)}, {{-1, 0}, -s}, {{0, -1}, -s}},
                    Vec2(0.5 * scale, 0.5 * scale));
}

Polytope standard_simplex()
{
    return Polytope({{{1, 0}, Rational(0)}, {{0, 1}, Rational(0)}, {{-1, -1}, Rational(-1)}}, Vec2(0.25, 0.25));
}

FacetMeasure boundary_measure(const Polytope& polytope, std::size_t facet_index)
{
    if (facet_index >= polytope.num_facets()) throw DomainError("facet index out of range");
    auto [a, b] = polytope.edge(facet_index);
    FacetMeasure m;
    m.start = a;
    m.end = b;
    m.length = (b - a).norm();
    m.density = 1.0 / polytope.normal(facet_index).norm();
    m.mass = m.density * m.length;
    return m;
}

GridSpec::GridSpec(const Polytope& polytope, double h, double h_min)
    : h_(h), h_min_(h_min), num_facets_(polytope.num_facets())
{
    if (!(h > 0.0) || !(h_min > 0.0))
        throw DomainError("grid requires h > 0 and h_min > 0");
    auto [lo, hi] = polytope.bounding_box();
    origin_ = lo;
    ni_ = static_cast<int>(std::floor((hi.x() - lo.x()) / h + 1e-9)) + 1;
    nj_ = static_cast<int>(std::floor((hi.y() - lo.y()) / h + 1e-9)) + 1;
    lookup_.assign(static_cast<std::size_t>(ni_) * nj_, -1);

    const double threshold = h_min * (1.0 - 1e-12);
    for (int i = 0; i < ni_; ++i) {
        for (int j = 0; j < nj_; ++j) {
            Vec2 xi = position(i, j);
            double best = std::numeric_limits<double>::infinity();
            int nearest = -1;
            for (std::size_t k = 0; k < num_facets_; ++k) {
                double d = polytope.delta(k, xi);
                if (d < best) {
                    best = d;
                    nearest = static_cast<int>(k);
                }
            }
            if (best < threshold) continue;
            lookup_[static_cast<std::size_t>(i) * nj_ + j] = static_cast<int>(nodes_.size());
            nodes_.push_back({i, j, xi, nearest});
            for (std::size_t k = 0; k < num_facets_; ++k) deltas_.push_back(polytope.delta(k, xi));
        }
    }
    if (nodes_.empty()) throw DomainError("grid has no nodes with min delta >= h_min (h too coarse or h_min too large)");
}

int GridSpec::index(int i, int j) const
{
    if (i < 0 || j < 0 || i >= ni_ || j >= nj_) return -1;
    return lookup_[static_cast<std::size_t>(i) * nj_ + j];
}

Vec2 EdgeChart::from_chart(const Vec2& eta) const
{
    return origin + linear.cast<double>().inverse() * eta;
}

EdgeChart edge_chart(const Polytope& polytope, std::size_t facet_index, const Vec2& q)
{
    const LatticeVec& n = polytope.facet(facet_index).normal;
    // Extended Euclid: s*a + t*b = 1, so [[a, b], [-t, s]] has determinant 1.
    std::int64_t old_r = n.a, r = n.b, old_s = 1, s = 0, old_t = 0, t = 1;
    while (r != 0) {
        std::int64_t quotient = old_r / r;
        std::tie(old_r, r) = std::make_pair(r, old_r - quotient * r);
        std::tie(old_s, s) = std::make_pair(s, old_s - quotient * s);
        std::tie(old_t, t) = std::make_pair(t, old_t - quotient * t);
    }
    if (old_r < 0) {
        old_s = -old_s;
        old_t = -old_t;
    }
    EdgeChart chart;
    chart.linear << n.a, n.b, -old_t, old_s;
    chart.origin = q;
    return chart;
}

Vec2 shear_chart(const Vec2& eta, double a)
{
    return {eta.x(), a * eta.x() + eta.y()};
}

Vec2 shear_dual(const Vec2& x, double a)
{
    return {x.x() - a * x.y(), x.y()};
}

std::vector<Facet> transform_facets(std::span<const Facet> facets, const Eigen::Matrix<std::int64_t, 2, 2>& m,
                                    const LatticeVec& t)
{
    std::int64_t det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    if (det != 1 && det != -1) throw DomainError("transform is not in GL(2,Z)");
    // Inverse transpose of a unimodular matrix is integral.
    Eigen::Matrix<std::int64_t, 2, 2> inv_t;
    inv_t << m(1, 1) * det, -m(1, 0) * det, -m(0, 1) * det, m(0, 0) * det;
    std::vector<Facet> out;
    for (const Facet& f : facets) {
        LatticeVec n{inv_t(0, 0) * f.normal.a + inv_t(0, 1) * f.normal.b,
                     inv_t(1, 0) * f.normal.a + inv_t(1, 1) * f.normal.b};
        out.push_back({n, f.offset + Rational(n.a * t.a + n.b * t.b)});
    }
    return out;
}

} // namespace abreu
