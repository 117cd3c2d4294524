#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "abreu/polytope.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace abreu;

namespace {

std::vector<Facet> facets_of(std::initializer_list<std::array<std::int64_t, 3>> rows)
{
    std::vector<Facet> out;
    for (const auto& r : rows) out.push_back({{r[0], r[1]}, Rational(r[2])});
    return out;
}

std::vector<Facet> square_facets(std::int64_t l = 1)
{
    return facets_of({{1, 0, 0}, {0, 1, 0}, {-1, 0, -l}, {0, -1, -l}});
}

std::vector<Facet> simplex_facets() { return facets_of({{1, 0, 0}, {0, 1, 0}, {-1, -1, -1}}); }

PolytopeFault fault_of(const std::vector<Facet>& facets)
{
    try {
        validate_delzant(facets);
    } catch (const PolytopeError& e) {
        return e.fault();
    }
    FAIL("expected a PolytopeError");
    return PolytopeFault::NoFacets;
}

} // namespace

TEST_CASE("rational parsing is exact")
{
    CHECK(Rational::parse("3") == Rational(3));
    CHECK(Rational::parse("-7/2") == Rational(-7, 2));
    CHECK(Rational::parse("0.125") == Rational(1, 8));
    CHECK(Rational::parse("-1.5e-2") == Rational(-3, 200));
    CHECK(Rational::parse("6/4") == Rational(3, 2));
    CHECK_THROWS_AS(Rational::parse("1/0"), DomainError);
    CHECK_THROWS_AS(Rational::parse("abc"), DomainError);
    CHECK_THROWS_AS(Rational::parse(""), DomainError);
    CHECK(Rational::parse("-7/2").str() == "-7/2");
}

TEST_CASE("square and simplex are Delzant")
{
    const ValidationReport sq = validate_delzant(square_facets());
    CHECK(sq.valid);
    REQUIRE(sq.vertices.size() == 4);
    for (const VertexReport& v : sq.vertices) CHECK(std::abs(v.determinant) == 1);

    const ValidationReport sx = validate_delzant(simplex_facets());
    CHECK(sx.valid);
    CHECK(sx.vertices.size() == 3);
}

TEST_CASE("triangle with normal (-2,-1) fails at the vertex where det = 2")
{
    const auto facets = facets_of({{1, 0, 0}, {0, 1, 0}, {-2, -1, -2}});
    const ValidationReport report = validate_delzant(facets);
    CHECK_FALSE(report.valid);
    // Hand oracle: det [[0, 1], [-2, -1]] = 0*(-1) - 1*(-2) = 2 at the vertex (1, 0).
    bool found = false;
    for (const VertexReport& v : report.vertices) {
        const std::set<int> pair{v.facet_a, v.facet_b};
        if (pair == std::set<int>{1, 2}) {
            found = true;
            CHECK(std::abs(v.determinant) == 2);
            CHECK(v.point == RationalPoint{Rational(1), Rational(0)});
        } else {
            CHECK(std::abs(v.determinant) == 1);
        }
    }
    CHECK(found);
    CHECK_THROWS_AS(Polytope(facets, Vec2(0.2, 0.2)), ValidationError);
}

TEST_CASE("structural defects are distinct errors")
{
    CHECK(fault_of({}) == PolytopeFault::NoFacets);
    CHECK(fault_of(facets_of({{1, 0, 0}, {0, 1, 0}})) == PolytopeFault::Unbounded);
    CHECK(fault_of(facets_of({{1, 0, 1}, {0, 1, 0}, {-1, 0, 0}, {0, -1, -1}})) == PolytopeFault::EmptyInterior);
    CHECK(fault_of(facets_of({{0, 0, 0}, {0, 1, 0}, {-1, -1, -1}})) == PolytopeFault::ZeroNormal);
    try {
        validate_delzant(facets_of({{2, 0, 0}, {0, 1, 0}, {-1, 0, -1}, {0, -1, -1}}));
        FAIL("expected an error");
    } catch (const PolytopeError& e) {
        CHECK(e.fault() == PolytopeFault::NonPrimitiveNormal);
        CHECK(e.facet() == 0);
    }
    CHECK_THROWS_AS(Polytope(square_facets(), Vec2(1.5, 0.5)), PolytopeError);
}

TEST_CASE("rational offsets")
{
    std::vector<Facet> f = square_facets();
    f[2].offset = Rational::parse("-7/2");
    const Polytope p(f, Vec2(1.0, 0.5));
    CHECK(p.area() == doctest::Approx(3.5));
    CHECK(p.offset(2) == -3.5);
}

TEST_CASE("boundary measure uses the lattice normalization")
{
    const Polytope square = unit_square();
    const FacetMeasure left = boundary_measure(square, 0);
    CHECK(left.density == doctest::Approx(1.0));
    CHECK(left.mass == doctest::Approx(1.0));

    // Hypotenuse: primitive normal (-1,-1), Euclidean length sqrt 2, density 1/sqrt 2.
    const Polytope simplex = standard_simplex();
    const FacetMeasure hyp = boundary_measure(simplex, 2);
    CHECK(hyp.length == doctest::Approx(std::sqrt(2.0)));
    CHECK(hyp.density == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(hyp.mass == doctest::Approx(1.0));

    CHECK(boundary_measure(unit_square(3.0), 0).mass == doctest::Approx(3.0));
    CHECK_THROWS_AS(boundary_measure(square, 7), DomainError);
}

TEST_CASE("perimeter of [0,L]^2 in d(sigma) is 4L")
{
    for (std::int64_t l : {1, 2, 5}) {
        const Polytope p(square_facets(l), Vec2(0.5 * l, 0.5 * l));
        double total = 0.0;
        for (std::size_t k = 0; k < p.num_facets(); ++k) total += boundary_measure(p, k).mass;
        CHECK(total == doctest::Approx(4.0 * l));
    }
}

TEST_CASE("GL(2,Z) images stay Delzant and keep facet masses")
{
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> coin(0, 3);
    for (int trial = 0; trial < 40; ++trial) {
        Eigen::Matrix<std::int64_t, 2, 2> m = Eigen::Matrix<std::int64_t, 2, 2>::Identity();
        for (int k = 0; k < 4; ++k) {
            Eigen::Matrix<std::int64_t, 2, 2> e = Eigen::Matrix<std::int64_t, 2, 2>::Identity();
            switch (coin(rng)) {
            case 0: e(0, 1) = 1; break;
            case 1: e(1, 0) = -1; break;
            case 2: e << 0, 1, 1, 0; break;
            default: e(0, 0) = -1; break;
            }
            m = e * m;
        }
        const LatticeVec t{trial % 3, -(trial % 2)};
        for (const auto& base : {square_facets(2), simplex_facets()}) {
            const std::vector<Facet> image = transform_facets(base, m, t);
            const ValidationReport report = validate_delzant(image);
            REQUIRE(report.valid);
            const Polytope original(base, Vec2(0.3, 0.3));
            const Vec2 po = (m.cast<double>() * Vec2(0.3, 0.3)) + Vec2(double(t.a), double(t.b));
            const Polytope moved(image, po);
            for (std::size_t k = 0; k < base.size(); ++k) {
                CHECK(boundary_measure(moved, k).mass == doctest::Approx(boundary_measure(original, k).mass));
            }
        }
    }
}

TEST_CASE("grid enumeration")
{
    const Polytope square = unit_square();
    const GridSpec grid(square, 0.25, 0.1);
    REQUIRE(grid.size() == 9);
    // Lexicographic in (i, j) with i along xi_1.
    std::vector<Vec2> expected;
    for (double x : {0.25, 0.5, 0.75})
        for (double y : {0.25, 0.5, 0.75}) expected.emplace_back(x, y);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        CHECK(grid.node(n).xi.x() == doctest::Approx(expected[n].x()));
        CHECK(grid.node(n).xi.y() == doctest::Approx(expected[n].y()));
        for (std::size_t k = 0; k < 4; ++k) CHECK(grid.delta(n, k) > 0.0);
    }

    CHECK_THROWS_AS(GridSpec(standard_simplex(), 0.5, 0.4), DomainError);
    // Inscribed radius of the unit square is 1/2.
    CHECK_THROWS_AS(GridSpec(square, 0.01, 0.51), DomainError);
    CHECK_THROWS_AS(GridSpec(square, 0.0, 0.1), DomainError);
}

TEST_CASE("grid nodes are interior and respect h_min")
{
    const Polytope simplex = standard_simplex();
    const GridSpec grid(simplex, 1.0 / 32.0, 1.0 / 8.0);
    CHECK(grid.size() > 0);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const Vec2& xi = grid.node(n).xi;
        CHECK(simplex.contains_interior(xi));
        CHECK(simplex.min_delta(xi) >= 1.0 / 8.0 - 1e-12);
        CHECK(grid.index(grid.node(n).i, grid.node(n).j) == static_cast<int>(n));
        if (n > 0) {
            const auto& a = grid.node(n - 1);
            const auto& b = grid.node(n);
            CHECK((a.i < b.i || (a.i == b.i && a.j < b.j)));
        }
    }
}

TEST_CASE("edge chart and shear")
{
    const Polytope simplex = standard_simplex();
    const auto [a, b] = simplex.edge(2);
    const EdgeChart chart = edge_chart(simplex, 2, a);
    const std::int64_t det = chart.linear(0, 0) * chart.linear(1, 1) - chart.linear(0, 1) * chart.linear(1, 0);
    CHECK(std::abs(det) == 1);
    for (const Vec2& xi : {Vec2(0.2, 0.3), Vec2(0.1, 0.1), b}) {
        const Vec2 eta = chart.to_chart(xi);
        CHECK(eta.x() == doctest::Approx(simplex.delta(2, xi)));
        const Vec2 back = chart.from_chart(eta);
        CHECK(back.x() == doctest::Approx(xi.x()));
        CHECK(back.y() == doctest::Approx(xi.y()));
    }
    // The shear and its dual preserve the pairing <x, eta>.
    const Vec2 eta(0.3, -1.2);
    const Vec2 x(2.0, 0.7);
    for (double s : {-2.0, 0.5, 3.0}) {
        CHECK(shear_dual(x, s).dot(shear_chart(eta, s)) == doctest::Approx(x.dot(eta)));
        CHECK(shear_chart(eta, s).x() == eta.x());
    }
}
