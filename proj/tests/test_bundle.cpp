#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "abreu/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace abreu;

namespace {

Polytope shifted_square(std::int64_t lo)
{
    std::vector<Facet> f{{{1, 0}, Rational(lo)}, {{0, 1}, Rational(lo)}, {{-1, 0}, Rational(-lo - 1)},
                         {{0, -1}, Rational(-lo - 1)}};
    return Polytope(f, Vec2(lo + 0.5, lo + 0.5));
}

} // namespace

TEST_CASE("Duistermaat-Heckman polynomial")
{
    CHECK(dh_value(DHData(), Vec2(0.3, 7.0)) == 1.0);
    CHECK(dh_value(DHData({Vec2(1, 0)}, Vec2::Zero()), Vec2(0.5, 0.3)) == doctest::Approx(1.0));
    // (2*1)(2*1)(2*2) at (1,1).
    CHECK(dh_value(DHData({Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)}, Vec2::Zero()), Vec2(1, 1)) == doctest::Approx(16.0));
}

TEST_CASE("h_G")
{
    CHECK(h_g_value(DHData(), Vec2(0.2, 0.4)) == 0.0);
    // d/dxi_1 log(2 xi_1) = 1/xi_1 = 2 at xi_1 = 1/2.
    CHECK(h_g_value(DHData({Vec2(1, 0)}, Vec2(1, 0)), Vec2(0.5, 0.9)) == doctest::Approx(2.0));
    CHECK(h_g_value(DHData({Vec2(1, 2), Vec2(3, 1)}, Vec2::Zero()), Vec2(0.5, 0.9)) == 0.0);
    CHECK_THROWS_AS(h_g_value(DHData({Vec2(1, 0)}, Vec2(1, 0)), Vec2(-0.5, 0.9)), DomainError);
}

TEST_CASE("h_G matches a central difference of sigma . grad log D")
{
    const DHData dh({Vec2(1, 0), Vec2(1, 2), Vec2(0.5, 0.25)}, Vec2(0.7, -1.3));
    const double h = 1e-4;
    for (const Vec2& xi : {Vec2(0.4, 0.6), Vec2(1.3, 0.2), Vec2(2.0, 2.5)}) {
        auto logd = [&](const Vec2& p) { return std::log(dh_value(dh, p)); };
        const double dx = (logd(xi + Vec2(h, 0)) - logd(xi - Vec2(h, 0))) / (2 * h);
        const double dy = (logd(xi + Vec2(0, h)) - logd(xi - Vec2(0, h))) / (2 * h);
        const double fd = dh.sigma().x() * dx + dh.sigma().y() * dy;
        CHECK(h_g_value(dh, xi) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("log D derivatives")
{
    const DHData dh({Vec2(1, 0), Vec2(2, 1)}, Vec2(1, 1));
    const Vec2 xi(0.4, 0.7);
    const double h = 1e-4;
    auto grad = [&](const Vec2& p) { return dh_log_gradient(dh, p); };
    const Mat2 hess = dh_log_hessian(dh, xi);
    const Vec2 col0 = (grad(xi + Vec2(h, 0)) - grad(xi - Vec2(h, 0))) / (2 * h);
    const Vec2 col1 = (grad(xi + Vec2(0, h)) - grad(xi - Vec2(0, h))) / (2 * h);
    CHECK(hess(0, 0) == doctest::Approx(col0.x()).epsilon(1e-6));
    CHECK(hess(1, 0) == doctest::Approx(col0.y()).epsilon(1e-6));
    CHECK(hess(1, 1) == doctest::Approx(col1.y()).epsilon(1e-6));
}

TEST_CASE("D restricted to a segment is a polynomial of degree |roots|")
{
    const DHData dh({Vec2(1, 0), Vec2(0, 1), Vec2(1, 3)}, Vec2::Zero());
    const Vec2 a(0.2, 0.5);
    const Vec2 b(1.7, 0.9);
    auto f = [&](double s) { return dh_value(dh, a + s * (b - a)); };
    // Lagrange interpolation through 4 points reproduces a cubic everywhere.
    const std::array<double, 4> s{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (double q : {0.1, 0.45, 0.9, 1.3}) {
        double p = 0.0;
        for (int i = 0; i < 4; ++i) {
            double l = 1.0;
            for (int j = 0; j < 4; ++j)
                if (j != i) l *= (q - s[j]) / (s[i] - s[j]);
            p += l * f(s[i]);
        }
        CHECK(p == doctest::Approx(f(q)).epsilon(1e-12));
    }
}

TEST_CASE("admissibility report")
{
    const AdmissibilityReport toric = check_admissibility(DHData(), unit_square());
    CHECK(toric.passed());
    CHECK(toric.cone_value == 0.0);

    // [1,2]^2: sup at vertex (1,1) is 1 * sqrt 2 / 2.
    const AdmissibilityReport near = check_admissibility(DHData({Vec2(1, 0)}, Vec2(1, 0)), shifted_square(1));
    CHECK(near.factors_positive);
    CHECK(near.in_positive_quadrant);
    CHECK(near.cone_value == doctest::Approx(std::sqrt(2.0) / 2.0));
    CHECK_FALSE(near.cone_condition);
    CHECK_FALSE(near.passed());

    const AdmissibilityReport far = check_admissibility(DHData({Vec2(1, 0)}, Vec2(1, 0)), shifted_square(10));
    CHECK(far.cone_value == doctest::Approx(std::sqrt(2.0) / 20.0));
    CHECK(far.passed());

    const AdmissibilityReport bad = check_admissibility(DHData({Vec2(1, 0)}, Vec2(1, 0)), unit_square());
    CHECK_FALSE(bad.factors_positive);
    CHECK_FALSE(bad.in_positive_quadrant);
}

TEST_CASE("admissibility is invariant under permuting roots")
{
    std::vector<Vec2> roots{Vec2(1, 0), Vec2(0, 2), Vec2(1, 1), Vec2(0.5, 3)};
    const Polytope p = shifted_square(4);
    const AdmissibilityReport ref = check_admissibility(DHData(roots, Vec2(1, 1)), p);
    std::sort(roots.begin(), roots.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
    do {
        const AdmissibilityReport r = check_admissibility(DHData(roots, Vec2(1, 1)), p);
        CHECK(r.cone_value == doctest::Approx(ref.cone_value).epsilon(1e-14));
        CHECK(r.passed() == ref.passed());
    } while (std::next_permutation(roots.begin(), roots.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    }));
}

TEST_CASE("edge nonconstancy is decided symbolically")
{
    for (bool b : edge_nonconstant(DHData(), unit_square())) CHECK_FALSE(b);

    // Root (1,0) on the square: constant along the vertical facets only.
    const std::vector<bool> sq = edge_nonconstant(DHData({Vec2(1, 0)}, Vec2(1, 0)), shifted_square(1));
    const Polytope square = shifted_square(1);
    for (std::size_t k = 0; k < square.num_facets(); ++k) {
        const bool vertical = square.facet(k).normal.b == 0;
        CHECK(sq[k] == !vertical);
    }

    // Root (1,1) on the simplex: the hypotenuse has direction (1,-1).
    const Polytope simplex = standard_simplex();
    const std::vector<bool> sx = edge_nonconstant(DHData({Vec2(1, 1)}, Vec2(1, 1)), simplex);
    CHECK(sx[0]);
    CHECK(sx[1]);
    CHECK_FALSE(sx[2]);
}

TEST_CASE("root sum helper")
{
    const DHData dh({Vec2(1, 0), Vec2(2, 3)}, Vec2::Zero());
    CHECK(dh.root_sum().x() == 3.0);
    CHECK(dh.root_sum().y() == 3.0);
}
