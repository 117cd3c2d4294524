#pragma once

#include "abreu/polytope.hpp"

#include <functional>
#include <vector>

namespace abreu {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0; // estimated absolute error
};

struct GaussRule {
    std::vector<double> nodes;   // on [0, 1]
    std::vector<double> weights; // sum to 1
};

/// Gauss-Legendre rule with n points mapped to [0, 1].
const GaussRule& gauss_legendre(int n);

using Integrand = std::function<double(const Vec2&)>;

/// Integral over the polytope interior against d(mu). The polytope is split
/// into triangles fanning from an interior apex to each facet; each fan
/// triangle is pulled back to the unit square with polynomial grading toward
/// the facet and its two vertices, so integrable log-singularities along the
/// boundary are resolved. Cells are refined adaptively until the summed error
/// estimate is below tol; throws ConvergenceError carrying the estimate
/// otherwise.
QuadratureResult integrate_interior(const Polytope& polytope, const Integrand& f, double tol);

/// Integral over the boundary against the lattice measure d(sigma). Same
/// grading toward vertices.
QuadratureResult integrate_boundary(const Polytope& polytope, const Integrand& f, double tol);

/// Integral over one triangle with a fixed collapsed Gauss rule (n x n points).
double integrate_triangle(const Vec2& a, const Vec2& b, const Vec2& c, const Integrand& f, int n = 8);

/// Integral over a segment with n-point Gauss-Legendre, against Euclidean length.
double integrate_segment(const Vec2& a, const Vec2& b, const Integrand& f, int n = 8);

} // namespace abreu
