#pragma once

#include "abreu/polytope.hpp"

#include <vector>

namespace abreu {

/// Homogeneous-bundle data: one coefficient pair (M_alpha^1, M_alpha^2) per
/// positive root of the fibre flag manifold, and the weights sigma.
///
/// D(xi) = prod_alpha D_alpha(xi),  D_alpha(xi) = 2 (M_alpha^1 xi_1 + M_alpha^2 xi_2),
/// h_G(xi) = sigma . grad log D(xi).
///
/// An empty root list is the pure toric case, D == 1 and h_G == 0.
class DHData {
public:
    DHData() = default;
    DHData(std::vector<Vec2> roots, Vec2 sigma);

    std::span<const Vec2> roots() const { return roots_; }
    const Vec2& sigma() const { return sigma_; }
    bool toric() const { return roots_.empty(); }

    /// Linear factor D_alpha at xi.
    double factor(std::size_t alpha, const Vec2& xi) const { return 2.0 * roots_[alpha].dot(xi); }

    /// Column sums sum_alpha M_alpha^i, for cross-checking user-supplied sigma.
    Vec2 root_sum() const;

private:
    std::vector<Vec2> roots_;
    Vec2 sigma_ = Vec2::Zero();
};

double dh_value(const DHData& dh, const Vec2& xi);

/// grad log D, analytic. Throws DomainError where some D_alpha <= 0.
Vec2 dh_log_gradient(const DHData& dh, const Vec2& xi);

/// Hessian of log D, analytic: -sum_alpha 4 M M^T / D_alpha^2.
Mat2 dh_log_hessian(const DHData& dh, const Vec2& xi);

/// h_G(xi) = sum_i sigma_i d(log D)/d(xi_i). Throws DomainError where D <= 0.
double h_g_value(const DHData& dh, const Vec2& xi);

struct AdmissibilityReport {
    std::vector<double> min_factor; // per root, min of D_alpha over the closed polytope
    bool factors_positive = true;
    bool in_positive_quadrant = true;
    double cone_value = 0.0; // sup of sum_alpha (sum_j M_alpha^j) diam / D_alpha
    double cone_bound = 0.5; // n/4 with n = 2
    bool cone_condition = true;

    bool passed() const { return factors_positive && in_positive_quadrant && cone_condition; }
};

AdmissibilityReport check_admissibility(const DHData& dh, const Polytope& polytope);

/// Per facet: true iff log D is not constant along that edge, decided
/// symbolically as "some root has t . M_alpha != 0" for the edge direction t.
std::vector<bool> edge_nonconstant(const DHData& dh, const Polytope& polytope);

} // namespace abreu
