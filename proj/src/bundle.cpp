#include "abreu/bundle.hpp"

#include <algorithm>
#include <cmath>

namespace abreu {

DHData::DHData(std::vector<Vec2> roots, Vec2 sigma) : roots_(std::move(roots)), sigma_(sigma)
{
    for (std::size_t a = 0; a < roots_.size(); ++a) {
        const Vec2& m = roots_[a];
        if (!(m.x() >= 0.0) || !(m.y() >= 0.0))
            throw ValidationError("root " + std::to_string(a) + " has a negative coefficient");
        if (!(m.x() + m.y() > 0.0)) throw ValidationError("root " + std::to_string(a) + " has zero coefficient sum");
    }
    if (!sigma_.allFinite()) throw ValidationError("sigma must be finite");
}

Vec2 DHData::root_sum() const
{
    Vec2 s = Vec2::Zero();
    for (const Vec2& m : roots_) s += m;
    return s;
}

double dh_value(const DHData& dh, const Vec2& xi)
{
    double d = 1.0;
    for (std::size_t a = 0; a < dh.roots().size(); ++a) d *= dh.factor(a, xi);
    return d;
}

Vec2 dh_log_gradient(const DHData& dh, const Vec2& xi)
{
    Vec2 g = Vec2::Zero();
    for (std::size_t a = 0; a < dh.roots().size(); ++a) {
        double f = dh.factor(a, xi);
        if (!(f > 0.0)) throw DomainError("Duistermaat-Heckman factor is not positive");
        g += 2.0 * dh.roots()[a] / f;
    }
    return g;
}

Mat2 dh_log_hessian(const DHData& dh, const Vec2& xi)
{
    Mat2 hess = Mat2::Zero();
    for (std::size_t a = 0; a < dh.roots().size(); ++a) {
        double f = dh.factor(a, xi);
        if (!(f > 0.0)) throw DomainError("Duistermaat-Heckman factor is not positive");
        const Vec2& m = dh.roots()[a];
        hess -= 4.0 * m * m.transpose() / (f * f);
    }
    return hess;
}

double h_g_value(const DHData& dh, const Vec2& xi)
{
    if (dh.toric()) return 0.0;
    return dh.sigma().dot(dh_log_gradient(dh, xi));
}

AdmissibilityReport check_admissibility(const DHData& dh, const Polytope& polytope)
{
    AdmissibilityReport report;
    const double diam = polytope.diameter();
    // Pure toric data carries no positivity requirement: every check holds vacuously.
    if (dh.toric()) return report;
    for (const Vec2& v : polytope.vertices())
        if (!(v.x() > 0.0 && v.y() > 0.0)) report.in_positive_quadrant = false;

    // Each D_alpha is linear, so its minimum over the closed polytope sits at a vertex.
    for (std::size_t a = 0; a < dh.roots().size(); ++a) {
        double lo = std::numeric_limits<double>::infinity();
        for (const Vec2& v : polytope.vertices()) lo = std::min(lo, dh.factor(a, v));
        report.min_factor.push_back(lo);
        if (!(lo > 0.0)) report.factors_positive = false;
    }
    if (!report.factors_positive) {
        report.cone_value = std::numeric_limits<double>::infinity();
        report.cone_condition = false;
        return report;
    }
    // Each summand is convex where D_alpha > 0, hence so is the sum and its sup is at a vertex.
    double sup = 0.0;
    for (const Vec2& v : polytope.vertices()) {
        double s = 0.0;
        for (std::size_t a = 0; a < dh.roots().size(); ++a) {
            const Vec2& m = dh.roots()[a];
            s += (m.x() + m.y()) * diam / dh.factor(a, v);
        }
        sup = std::max(sup, s);
    }
    report.cone_value = sup;
    report.cone_condition = sup < report.cone_bound;
    return report;
}

std::vector<bool> edge_nonconstant(const DHData& dh, const Polytope& polytope)
{
    std::vector<bool> out;
    for (std::size_t k = 0; k < polytope.num_facets(); ++k) {
        // Edge direction is perpendicular to the integer normal.
        const LatticeVec& n = polytope.facet(k).normal;
        Vec2 t(-static_cast<double>(n.b), static_cast<double>(n.a));
        bool varies = std::any_of(dh.roots().begin(), dh.roots().end(), [&](const Vec2& m) { return t.dot(m) != 0.0; });
        out.push_back(varies);
    }
    return out;
}

} // namespace abreu
