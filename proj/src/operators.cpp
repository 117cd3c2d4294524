#include "abreu/operators.hpp"

#include "abreu/format.hpp"
#include "abreu/jet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace abreu {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Mat2 checked_inverse(const Mat2& h, const GridSpec& grid, std::size_t n, double& det)
{
    det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
    if (!(h(0, 0) > 0.0) || !(det > 0.0)) {
        const GridSpec::Node& node = grid.node(n);
        std::ostringstream msg;
        msg << "u = v + psi is not convex at node " << n << " (i=" << node.i << ", j=" << node.j << ", xi=("
            << format_double(node.xi.x()) << ", " << format_double(node.xi.y()) << "))";
        throw ConvexityError(msg.str());
    }
    Mat2 inv;
    inv << h(1, 1) / det, -h(0, 1) / det, -h(1, 0) / det, h(0, 0) / det;
    return inv;
}

double log_f_delta(const ConvexPotential& u, const DHData& dh, const Vec2& xi)
{
    PotentialJet jet = u.evaluate(xi, 2);
    return std::log(dh_value(dh, xi)) - std::log(jet.det);
}

// log F at x + offset and the preimages, using the centre preimage as seed.
struct LogFStencil {
    double c = 0.0;
    double e = 0.0, w = 0.0, n = 0.0, s = 0.0;
    double ne = 0.0, nw = 0.0, se = 0.0, sw = 0.0;
};

LogFStencil sample_log_f(const ConvexPotential& u, const DHData& dh, const Vec2& x, const Vec2& xi, double hx)
{
    auto at = [&](double a, double b) {
        Vec2 target = x + Vec2(a * hx, b * hx);
        Vec2 pre = legendre_inverse(u, target, xi);
        return log_f_delta(u, dh, pre);
    };
    LogFStencil st;
    st.c = log_f_delta(u, dh, xi);
    st.e = at(1, 0);
    st.w = at(-1, 0);
    st.n = at(0, 1);
    st.s = at(0, -1);
    st.ne = at(1, 1);
    st.nw = at(-1, 1);
    st.se = at(1, -1);
    st.sw = at(-1, -1);
    return st;
}

struct LogFDerivatives {
    Vec2 grad = Vec2::Zero();
    Mat2 hess = Mat2::Zero();
};

LogFDerivatives differentiate(const LogFStencil& st, double hx)
{
    LogFDerivatives d;
    d.grad << (st.e - st.w) / (2.0 * hx), (st.n - st.s) / (2.0 * hx);
    double dxx = (st.e - 2.0 * st.c + st.w) / (hx * hx);
    double dyy = (st.n - 2.0 * st.c + st.s) / (hx * hx);
    double dxy = (st.ne - st.se - st.nw + st.sw) / (4.0 * hx * hx);
    d.hess << dxx, dxy, dxy, dyy;
    return d;
}

double step_in_x(const Mat2& hess_u, double h)
{
    Eigen::SelfAdjointEigenSolver<Mat2> eig(hess_u, Eigen::EigenvaluesOnly);
    return h * std::sqrt(eig.eigenvalues().maxCoeff());
}

} // namespace

std::size_t OperatorField::unmasked_count() const
{
    return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), 0));
}

double OperatorField::max_abs_deviation(double target) const
{
    double m = 0.0;
    for (std::size_t n = 0; n < value.size(); ++n)
        if (!masked[n]) m = std::max(m, std::abs(value[n] - target));
    return m;
}

std::vector<char> stencil_mask(const GridSpec& grid)
{
    std::vector<char> masked(grid.size(), 0);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const GridSpec::Node& node = grid.node(n);
        for (int di = -1; di <= 1 && !masked[n]; ++di)
            for (int dj = -1; dj <= 1; ++dj)
                if (grid.index(node.i + di, node.j + dj) < 0) {
                    masked[n] = 1;
                    break;
                }
    }
    return masked;
}

AbreuStencil::AbreuStencil(std::shared_ptr<const Polytope> polytope, std::shared_ptr<const GridSpec> grid, DHData dh)
    : polytope_(std::move(polytope)), grid_(std::move(grid)), dh_(std::move(dh)), masked_(stencil_mask(*grid_))
{
    GuilleminPotential v(polytope_);
    v_hessians_.reserve(grid_->size());
    for (const GridSpec::Node& node : grid_->nodes()) {
        v_hessians_.push_back(v.hessian(node.xi));
        double d = dh_value(dh_, node.xi);
        if (!(d > 0.0)) throw DomainError("Duistermaat-Heckman polynomial is not positive at a grid node");
        dh_values_.push_back(d);
        h_g_values_.push_back(h_g_value(dh_, node.xi));
    }
}

std::vector<double> AbreuStencil::apply(std::span<const Mat2> psi_hessians) const
{
    const GridSpec& grid = *grid_;
    const std::size_t count = grid.size();
    // W^{ij} = D u^{ij} at every node; symmetric, store (11, 12, 22).
    std::vector<double> w11(count), w12(count), w22(count);
    for (std::size_t n = 0; n < count; ++n) {
        double det;
        Mat2 inv = checked_inverse(v_hessians_[n] + psi_hessians[n], grid, n, det);
        const double d = dh_values_[n];
        w11[n] = d * inv(0, 0);
        w12[n] = d * inv(0, 1);
        w22[n] = d * inv(1, 1);
    }

    const double h = grid.h();
    std::vector<double> out(count, kNaN);
    for (std::size_t n = 0; n < count; ++n) {
        if (masked_[n]) continue;
        const GridSpec::Node& node = grid.node(n);
        auto at = [&](int di, int dj) { return static_cast<std::size_t>(grid.index(node.i + di, node.j + dj)); };
        const double d11 = (w11[at(1, 0)] - 2.0 * w11[n] + w11[at(-1, 0)]) / (h * h);
        const double d22 = (w22[at(0, 1)] - 2.0 * w22[n] + w22[at(0, -1)]) / (h * h);
        const double d12 = (w12[at(1, 1)] - w12[at(1, -1)] - w12[at(-1, 1)] + w12[at(-1, -1)]) / (4.0 * h * h);
        const double sum = d11 + 2.0 * d12 + d22;
        out[n] = -sum / dh_values_[n];
    }
    return out;
}

OperatorField AbreuStencil::field(const SymplecticPotential& u) const
{
    if (u.grid_ptr() != grid_ && &u.grid() != grid_.get()) throw DomainError("potential lives on a different grid");
    std::vector<Mat2> psi_h = u.psi_node_hessians();
    OperatorField f;
    f.grid = grid_;
    f.value = apply(psi_h);
    f.masked = masked_;
    f.dh = dh_values_;
    f.h_g = h_g_values_;
    for (std::size_t n = 0; n < grid_->size(); ++n) {
        Mat2 hess = v_hessians_[n] + psi_h[n];
        double det = hess(0, 0) * hess(1, 1) - hess(0, 1) * hess(1, 0);
        f.det_hess_u.push_back(det);
        f.f_delta.push_back(dh_values_[n] / det);
    }
    return f;
}

OperatorField abreu_apply(const SymplecticPotential& u, const DHData& dh)
{
    AbreuStencil stencil(u.polytope_ptr(), u.grid_ptr(), dh);
    return stencil.field(u);
}

OperatorField scalar_curvature(const SymplecticPotential& u, const DHData& dh)
{
    OperatorField f = abreu_apply(u, dh);
    for (std::size_t n = 0; n < f.value.size(); ++n)
        if (!f.masked[n]) f.value[n] += f.h_g[n];
    return f;
}

double guillemin_abreu_exact(const Polytope& polytope, const DHData& dh, const Vec2& xi)
{
    // D u^{ij} = D * sum_k t_k t_k^T Q_k / sum_{k<l} (n_k x n_l)^2 Q_kl, where Q_k and
    // Q_kl are the products of delta_m over m != k and m != k, l. The denominator
    // is positive on the closed polytope, so this is free of cancellation near facets.
    const std::size_t m = polytope.num_facets();
    std::vector<Jet2> delta;
    delta.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        delta.push_back(Jet2::affine(polytope.normal(k), -polytope.offset(k), xi));
        if (!(delta.back().v > 0.0)) throw DomainError("point is not interior to the polytope");
    }
    auto product_except = [&](std::size_t k, std::size_t l) {
        Jet2 p = Jet2::constant(1.0);
        for (std::size_t q = 0; q < m; ++q)
            if (q != k && q != l) p = p * delta[q];
        return p;
    };
    Jet2 n11 = Jet2::constant(0.0), n12 = Jet2::constant(0.0), n22 = Jet2::constant(0.0);
    Jet2 den = Jet2::constant(0.0);
    for (std::size_t k = 0; k < m; ++k) {
        const Vec2& nk = polytope.normal(k);
        Jet2 qk = product_except(k, k);
        n11 = n11 + (nk.y() * nk.y()) * qk;
        n12 = n12 - (nk.x() * nk.y()) * qk;
        n22 = n22 + (nk.x() * nk.x()) * qk;
        for (std::size_t l = k + 1; l < m; ++l) {
            const Vec2& nl = polytope.normal(l);
            const double c = nk.x() * nl.y() - nk.y() * nl.x();
            den = den + (c * c) * product_except(k, l);
        }
    }
    Jet2 d = Jet2::constant(1.0);
    for (std::size_t a = 0; a < dh.roots().size(); ++a) d = d * Jet2::affine(2.0 * dh.roots()[a], 0.0, xi);
    Jet2 scale = d / den;
    Jet2 w11 = scale * n11; // D u^{11}
    Jet2 w12 = scale * n12; // D u^{12}
    Jet2 w22 = scale * n22; // D u^{22}
    double sum = w11.h(0, 0) + 2.0 * w12.h(0, 1) + w22.h(1, 1);
    return -sum / d.v;
}

std::vector<XFormSample> abreu_x_form(const ConvexPotential& u, const DHData& dh, std::span<const Vec2> xs,
                                      std::span<const Vec2> seeds, double h)
{
    if (seeds.size() != xs.size()) throw DomainError("abreu_x_form needs one seed per sample");
    std::vector<XFormSample> out;
    out.reserve(xs.size());
    for (std::size_t s = 0; s < xs.size(); ++s) {
        XFormSample sample;
        sample.x = xs[s];
        sample.xi = legendre_inverse(u, xs[s], seeds[s]);
        PotentialJet jet = u.evaluate(sample.xi, 2);
        sample.h_x = step_in_x(jet.hessian, h);
        LogFDerivatives lf = differentiate(sample_log_f(u, dh, sample.x, sample.xi, sample.h_x), sample.h_x);
        // d(log D)/dx_i = sum_k d(log D)/d(xi_k) f_{ki}, with f_{ki} = (Hess u)^{-1}.
        Vec2 log_d_x = dh.toric() ? Vec2::Zero() : Vec2(jet.inverse * dh_log_gradient(dh, sample.xi));
        const Mat2& f_upper = jet.hessian; // f^{ij}
        double second = (f_upper.cwiseProduct(lf.hess)).sum();
        double first = log_d_x.dot(f_upper * lf.grad);
        sample.value = -second - first;
        out.push_back(sample);
    }
    return out;
}

RicciComponents ricci_components(const ConvexPotential& u, const DHData& dh, const Vec2& x, const Vec2& seed,
                                 double h)
{
    RicciComponents ric;
    ric.x = x;
    ric.xi = legendre_inverse(u, x, seed);
    PotentialJet jet = u.evaluate(ric.xi, 2);
    ric.hess_u = jet.hessian;
    const double hx = step_in_x(jet.hessian, h);
    LogFDerivatives lf = differentiate(sample_log_f(u, dh, x, ric.xi, hx), hx);
    ric.horizontal = -0.25 * lf.hess;
    // Mixed Ric(S_alpha, S_k-bar) vanish identically and are not represented.
    for (std::size_t a = 0; a < dh.roots().size(); ++a) {
        const Vec2& m = dh.roots()[a];
        Vec2 d_alpha_x = 2.0 * (jet.inverse * m); // (D_alpha)_{x_k} = 2 sum_j M^j f_{jk}
        double transport = d_alpha_x.dot(jet.hessian * lf.grad);
        double weights = 0.0;
        for (int k = 0; k < 2; ++k) weights += 2.0 * m(k) * dh.sigma()(k);
        ric.fiber.push_back(-0.25 * transport + 0.25 * weights);
        ric.root_factors.push_back(dh.factor(a, ric.xi));
    }
    return ric;
}

double ricci_trace(const RicciComponents& ric)
{
    double s = ric.hess_u.cwiseProduct(ric.horizontal).sum();
    for (std::size_t a = 0; a < ric.fiber.size(); ++a) s += ric.fiber[a] / ric.root_factors[a];
    return 4.0 * s;
}

DiagnosticsReport diagnostics(const SymplecticPotential& u, const DHData& dh)
{
    const GridSpec& grid = u.grid();
    const GuilleminPotential& v = u.guillemin_part();
    if (!dh.toric())
        for (const GridSpec::Node& node : grid.nodes())
            if (!(dh_value(dh, node.xi) > 0.0)) throw DomainError("Duistermaat-Heckman polynomial is not positive");
    DiagnosticsReport report;
    std::vector<Mat2> psi_h = u.psi_node_hessians();
    double umin = std::numeric_limits<double>::infinity();
    double umax = -umin;
    report.h_proxy_min = std::numeric_limits<double>::infinity();
    report.h_proxy_max = -std::numeric_limits<double>::infinity();
    report.facets.resize(grid.num_facets());
    for (std::size_t k = 0; k < grid.num_facets(); ++k) {
        report.facets[k].facet = static_cast<int>(k);
        report.facets[k].min_delta_det = std::numeric_limits<double>::infinity();
    }
    const double band = grid.h_min() + grid.h();
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const GridSpec::Node& node = grid.node(n);
        double value = v.value_closed(node.xi) + u.psi()[n];
        umin = std::min(umin, value);
        umax = std::max(umax, value);
        Mat2 hv = v.hessian(node.xi);
        Mat2 hu = hv + psi_h[n];
        double det_v = hv(0, 0) * hv(1, 1) - hv(0, 1) * hv(1, 0);
        double det_u = hu(0, 0) * hu(1, 1) - hu(0, 1) * hu(1, 0);
        double ratio = det_v / det_u;
        report.h_proxy_min = std::min(report.h_proxy_min, ratio);
        report.h_proxy_max = std::max(report.h_proxy_max, ratio);
        const std::size_t k = static_cast<std::size_t>(node.nearest_facet);
        double dk = grid.delta(n, k);
        if (dk <= band * (1.0 + 1e-12)) {
            double value_k = dk * det_u;
            if (value_k < report.facets[k].min_delta_det) {
                report.facets[k].min_delta_det = value_k;
                report.facets[k].node = static_cast<int>(n);
            }
        }
    }
    report.oscillation = umax - umin;
    return report;
}

std::string field_to_csv(const OperatorField& field)
{
    std::ostringstream out;
    out << "i,j,xi1,xi2,value,masked\n";
    const GridSpec& grid = *field.grid;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const GridSpec::Node& node = grid.node(n);
        out << node.i << "," << node.j << "," << format_double(node.xi.x()) << "," << format_double(node.xi.y())
            << "," << format_double(field.value[n]) << "," << (field.masked[n] ? 1 : 0) << "\n";
    }
    return out.str();
}

} // namespace abreu
