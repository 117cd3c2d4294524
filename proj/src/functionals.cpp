#include "abreu/functionals.hpp"

#include "abreu/error.hpp"
#include "abreu/format.hpp"
#include "abreu/operators.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace abreu {

ScalarField endpoint_field(std::shared_ptr<const Polytope> polytope, DHData dh)
{
    return [polytope = std::move(polytope), dh = std::move(dh)](const Vec2& xi) {
        return guillemin_abreu_exact(*polytope, dh, xi);
    };
}

namespace {

double sign_of(const FunctionalSettings& s)
{
    return s.sign == LSign::Minus ? -1.0 : 1.0;
}

} // namespace

FunctionalValue l_functional(const PrescribedData& data, const Polytope& polytope, const ScalarField& u,
                             const FunctionalSettings& settings)
{
    // Split the tolerance between the two integrals.
    const double tol = 0.5 * settings.tol_quad;
    const auto boundary = integrate_boundary(
        polytope, [&](const Vec2& xi) { return u(xi) * dh_value(data.dh, xi); }, tol);
    const auto interior = integrate_interior(
        polytope, [&](const Vec2& xi) { return data.A(xi) * u(xi) * dh_value(data.dh, xi); }, tol);
    return {boundary.value + sign_of(settings) * interior.value, boundary.error + interior.error};
}

FunctionalValue l_functional(const PrescribedData& data, const SymplecticPotential& u,
                             const FunctionalSettings& settings)
{
    return l_functional(data, u.polytope(), [&](const Vec2& xi) { return u.value_closed(xi); }, settings);
}

MabuchiValue mabuchi_functional(const PrescribedData& data, const Polytope& polytope, const ConvexPotential& u,
                                const ScalarField& u_closed, const FunctionalSettings& settings)
{
    const double tol = 0.5 * settings.tol_quad;
    const auto log_det = integrate_interior(
        polytope,
        [&](const Vec2& xi) {
            const PotentialJet jet = u.evaluate(xi, 2);
            return -std::log(jet.det) * dh_value(data.dh, xi);
        },
        tol);
    FunctionalSettings half = settings;
    half.tol_quad = tol;
    const FunctionalValue linear = l_functional(data, polytope, u_closed, half);
    MabuchiValue out;
    out.log_det_term = log_det.value;
    out.linear_term = linear.value;
    out.value = log_det.value + linear.value;
    out.error = log_det.error + linear.error;
    return out;
}

MabuchiValue mabuchi_functional(const PrescribedData& data, const SymplecticPotential& u,
                                const FunctionalSettings& settings)
{
    return mabuchi_functional(data, u.polytope(), u, [&](const Vec2& xi) { return u.value_closed(xi); }, settings);
}

AffineCheck check_affine_vanishing(const PrescribedData& data, const Polytope& polytope,
                                   const FunctionalSettings& settings)
{
    const std::array<ScalarField, 3> basis = {
        [](const Vec2&) { return 1.0; },
        [](const Vec2& xi) { return xi.x(); },
        [](const Vec2& xi) { return xi.y(); },
    };
    AffineCheck check;
    for (std::size_t a = 0; a < 3; ++a) {
        check.values[a] = l_functional(data, polytope, basis[a], settings).value;
        check.max_abs = std::max(check.max_abs, std::abs(check.values[a]));
    }
    return check;
}

ScalarField orthogonalize_affine(const ScalarField& f, const Polytope& polytope, const DHData& dh, double tol)
{
    auto ell = [](int a, const Vec2& xi) { return a == 0 ? 1.0 : xi[a - 1]; };
    Eigen::Matrix3d gram;
    Eigen::Vector3d rhs;
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            gram(a, b) = integrate_interior(
                             polytope, [&](const Vec2& xi) { return ell(a, xi) * ell(b, xi) * dh_value(dh, xi); }, tol)
                             .value;
            gram(b, a) = gram(a, b);
        }
        rhs[a] = integrate_interior(polytope, [&](const Vec2& xi) { return f(xi) * ell(a, xi) * dh_value(dh, xi); }, tol)
                     .value;
    }
    const Eigen::Vector3d c = gram.ldlt().solve(rhs);
    return [f, c](const Vec2& xi) { return f(xi) - c[0] - c[1] * xi.x() - c[2] * xi.y(); };
}

// ---------------------------------------------------------------------------
// Triangulations

namespace {

bool near_integer(double v, long& out)
{
    const double r = std::round(v);
    out = static_cast<long>(r);
    return std::abs(v - r) <= 1e-9;
}

std::optional<Triangulation> lattice_triangulation(const Polytope& polytope, int size)
{
    const auto [lo, hi] = polytope.bounding_box();
    const double s = std::max(hi.x() - lo.x(), hi.y() - lo.y()) / size;
    long ni = 0;
    long nj = 0;
    if (!near_integer((hi.x() - lo.x()) / s, ni) || !near_integer((hi.y() - lo.y()) / s, nj)) {
        return std::nullopt;
    }
    auto on_lattice = [&](const Vec2& p) {
        long a = 0;
        long b = 0;
        return near_integer((p.x() - lo.x()) / s, a) && near_integer((p.y() - lo.y()) / s, b);
    };
    for (const Vec2& v : polytope.vertices()) {
        if (!on_lattice(v)) {
            return std::nullopt;
        }
    }
    if (!on_lattice(polytope.base_point())) {
        return std::nullopt;
    }
    for (std::size_t k = 0; k < polytope.num_facets(); ++k) {
        const auto [a, b] = polytope.edge(k);
        const Vec2 d = (b - a).normalized();
        const bool aligned = std::abs(d.y()) < 1e-12 || std::abs(d.x()) < 1e-12 || std::abs(d.x() + d.y()) < 1e-12;
        if (!aligned) {
            return std::nullopt;
        }
    }
    Triangulation tri;
    tri.size = size;
    tri.structured = true;
    const double slack = 1e-9 * s;
    std::vector<int> index((ni + 1) * (nj + 1), -1);
    for (long i = 0; i <= ni; ++i) {
        for (long j = 0; j <= nj; ++j) {
            const Vec2 p = lo + s * Vec2(static_cast<double>(i), static_cast<double>(j));
            if (polytope.min_delta(p) >= -slack) {
                index[i * (nj + 1) + j] = static_cast<int>(tri.nodes.size());
                tri.nodes.push_back(p);
            }
        }
    }
    auto at = [&](long i, long j) { return index[i * (nj + 1) + j]; };
    for (long i = 0; i < ni; ++i) {
        for (long j = 0; j < nj; ++j) {
            const int a = at(i, j);
            const int b = at(i + 1, j);
            const int c = at(i, j + 1);
            const int d = at(i + 1, j + 1);
            if (a >= 0 && b >= 0 && c >= 0) {
                tri.cells.push_back({a, b, c});
            }
            if (b >= 0 && d >= 0 && c >= 0) {
                tri.cells.push_back({b, d, c});
            }
        }
    }
    const Vec2 po = polytope.base_point();
    for (std::size_t n = 0; n < tri.nodes.size(); ++n) {
        if ((tri.nodes[n] - po).norm() <= slack * 10) {
            tri.base_node = static_cast<int>(n);
        }
    }
    return tri;
}

Triangulation fan_triangulation(const Polytope& polytope, int size)
{
    Triangulation tri;
    tri.size = size;
    const Vec2 po = polytope.base_point();
    std::map<std::pair<long long, long long>, int> lookup;
    const double scale = 1e-9 * std::max(1.0, polytope.diameter());
    auto node = [&](const Vec2& p) {
        const auto key = std::make_pair(std::llround(p.x() / scale), std::llround(p.y() / scale));
        auto [it, inserted] = lookup.emplace(key, static_cast<int>(tri.nodes.size()));
        if (inserted) {
            tri.nodes.push_back(p);
        }
        return it->second;
    };
    tri.base_node = node(po);
    for (std::size_t k = 0; k < polytope.num_facets(); ++k) {
        const auto [a, b] = polytope.edge(k);
        auto point = [&](int i, int j) {
            // i steps toward a, j toward b
            return Vec2(po + (static_cast<double>(i) / size) * (a - po) + (static_cast<double>(j) / size) * (b - po));
        };
        for (int i = 0; i < size; ++i) {
            for (int j = 0; i + j < size; ++j) {
                const int p00 = node(point(i, j));
                const int p10 = node(point(i + 1, j));
                const int p01 = node(point(i, j + 1));
                tri.cells.push_back({p00, p10, p01});
                if (i + j + 2 <= size) {
                    tri.cells.push_back({p10, node(point(i + 1, j + 1)), p01});
                }
            }
        }
    }
    return tri;
}

Eigen::Vector3d barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c)
{
    Mat2 m;
    m.col(0) = b - a;
    m.col(1) = c - a;
    const Vec2 st = m.partialPivLu().solve(p - a);
    return {1.0 - st.x() - st.y(), st.x(), st.y()};
}

struct Hinge {
    int p, q, r, s;
    Eigen::Vector3d weights; // s = w0 p + w1 q + w2 r
};

} // namespace

double Triangulation::interpolate(const std::vector<double>& values, const Vec2& xi) const
{
    double best = -std::numeric_limits<double>::infinity();
    double value = 0.0;
    for (const auto& c : cells) {
        const Eigen::Vector3d w = barycentric(xi, nodes[c[0]], nodes[c[1]], nodes[c[2]]);
        const double m = w.minCoeff();
        if (m > best) {
            best = m;
            value = w[0] * values[c[0]] + w[1] * values[c[1]] + w[2] * values[c[2]];
        }
        if (m >= 0.0) {
            break;
        }
    }
    return value;
}

Triangulation triangulate(const Polytope& polytope, int size)
{
    if (size < 1) {
        throw DomainError("triangulation size must be positive");
    }
    if (auto tri = lattice_triangulation(polytope, size); tri && tri->base_node >= 0) {
        return *tri;
    }
    return fan_triangulation(polytope, size);
}

// ---------------------------------------------------------------------------
// Stability LP

StabilityCertificate stability_lambda(const PrescribedData& data, const Polytope& polytope, int triangulation_size,
                                      const StabilitySettings& settings, const LpEngine* engine)
{
    StabilityCertificate cert;
    cert.affine_check = check_affine_vanishing(data, polytope, settings.functional).max_abs;
    if (settings.enforce_affine_vanishing && cert.affine_check > 10.0 * settings.functional.tol_quad) {
        throw ValidationError("L_A does not vanish on affine functions (max |L_A| = " +
                              format_double(cert.affine_check) + "); refusing to certify stability");
    }
    cert.triangulation = triangulate(polytope, triangulation_size);
    const Triangulation& tri = cert.triangulation;
    const std::size_t n = tri.nodes.size();
    const double sign = sign_of(settings.functional);

    // Interior coefficients b_i = int A phi_i D dmu, boundary a_i = int phi_i D dsigma.
    std::vector<double> a(n, 0.0);
    std::vector<double> b(n, 0.0);
    const GaussRule& rule = gauss_legendre(settings.cell_rule);
    for (const auto& c : tri.cells) {
        const Vec2& p0 = tri.nodes[c[0]];
        const Vec2& p1 = tri.nodes[c[1]];
        const Vec2& p2 = tri.nodes[c[2]];
        Mat2 m;
        m.col(0) = p1 - p0;
        m.col(1) = p2 - p0;
        const double jac = std::abs(m.determinant());
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double s = rule.nodes[i];
            for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
                const double t = rule.nodes[j];
                const double l1 = s * (1.0 - t);
                const double l2 = s * t;
                const double l0 = 1.0 - l1 - l2;
                const Vec2 xi = l0 * p0 + l1 * p1 + l2 * p2;
                const double w = rule.weights[i] * rule.weights[j] * s * jac * data.A(xi) * dh_value(data.dh, xi);
                b[c[0]] += w * l0;
                b[c[1]] += w * l1;
                b[c[2]] += w * l2;
            }
        }
    }

    // Edges: boundary edges carry the dsigma weights, interior ones give hinges.
    std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edges; // -> (cell, opposite vertex)
    for (std::size_t ci = 0; ci < tri.cells.size(); ++ci) {
        const auto& c = tri.cells[ci];
        for (int e = 0; e < 3; ++e) {
            const int u = c[e];
            const int v = c[(e + 1) % 3];
            edges[{std::min(u, v), std::max(u, v)}].push_back({static_cast<int>(ci), c[(e + 2) % 3]});
        }
    }
    const double on_facet = 1e-9 * std::max(1.0, polytope.diameter());
    std::vector<Hinge> hinges;
    for (const auto& [key, adj] : edges) {
        const auto [p, q] = key;
        if (adj.size() == 2) {
            const int r = adj[0].second;
            const int s = adj[1].second;
            hinges.push_back({p, q, r, s, barycentric(tri.nodes[s], tri.nodes[p], tri.nodes[q], tri.nodes[r])});
            continue;
        }
        for (std::size_t k = 0; k < polytope.num_facets(); ++k) {
            if (std::abs(polytope.delta(k, tri.nodes[p])) > on_facet ||
                std::abs(polytope.delta(k, tri.nodes[q])) > on_facet) {
                continue;
            }
            const double density = 1.0 / polytope.normal(k).norm();
            const Vec2 x0 = tri.nodes[p];
            const Vec2 x1 = tri.nodes[q];
            const double len = (x1 - x0).norm();
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double t = rule.nodes[i];
                const double w = rule.weights[i] * len * density * dh_value(data.dh, x0 + t * (x1 - x0));
                a[p] += w * (1.0 - t);
                a[q] += w * t;
            }
            break;
        }
    }
    cert.hinge_count = static_cast<int>(hinges.size());

    // Variables: every node except p_o.
    std::vector<int> var(n, -1);
    std::vector<int> node_of;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(i) != tri.base_node) {
            var[i] = static_cast<int>(node_of.size());
            node_of.push_back(static_cast<int>(i));
        }
    }
    LinearProgram lp;
    lp.num_vars = static_cast<int>(node_of.size());
    lp.cost.resize(lp.num_vars);
    for (int j = 0; j < lp.num_vars; ++j) {
        lp.cost[j] = a[node_of[j]] + sign * b[node_of[j]];
    }
    for (const Hinge& h : hinges) {
        LpRow row;
        row.sense = RowSense::GreaterEqual;
        const std::array<std::pair<int, double>, 4> terms = {
            std::pair{h.s, 1.0}, {h.p, -h.weights[0]}, {h.q, -h.weights[1]}, {h.r, -h.weights[2]}};
        for (const auto& [node, coeff] : terms) {
            if (var[node] >= 0 && coeff != 0.0) {
                row.coefficients.push_back({var[node], coeff});
            }
        }
        if (!row.coefficients.empty()) {
            lp.rows.push_back(std::move(row));
        }
    }
    LpRow norm;
    norm.sense = RowSense::Equal;
    norm.rhs = 1.0;
    for (int j = 0; j < lp.num_vars; ++j) {
        if (a[node_of[j]] != 0.0) {
            norm.coefficients.push_back({j, a[node_of[j]]});
        }
    }
    lp.rows.push_back(std::move(norm));

    const DenseSimplex fallback;
    const LpEngine& solver = engine ? *engine : fallback;
    cert.engine = solver.name();
    const LpResult result = solver.solve(lp);
    cert.status = result.status;
    cert.lp_iterations = result.iterations;
    switch (result.status) {
    case LpStatus::Optimal:
        break;
    case LpStatus::Infeasible:
        throw LpError("stability LP is infeasible (degenerate triangulation?)");
    case LpStatus::Unbounded:
        throw LpError("stability LP is unbounded: the boundary normalization constraint is missing or ineffective");
    case LpStatus::IterationLimit:
        throw LpError("stability LP hit the iteration limit after " + std::to_string(result.iterations) + " pivots");
    }

    cert.values.assign(n, 0.0);
    for (int j = 0; j < lp.num_vars; ++j) {
        cert.values[node_of[j]] = result.x[j];
    }
    cert.lambda_star = 0.0;
    double normalization = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cert.lambda_star += (a[i] + sign * b[i]) * cert.values[i];
        normalization += a[i] * cert.values[i];
    }
    cert.normalization_residual = std::abs(normalization - 1.0);
    for (const Hinge& h : hinges) {
        const double slack = cert.values[h.s] - h.weights[0] * cert.values[h.p] - h.weights[1] * cert.values[h.q] -
                             h.weights[2] * cert.values[h.r];
        cert.max_hinge_violation = std::max(cert.max_hinge_violation, -slack);
        if (std::abs(slack) <= 1e-9) {
            ++cert.binding_count;
        }
    }
    return cert;
}

std::string certificate_to_json(const StabilityCertificate& c)
{
    nlohmann::ordered_json j;
    j["lambda_star"] = c.lambda_star;
    j["destabilizing"] = c.destabilizing();
    j["status"] = to_string(c.status);
    j["engine"] = c.engine;
    j["lp_iterations"] = c.lp_iterations;
    j["hinge_constraints"] = c.hinge_count;
    j["binding_constraints"] = c.binding_count;
    j["max_hinge_violation"] = c.max_hinge_violation;
    j["normalization_residual"] = c.normalization_residual;
    j["affine_check"] = c.affine_check;
    nlohmann::ordered_json t;
    t["size"] = c.triangulation.size;
    t["kind"] = c.triangulation.structured ? "lattice" : "fan";
    t["base_node"] = c.triangulation.base_node;
    auto nodes = nlohmann::ordered_json::array();
    for (const Vec2& p : c.triangulation.nodes) {
        nodes.push_back({p.x(), p.y()});
    }
    t["nodes"] = std::move(nodes);
    auto cells = nlohmann::ordered_json::array();
    for (const auto& cell : c.triangulation.cells) {
        cells.push_back({cell[0], cell[1], cell[2]});
    }
    t["cells"] = std::move(cells);
    j["triangulation"] = std::move(t);
    j["values"] = c.values;
    return j.dump(2) + "\n";
}

} // namespace abreu
