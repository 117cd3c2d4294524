#include "abreu/quadrature.hpp"

#include "abreu/error.hpp"
#include "abreu/format.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <queue>

namespace abreu {

namespace {

GaussRule make_rule(int n)
{
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int k = 0; k < n; ++k) {
        double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int m = 2; m <= n; ++m) {
                const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        rule.nodes[k] = 0.5 * (1.0 - x);
        rule.weights[k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

// Grading maps of [0, 1] onto itself, clustering toward the ends.
// value + complement == 1; the complement is kept separately so points near
// the far end are not rounded onto it.
struct Grade {
    double value;
    double complement;
    double derivative;
};

// Cluster toward 1 (the facet side of a fan triangle).
Grade grade_end(double s)
{
    const double r = 1.0 - s;
    return {1.0 - r * r * r, r * r * r, 3.0 * r * r};
}

// Cluster toward both 0 and 1 (the vertices of an edge).
Grade grade_both(double t)
{
    // quintic smoothstep, symmetric under t -> 1 - t
    auto step = [](double x) { return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x); };
    const double w = 1.0 - t;
    return {step(t), step(w), 30.0 * t * t * w * w};
}

constexpr int kHigh = 10;
constexpr int kLow = 6;
constexpr std::size_t kMaxCells = 40000;

struct Cell2 {
    int patch = 0;
    double s0 = 0, s1 = 1, t0 = 0, t1 = 1;
    double value = 0;
    double error = 0;

    bool operator<(const Cell2& o) const { return error < o.error; }
};

struct Cell1 {
    int patch = 0;
    double t0 = 0, t1 = 1;
    double value = 0;
    double error = 0;

    bool operator<(const Cell1& o) const { return error < o.error; }
};

template <class Cell, class Eval>
QuadratureResult adaptive(std::vector<Cell> cells, Eval&& eval, double tol, const char* what)
{
    std::priority_queue<Cell> queue;
    double total = 0.0;
    double error = 0.0;
    for (auto& c : cells) {
        eval(c);
        total += c.value;
        error += c.error;
        queue.push(c);
    }
    while (error > tol && queue.size() < kMaxCells) {
        Cell worst = queue.top();
        queue.pop();
        total -= worst.value;
        error -= worst.error;
        std::vector<Cell> children;
        if constexpr (requires { worst.s0; }) {
            const double sm = 0.5 * (worst.s0 + worst.s1);
            const double tm = 0.5 * (worst.t0 + worst.t1);
            children = {Cell{worst.patch, worst.s0, sm, worst.t0, tm}, Cell{worst.patch, sm, worst.s1, worst.t0, tm},
                        Cell{worst.patch, worst.s0, sm, tm, worst.t1}, Cell{worst.patch, sm, worst.s1, tm, worst.t1}};
        } else {
            const double tm = 0.5 * (worst.t0 + worst.t1);
            children = {Cell{worst.patch, worst.t0, tm}, Cell{worst.patch, tm, worst.t1}};
        }
        for (auto& c : children) {
            eval(c);
            total += c.value;
            error += c.error;
            queue.push(c);
        }
    }
    // Recompute the running sums to shed accumulated cancellation.
    total = 0.0;
    error = 0.0;
    while (!queue.empty()) {
        total += queue.top().value;
        error += queue.top().error;
        queue.pop();
    }
    if (!(error <= tol)) {
        throw ConvergenceError(std::string(what) + " quadrature did not converge: estimated error " +
                               format_double(error) + " > tolerance " + format_double(tol));
    }
    return {total, error};
}

} // namespace

const GaussRule& gauss_legendre(int n)
{
    static std::mutex mutex;
    static std::map<int, GaussRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) {
        it = cache.emplace(n, make_rule(n)).first;
    }
    return it->second;
}

QuadratureResult integrate_interior(const Polytope& polytope, const Integrand& f, double tol)
{
    const Vec2 apex = polytope.centroid();
    struct Patch {
        Vec2 a;
        Vec2 b;
        double jac;
    };
    std::vector<Patch> patches;
    std::vector<Cell2> cells;
    for (std::size_t k = 0; k < polytope.num_facets(); ++k) {
        const auto [a, b] = polytope.edge(k);
        Mat2 m;
        m.col(0) = a - apex;
        m.col(1) = b - a;
        patches.push_back({a, b, std::abs(m.determinant())});
        cells.push_back({static_cast<int>(k)});
    }
    const GaussRule& hi = gauss_legendre(kHigh);
    const GaussRule& lo = gauss_legendre(kLow);

    auto rule_sum = [&](const Cell2& c, const GaussRule& r) {
        const Patch& p = patches[c.patch];
        double sum = 0.0;
        const double ds = c.s1 - c.s0;
        const double dt = c.t1 - c.t0;
        for (std::size_t a = 0; a < r.nodes.size(); ++a) {
            const Grade gs = grade_end(c.s0 + ds * r.nodes[a]);
            if (gs.value <= 0.0) {
                continue;
            }
            double inner = 0.0;
            for (std::size_t b = 0; b < r.nodes.size(); ++b) {
                const Grade gt = grade_both(c.t0 + dt * r.nodes[b]);
                const Vec2 edge_point = gt.complement * p.a + gt.value * p.b;
                const Vec2 xi = edge_point + gs.complement * (apex - edge_point);
                if (!polytope.contains_interior(xi)) {
                    continue; // rounded onto the boundary; weight is negligible
                }
                inner += r.weights[b] * gt.derivative * f(xi);
            }
            sum += r.weights[a] * gs.derivative * gs.value * inner;
        }
        return sum * ds * dt * p.jac;
    };
    auto eval = [&](Cell2& c) {
        c.value = rule_sum(c, hi);
        c.error = std::abs(c.value - rule_sum(c, lo));
    };
    return adaptive(std::move(cells), eval, tol, "interior");
}

QuadratureResult integrate_boundary(const Polytope& polytope, const Integrand& f, double tol)
{
    std::vector<FacetMeasure> patches;
    std::vector<Cell1> cells;
    for (std::size_t k = 0; k < polytope.num_facets(); ++k) {
        patches.push_back(boundary_measure(polytope, k));
        cells.push_back({static_cast<int>(k)});
    }
    const GaussRule& hi = gauss_legendre(kHigh);
    const GaussRule& lo = gauss_legendre(kLow);
    auto rule_sum = [&](const Cell1& c, const GaussRule& r) {
        const FacetMeasure& m = patches[c.patch];
        double sum = 0.0;
        const double dt = c.t1 - c.t0;
        for (std::size_t a = 0; a < r.nodes.size(); ++a) {
            const Grade g = grade_both(c.t0 + dt * r.nodes[a]);
            if (g.value == 0.0 || g.complement == 0.0) {
                continue;
            }
            sum += r.weights[a] * g.derivative * f(g.complement * m.start + g.value * m.end);
        }
        return sum * dt * m.length * m.density;
    };
    auto eval = [&](Cell1& c) {
        c.value = rule_sum(c, hi);
        c.error = std::abs(c.value - rule_sum(c, lo));
    };
    return adaptive(std::move(cells), eval, tol, "boundary");
}

double integrate_triangle(const Vec2& a, const Vec2& b, const Vec2& c, const Integrand& f, int n)
{
    // Collapsed (Duffy) map from the unit square.
    const GaussRule& r = gauss_legendre(n);
    Mat2 m;
    m.col(0) = b - a;
    m.col(1) = c - a;
    const double jac = std::abs(m.determinant());
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double s = r.nodes[i];
        for (int j = 0; j < n; ++j) {
            const double t = r.nodes[j];
            const Vec2 p = a + s * (1.0 - t) * (b - a) + s * t * (c - a);
            sum += r.weights[i] * r.weights[j] * s * f(p);
        }
    }
    return sum * jac;
}

double integrate_segment(const Vec2& a, const Vec2& b, const Integrand& f, int n)
{
    const GaussRule& r = gauss_legendre(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        sum += r.weights[i] * f(a + r.nodes[i] * (b - a));
    }
    return sum * (b - a).norm();
}

} // namespace abreu
