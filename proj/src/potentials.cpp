#include "abreu/potentials.hpp"

#include "abreu/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace abreu {

namespace {

double xlogx(double d)
{
    return d > 0.0 ? d * std::log(d) : 0.0;
}

void throw_not_convex(const Vec2& xi, double det)
{
    std::ostringstream msg;
    msg << "Hessian not positive definite at (" << format_double(xi.x()) << ", " << format_double(xi.y())
        << "), det = " << format_double(det);
    throw ConvexityError(msg.str());
}

void fill_jet_inverse(PotentialJet& jet, const Vec2& xi)
{
    const Mat2& h = jet.hessian;
    jet.det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
    if (!(h(0, 0) > 0.0) || !(jet.det > 0.0)) throw_not_convex(xi, jet.det);
    jet.inverse << h(1, 1) / jet.det, -h(0, 1) / jet.det, -h(1, 0) / jet.det, h(0, 0) / jet.det;
}

Mat2 adjugate(const Mat2& m)
{
    Mat2 a;
    a << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return a;
}

// det and inverse of Hess v + b without forming the 1/delta sums first:
// det Hess v = sum_{k<l} (n_k x n_l)^2 / (delta_k delta_l) and
// adj Hess v = sum_k t_k t_k^T / delta_k, t_k = n_k rotated by -90 degrees.
// Both are sums of nonnegative terms, so they stay accurate near facets.
void fill_guillemin_inverse(PotentialJet& jet, const Polytope& polytope, const Vec2& xi, const Mat2& b)
{
    const std::size_t m = polytope.num_facets();
    double det_v = 0.0;
    Mat2 adj_v = Mat2::Zero();
    double tr = 0.0;
    const Mat2 adj_b = adjugate(b);
    for (std::size_t k = 0; k < m; ++k) {
        const Vec2& nk = polytope.normal(k);
        const double dk = polytope.delta(k, xi);
        const Vec2 t(nk.y(), -nk.x());
        adj_v += t * t.transpose() / dk;
        tr += nk.dot(adj_b * nk) / dk;
        for (std::size_t l = k + 1; l < m; ++l) {
            const Vec2& nl = polytope.normal(l);
            const double c = nk.x() * nl.y() - nk.y() * nl.x();
            det_v += c * c / (dk * polytope.delta(l, xi));
        }
    }
    // det(H + B) = det H + tr(adj(H) B) + det B; tr(adj(H) B) = sum_k n_k^T adj(B) n_k / delta_k.
    jet.det = det_v + tr + b.determinant();
    if (!(jet.hessian(0, 0) > 0.0) || !(jet.det > 0.0)) throw_not_convex(xi, jet.det);
    jet.inverse = (adj_v + adj_b) / jet.det;
}

// Fills unknown entries of a line by linear interpolation between known
// neighbours, or linear extrapolation from the two nearest known ones. A line
// with a single known entry is left alone unless constant fill is allowed.
void fill_line(std::vector<double>& values, std::vector<char>& known, bool allow_constant)
{
    const int n = static_cast<int>(values.size());
    std::vector<int> idx;
    for (int p = 0; p < n; ++p)
        if (known[p]) idx.push_back(p);
    if (idx.empty() || (idx.size() == 1 && !allow_constant)) return;
    for (int p = 0; p < n; ++p) {
        if (known[p]) continue;
        auto right = std::lower_bound(idx.begin(), idx.end(), p);
        double value;
        if (idx.size() == 1) {
            value = values[idx.front()];
        } else if (right == idx.begin()) {
            int a = idx[0], b = idx[1];
            value = values[a] + (values[b] - values[a]) * static_cast<double>(p - a) / (b - a);
        } else if (right == idx.end()) {
            int a = idx[idx.size() - 2], b = idx.back();
            value = values[b] + (values[b] - values[a]) * static_cast<double>(p - b) / (b - a);
        } else {
            int b = *right, a = *(right - 1);
            value = values[a] + (values[b] - values[a]) * static_cast<double>(p - a) / (b - a);
        }
        values[p] = value;
    }
    for (int p = 0; p < n; ++p) known[p] = 1;
}

} // namespace

GuilleminPotential::GuilleminPotential(std::shared_ptr<const Polytope> polytope) : polytope_(std::move(polytope)) {}

PotentialJet GuilleminPotential::evaluate(const Vec2& xi, int order) const
{
    PotentialJet jet;
    for (std::size_t k = 0; k < polytope_->num_facets(); ++k) {
        double d = polytope_->delta(k, xi);
        if (!(d > 0.0)) throw DomainError("point is not interior to the polytope");
        const Vec2& n = polytope_->normal(k);
        double logd = std::log(d);
        jet.value += d * logd;
        if (order >= 1) jet.gradient += n * (1.0 + logd);
        if (order >= 2) jet.hessian += n * n.transpose() / d;
    }
    if (order >= 2) fill_guillemin_inverse(jet, *polytope_, xi, Mat2::Zero());
    return jet;
}

double GuilleminPotential::value_closed(const Vec2& xi) const
{
    double v = 0.0;
    for (std::size_t k = 0; k < polytope_->num_facets(); ++k) v += xlogx(std::max(0.0, polytope_->delta(k, xi)));
    return v;
}

Mat2 GuilleminPotential::hessian(const Vec2& xi) const
{
    Mat2 h = Mat2::Zero();
    for (std::size_t k = 0; k < polytope_->num_facets(); ++k) {
        const Vec2& n = polytope_->normal(k);
        h += n * n.transpose() / polytope_->delta(k, xi);
    }
    return h;
}

QuadraticPotential::QuadraticPotential(std::shared_ptr<const Polytope> domain, Vec2 center)
    : domain_(std::move(domain)), center_(center)
{
}

PotentialJet QuadraticPotential::evaluate(const Vec2& xi, int order) const
{
    if (!in_domain(xi)) throw DomainError("point outside the quadratic patch domain");
    PotentialJet jet;
    Vec2 d = xi - center_;
    jet.value = 0.5 * d.squaredNorm();
    jet.gradient = d;
    jet.hessian = Mat2::Identity();
    if (order >= 2) fill_jet_inverse(jet, xi);
    return jet;
}

SymplecticPotential::SymplecticPotential(std::shared_ptr<const Polytope> polytope,
                                         std::shared_ptr<const GridSpec> grid, std::vector<double> psi)
    : polytope_(std::move(polytope)), grid_(std::move(grid)), v_(polytope_), psi_(std::move(psi))
{
    if (psi_.size() != grid_->size()) throw DomainError("psi size does not match the grid");
    int i0 = std::numeric_limits<int>::max(), i1 = -1, j0 = std::numeric_limits<int>::max(), j1 = -1;
    for (const GridSpec::Node& node : grid_->nodes()) {
        i0 = std::min(i0, node.i);
        i1 = std::max(i1, node.i);
        j0 = std::min(j0, node.j);
        j1 = std::max(j1, node.j);
    }
    box_i0_ = i0;
    box_j0_ = j0;
    const int ni = i1 - i0 + 1;
    const int nj = j1 - j0 + 1;
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(ni, nj);
    std::vector<std::vector<char>> known(ni, std::vector<char>(nj, 0));
    for (std::size_t n = 0; n < grid_->size(); ++n) {
        const GridSpec::Node& node = grid_->node(n);
        values(node.i - i0, node.j - j0) = psi_[n];
        known[node.i - i0][node.j - j0] = 1;
    }
    // Along xi_1 first, then along xi_2 for whatever is left, so affine data stays affine.
    for (int b = 0; b < nj; ++b) {
        std::vector<double> line(ni);
        std::vector<char> mask(ni);
        for (int a = 0; a < ni; ++a) {
            line[a] = values(a, b);
            mask[a] = known[a][b];
        }
        fill_line(line, mask, false);
        for (int a = 0; a < ni; ++a) {
            values(a, b) = line[a];
            known[a][b] = mask[a];
        }
    }
    for (int a = 0; a < ni; ++a) {
        std::vector<double> line(nj);
        std::vector<char> mask(nj);
        for (int b = 0; b < nj; ++b) {
            line[b] = values(a, b);
            mask[b] = known[a][b];
        }
        fill_line(line, mask, true);
        for (int b = 0; b < nj; ++b) values(a, b) = line[b];
    }
    spline_ = TensorSpline(grid_->position(i0, j0), grid_->h(), std::move(values));
}

SymplecticPotential SymplecticPotential::guillemin(std::shared_ptr<const Polytope> polytope,
                                                   std::shared_ptr<const GridSpec> grid)
{
    std::vector<double> zero(grid->size(), 0.0);
    return SymplecticPotential(std::move(polytope), std::move(grid), std::move(zero));
}

SymplecticPotential SymplecticPotential::sampled(std::shared_ptr<const Polytope> polytope,
                                                 std::shared_ptr<const GridSpec> grid,
                                                 const std::function<double(const Vec2&)>& psi)
{
    std::vector<double> values;
    values.reserve(grid->size());
    for (const GridSpec::Node& node : grid->nodes()) values.push_back(psi(node.xi));
    return SymplecticPotential(std::move(polytope), std::move(grid), std::move(values));
}

SymplecticPotential SymplecticPotential::with_psi(std::vector<double> psi) const
{
    return SymplecticPotential(polytope_, grid_, std::move(psi));
}

PotentialJet SymplecticPotential::evaluate(const Vec2& xi, int order) const
{
    PotentialJet jet = v_.evaluate(xi, std::min(order, 1));
    TensorSpline::Jet s = spline_.evaluate(xi);
    jet.value += s.value;
    if (order >= 1) jet.gradient += s.gradient;
    if (order >= 2) {
        jet.hessian = v_.hessian(xi) + s.hessian;
        fill_guillemin_inverse(jet, *polytope_, xi, s.hessian);
    }
    return jet;
}

double SymplecticPotential::value_closed(const Vec2& xi) const
{
    return v_.value_closed(xi) + spline_.evaluate(xi).value;
}

std::vector<Mat2> SymplecticPotential::psi_node_hessians() const
{
    Eigen::MatrixXd dxx, dxy, dyy;
    spline_.lattice_hessians(dxx, dxy, dyy);
    std::vector<Mat2> out(grid_->size());
    for (std::size_t n = 0; n < grid_->size(); ++n) {
        const GridSpec::Node& node = grid_->node(n);
        const int a = node.i - box_i0_;
        const int b = node.j - box_j0_;
        out[n] << dxx(a, b), dxy(a, b), dxy(a, b), dyy(a, b);
    }
    return out;
}

SymplecticPotential SymplecticPotential::normalized() const
{
    const Vec2& p = polytope_->base_point();
    PotentialJet jet = evaluate(p, 1);
    std::vector<double> shifted(psi_.size());
    for (std::size_t n = 0; n < psi_.size(); ++n)
        shifted[n] = psi_[n] - jet.value - jet.gradient.dot(grid_->node(n).xi - p);
    SymplecticPotential out(polytope_, grid_, std::move(shifted));
    out.normalization_.applied = true;
    out.normalization_.value_shift = normalization_.value_shift + jet.value;
    out.normalization_.gradient_shift = normalization_.gradient_shift + jet.gradient;
    return out;
}

PotentialJet eval_u(const ConvexPotential& u, const Vec2& xi, int order)
{
    if (order < 0 || order > 2) throw DomainError("derivative order must be 0, 1 or 2");
    return u.evaluate(xi, order);
}

LegendreImage legendre_forward(const ConvexPotential& u, const Vec2& xi)
{
    PotentialJet jet = u.evaluate(xi, 2);
    LegendreImage out;
    out.x = jet.gradient;
    out.f = jet.gradient.dot(xi) - jet.value;
    out.hess_f = jet.inverse;
    return out;
}

Vec2 legendre_inverse(const ConvexPotential& u, const Vec2& x, const Vec2& seed, NewtonSettings settings)
{
    if (!u.in_domain(seed)) throw DomainError("Legendre inverse seed is not interior");
    Vec2 xi = seed;
    PotentialJet jet = u.evaluate(xi, 2);
    Vec2 r = jet.gradient - x;
    double res = r.norm();
    for (int it = 0; it < settings.max_iters; ++it) {
        if (res <= settings.tol) {
            // One polishing step; kept only if it does not make things worse.
            Vec2 cand = xi - jet.inverse * r;
            if (u.in_domain(cand)) {
                PotentialJet cj = u.evaluate(cand, 2);
                Vec2 cr = cj.gradient - x;
                if (cr.norm() <= res) return cand;
            }
            return xi;
        }
        Vec2 step = -(jet.inverse * r);
        double alpha = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
            Vec2 cand = xi + alpha * step;
            if (!u.in_domain(cand)) continue;
            PotentialJet cj;
            try {
                cj = u.evaluate(cand, 2);
            } catch (const ConvexityError&) {
                continue;
            }
            Vec2 cr = cj.gradient - x;
            if (cr.norm() < res || alpha < 1e-12) {
                xi = cand;
                jet = cj;
                r = cr;
                res = cr.norm();
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (res <= settings.tol) return xi;
    throw LegendreError("Legendre inverse did not converge (residual " + format_double(res) + ")", xi, res);
}

double calabi_distance(const ConvexPotential& u, const Vec2& p, const Vec2& q, const GridSpec& grid)
{
    auto locate = [&](const Vec2& pt) {
        Vec2 t = (pt - grid.origin()) / grid.h();
        int i = static_cast<int>(std::lround(t.x()));
        int j = static_cast<int>(std::lround(t.y()));
        int n = grid.index(i, j);
        if (n < 0 || (grid.position(i, j) - pt).norm() > 1e-9 * std::max(1.0, grid.h()))
            throw DomainError("Calabi distance endpoints must be grid nodes");
        return n;
    };
    const int source = locate(p);
    const int target = locate(q);
    if (source == target) return 0.0;

    std::vector<double> dist(grid.size(), std::numeric_limits<double>::infinity());
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    dist[source] = 0.0;
    queue.push({0.0, source});
    while (!queue.empty()) {
        auto [d, n] = queue.top();
        queue.pop();
        if (d > dist[n]) continue;
        if (n == target) return d;
        const GridSpec::Node& node = grid.node(n);
        for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
                if (di == 0 && dj == 0) continue;
                int m = grid.index(node.i + di, node.j + dj);
                if (m < 0) continue;
                Vec2 step = grid.node(m).xi - node.xi;
                Vec2 mid = 0.5 * (grid.node(m).xi + node.xi);
                if (!u.in_domain(mid)) continue;
                Mat2 hess = u.evaluate(mid, 2).hessian;
                double w = std::sqrt(step.dot(hess * step));
                if (d + w < dist[m]) {
                    dist[m] = d + w;
                    queue.push({dist[m], m});
                }
            }
        }
    }
    throw DomainError("Calabi distance endpoints are not connected in the grid graph");
}

std::string psi_to_csv(const SymplecticPotential& u)
{
    const GridSpec& grid = u.grid();
    auto [lo, hi] = u.polytope().bounding_box();
    std::ostringstream out;
    out << "# h=" << format_double(grid.h()) << " bbox=" << format_double(lo.x()) << "," << format_double(lo.y())
        << "," << format_double(hi.x()) << "," << format_double(hi.y()) << " nodes=" << grid.size() << "\n";
    out << "i,j,xi1,xi2,psi\n";
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const GridSpec::Node& node = grid.node(n);
        out << node.i << "," << node.j << "," << format_double(node.xi.x()) << "," << format_double(node.xi.y())
            << "," << format_double(u.psi()[n]) << "\n";
    }
    return out.str();
}

std::vector<double> psi_from_csv(const std::string& text, const GridSpec& grid)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# h=", 0) != 0) throw DomainError("psi CSV: missing metadata row");
    double h = std::stod(line.substr(4));
    if (std::abs(h - grid.h()) > 1e-12 * grid.h()) throw DomainError("psi CSV: grid spacing mismatch");
    if (!std::getline(in, line) || line != "i,j,xi1,xi2,psi") throw DomainError("psi CSV: missing column header");
    std::vector<double> psi(grid.size(), 0.0);
    std::vector<char> seen(grid.size(), 0);
    int row = 2;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell[5];
        for (auto& c : cell)
            if (!std::getline(fields, c, ',')) throw DomainError("psi CSV: short row " + std::to_string(row));
        int n = grid.index(std::stoi(cell[0]), std::stoi(cell[1]));
        if (n < 0) throw DomainError("psi CSV: row " + std::to_string(row) + " is not a grid node");
        psi[n] = std::stod(cell[4]);
        seen[n] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw DomainError("psi CSV: missing nodes");
    return psi;
}

} // namespace abreu
