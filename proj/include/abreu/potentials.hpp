#pragma once

#include "abreu/polytope.hpp"
#include "abreu/spline.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace abreu {

/// Value, gradient and Hessian of a convex potential at one point. For
/// order-2 evaluations the inverse Hessian u^{ij} and det are filled too.
struct PotentialJet {
    double value = 0.0;
    Vec2 gradient = Vec2::Zero();
    Mat2 hessian = Mat2::Zero();
    Mat2 inverse = Mat2::Zero();
    double det = 0.0;
};

/// Anything that can play the role of a symplectic potential u on (part of) the plane.
class ConvexPotential {
public:
    virtual ~ConvexPotential() = default;

    /// Throws DomainError outside the open domain and ConvexityError if the
    /// Hessian is not positive definite (order 2 only).
    virtual PotentialJet evaluate(const Vec2& xi, int order) const = 0;
    virtual bool in_domain(const Vec2& xi) const = 0;
};

/// v(xi) = sum_k delta_k log delta_k with closed-form derivatives.
class GuilleminPotential final : public ConvexPotential {
public:
    explicit GuilleminPotential(std::shared_ptr<const Polytope> polytope);

    PotentialJet evaluate(const Vec2& xi, int order) const override;
    bool in_domain(const Vec2& xi) const override { return polytope_->contains_interior(xi); }

    /// Continuous extension to the closed polytope (0 log 0 = 0).
    double value_closed(const Vec2& xi) const;
    /// Hessian sum_k n_k n_k^T / delta_k without domain checks beyond delta > 0.
    Mat2 hessian(const Vec2& xi) const;

    const Polytope& polytope() const { return *polytope_; }
    std::shared_ptr<const Polytope> polytope_ptr() const { return polytope_; }

private:
    std::shared_ptr<const Polytope> polytope_;
};

/// u(xi) = |xi - center|^2 / 2 on a domain (a polytope or the whole plane).
/// Flat reference metric for tests of the Legendre and curvature machinery.
class QuadraticPotential final : public ConvexPotential {
public:
    explicit QuadraticPotential(std::shared_ptr<const Polytope> domain = nullptr, Vec2 center = Vec2::Zero());

    PotentialJet evaluate(const Vec2& xi, int order) const override;
    bool in_domain(const Vec2& xi) const override { return !domain_ || domain_->contains_interior(xi); }

private:
    std::shared_ptr<const Polytope> domain_;
    Vec2 center_;
};

/// Affine shift subtracted from psi to pin u(p_o) = 0 and grad u(p_o) = 0.
struct Normalization {
    bool applied = false;
    double value_shift = 0.0;
    Vec2 gradient_shift = Vec2::Zero();
};

/// u = v + psi with psi sampled on grid nodes and interpolated by a tensor
/// cubic spline on the node bounding box (lattice points in the box but not
/// in the node set are filled by linear extrapolation along grid rows).
class SymplecticPotential final : public ConvexPotential {
public:
    SymplecticPotential(std::shared_ptr<const Polytope> polytope, std::shared_ptr<const GridSpec> grid,
                        std::vector<double> psi);

    static SymplecticPotential guillemin(std::shared_ptr<const Polytope> polytope,
                                         std::shared_ptr<const GridSpec> grid);
    static SymplecticPotential sampled(std::shared_ptr<const Polytope> polytope, std::shared_ptr<const GridSpec> grid,
                                       const std::function<double(const Vec2&)>& psi);

    PotentialJet evaluate(const Vec2& xi, int order) const override;
    bool in_domain(const Vec2& xi) const override { return polytope_->contains_interior(xi); }

    /// u on the closed polytope, used by boundary integrals.
    double value_closed(const Vec2& xi) const;

    /// psi part only (spline jet).
    TensorSpline::Jet psi_jet(const Vec2& xi) const { return spline_.evaluate(xi); }

    /// Hessian of psi at every grid node, in node order.
    std::vector<Mat2> psi_node_hessians() const;

    /// Copy with u(p_o) = 0 and grad u(p_o) = 0, obtained by subtracting an affine function from psi.
    SymplecticPotential normalized() const;
    const Normalization& normalization() const { return normalization_; }

    SymplecticPotential with_psi(std::vector<double> psi) const;

    const Polytope& polytope() const { return *polytope_; }
    const GridSpec& grid() const { return *grid_; }
    std::shared_ptr<const Polytope> polytope_ptr() const { return polytope_; }
    std::shared_ptr<const GridSpec> grid_ptr() const { return grid_; }
    const std::vector<double>& psi() const { return psi_; }
    const GuilleminPotential& guillemin_part() const { return v_; }

private:
    std::shared_ptr<const Polytope> polytope_;
    std::shared_ptr<const GridSpec> grid_;
    GuilleminPotential v_;
    std::vector<double> psi_;
    TensorSpline spline_;
    int box_i0_ = 0;
    int box_j0_ = 0;
    Normalization normalization_;
};

/// Order 0, 1 or 2 evaluation (order 2 fills u^{ij} and det).
PotentialJet eval_u(const ConvexPotential& u, const Vec2& xi, int order);

struct LegendreImage {
    Vec2 x = Vec2::Zero();
    double f = 0.0;
    Mat2 hess_f = Mat2::Zero(); // (Hess u)^{-1}
};

LegendreImage legendre_forward(const ConvexPotential& u, const Vec2& xi);

struct NewtonSettings {
    double tol = 1e-10;
    int max_iters = 50;
};

class LegendreError : public ConvergenceError {
public:
    LegendreError(const std::string& what, Vec2 last, double residual)
        : ConvergenceError(what), last_(last), residual_(residual) {}
    const Vec2& last_iterate() const { return last_; }
    double residual() const { return residual_; }

private:
    Vec2 last_;
    double residual_;
};

/// Solves grad u(xi) = x by damped Newton from an interior seed.
Vec2 legendre_inverse(const ConvexPotential& u, const Vec2& x, const Vec2& seed, NewtonSettings settings = {});

/// Shortest path in the 8-neighbour node graph with edge length
/// sqrt(d^T Hess u(midpoint) d). Biased upward; converges under refinement.
double calabi_distance(const ConvexPotential& u, const Vec2& p, const Vec2& q, const GridSpec& grid);

std::string psi_to_csv(const SymplecticPotential& u);
/// Reads node values written by psi_to_csv; metadata must match the grid.
std::vector<double> psi_from_csv(const std::string& text, const GridSpec& grid);

} // namespace abreu
