#pragma once

#include "abreu/bundle.hpp"
#include "abreu/potentials.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace abreu {

/// Nodal values of the generalized Abreu operator
///   S_D(u) = -(1/D) sum_{ij} d^2 (D u^{ij}) / d xi_i d xi_j
/// together with the pointwise quantities it is assembled from.
struct OperatorField {
    std::shared_ptr<const GridSpec> grid;
    std::vector<double> value; // NaN at masked nodes
    std::vector<char> masked;
    std::vector<double> det_hess_u;
    std::vector<double> dh;
    std::vector<double> h_g;
    std::vector<double> f_delta; // D / det Hess u

    std::size_t unmasked_count() const;
    double max_abs_deviation(double target) const;
};

/// Nodes whose 3x3 neighbourhood is not entirely in the grid.
std::vector<char> stencil_mask(const GridSpec& grid);

/// Precomputed per-grid data for repeated operator evaluation (the solver
/// applies it thousands of times per Jacobian).
class AbreuStencil {
public:
    AbreuStencil(std::shared_ptr<const Polytope> polytope, std::shared_ptr<const GridSpec> grid, DHData dh);

    /// S_D at unmasked nodes (NaN at masked ones) from the psi Hessians at the nodes.
    /// Throws ConvexityError naming the first node where v + psi is not convex.
    std::vector<double> apply(std::span<const Mat2> psi_hessians) const;

    OperatorField field(const SymplecticPotential& u) const;

    const GridSpec& grid() const { return *grid_; }
    std::shared_ptr<const GridSpec> grid_ptr() const { return grid_; }
    const std::vector<char>& masked() const { return masked_; }
    const std::vector<Mat2>& guillemin_hessians() const { return v_hessians_; }
    const std::vector<double>& dh_values() const { return dh_values_; }
    const DHData& dh() const { return dh_; }

private:
    std::shared_ptr<const Polytope> polytope_;
    std::shared_ptr<const GridSpec> grid_;
    DHData dh_;
    std::vector<char> masked_;
    std::vector<Mat2> v_hessians_;
    std::vector<double> dh_values_;
    std::vector<double> h_g_values_;
};

OperatorField abreu_apply(const SymplecticPotential& u, const DHData& dh);

/// S = S_D(u) + h_G nodewise.
OperatorField scalar_curvature(const SymplecticPotential& u, const DHData& dh);

/// S_D(v) of the Guillemin potential in closed form (exact second derivatives
/// by forward-mode jets), valid anywhere in the open polytope.
double guillemin_abreu_exact(const Polytope& polytope, const DHData& dh, const Vec2& xi);

struct XFormSample {
    Vec2 x = Vec2::Zero();
    Vec2 xi = Vec2::Zero();
    double h_x = 0.0;
    double value = 0.0;
};

/// The operator written in gradient coordinates x = grad u:
///   -sum f^{ij} (log F)_{ij} - sum f^{ij} (log D)_i (log F)_j,  F = D det(f_ij),
/// with derivatives of log F by central differences of spacing
/// h_x = h * |Hess u|^{1/2} in x. Each seed is an interior point near the
/// preimage of the matching sample.
std::vector<XFormSample> abreu_x_form(const ConvexPotential& u, const DHData& dh, std::span<const Vec2> xs,
                                      std::span<const Vec2> seeds, double h);

/// Ricci curvature blocks at one point x in gradient coordinates.
struct RicciComponents {
    Vec2 x = Vec2::Zero();
    Vec2 xi = Vec2::Zero();
    Mat2 horizontal = Mat2::Zero();  // Ric(S_j, S_k-bar)
    std::vector<double> fiber;       // Ric(S_alpha, S_alpha-bar), one per root
    Mat2 hess_u = Mat2::Zero();      // f^{ij}
    std::vector<double> root_factors; // D_alpha(xi)
};

RicciComponents ricci_components(const ConvexPotential& u, const DHData& dh, const Vec2& x, const Vec2& seed,
                                 double h);

/// Contraction against the metric with g(S_j, S_k-bar) = f_jk / 4 and
/// g(S_alpha, S_alpha-bar) = D_alpha / 4; equals the scalar curvature S_D(u) + h_G.
double ricci_trace(const RicciComponents& ric);

struct FacetDiagnostic {
    int facet = -1;
    double min_delta_det = 0.0; // min over near-facet nodes of delta_k * det Hess u
    int node = -1;
};

struct DiagnosticsReport {
    double oscillation = 0.0; // max u - min u over nodes
    std::vector<FacetDiagnostic> facets;
    double h_proxy_min = 0.0; // det Hess v / det Hess u
    double h_proxy_max = 0.0;
};

/// Near-facet nodes for facet k: nearest facet is k and delta_k <= h_min + h.
DiagnosticsReport diagnostics(const SymplecticPotential& u, const DHData& dh);

std::string field_to_csv(const OperatorField& field);

} // namespace abreu
