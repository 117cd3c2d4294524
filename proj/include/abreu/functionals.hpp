#pragma once

#include "abreu/bundle.hpp"
#include "abreu/lp.hpp"
#include "abreu/potentials.hpp"
#include "abreu/quadrature.hpp"

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace abreu {

using ScalarField = std::function<double(const Vec2&)>;

/// Prescribed curvature data: A on the closed polytope and the bundle data.
/// The bundle scalar curvature is A + h_G.
struct PrescribedData {
    ScalarField A;
    DHData dh;

    double bundle_curvature(const Vec2& xi) const { return A(xi) + h_g_value(dh, xi); }
};

/// A_0 = S_D(v) in closed form: the curvature of the Guillemin metric, which
/// is the t = 0 end of the continuity path.
ScalarField endpoint_field(std::shared_ptr<const Polytope> polytope, DHData dh);

/// Sign s in  L_A(u) = int_{boundary} u D dsigma + s * int A u D dmu.
/// With A = S_D(v) the affine functions are annihilated only for s = -1.
enum class LSign { Minus = -1, Plus = 1 };

struct FunctionalSettings {
    double tol_quad = 1e-8;
    LSign sign = LSign::Minus;
};

struct FunctionalValue {
    double value = 0.0;
    double error = 0.0;
};

FunctionalValue l_functional(const PrescribedData& data, const Polytope& polytope, const ScalarField& u,
                             const FunctionalSettings& settings = {});
FunctionalValue l_functional(const PrescribedData& data, const SymplecticPotential& u,
                             const FunctionalSettings& settings = {});

struct MabuchiValue {
    double value = 0.0;
    double error = 0.0;
    double log_det_term = 0.0; // -int log det(u_ij) D dmu
    double linear_term = 0.0;  // L_A(u)
};

/// F_A(u) = -int log det(u_ij) D dmu + L_A(u). Throws ConvexityError if the
/// Hessian fails to be positive definite at a quadrature point.
MabuchiValue mabuchi_functional(const PrescribedData& data, const Polytope& polytope, const ConvexPotential& u,
                                const ScalarField& u_closed, const FunctionalSettings& settings = {});
MabuchiValue mabuchi_functional(const PrescribedData& data, const SymplecticPotential& u,
                                const FunctionalSettings& settings = {});

struct AffineCheck {
    std::array<double, 3> values{}; // L_A(1), L_A(xi_1), L_A(xi_2)
    double max_abs = 0.0;
};

AffineCheck check_affine_vanishing(const PrescribedData& data, const Polytope& polytope,
                                   const FunctionalSettings& settings = {});

/// f minus its D-weighted L^2(dmu) projection onto affine functions. Adding a
/// multiple of the result to A leaves L_A unchanged on affines.
ScalarField orthogonalize_affine(const ScalarField& f, const Polytope& polytope, const DHData& dh,
                                 double tol = 1e-10);

struct Triangulation {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> cells;
    int base_node = -1; // the vertex at p_o
    int size = 0;
    bool structured = false; // lattice triangulation, else subdivided fan

    /// Value of the piecewise-linear interpolant of node values at xi.
    double interpolate(const std::vector<double>& values, const Vec2& xi) const;
};

/// Triangulation of the closed polytope with p_o as a vertex; `size`
/// subdivisions per unit of the longest bounding-box side (lattice case) or
/// per fan triangle edge. Size 2n refines size n.
Triangulation triangulate(const Polytope& polytope, int size);

struct StabilityCertificate {
    double lambda_star = 0.0;
    Triangulation triangulation;
    std::vector<double> values; // extremal PL function at the nodes
    LpStatus status = LpStatus::Optimal;
    std::string engine;
    int lp_iterations = 0;
    int hinge_count = 0;
    int binding_count = 0;
    double max_hinge_violation = 0.0;
    double normalization_residual = 0.0;
    double affine_check = 0.0;

    bool destabilizing() const { return lambda_star <= 0.0; }
};

struct StabilitySettings {
    FunctionalSettings functional;
    /// Refuse (ValidationError) when check_affine_vanishing exceeds 10 tol_quad.
    bool enforce_affine_vanishing = true;
    int cell_rule = 6; // Gauss points per direction on each cell
};

/// Minimizes L_A(g) over convex piecewise-linear g >= 0 on the triangulation
/// with g(p_o) = 0 and int_{boundary} g D dsigma = 1. Throws LpError on an
/// infeasible or unbounded program.
StabilityCertificate stability_lambda(const PrescribedData& data, const Polytope& polytope, int triangulation_size,
                                      const StabilitySettings& settings = {}, const LpEngine* engine = nullptr);

std::string certificate_to_json(const StabilityCertificate& certificate);

} // namespace abreu
