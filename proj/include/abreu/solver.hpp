#pragma once

#include "abreu/functionals.hpp"
#include "abreu/operators.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

namespace abreu {

struct SolverConfig {
    double h = 1.0 / 32.0;
    double h_min = 0.0; // 0 selects 4 h

    double tol_residual = 1e-8;
    int max_iters = 30;
    int max_halvings = 20; // damping depth
    // Difference step, scaled by max(1, |z_j|). A unit change of one nodal
    // value moves that node's Hessian by ~1/h^2, so R is nonlinear on a scale
    // of ~h^2 |Hess v| in psi, far below the usual sqrt(epsilon) heuristic.
    double fd_step = 1e-10;
    bool central_differences = false;

    double dt_init = 0.1;
    double dt_min = 1e-4;
    double grow = 1.5;
    double shrink = 0.5;
    int grow_after = 3; // grow after successes with at most this many iterations

    double cap_factor = 10.0; // monitor caps relative to the t = 0 diagnostics

    int threads = 0; // 0: hardware concurrency; ABREU_THREADS caps either way

    double effective_h_min() const { return h_min > 0.0 ? h_min : 4.0 * h; }
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Worker count: the explicit request if positive, else the hardware
/// concurrency, capped by ABREU_THREADS when set; never below one.
int worker_count(int requested = 0);

/// A_t = t A_1 + (1 - t) A_0 on the unmasked nodes, with A_0 the discrete
/// operator applied to the Guillemin potential, so psi = 0 solves t = 0
/// exactly.
class ContinuityPath {
public:
    ContinuityPath(std::shared_ptr<const Polytope> polytope, std::shared_ptr<const GridSpec> grid, DHData dh,
                   std::vector<double> target);

    /// Nodal A_t; bit-identical to A_0 at t = 0 and to A_1 at t = 1.
    std::vector<double> a_t(double t) const;

    const std::vector<double>& a0() const { return a0_; }
    const std::vector<double>& a1() const { return a1_; }
    /// A_1 == A_0 at every unmasked node (masked entries are NaN on both sides).
    bool constant() const;

    const AbreuStencil& stencil() const { return stencil_; }
    const Polytope& polytope() const { return *polytope_; }
    std::shared_ptr<const Polytope> polytope_ptr() const { return polytope_; }
    std::shared_ptr<const GridSpec> grid_ptr() const { return grid_; }
    const GridSpec& grid() const { return *grid_; }
    const DHData& dh() const { return stencil_.dh(); }

    /// Accepted t values, strictly increasing (filled by continue_path).
    std::vector<double> schedule;

private:
    std::shared_ptr<const Polytope> polytope_;
    std::shared_ptr<const GridSpec> grid_;
    AbreuStencil stencil_;
    std::vector<double> a0_;
    std::vector<double> a1_;
};

/// A_target sampled at the nodes (masked nodes carry NaN, as the operator does).
ContinuityPath build_path(std::shared_ptr<const Polytope> polytope, DHData dh, const ScalarField& target,
                          std::shared_ptr<const GridSpec> grid);
/// Target given as a nodal vector, e.g. the path's own A_0 or a manufactured right-hand side.
ContinuityPath build_path(std::shared_ptr<const Polytope> polytope, DHData dh, std::vector<double> target,
                          std::shared_ptr<const GridSpec> grid);

/// The square nonlinear system solved at fixed t. Unknowns: psi at the
/// unmasked nodes plus three coefficients of an affine function added to the
/// outer ring of masked nodes (whose values are otherwise frozen at the
/// initial iterate). Equations: the operator residual at unmasked nodes plus
/// the pins psi(p_o) = 0, grad psi(p_o) = 0.
class DiscreteSystem {
public:
    DiscreteSystem(const ContinuityPath& path, std::vector<double> a_t, const std::vector<double>& psi_init,
                   int threads = 1, double fd_step = 1e-10, bool central = false);

    int size() const { return static_cast<int>(unmasked_.size()) + 3; }
    Eigen::VectorXd pack(const std::vector<double>& psi) const;
    std::vector<double> unpack(const Eigen::VectorXd& z) const;

    /// Full residual vector; throws ConvexityError if u is not convex at a node.
    Eigen::VectorXd residual(const Eigen::VectorXd& z) const;
    /// Operator residual R(psi) = S_D(v + psi) - A_t at unmasked nodes, in node order.
    std::vector<double> operator_residual(const std::vector<double>& psi) const;
    /// Finite-difference Jacobian (forward, or central on request), columns computed in parallel.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& z, const Eigen::VectorXd& f) const;

    const std::vector<int>& unmasked_nodes() const { return unmasked_; }

private:
    const ContinuityPath& path_;
    std::vector<double> a_t_;
    std::vector<double> ring_base_;
    std::vector<int> unmasked_;
    std::vector<int> masked_;
    int threads_;
    double fd_step_;
    bool central_;
};

struct NewtonResult {
    bool converged = false;
    std::vector<double> psi;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history; // infinity norms, starting with the initial iterate
    std::string failure;
    /// LU of the last Jacobian (when one was formed), reused by the path predictor.
    std::shared_ptr<const Eigen::PartialPivLU<Eigen::MatrixXd>> last_jacobian;
};

/// Damped Newton with a finite-difference Jacobian. The step is halved until
/// u stays convex at every node and the residual 2-norm decreases.
NewtonResult newton_solve(const ContinuityPath& path, double t, const std::vector<double>& psi_init,
                          const SolverConfig& config);

struct PathStep {
    double t = 0.0;
    double dt = 0.0;
    bool accepted = false;
    int iterations = 0;
    double residual = 0.0;
    double oscillation = 0.0; // max u - min u over nodes
    double h_proxy_min = 0.0;
    double h_proxy_max = 0.0;
    double boundary_proxy = 0.0; // min over facets of delta_k det Hess u near the facet
    std::vector<std::string> warnings;
    std::string failure;
};

struct SolutionTrace {
    bool success = false;
    double final_t = 0.0;
    double blocking_t = 0.0; // t that could not be reached when !success
    std::vector<PathStep> steps; // every attempt, including rejected ones
    std::vector<double> psi;     // last accepted iterate
    std::string message;

    int accepted_steps() const;
};

/// Marches t from 0 to 1 with adaptive steps and a tangent predictor.
SolutionTrace continue_path(ContinuityPath& path, const SolverConfig& config);

/// One JSON object per line and step.
std::string trace_to_jsonl(const SolutionTrace& trace);

} // namespace abreu
