#pragma once

#include "abreu/functionals.hpp"
#include "abreu/solver.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abreu {

/// Arithmetic expression in xi1, xi2: + - * / ^, unary minus, the functions
/// log, exp, sqrt, max(a, b), min(a, b) and the constants pi, e.
class Expression {
public:
    struct Node;

    Expression();
    /// Throws ConfigError(Syntax) with a 1-based column, offset by `column`.
    static Expression parse(std::string_view text, int line = 0, int column = 1);
    static Expression constant(double value);

    /// Throws DomainError when a function leaves its domain or the result is not finite.
    double operator()(const Vec2& xi) const;
    /// Canonical, fully parenthesized form; parse(str()).str() == str().
    std::string str() const;

    bool is_constant() const;
    double constant_value() const;

private:
    explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
    std::shared_ptr<const Node> root_;
};

enum class AKind { Endpoint, Constant, Expression };

struct PolytopeBlock {
    std::vector<Facet> facets;
    std::optional<RationalPoint> base_point; // centroid when absent
};

struct BundleBlock {
    std::vector<std::array<Rational, 2>> roots;
    std::optional<std::array<Rational, 2>> sigma; // root sum when absent
};

struct PrescribedBlock {
    AKind kind = AKind::Endpoint;
    double constant = 0.0;
    Expression expression;
    /// Added to A after removing its affine part, so affine vanishing is kept.
    std::optional<Expression> perturbation;
    LSign sign = LSign::Minus;
    bool enforce_affine = true;
};

struct GridBlock {
    double h = 1.0 / 32.0;
    double h_min = 0.0; // 0 selects 4 h
};

struct PotentialBlock {
    std::optional<Expression> psi; // probe potential u = v + psi
};

struct FunctionalBlock {
    double tol_quad = 1e-8;
};

struct StabilityBlock {
    int size = 16;
    int cell_rule = 6;
};

struct ProblemConfig {
    PolytopeBlock polytope;
    BundleBlock bundle;
    PrescribedBlock prescribed;
    GridBlock grid;
    PotentialBlock potential;
    FunctionalBlock functional;
    StabilityBlock stability;
    SolverConfig solver; // h and h_min mirror the grid block
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` comments.
/// Every failure is a ConfigError carrying line, column and kind.
ProblemConfig parse_config(std::string_view text);
ProblemConfig load_config(const std::string& path);
/// Canonical text; parse_config(serialize_config(c)) serializes identically.
std::string serialize_config(const ProblemConfig& config);

/// Configuration turned into validated objects.
struct Problem {
    std::shared_ptr<const Polytope> polytope;
    DHData dh;
    std::shared_ptr<const GridSpec> grid;
    PrescribedData data;
    ScalarField perturbation; // orthogonalized; empty when absent
    ScalarField psi;          // empty when absent
    AKind kind = AKind::Endpoint;

    SymplecticPotential probe() const;
    /// Nodal target of the continuity path. The endpoint case uses the
    /// discrete A_0 itself, so an unperturbed endpoint target is a constant path.
    std::vector<double> solver_target() const;
};

/// Throws PolytopeError / ValidationError for bad geometry or a nonpositive D.
Problem assemble(const ProblemConfig& config);

enum class Command { Validate, Curvature, Functional, Stability, Solve, ExportPlot };

std::optional<Command> parse_command(std::string_view name);
std::string to_string(Command command);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int internal = 1;
inline constexpr int usage = 2;
inline constexpr int config = 3;
inline constexpr int validation = 4;
inline constexpr int domain = 5;
inline constexpr int convexity = 6;
inline constexpr int convergence = 7;
inline constexpr int lp = 8;
inline constexpr int stalled = 9;
inline constexpr int io = 10;
} // namespace exit_code

/// Exit code for an exception thrown by any module.
int exit_code_for(const std::exception& error);

struct RunOptions {
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed; // solve: randomized Jacobian self-check
};

/// Runs one command, writing artifacts to options.out_dir and a summary to
/// `out`. Errors are reported on `err` with the failing module named; the
/// return value is the exit code.
int run_command(const ProblemConfig& config, Command command, const RunOptions& options, std::ostream& out,
                std::ostream& err);

/// Central-difference check of the solver Jacobian along a seeded random
/// direction: |J d - (R(z + e d) - R(z - e d)) / 2e| / |J d|.
struct JacobianCheck {
    double relative_error = 0.0;
    double epsilon = 1e-5;
};
JacobianCheck jacobian_self_check(const ContinuityPath& path, double t, const std::vector<double>& psi,
                                  const SolverConfig& config, std::uint64_t seed);

} // namespace abreu
