#pragma once

#include <string>
#include <utility>
#include <vector>

namespace abreu {

enum class RowSense { LessEqual, GreaterEqual, Equal };

struct LpRow {
    std::vector<std::pair<int, double>> coefficients; // (variable, coefficient)
    RowSense sense = RowSense::GreaterEqual;
    double rhs = 0.0;
};

/// minimize cost . x  subject to rows, x >= 0.
struct LinearProgram {
    int num_vars = 0;
    std::vector<double> cost;
    std::vector<LpRow> rows;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

std::string to_string(LpStatus status);

struct LpResult {
    LpStatus status = LpStatus::IterationLimit;
    std::vector<double> x;
    double objective = 0.0;
    int iterations = 0;
};

/// Pluggable solver back end.
class LpEngine {
public:
    virtual ~LpEngine() = default;
    virtual LpResult solve(const LinearProgram& lp) const = 0;
    virtual std::string name() const = 0;
};

/// Two-phase primal simplex on a dense tableau. Dantzig pricing, switching to
/// Bland's rule after a run of degenerate pivots.
class DenseSimplex final : public LpEngine {
public:
    struct Settings {
        double tol = 1e-10;
        int max_iterations = 200000;
        int degenerate_switch = 50;
    };

    DenseSimplex() = default;
    explicit DenseSimplex(Settings settings) : settings_(settings) {}

    LpResult solve(const LinearProgram& lp) const override;
    std::string name() const override { return "dense-simplex"; }

private:
    Settings settings_;
};

} // namespace abreu
