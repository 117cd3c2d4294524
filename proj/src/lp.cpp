#include "abreu/lp.hpp"

#include "abreu/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace abreu {

std::string to_string(LpStatus status)
{
    switch (status) {
    case LpStatus::Optimal:
        return "optimal";
    case LpStatus::Infeasible:
        return "infeasible";
    case LpStatus::Unbounded:
        return "unbounded";
    case LpStatus::IterationLimit:
        return "iteration-limit";
    }
    return "unknown";
}

namespace {

constexpr double kFeasTol = 1e-9;

using Tableau = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Solver {
public:
    Solver(const LinearProgram& lp, const DenseSimplex::Settings& s) : lp_(lp), s_(s) { build(); }

    LpResult run()
    {
        LpResult result;
        // Phase 1: minimize the sum of artificials.
        if (num_art_ > 0) {
            Eigen::VectorXd c1 = Eigen::VectorXd::Zero(cols_);
            for (int j = art_begin_; j < cols_; ++j) {
                c1[j] = 1.0;
            }
            const LpStatus st = iterate(c1, true, result.iterations);
            if (st == LpStatus::IterationLimit) {
                result.status = st;
                return result;
            }
            if (objective(c1) > 1e-8) {
                result.status = LpStatus::Infeasible;
                return result;
            }
            drive_out_artificials();
        }
        Eigen::VectorXd c2 = Eigen::VectorXd::Zero(cols_);
        for (int j = 0; j < lp_.num_vars; ++j) {
            c2[j] = lp_.cost[j];
        }
        const LpStatus st = iterate(c2, false, result.iterations);
        result.status = st;
        if (st != LpStatus::Optimal) {
            return result;
        }
        result.x.assign(lp_.num_vars, 0.0);
        const Eigen::VectorXd xb = polished_basic_values();
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < lp_.num_vars) {
                result.x[basis_[i]] = std::max(0.0, xb[i]);
            }
        }
        result.objective = 0.0;
        for (int j = 0; j < lp_.num_vars; ++j) {
            result.objective += lp_.cost[j] * result.x[j];
        }
        return result;
    }

private:
    void build()
    {
        m_ = static_cast<int>(lp_.rows.size());
        const int n = lp_.num_vars;
        // Normalize rows to nonnegative rhs; count auxiliary columns.
        rows_.reserve(m_);
        int slack = 0;
        int art = 0;
        for (const LpRow& r : lp_.rows) {
            LpRow row = r;
            if (row.rhs < 0.0 || (row.rhs == 0.0 && row.sense == RowSense::GreaterEqual)) {
                row.rhs = -row.rhs;
                for (auto& [j, a] : row.coefficients) {
                    a = -a;
                }
                if (row.sense == RowSense::GreaterEqual) {
                    row.sense = RowSense::LessEqual;
                } else if (row.sense == RowSense::LessEqual) {
                    row.sense = RowSense::GreaterEqual;
                }
            }
            if (row.sense != RowSense::Equal) {
                ++slack;
            }
            if (row.sense != RowSense::LessEqual) {
                ++art;
            }
            rows_.push_back(std::move(row));
        }
        num_art_ = art;
        art_begin_ = n + slack;
        cols_ = n + slack + art;
        t_ = Tableau::Zero(m_, cols_ + 1);
        basis_.assign(m_, -1);
        aux_row_.assign(cols_ - n, -1);
        aux_sign_.assign(cols_ - n, 0.0);
        int next_slack = n;
        int next_art = art_begin_;
        for (int i = 0; i < m_; ++i) {
            const LpRow& row = rows_[i];
            for (const auto& [j, a] : row.coefficients) {
                if (j < 0 || j >= n) {
                    throw LpError("constraint references unknown variable " + std::to_string(j));
                }
                t_(i, j) += a;
            }
            t_(i, cols_) = row.rhs;
            auto aux = [&](int col, double sign) {
                t_(i, col) = sign;
                aux_row_[col - n] = i;
                aux_sign_[col - n] = sign;
            };
            if (row.sense == RowSense::LessEqual) {
                aux(next_slack, 1.0);
                basis_[i] = next_slack++;
            } else if (row.sense == RowSense::GreaterEqual) {
                aux(next_slack++, -1.0);
                aux(next_art, 1.0);
                basis_[i] = next_art++;
            } else {
                aux(next_art, 1.0);
                basis_[i] = next_art++;
            }
        }
    }

    // Basic variable values recomputed from the original rows, shedding the
    // round-off accumulated in the tableau.
    Eigen::VectorXd polished_basic_values() const
    {
        const int n = lp_.num_vars;
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m_, m_);
        Eigen::VectorXd rhs(m_);
        std::vector<int> slot(cols_, -1);
        for (int i = 0; i < m_; ++i) {
            slot[basis_[i]] = i;
        }
        for (int i = 0; i < m_; ++i) {
            rhs[i] = rows_[i].rhs;
            for (const auto& [j, a] : rows_[i].coefficients) {
                if (slot[j] >= 0) {
                    b(i, slot[j]) += a;
                }
            }
        }
        for (int j = n; j < cols_; ++j) {
            if (slot[j] >= 0) {
                b(aux_row_[j - n], slot[j]) = aux_sign_[j - n];
            }
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
        Eigen::VectorXd x = lu.solve(rhs);
        if (!x.allFinite()) {
            x = t_.col(cols_);
        }
        return x;
    }

    double objective(const Eigen::VectorXd& c) const
    {
        double z = 0.0;
        for (int i = 0; i < m_; ++i) {
            z += c[basis_[i]] * t_(i, cols_);
        }
        return z;
    }

    void pivot(int r, int e)
    {
        t_.row(r) /= t_(r, e);
        for (int i = 0; i < m_; ++i) {
            if (i == r) {
                continue;
            }
            const double a = t_(i, e);
            if (a != 0.0) {
                t_.row(i) -= a * t_.row(r);
                t_(i, e) = 0.0;
                if (t_(i, cols_) < 0.0 && t_(i, cols_) > -kFeasTol) {
                    t_(i, cols_) = 0.0;
                }
            }
        }
        basis_[r] = e;
    }

    LpStatus iterate(const Eigen::VectorXd& c, bool phase1, int& iterations)
    {
        const int limit = phase1 ? cols_ : art_begin_;
        int degenerate_run = 0;
        Eigen::VectorXd reduced(cols_);
        while (true) {
            if (iterations >= s_.max_iterations) {
                return LpStatus::IterationLimit;
            }
            // reduced costs r_j = c_j - c_B^T column_j
            reduced = c;
            for (int i = 0; i < m_; ++i) {
                const double cb = c[basis_[i]];
                if (cb != 0.0) {
                    reduced -= cb * t_.row(i).head(cols_).transpose();
                }
            }
            const bool bland = degenerate_run >= s_.degenerate_switch;
            int e = -1;
            double best = -s_.tol;
            for (int j = 0; j < limit; ++j) {
                if (reduced[j] < best) {
                    e = j;
                    if (bland) {
                        break;
                    }
                    best = reduced[j];
                }
            }
            if (e < 0) {
                return LpStatus::Optimal;
            }
            // Harris two-pass ratio test: the bound is relaxed by the feasibility
            // tolerance, then the largest pivot under it is taken.
            double col_max = 0.0;
            for (int i = 0; i < m_; ++i) {
                col_max = std::max(col_max, t_(i, e));
            }
            const double piv_tol = std::max(s_.tol, 1e-9 * col_max);
            double bound = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                const double a = t_(i, e);
                if (a > piv_tol) {
                    bound = std::min(bound, (std::max(t_(i, cols_), 0.0) + kFeasTol) / a);
                }
            }
            if (!std::isfinite(bound)) {
                return LpStatus::Unbounded;
            }
            int r = -1;
            double ratio = 0.0;
            for (int i = 0; i < m_; ++i) {
                const double a = t_(i, e);
                if (a > piv_tol) {
                    const double q = std::max(t_(i, cols_), 0.0) / a;
                    if (q <= bound && (r < 0 || a > t_(r, e) || (bland && a == t_(r, e) && basis_[i] < basis_[r]))) {
                        r = i;
                        ratio = q;
                    }
                }
            }
            degenerate_run = ratio <= 1e-12 ? degenerate_run + 1 : 0;
            pivot(r, e);
            ++iterations;
        }
    }

    void drive_out_artificials()
    {
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < art_begin_) {
                continue;
            }
            int best = -1;
            double mag = 1e-9;
            for (int j = 0; j < art_begin_; ++j) {
                if (std::abs(t_(i, j)) > mag) {
                    mag = std::abs(t_(i, j));
                    best = j;
                }
            }
            if (best >= 0) {
                pivot(i, best);
            }
            // otherwise the row is redundant; its artificial stays basic at zero
        }
    }

    const LinearProgram& lp_;
    DenseSimplex::Settings s_;
    std::vector<LpRow> rows_;
    int m_ = 0;
    int cols_ = 0;
    int art_begin_ = 0;
    int num_art_ = 0;
    Tableau t_;
    std::vector<int> basis_;
    std::vector<int> aux_row_;
    std::vector<double> aux_sign_;
};

} // namespace

LpResult DenseSimplex::solve(const LinearProgram& lp) const
{
    if (static_cast<int>(lp.cost.size()) != lp.num_vars) {
        throw LpError("cost vector length does not match the number of variables");
    }
    Solver solver(lp, settings_);
    return solver.run();
}

} // namespace abreu
