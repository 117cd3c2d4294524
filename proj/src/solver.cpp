#include "abreu/solver.hpp"

#include "abreu/error.hpp"
#include "abreu/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

namespace abreu {

void SolverConfig::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw ConfigError(std::string("solver setting '") + name + "' must be positive");
    };
    positive(h, "h");
    if (h_min < 0.0) throw ConfigError("solver setting 'h_min' must be nonnegative");
    positive(tol_residual, "tol_residual");
    positive(fd_step, "fd_step");
    positive(dt_init, "dt_init");
    positive(dt_min, "dt_min");
    positive(cap_factor, "cap_factor");
    if (max_iters < 1) throw ConfigError("solver setting 'max_iters' must be at least 1");
    if (max_halvings < 0) throw ConfigError("solver setting 'max_halvings' must be nonnegative");
    if (dt_min > dt_init) throw ConfigError("solver setting 'dt_min' must not exceed 'dt_init'");
    if (!(grow >= 1.0)) throw ConfigError("solver setting 'grow' must be at least 1");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("solver setting 'shrink' must lie in (0, 1)");
    if (threads < 0) throw ConfigError("solver setting 'threads' must be nonnegative");
}

int worker_count(int requested)
{
    int count = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("ABREU_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap > 0) count = static_cast<int>(std::min<long>(count, cap));
    }
    return std::max(1, count);
}

// ---------------------------------------------------------------------------

ContinuityPath::ContinuityPath(std::shared_ptr<const Polytope> polytope, std::shared_ptr<const GridSpec> grid,
                               DHData dh, std::vector<double> target)
    : polytope_(std::move(polytope)), grid_(std::move(grid)), stencil_(polytope_, grid_, std::move(dh))
{
    if (target.size() != grid_->size()) throw DomainError("target field size does not match the grid");
    const std::vector<Mat2> zero(grid_->size(), Mat2::Zero());
    a0_ = stencil_.apply(zero);
    a1_ = std::move(target);
    for (std::size_t n = 0; n < grid_->size(); ++n) {
        if (stencil_.masked()[n]) {
            a1_[n] = std::numeric_limits<double>::quiet_NaN();
        } else if (!std::isfinite(a1_[n])) {
            throw DomainError("target field is not finite at node " + std::to_string(n));
        }
    }
}

std::vector<double> ContinuityPath::a_t(double t) const
{
    if (t == 0.0) return a0_;
    if (t == 1.0) return a1_;
    std::vector<double> out(a0_.size());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = t * a1_[n] + (1.0 - t) * a0_[n];
    return out;
}

bool ContinuityPath::constant() const
{
    for (std::size_t n = 0; n < a0_.size(); ++n)
        if (!stencil_.masked()[n] && a0_[n] != a1_[n]) return false;
    return true;
}

ContinuityPath build_path(std::shared_ptr<const Polytope> polytope, DHData dh, const ScalarField& target,
                          std::shared_ptr<const GridSpec> grid)
{
    const std::vector<char> masked = stencil_mask(*grid);
    std::vector<double> values(grid->size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t n = 0; n < grid->size(); ++n)
        if (!masked[n]) values[n] = target(grid->node(n).xi);
    return ContinuityPath(std::move(polytope), std::move(grid), std::move(dh), std::move(values));
}

ContinuityPath build_path(std::shared_ptr<const Polytope> polytope, DHData dh, std::vector<double> target,
                          std::shared_ptr<const GridSpec> grid)
{
    return ContinuityPath(std::move(polytope), std::move(grid), std::move(dh), std::move(target));
}

// ---------------------------------------------------------------------------

DiscreteSystem::DiscreteSystem(const ContinuityPath& path, std::vector<double> a_t,
                               const std::vector<double>& psi_init, int threads, double fd_step, bool central)
    : path_(path),
      a_t_(std::move(a_t)),
      ring_base_(psi_init),
      threads_(std::max(1, threads)),
      fd_step_(fd_step),
      central_(central)
{
    const GridSpec& grid = path.grid();
    if (psi_init.size() != grid.size()) throw DomainError("initial psi size does not match the grid");
    for (std::size_t n = 0; n < grid.size(); ++n) {
        (path.stencil().masked()[n] ? masked_ : unmasked_).push_back(static_cast<int>(n));
    }
    if (unmasked_.empty()) throw DomainError("grid has no unmasked nodes; refine h");
}

Eigen::VectorXd DiscreteSystem::pack(const std::vector<double>& psi) const
{
    Eigen::VectorXd z = Eigen::VectorXd::Zero(size());
    for (std::size_t k = 0; k < unmasked_.size(); ++k) z[static_cast<Eigen::Index>(k)] = psi[unmasked_[k]];
    // Ring offset relative to the frozen base, fitted by least squares (exact
    // when psi came from unpack).
    if (!masked_.empty()) {
        Eigen::MatrixXd a(masked_.size(), 3);
        Eigen::VectorXd b(masked_.size());
        for (std::size_t k = 0; k < masked_.size(); ++k) {
            const Vec2& xi = path_.grid().node(masked_[k]).xi;
            a.row(static_cast<Eigen::Index>(k)) << 1.0, xi.x(), xi.y();
            b[static_cast<Eigen::Index>(k)] = psi[masked_[k]] - ring_base_[masked_[k]];
        }
        z.tail<3>() = a.colPivHouseholderQr().solve(b);
    }
    return z;
}

std::vector<double> DiscreteSystem::unpack(const Eigen::VectorXd& z) const
{
    std::vector<double> psi(path_.grid().size());
    for (std::size_t k = 0; k < unmasked_.size(); ++k) psi[unmasked_[k]] = z[static_cast<Eigen::Index>(k)];
    const Eigen::Index o = static_cast<Eigen::Index>(unmasked_.size());
    for (int n : masked_) {
        const Vec2& xi = path_.grid().node(n).xi;
        psi[n] = ring_base_[n] + z[o] + z[o + 1] * xi.x() + z[o + 2] * xi.y();
    }
    return psi;
}

std::vector<double> DiscreteSystem::operator_residual(const std::vector<double>& psi) const
{
    SymplecticPotential u(path_.polytope_ptr(), path_.grid_ptr(), psi);
    std::vector<double> s = path_.stencil().apply(u.psi_node_hessians());
    std::vector<double> r;
    r.reserve(unmasked_.size());
    for (int n : unmasked_) r.push_back(s[n] - a_t_[n]);
    return r;
}

Eigen::VectorXd DiscreteSystem::residual(const Eigen::VectorXd& z) const
{
    const std::vector<double> psi = unpack(z);
    SymplecticPotential u(path_.polytope_ptr(), path_.grid_ptr(), psi);
    const std::vector<double> s = path_.stencil().apply(u.psi_node_hessians());
    Eigen::VectorXd f(size());
    for (std::size_t k = 0; k < unmasked_.size(); ++k) {
        f[static_cast<Eigen::Index>(k)] = s[unmasked_[k]] - a_t_[unmasked_[k]];
    }
    const TensorSpline::Jet pin = u.psi_jet(path_.polytope().base_point());
    const Eigen::Index o = static_cast<Eigen::Index>(unmasked_.size());
    f[o] = pin.value;
    f[o + 1] = pin.gradient.x();
    f[o + 2] = pin.gradient.y();
    return f;
}

Eigen::MatrixXd DiscreteSystem::jacobian(const Eigen::VectorXd& z, const Eigen::VectorXd& f) const
{
    const int m = size();
    Eigen::MatrixXd jac(m, m);
    std::vector<std::exception_ptr> errors(threads_);
    auto work = [&](int w) {
        try {
            Eigen::VectorXd zp = z;
            for (int j = w; j < m; j += threads_) {
                const double step = fd_step_ * std::max(1.0, std::abs(z[j]));
                zp[j] = z[j] + step;
                const double up = zp[j] - z[j];
                if (central_) {
                    const Eigen::VectorXd fp = residual(zp);
                    zp[j] = z[j] - step;
                    const double down = z[j] - zp[j];
                    jac.col(j) = (fp - residual(zp)) / (up + down);
                } else {
                    jac.col(j) = (residual(zp) - f) / up;
                }
                zp[j] = z[j];
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (threads_ == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads_; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return jac;
}

// ---------------------------------------------------------------------------

NewtonResult newton_solve(const ContinuityPath& path, double t, const std::vector<double>& psi_init,
                          const SolverConfig& config)
{
    config.validate();
    DiscreteSystem system(path, path.a_t(t), psi_init, worker_count(config.threads), config.fd_step,
                          config.central_differences);
    NewtonResult out;
    Eigen::VectorXd z = system.pack(psi_init);
    Eigen::VectorXd f;
    try {
        f = system.residual(z);
    } catch (const ConvexityError& e) {
        out.psi = psi_init;
        out.residual = std::numeric_limits<double>::infinity();
        out.failure = std::string("initial iterate is not convex: ") + e.what();
        return out;
    }
    double norm = f.lpNorm<Eigen::Infinity>();
    out.residual_history.push_back(norm);
    while (norm > config.tol_residual) {
        if (out.iterations >= config.max_iters) {
            out.failure = "maximum Newton iterations reached (residual " + format_double(norm) + ")";
            break;
        }
        auto lu = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(system.jacobian(z, f));
        out.last_jacobian = lu;
        const Eigen::VectorXd step = lu->solve(-f);
        if (!step.allFinite()) {
            out.failure = "singular Jacobian";
            break;
        }
        double alpha = 1.0;
        bool accepted = false;
        const double merit = f.norm();
        std::string last_problem;
        for (int k = 0; k <= config.max_halvings; ++k, alpha *= 0.5) {
            const Eigen::VectorXd trial = z + alpha * step;
            try {
                Eigen::VectorXd ft = system.residual(trial);
                if (ft.allFinite() && ft.norm() < merit) {
                    z = trial;
                    f = std::move(ft);
                    accepted = true;
                    break;
                }
                last_problem = "no residual decrease";
            } catch (const ConvexityError& e) {
                last_problem = e.what();
            }
        }
        ++out.iterations;
        if (!accepted) {
            out.failure = "damping exhausted after " + std::to_string(config.max_halvings) +
                          " halvings: " + last_problem;
            break;
        }
        norm = f.lpNorm<Eigen::Infinity>();
        out.residual_history.push_back(norm);
    }
    out.converged = norm <= config.tol_residual;
    if (out.converged) out.failure.clear();
    out.residual = norm;
    out.psi = system.unpack(z);
    return out;
}

// ---------------------------------------------------------------------------

int SolutionTrace::accepted_steps() const
{
    int n = 0;
    for (const PathStep& s : steps)
        if (s.accepted && s.t > 0.0) ++n;
    return n;
}

namespace {

void fill_diagnostics(PathStep& step, const ContinuityPath& path, const std::vector<double>& psi)
{
    SymplecticPotential u(path.polytope_ptr(), path.grid_ptr(), psi);
    const DiagnosticsReport d = diagnostics(u, path.dh());
    step.oscillation = d.oscillation;
    step.h_proxy_min = d.h_proxy_min;
    step.h_proxy_max = d.h_proxy_max;
    step.boundary_proxy = std::numeric_limits<double>::infinity();
    for (const FacetDiagnostic& f : d.facets)
        if (f.node >= 0) step.boundary_proxy = std::min(step.boundary_proxy, f.min_delta_det);
    if (!std::isfinite(step.boundary_proxy)) step.boundary_proxy = 0.0;
}

struct Caps {
    double oscillation;
    double h_proxy_max;
    double h_proxy_min;
    double boundary_proxy;
};

void check_caps(PathStep& step, const Caps& caps)
{
    if (step.oscillation > caps.oscillation)
        step.warnings.push_back("max-min of u " + format_double(step.oscillation) + " exceeds cap " +
                                format_double(caps.oscillation));
    if (step.h_proxy_max > caps.h_proxy_max)
        step.warnings.push_back("H-proxy " + format_double(step.h_proxy_max) + " exceeds cap " +
                                format_double(caps.h_proxy_max));
    if (step.h_proxy_min < caps.h_proxy_min)
        step.warnings.push_back("H-proxy " + format_double(step.h_proxy_min) + " below floor " +
                                format_double(caps.h_proxy_min));
    if (step.boundary_proxy < caps.boundary_proxy)
        step.warnings.push_back("boundary determinant proxy " + format_double(step.boundary_proxy) +
                                " below floor " + format_double(caps.boundary_proxy));
}

} // namespace

SolutionTrace continue_path(ContinuityPath& path, const SolverConfig& config)
{
    config.validate();
    SolutionTrace trace;
    path.schedule.clear();

    PathStep start;
    const NewtonResult first = newton_solve(path, 0.0, std::vector<double>(path.grid().size(), 0.0), config);
    start.iterations = first.iterations;
    start.residual = first.residual;
    start.accepted = first.converged;
    fill_diagnostics(start, path, first.psi);
    trace.steps.push_back(start);
    trace.psi = first.psi;
    if (!first.converged) {
        trace.message = "could not solve at t = 0: " + first.failure;
        return trace;
    }
    path.schedule.push_back(0.0);
    const Caps caps{config.cap_factor * std::max(start.oscillation, std::numeric_limits<double>::min()),
                    config.cap_factor * start.h_proxy_max, start.h_proxy_min / config.cap_factor,
                    start.boundary_proxy / config.cap_factor};

    const int threads = worker_count(config.threads);
    double t = 0.0;
    double dt = path.constant() ? 1.0 : config.dt_init;
    std::shared_ptr<const Eigen::PartialPivLU<Eigen::MatrixXd>> lu = first.last_jacobian;
    std::vector<double> psi = first.psi;

    // dz/dt = J^{-1} (A_1 - A_0) on the unmasked rows; pins do not depend on t.
    auto tangent = [&](const std::vector<double>& at) -> std::vector<double> {
        DiscreteSystem system(path, path.a_t(t), at, threads, config.fd_step, config.central_differences);
        Eigen::VectorXd z = system.pack(at);
        if (!lu) {
            const Eigen::VectorXd f = system.residual(z);
            lu = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(system.jacobian(z, f));
        }
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(system.size());
        const auto& nodes = system.unmasked_nodes();
        for (std::size_t k = 0; k < nodes.size(); ++k)
            rhs[static_cast<Eigen::Index>(k)] = path.a1()[nodes[k]] - path.a0()[nodes[k]];
        Eigen::VectorXd dz = lu->solve(rhs);
        return system.unpack(z + dz) ; // psi + dpsi/dt with the ring offset included
    };

    while (t < 1.0) {
        const double target = std::min(1.0, t + dt);
        PathStep step;
        step.t = target;
        step.dt = target - t;
        std::vector<double> guess = psi;
        if (!path.constant()) {
            try {
                const std::vector<double> ahead = tangent(psi);
                for (std::size_t n = 0; n < guess.size(); ++n) guess[n] = psi[n] + step.dt * (ahead[n] - psi[n]);
                SymplecticPotential check(path.polytope_ptr(), path.grid_ptr(), guess);
                path.stencil().apply(check.psi_node_hessians()); // convexity of the prediction
            } catch (const ConvexityError&) {
                guess = psi;
            }
        }
        const NewtonResult r = newton_solve(path, target, guess, config);
        step.iterations = r.iterations;
        step.residual = r.residual;
        if (r.converged) {
            step.accepted = true;
            fill_diagnostics(step, path, r.psi);
            check_caps(step, caps);
            trace.steps.push_back(step);
            psi = r.psi;
            t = target;
            path.schedule.push_back(t);
            lu = r.last_jacobian;
            if (r.iterations <= config.grow_after) dt *= config.grow;
        } else {
            step.failure = r.failure;
            try {
                fill_diagnostics(step, path, r.psi);
            } catch (const Error&) {
            }
            trace.steps.push_back(step);
            dt *= config.shrink;
            if (dt < config.dt_min) {
                trace.blocking_t = target;
                trace.final_t = t;
                trace.psi = psi;
                std::ostringstream msg;
                msg << "continuation stalled: step below dt_min at t = " << format_double(t)
                    << " while trying to reach t = " << format_double(target) << " (" << r.failure << ")";
                trace.message = msg.str();
                return trace;
            }
        }
    }
    trace.success = true;
    trace.final_t = 1.0;
    trace.psi = psi;
    trace.message = "reached t = 1";
    return trace;
}

std::string trace_to_jsonl(const SolutionTrace& trace)
{
    std::string out;
    for (const PathStep& s : trace.steps) {
        nlohmann::ordered_json j;
        j["t"] = s.t;
        j["dt"] = s.dt;
        j["accepted"] = s.accepted;
        j["iterations"] = s.iterations;
        j["residual"] = s.residual;
        j["oscillation"] = s.oscillation;
        j["h_proxy_min"] = s.h_proxy_min;
        j["h_proxy_max"] = s.h_proxy_max;
        j["boundary_proxy"] = s.boundary_proxy;
        j["warnings"] = s.warnings;
        if (!s.failure.empty()) j["failure"] = s.failure;
        out += j.dump() + "\n";
    }
    return out;
}

} // namespace abreu
