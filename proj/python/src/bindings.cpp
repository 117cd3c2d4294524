// Python module: configuration, the CLI commands, and a few array-valued queries.

#include "abreu/io.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

namespace py = pybind11;
using namespace abreu;

namespace {

struct RunResult {
    int code = 0;
    std::string out;
    std::string err;
};

ProblemConfig with_h(ProblemConfig c, std::optional<double> h)
{
    if (h) {
        if (!(*h > 0.0)) throw ConfigError(ConfigErrorKind::Domain, "grid h must be positive");
        c.grid.h = *h;
        c.solver.h = *h;
    }
    return c;
}

py::dict curvature(const ProblemConfig& config)
{
    const Problem p = assemble(config);
    const OperatorField f = scalar_curvature(p.probe(), p.dh);
    py::list xi, value, masked;
    for (std::size_t n = 0; n < f.value.size(); ++n) {
        const Vec2& x = p.grid->node(n).xi;
        xi.append(py::make_tuple(x.x(), x.y()));
        value.append(f.value[n]);
        masked.append(static_cast<bool>(f.masked[n]));
    }
    py::dict d;
    d["xi"] = xi;
    d["value"] = value;
    d["masked"] = masked;
    return d;
}

py::dict stability(const ProblemConfig& config)
{
    const Problem p = assemble(config);
    StabilitySettings s;
    s.functional.tol_quad = config.functional.tol_quad;
    s.functional.sign = config.prescribed.sign;
    s.enforce_affine_vanishing = config.prescribed.enforce_affine;
    s.cell_rule = config.stability.cell_rule;
    const StabilityCertificate c = stability_lambda(p.data, *p.polytope, config.stability.size, s);
    py::dict d;
    d["lambda_star"] = c.lambda_star;
    d["values"] = c.values;
    d["binding_constraints"] = c.binding_count;
    d["hinge_constraints"] = c.hinge_count;
    d["max_hinge_violation"] = c.max_hinge_violation;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Generalized Abreu equation toolkit (C++ core)";

    auto base = py::register_exception<Error>(m, "AbreuError");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<ConvexityError>(m, "ConvexityError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<LpError>(m, "LpError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<ProblemConfig>(m, "Config")
        .def_static("parse", [](const std::string& text) { return parse_config(text); }, py::arg("text"))
        .def_static("load", &load_config, py::arg("path"))
        .def("serialize", &serialize_config)
        .def_property_readonly("grid_h", [](const ProblemConfig& c) { return c.grid.h; })
        .def_property_readonly("facet_count", [](const ProblemConfig& c) { return c.polytope.facets.size(); })
        .def("with_grid_h", [](const ProblemConfig& c, double h) { return with_h(c, h); }, py::arg("h"))
        .def("__repr__", [](const ProblemConfig& c) {
            std::ostringstream s;
            s << "<abreu.Config facets=" << c.polytope.facets.size() << " h=" << c.grid.h << ">";
            return s.str();
        });

    py::class_<RunResult>(m, "RunResult")
        .def_readonly("code", &RunResult::code)
        .def_readonly("stdout", &RunResult::out)
        .def_readonly("stderr", &RunResult::err);

    m.def(
        "run",
        [](const std::string& command, const ProblemConfig& config, const std::string& out,
           std::optional<std::uint64_t> seed) {
            const auto cmd = parse_command(command);
            if (!cmd) throw ConfigError(ConfigErrorKind::UnknownKey, "unknown command '" + command + "'");
            RunOptions opts;
            opts.out_dir = out;
            opts.seed = seed;
            std::ostringstream o, e;
            RunResult r;
            {
                py::gil_scoped_release release;
                r.code = run_command(config, *cmd, opts, o, e);
            }
            r.out = o.str();
            r.err = e.str();
            return r;
        },
        py::arg("command"), py::arg("config"), py::arg("out") = ".", py::arg("seed") = py::none(),
        "Run one CLI command; returns the exit code and the captured output.");

    m.def("curvature", &curvature, py::arg("config"), "Scalar curvature of the probe potential at the grid nodes.");
    m.def("stability", &stability, py::arg("config"), "Stability constant and extremal PL function.");
    m.def(
        "affine_check",
        [](const ProblemConfig& config) {
            const Problem p = assemble(config);
            FunctionalSettings s;
            s.tol_quad = config.functional.tol_quad;
            s.sign = config.prescribed.sign;
            const AffineCheck c = check_affine_vanishing(p.data, *p.polytope, s);
            return std::vector<double>(c.values.begin(), c.values.end());
        },
        py::arg("config"), "L_A(1), L_A(xi1), L_A(xi2).");
    m.def(
        "evaluate",
        [](const std::string& expression, double xi1, double xi2) {
            return Expression::parse(expression)(Vec2(xi1, xi2));
        },
        py::arg("expression"), py::arg("xi1"), py::arg("xi2"), "Evaluate an A-expression at one point.");

    py::module_ codes = m.def_submodule("exit_code", "CLI exit codes");
    codes.attr("OK") = exit_code::ok;
    codes.attr("INTERNAL") = exit_code::internal;
    codes.attr("USAGE") = exit_code::usage;
    codes.attr("CONFIG") = exit_code::config;
    codes.attr("VALIDATION") = exit_code::validation;
    codes.attr("DOMAIN") = exit_code::domain;
    codes.attr("CONVEXITY") = exit_code::convexity;
    codes.attr("CONVERGENCE") = exit_code::convergence;
    codes.attr("LP") = exit_code::lp;
    codes.attr("STALLED") = exit_code::stalled;
    codes.attr("IO") = exit_code::io;
}
