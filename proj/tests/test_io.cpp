#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "abreu/io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace abreu;

namespace {

const char* kSquare = R"(# unit square
[polytope]
normal = [1, 0], offset = 0
normal = [0, 1], offset = 0
normal = [-1, 0], offset = -1
normal = [0, -1], offset = -1
)";

ConfigError config_error(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError");
    return ConfigError("unreachable");
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("abreu-io-test-" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("minimal config gets defaults")
{
    const ProblemConfig c = parse_config(kSquare);
    CHECK(c.polytope.facets.size() == 4);
    CHECK_FALSE(c.polytope.base_point.has_value());
    CHECK(c.bundle.roots.empty());
    CHECK(c.prescribed.kind == AKind::Endpoint);
    CHECK(c.prescribed.sign == LSign::Minus);
    CHECK(c.grid.h == 1.0 / 32.0);
    CHECK(c.solver.h == c.grid.h);
    CHECK(c.functional.tol_quad == 1e-8);
    CHECK(c.stability.size == 16);

    const Problem p = assemble(c);
    CHECK(p.polytope->base_point().x() == doctest::Approx(0.5));
    CHECK(p.polytope->base_point().y() == doctest::Approx(0.5));
    CHECK(p.dh.toric());
}

TEST_CASE("expressions")
{
    const Expression e = Expression::parse("4 + 0.1*log(xi1)");
    CHECK(e(Vec2(std::exp(1.0), 0.3)) == doctest::Approx(4.1).epsilon(1e-15));
    CHECK(Expression::parse("2^3^2")(Vec2::Zero()) == 512.0);
    CHECK(Expression::parse("-2^2")(Vec2::Zero()) == -4.0);
    CHECK(Expression::parse("max(xi1, xi2) - min(1, 2) * pi / e")(Vec2(0.2, 0.7)) ==
          doctest::Approx(0.7 - M_PI / std::exp(1.0)));
    CHECK(Expression::parse("3").is_constant());
    CHECK_FALSE(Expression::parse("xi1").is_constant());

    for (const char* text : {"1 + xi1 * (xi2 - 3) / 2", "exp(-xi1^2) + sqrt(xi2)", "-(xi1 - 1)^3"}) {
        const Expression a = Expression::parse(text);
        const Expression b = Expression::parse(a.str());
        CHECK(b.str() == a.str());
        CHECK(b(Vec2(0.3, 0.4)) == a(Vec2(0.3, 0.4)));
    }

    CHECK_THROWS_AS(Expression::parse("log(xi1 - 1)")(Vec2(0.5, 0.5)), DomainError);
    CHECK_THROWS_AS(Expression::parse("sqrt(xi2)")(Vec2(0.5, -1.0)), DomainError);
    CHECK_THROWS_AS(Expression::parse("1 / xi1")(Vec2(0.0, 1.0)), DomainError);

    try {
        Expression::parse("1 + * 2", 7, 5);
        FAIL("expected a syntax error");
    } catch (const ConfigError& err) {
        CHECK(err.kind() == ConfigErrorKind::Syntax);
        CHECK(err.line() == 7);
        CHECK(err.column() == 9);
    }
    CHECK_THROWS_AS(Expression::parse("foo(1)"), ConfigError);
    CHECK_THROWS_AS(Expression::parse("(1 + 2"), ConfigError);
}

TEST_CASE("config error kinds and positions")
{
    const std::string base = kSquare;
    ConfigError e = config_error(base + "[bundle]\nroots = [[1,0],[0,-1]]\n");
    CHECK(e.kind() == ConfigErrorKind::Domain);
    CHECK(std::string(e.what()).find("negative M entry") != std::string::npos);
    CHECK(e.line() == 8);

    e = config_error(base + "[grid]\nhh = 0.1\n");
    CHECK(e.kind() == ConfigErrorKind::UnknownKey);
    CHECK(e.line() == 8);
    CHECK(e.column() == 1);

    e = config_error(base + "[gird]\n");
    CHECK(e.kind() == ConfigErrorKind::UnknownKey);

    e = config_error(base + "[grid]\nh = -0.1\n");
    CHECK(e.kind() == ConfigErrorKind::Domain);

    e = config_error(base + "[grid]\nh = abc\n");
    CHECK(e.kind() == ConfigErrorKind::TypeMismatch);

    e = config_error(base + "[stability]\nsize = 8\nsize = 16\n");
    CHECK(e.kind() == ConfigErrorKind::Syntax);
    CHECK(e.line() == 9);

    e = config_error("[grid]\nh = 0.1\n");
    CHECK(e.kind() == ConfigErrorKind::Missing);

    e = config_error(base + "[prescribed]\nA = 4 + (\n");
    CHECK(e.kind() == ConfigErrorKind::Syntax);
    CHECK(e.line() == 8);

    e = config_error(base + "no section line\n");
    CHECK(e.kind() == ConfigErrorKind::Syntax);
}

TEST_CASE("serializer round trip")
{
    const std::string text = std::string(kSquare) + R"(p_o = [1/3, 2/5]
[bundle]
roots = [[1, 0], [1/2, 3]]
sigma = [1, 2]
[prescribed]
A = 4 + 0.1*log(xi1)
perturbation = 0.5 * xi1^2
sign = plus
enforce_affine = false
[grid]
h = 1/16
h_min = 0.2
[functional]
tol_quad = 1e-9
[stability]
size = 12
cell_rule = 4
[solver]
max_iters = 12
dt_init = 0.05
)";
    const ProblemConfig c = parse_config(text);
    const std::string once = serialize_config(c);
    const ProblemConfig again = parse_config(once);
    CHECK(serialize_config(again) == once);
    CHECK(again.prescribed.sign == LSign::Plus);
    CHECK_FALSE(again.prescribed.enforce_affine);
    CHECK(again.bundle.roots[1][0] == Rational(1, 2));
    CHECK(again.solver.max_iters == 12);
    CHECK(again.solver.h == 1.0 / 16.0);
    CHECK(again.solver.h_min == 0.2);
    CHECK(again.stability.cell_rule == 4);
    CHECK(again.prescribed.expression(Vec2(std::exp(1.0), 0.0)) == doctest::Approx(4.1));
}

TEST_CASE("assembly")
{
    const std::string base = kSquare;
    // Sigma defaults to the root sum.
    const Problem p = assemble(parse_config("[polytope]\nnormal = [1, 0], offset = 4\nnormal = [0, 1], offset = 4\n"
                                            "normal = [-1, 0], offset = -5\nnormal = [0, -1], offset = -5\n"
                                            "[bundle]\nroots = [[1, 0], [2, 1]]\n"));
    CHECK(p.dh.sigma().x() == 3.0);
    CHECK(p.dh.sigma().y() == 1.0);
    // D_alpha vanishes on the facet xi_1 = 0.
    CHECK_THROWS_AS(assemble(parse_config(base + "[bundle]\nroots = [[1, 0]]\n")), ValidationError);
    // Non-Delzant geometry.
    CHECK_THROWS_AS(assemble(parse_config("[polytope]\nnormal = [1, 0], offset = 0\nnormal = [0, 1], offset = 0\n"
                                          "normal = [-2, -1], offset = -2\n")),
                    ValidationError);

    const Problem endpoint = assemble(parse_config(base));
    const std::vector<double> target = endpoint.solver_target();
    const ContinuityPath path = build_path(endpoint.polytope, endpoint.dh, target, endpoint.grid);
    CHECK(path.constant());
}

TEST_CASE("commands and exit codes")
{
    CHECK(parse_command("export-plot") == Command::ExportPlot);
    CHECK_FALSE(parse_command("frobnicate").has_value());
    CHECK(to_string(Command::Stability) == "stability");

    CHECK(exit_code_for(ConfigError("x")) == exit_code::config);
    CHECK(exit_code_for(ValidationError("x")) == exit_code::validation);
    CHECK(exit_code_for(PolytopeError(PolytopeFault::Unbounded, -1, "x")) == exit_code::validation);
    CHECK(exit_code_for(DomainError("x")) == exit_code::domain);
    CHECK(exit_code_for(ConvexityError("x")) == exit_code::convexity);
    CHECK(exit_code_for(ConvergenceError("x")) == exit_code::convergence);
    CHECK(exit_code_for(LpError("x")) == exit_code::lp);
    CHECK(exit_code_for(IoError("x")) == exit_code::io);
    CHECK(exit_code_for(std::runtime_error("x")) == exit_code::internal);
}

TEST_CASE("run_command writes deterministic artifacts")
{
    ProblemConfig c = parse_config(std::string(kSquare) + "[grid]\nh = 1/16\n[stability]\nsize = 4\n");
    const auto dir = scratch("run");
    RunOptions opts;
    opts.out_dir = dir.string();
    std::ostringstream out, err;

    CHECK(run_command(c, Command::Validate, opts, out, err) == 0);
    const nlohmann::json v = nlohmann::json::parse(read_file(dir / "validate.json"));
    CHECK(v["polytope"]["valid"].get<bool>());
    CHECK(v["polytope"]["vertices"].size() == 4);

    CHECK(run_command(c, Command::Curvature, opts, out, err) == 0);
    const std::string first = read_file(dir / "curvature.csv");
    CHECK(run_command(c, Command::Curvature, opts, out, err) == 0);
    CHECK(read_file(dir / "curvature.csv") == first);
    std::istringstream rows(first);
    std::string line;
    std::getline(rows, line);
    int checked = 0;
    while (std::getline(rows, line)) {
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) cols.push_back(f);
        REQUIRE(cols.size() >= 6);
        if (cols[5] == "1") continue;
        CHECK(std::abs(std::stod(cols[4]) - 4.0) < 1e-9);
        ++checked;
    }
    CHECK(checked > 0);

    CHECK(run_command(c, Command::Stability, opts, out, err) == 0);
    const nlohmann::json cert = nlohmann::json::parse(read_file(dir / "certificate.json"));
    CHECK(cert["lambda_star"].get<double>() > 0.0);

    opts.seed = 3;
    CHECK(run_command(c, Command::Solve, opts, out, err) == 0);
    CHECK(std::filesystem::exists(dir / "psi.csv"));
    CHECK(out.str().find("path steps: 1 accepted") != std::string::npos);

    ProblemConfig bad = parse_config(std::string(kSquare) + "[prescribed]\nA = constant 0\n");
    std::ostringstream e2;
    CHECK(run_command(bad, Command::Stability, opts, out, e2) == exit_code::validation);
    CHECK(e2.str().rfind("abreu: ", 0) == 0);

    std::filesystem::remove_all(dir);
}

TEST_CASE("Jacobian self-check")
{
    const Problem p = assemble(parse_config(std::string(kSquare) + "[grid]\nh = 1/16\n"));
    const ContinuityPath path = build_path(p.polytope, p.dh, p.solver_target(), p.grid);
    const JacobianCheck j = jacobian_self_check(path, 1.0, std::vector<double>(p.grid->size(), 0.0), SolverConfig{}, 5);
    CHECK(j.relative_error <= 1e-4);
}
