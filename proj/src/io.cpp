#include "abreu/io.hpp"

#include "abreu/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace abreu {

// ---------------------------------------------------------------------------
// Expressions

struct Expression::Node {
    enum class Kind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Log, Exp, Sqrt, Max, Min };
    Kind kind = Kind::Number;
    double value = 0.0;   // Number
    int variable = 0;     // Variable: 0 -> xi1, 1 -> xi2
    std::string name;     // Number: spelling of a named constant, if any
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
};

namespace {

using Node = Expression::Node;
using Kind = Expression::Node::Kind;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_number(double v, std::string name = {})
{
    auto n = std::make_shared<Node>();
    n->kind = Kind::Number;
    n->value = v;
    n->name = std::move(name);
    return n;
}

NodePtr make_node(Kind kind, NodePtr a, NodePtr b = nullptr)
{
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class ExprParser {
public:
    ExprParser(std::string_view text, int line, int column) : s_(text), line_(line), column_(column) {}

    NodePtr parse()
    {
        skip();
        if (pos_ >= s_.size()) fail("empty expression");
        NodePtr e = expr();
        skip();
        if (pos_ < s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const
    {
        throw ConfigError(ConfigErrorKind::Syntax, "expression: " + what, line_,
                          column_ + static_cast<int>(pos_));
    }

    void skip()
    {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    bool eat(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr()
    {
        NodePtr lhs = term();
        while (true) {
            if (eat('+')) {
                lhs = make_node(Kind::Add, lhs, term());
            } else if (eat('-')) {
                lhs = make_node(Kind::Sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr term()
    {
        NodePtr lhs = factor();
        while (true) {
            if (eat('*')) {
                lhs = make_node(Kind::Mul, lhs, factor());
            } else if (eat('/')) {
                lhs = make_node(Kind::Div, lhs, factor());
            } else {
                return lhs;
            }
        }
    }

    // Unary minus binds looser than '^': -x^2 = -(x^2).
    NodePtr factor()
    {
        if (eat('-')) return make_node(Kind::Negate, factor());
        if (eat('+')) return factor();
        return power();
    }

    NodePtr power()
    {
        NodePtr base = primary();
        if (eat('^')) return make_node(Kind::Pow, base, factor());
        return base;
    }

    NodePtr primary()
    {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr inner = expr();
            if (!eat(')')) fail("expected ')'");
            return inner;
        }
        if (is_digit(c) || c == '.') return number();
        if (is_ident_start(c)) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && is_ident_char(s_[pos_])) ++pos_;
            const std::string id(s_.substr(start, pos_ - start));
            if (id == "xi1" || id == "xi2") {
                auto n = std::make_shared<Node>();
                n->kind = Kind::Variable;
                n->variable = id == "xi1" ? 0 : 1;
                return n;
            }
            if (id == "pi") return make_number(std::numbers::pi, "pi");
            if (id == "e") return make_number(std::numbers::e, "e");
            Kind fn;
            if (id == "log") {
                fn = Kind::Log;
            } else if (id == "exp") {
                fn = Kind::Exp;
            } else if (id == "sqrt") {
                fn = Kind::Sqrt;
            } else if (id == "max") {
                fn = Kind::Max;
            } else if (id == "min") {
                fn = Kind::Min;
            } else {
                pos_ = start;
                fail("unknown name '" + id + "'");
            }
            if (!eat('(')) fail("expected '(' after " + id);
            NodePtr arg = expr();
            NodePtr second;
            if (fn == Kind::Max || fn == Kind::Min) {
                if (!eat(',')) fail("expected ',' in " + id + "(a, b)");
                second = expr();
            }
            if (!eat(')')) fail("expected ')'");
            return make_node(fn, arg, second);
        }
        fail(std::string("unexpected '") + c + "'");
    }

    NodePtr number()
    {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (is_digit(s_[pos_]) || s_[pos_] == '.')) ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t k = pos_ + 1;
            if (k < s_.size() && (s_[k] == '+' || s_[k] == '-')) ++k;
            if (k < s_.size() && is_digit(s_[k])) {
                pos_ = k;
                while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
            }
        }
        double v = 0.0;
        const char* first = s_.data() + start;
        const char* last = s_.data() + pos_;
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
            pos_ = start;
            fail("malformed number");
        }
        return make_number(v);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
    int column_;
};

double eval_node(const Node& n, const Vec2& xi)
{
    switch (n.kind) {
    case Kind::Number:
        return n.value;
    case Kind::Variable:
        return xi[n.variable];
    case Kind::Negate:
        return -eval_node(*n.a, xi);
    case Kind::Add:
        return eval_node(*n.a, xi) + eval_node(*n.b, xi);
    case Kind::Sub:
        return eval_node(*n.a, xi) - eval_node(*n.b, xi);
    case Kind::Mul:
        return eval_node(*n.a, xi) * eval_node(*n.b, xi);
    case Kind::Div:
        return eval_node(*n.a, xi) / eval_node(*n.b, xi);
    case Kind::Pow:
        return std::pow(eval_node(*n.a, xi), eval_node(*n.b, xi));
    case Kind::Log: {
        const double a = eval_node(*n.a, xi);
        if (!(a > 0.0)) throw DomainError("expression: log of a nonpositive value");
        return std::log(a);
    }
    case Kind::Exp:
        return std::exp(eval_node(*n.a, xi));
    case Kind::Sqrt: {
        const double a = eval_node(*n.a, xi);
        if (a < 0.0) throw DomainError("expression: sqrt of a negative value");
        return std::sqrt(a);
    }
    case Kind::Max:
        return std::max(eval_node(*n.a, xi), eval_node(*n.b, xi));
    case Kind::Min:
        return std::min(eval_node(*n.a, xi), eval_node(*n.b, xi));
    }
    return 0.0;
}

bool has_variable(const Node& n)
{
    if (n.kind == Kind::Variable) return true;
    return (n.a && has_variable(*n.a)) || (n.b && has_variable(*n.b));
}

void print_node(const Node& n, std::string& out)
{
    auto binary = [&](const char* op) {
        out += '(';
        print_node(*n.a, out);
        out += op;
        print_node(*n.b, out);
        out += ')';
    };
    auto call = [&](const char* fn) {
        out += fn;
        out += '(';
        print_node(*n.a, out);
        out += ')';
    };
    switch (n.kind) {
    case Kind::Number:
        if (!n.name.empty()) {
            out += n.name;
        } else if (std::signbit(n.value)) {
            out += "(-" + format_double(-n.value) + ")";
        } else {
            out += format_double(n.value);
        }
        return;
    case Kind::Variable:
        out += n.variable == 0 ? "xi1" : "xi2";
        return;
    case Kind::Negate:
        out += "(-";
        print_node(*n.a, out);
        out += ')';
        return;
    case Kind::Add:
        return binary(" + ");
    case Kind::Sub:
        return binary(" - ");
    case Kind::Mul:
        return binary(" * ");
    case Kind::Div:
        return binary(" / ");
    case Kind::Pow:
        return binary(" ^ ");
    case Kind::Log:
        return call("log");
    case Kind::Exp:
        return call("exp");
    case Kind::Sqrt:
        return call("sqrt");
    case Kind::Max:
    case Kind::Min:
        out += n.kind == Kind::Max ? "max(" : "min(";
        print_node(*n.a, out);
        out += ", ";
        print_node(*n.b, out);
        out += ')';
        return;
    }
}

} // namespace

Expression::Expression() : root_(make_number(0.0)) {}

Expression Expression::parse(std::string_view text, int line, int column)
{
    return Expression(ExprParser(text, line, column).parse());
}

Expression Expression::constant(double value) { return Expression(make_number(value)); }

double Expression::operator()(const Vec2& xi) const
{
    const double v = eval_node(*root_, xi);
    if (!std::isfinite(v)) throw DomainError("expression '" + str() + "' is not finite at a sample point");
    return v;
}

std::string Expression::str() const
{
    std::string out;
    print_node(*root_, out);
    return out;
}

bool Expression::is_constant() const { return !has_variable(*root_); }

double Expression::constant_value() const
{
    if (!is_constant()) throw DomainError("expression depends on xi");
    return (*this)(Vec2::Zero());
}

// ---------------------------------------------------------------------------
// Configuration text

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Reader over one value, reporting columns relative to the full line.
class Cursor {
public:
    Cursor(std::string_view text, int line, int column) : s_(text), line_(line), column_(column) {}

    int line() const { return line_; }
    int column() const { return column_ + static_cast<int>(pos_); }

    [[noreturn]] void fail(ConfigErrorKind kind, const std::string& what) const
    {
        throw ConfigError(kind, what, line_, column());
    }

    void skip()
    {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    bool at_end()
    {
        skip();
        return pos_ >= s_.size();
    }

    bool eat(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c)
    {
        if (!eat(c)) {
            fail(ConfigErrorKind::Syntax, std::string("expected '") + c + "'");
        }
    }

    void finish()
    {
        if (!at_end()) fail(ConfigErrorKind::Syntax, "unexpected trailing text");
    }

    std::string_view token()
    {
        skip();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '[' && s_[pos_] != ' ' &&
               s_[pos_] != '\t' && s_[pos_] != '=')
            ++pos_;
        return s_.substr(start, pos_ - start);
    }

    std::string_view rest()
    {
        skip();
        const std::string_view r = trim(s_.substr(pos_));
        return r;
    }

    int rest_column()
    {
        skip();
        return column();
    }

    Rational rational()
    {
        skip();
        const int col = column();
        const std::string_view t = token();
        if (t.empty()) throw ConfigError(ConfigErrorKind::TypeMismatch, "expected a number", line_, col);
        try {
            return Rational::parse(t);
        } catch (const Error&) {
            throw ConfigError(ConfigErrorKind::TypeMismatch, "expected a rational number, got '" + std::string(t) + "'",
                              line_, col);
        }
    }

    double real()
    {
        skip();
        const int col = column();
        const std::string_view t = token();
        double v = 0.0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
            if (t.find('/') != std::string_view::npos) {
                try {
                    return Rational::parse(t).to_double();
                } catch (const Error&) {
                }
            }
            throw ConfigError(ConfigErrorKind::TypeMismatch, "expected a real number, got '" + std::string(t) + "'",
                              line_, col);
        }
        return v;
    }

    std::int64_t integer()
    {
        skip();
        const int col = column();
        const std::string_view t = token();
        std::int64_t v = 0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
            throw ConfigError(ConfigErrorKind::TypeMismatch, "expected an integer, got '" + std::string(t) + "'",
                              line_, col);
        }
        return v;
    }

    bool boolean()
    {
        skip();
        const int col = column();
        const std::string_view t = token();
        if (t == "true") return true;
        if (t == "false") return false;
        throw ConfigError(ConfigErrorKind::TypeMismatch, "expected true or false, got '" + std::string(t) + "'",
                          line_, col);
    }

    std::string word()
    {
        skip();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && is_ident_char(s_[pos_])) ++pos_;
        return std::string(s_.substr(start, pos_ - start));
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
    int column_;
};

std::array<Rational, 2> rational_pair(Cursor& c, bool nonnegative)
{
    c.expect('[');
    std::array<Rational, 2> out;
    for (int k = 0; k < 2; ++k) {
        if (k == 1) c.expect(',');
        c.skip();
        const int col = c.column();
        out[k] = c.rational();
        if (nonnegative && out[k].sign() < 0) {
            throw ConfigError(ConfigErrorKind::Domain, "negative M entry", c.line(), col);
        }
    }
    c.expect(']');
    return out;
}

void positive(double v, Cursor& c, int col, const char* what)
{
    if (!(v > 0.0)) throw ConfigError(ConfigErrorKind::Domain, std::string(what) + " must be positive", c.line(), col);
}

const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> keys = {
        {"polytope", {"normal", "p_o"}},
        {"bundle", {"roots", "sigma"}},
        {"prescribed", {"A", "perturbation", "sign", "enforce_affine"}},
        {"grid", {"h", "h_min"}},
        {"potential", {"psi"}},
        {"functional", {"tol_quad"}},
        {"stability", {"size", "cell_rule"}},
        {"solver",
         {"tol_residual", "max_iters", "max_halvings", "fd_step", "central_differences", "dt_init", "dt_min", "grow",
          "shrink", "grow_after", "cap_factor", "threads"}},
    };
    return keys;
}

void parse_value(ProblemConfig& cfg, const std::string& section, const std::string& key, Cursor& c)
{
    SolverConfig& s = cfg.solver;
    auto real_positive = [&](double& field, const char* name) {
        c.skip();
        const int col = c.column();
        field = c.real();
        positive(field, c, col, name);
    };
    auto count = [&](int& field, const char* name, int lo) {
        c.skip();
        const int col = c.column();
        const std::int64_t v = c.integer();
        if (v < lo || v > 1000000) {
            throw ConfigError(ConfigErrorKind::Domain,
                              std::string(name) + " must be an integer >= " + std::to_string(lo), c.line(), col);
        }
        field = static_cast<int>(v);
    };

    if (section == "polytope") {
        if (key == "normal") {
            Facet f;
            c.expect('[');
            c.skip();
            const int col = c.column();
            f.normal.a = c.integer();
            c.expect(',');
            f.normal.b = c.integer();
            c.expect(']');
            c.expect(',');
            c.skip();
            const int key_col = c.column();
            if (c.word() != "offset") {
                throw ConfigError(ConfigErrorKind::Syntax, "expected 'offset = c' after the normal", c.line(), key_col);
            }
            c.expect('=');
            f.offset = c.rational();
            if (f.normal.a == 0 && f.normal.b == 0) {
                throw ConfigError(ConfigErrorKind::Domain, "facet normal must be nonzero", c.line(), col);
            }
            cfg.polytope.facets.push_back(f);
        } else {
            const auto p = rational_pair(c, false);
            cfg.polytope.base_point = RationalPoint{p[0], p[1]};
        }
    } else if (section == "bundle") {
        if (key == "roots") {
            c.expect('[');
            cfg.bundle.roots.clear();
            if (!c.eat(']')) {
                do {
                    c.skip();
                    const int col = c.column();
                    const auto root = rational_pair(c, true);
                    if ((root[0] + root[1]).sign() <= 0) {
                        throw ConfigError(ConfigErrorKind::Domain, "root must have a positive entry sum", c.line(), col);
                    }
                    cfg.bundle.roots.push_back(root);
                } while (c.eat(','));
                c.expect(']');
            }
        } else {
            cfg.bundle.sigma = rational_pair(c, false);
        }
    } else if (section == "prescribed") {
        if (key == "A") {
            const int col = c.rest_column();
            const std::string_view text = c.rest();
            PrescribedBlock& p = cfg.prescribed;
            if (text == "endpoint") {
                p.kind = AKind::Endpoint;
            } else if (text.starts_with("constant") && (text.size() == 8 || text[8] == ' ' || text[8] == '\t')) {
                Cursor sub(text.substr(8), c.line(), col + 8);
                p.kind = AKind::Constant;
                p.constant = sub.real();
                sub.finish();
            } else {
                std::string_view body = text;
                int body_col = col;
                if (body.starts_with("expr ") || body.starts_with("expr\t")) {
                    body.remove_prefix(5);
                    body_col += 5;
                }
                p.kind = AKind::Expression;
                p.expression = Expression::parse(body, c.line(), body_col);
            }
            return;
        }
        if (key == "perturbation") {
            const int col = c.rest_column();
            cfg.prescribed.perturbation = Expression::parse(c.rest(), c.line(), col);
            return;
        }
        if (key == "sign") {
            c.skip();
            const int col = c.column();
            const std::string w = c.word();
            if (w == "minus") {
                cfg.prescribed.sign = LSign::Minus;
            } else if (w == "plus") {
                cfg.prescribed.sign = LSign::Plus;
            } else {
                throw ConfigError(ConfigErrorKind::TypeMismatch, "sign must be 'minus' or 'plus'", c.line(), col);
            }
        } else {
            cfg.prescribed.enforce_affine = c.boolean();
        }
    } else if (section == "grid") {
        if (key == "h") {
            real_positive(cfg.grid.h, "h");
        } else {
            c.skip();
            const int col = c.column();
            cfg.grid.h_min = c.real();
            if (cfg.grid.h_min < 0.0) {
                throw ConfigError(ConfigErrorKind::Domain, "h_min must be nonnegative (0 selects 4 h)", c.line(), col);
            }
        }
    } else if (section == "potential") {
        const int col = c.rest_column();
        cfg.potential.psi = Expression::parse(c.rest(), c.line(), col);
        return;
    } else if (section == "functional") {
        real_positive(cfg.functional.tol_quad, "tol_quad");
    } else if (section == "stability") {
        if (key == "size") {
            count(cfg.stability.size, "size", 1);
        } else {
            c.skip();
            const int col = c.column();
            const std::int64_t v = c.integer();
            if (v < 1 || v > 10) throw ConfigError(ConfigErrorKind::Domain, "cell_rule must lie in 1..10", c.line(), col);
            cfg.stability.cell_rule = static_cast<int>(v);
        }
    } else if (section == "solver") {
        if (key == "tol_residual") real_positive(s.tol_residual, "tol_residual");
        else if (key == "fd_step") real_positive(s.fd_step, "fd_step");
        else if (key == "dt_init") real_positive(s.dt_init, "dt_init");
        else if (key == "dt_min") real_positive(s.dt_min, "dt_min");
        else if (key == "grow") real_positive(s.grow, "grow");
        else if (key == "shrink") real_positive(s.shrink, "shrink");
        else if (key == "cap_factor") real_positive(s.cap_factor, "cap_factor");
        else if (key == "max_iters") count(s.max_iters, "max_iters", 1);
        else if (key == "max_halvings") count(s.max_halvings, "max_halvings", 0);
        else if (key == "grow_after") count(s.grow_after, "grow_after", 0);
        else if (key == "threads") count(s.threads, "threads", 0);
        else s.central_differences = c.boolean();
    }
    c.finish();
}

} // namespace

ProblemConfig parse_config(std::string_view text)
{
    ProblemConfig cfg;
    std::string section;
    std::set<std::string> sections_seen;
    std::set<std::string> keys_seen;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string_view body = trim(line);
        if (body.empty()) {
            if (end == text.size()) break;
            continue;
        }
        const int body_col = static_cast<int>(body.data() - line.data()) + 1;
        if (body.front() == '[') {
            if (body.back() != ']') {
                throw ConfigError(ConfigErrorKind::Syntax, "expected ']' closing the section header", line_no,
                                  body_col + static_cast<int>(body.size()));
            }
            const std::string name(trim(body.substr(1, body.size() - 2)));
            if (!schema().contains(name)) {
                throw ConfigError(ConfigErrorKind::UnknownKey, "unknown section '" + name + "'", line_no, body_col + 1);
            }
            if (!sections_seen.insert(name).second) {
                throw ConfigError(ConfigErrorKind::Syntax, "duplicate section '" + name + "'", line_no, body_col);
            }
            section = name;
        } else {
            const std::size_t eq = body.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError(ConfigErrorKind::Syntax, "expected 'key = value'", line_no, body_col);
            }
            const std::string key(trim(body.substr(0, eq)));
            if (key.empty() || !is_ident_start(key.front()) ||
                !std::all_of(key.begin(), key.end(), [](char ch) { return is_ident_char(ch); })) {
                throw ConfigError(ConfigErrorKind::Syntax, "malformed key", line_no, body_col);
            }
            if (section.empty()) {
                throw ConfigError(ConfigErrorKind::Syntax, "key '" + key + "' outside of any section", line_no, body_col);
            }
            if (!schema().at(section).contains(key)) {
                throw ConfigError(ConfigErrorKind::UnknownKey, "unknown key '" + key + "' in [" + section + "]", line_no,
                                  body_col);
            }
            if (key != "normal" && !keys_seen.insert(section + "." + key).second) {
                throw ConfigError(ConfigErrorKind::Syntax, "duplicate key '" + key + "'", line_no, body_col);
            }
            Cursor cursor(body.substr(eq + 1), line_no, body_col + static_cast<int>(eq) + 1);
            if (cursor.at_end()) {
                throw ConfigError(ConfigErrorKind::Syntax, "missing value for '" + key + "'", line_no,
                                  cursor.column());
            }
            parse_value(cfg, section, key, cursor);
        }
        if (end == text.size()) break;
    }
    if (cfg.polytope.facets.empty()) {
        throw ConfigError(ConfigErrorKind::Missing, "[polytope] needs at least one 'normal = [a, b], offset = c' line");
    }
    cfg.solver.h = cfg.grid.h;
    cfg.solver.h_min = cfg.grid.h_min;
    cfg.solver.validate();
    return cfg;
}

ProblemConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const ProblemConfig& c)
{
    std::ostringstream o;
    auto pair = [](const Rational& a, const Rational& b) { return "[" + a.str() + ", " + b.str() + "]"; };
    o << "[polytope]\n";
    for (const Facet& f : c.polytope.facets) {
        o << "normal = [" << f.normal.a << ", " << f.normal.b << "], offset = " << f.offset.str() << "\n";
    }
    if (c.polytope.base_point) o << "p_o = " << pair(c.polytope.base_point->x, c.polytope.base_point->y) << "\n";

    o << "\n[bundle]\nroots = [";
    for (std::size_t k = 0; k < c.bundle.roots.size(); ++k) {
        o << (k ? ", " : "") << pair(c.bundle.roots[k][0], c.bundle.roots[k][1]);
    }
    o << "]\n";
    if (c.bundle.sigma) o << "sigma = " << pair((*c.bundle.sigma)[0], (*c.bundle.sigma)[1]) << "\n";

    o << "\n[prescribed]\nA = ";
    switch (c.prescribed.kind) {
    case AKind::Endpoint:
        o << "endpoint";
        break;
    case AKind::Constant:
        o << "constant " << format_double(c.prescribed.constant);
        break;
    case AKind::Expression:
        o << c.prescribed.expression.str();
        break;
    }
    o << "\n";
    if (c.prescribed.perturbation) o << "perturbation = " << c.prescribed.perturbation->str() << "\n";
    o << "sign = " << (c.prescribed.sign == LSign::Minus ? "minus" : "plus") << "\n";
    o << "enforce_affine = " << (c.prescribed.enforce_affine ? "true" : "false") << "\n";

    o << "\n[grid]\nh = " << format_double(c.grid.h) << "\nh_min = " << format_double(c.grid.h_min) << "\n";

    o << "\n[potential]\n";
    if (c.potential.psi) o << "psi = " << c.potential.psi->str() << "\n";

    o << "\n[functional]\ntol_quad = " << format_double(c.functional.tol_quad) << "\n";
    o << "\n[stability]\nsize = " << c.stability.size << "\ncell_rule = " << c.stability.cell_rule << "\n";

    const SolverConfig& s = c.solver;
    o << "\n[solver]\n"
      << "tol_residual = " << format_double(s.tol_residual) << "\n"
      << "max_iters = " << s.max_iters << "\n"
      << "max_halvings = " << s.max_halvings << "\n"
      << "fd_step = " << format_double(s.fd_step) << "\n"
      << "central_differences = " << (s.central_differences ? "true" : "false") << "\n"
      << "dt_init = " << format_double(s.dt_init) << "\n"
      << "dt_min = " << format_double(s.dt_min) << "\n"
      << "grow = " << format_double(s.grow) << "\n"
      << "shrink = " << format_double(s.shrink) << "\n"
      << "grow_after = " << s.grow_after << "\n"
      << "cap_factor = " << format_double(s.cap_factor) << "\n"
      << "threads = " << s.threads << "\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Problem assembly

namespace {

Vec2 area_centroid(std::span<const RationalPoint> vertices)
{
    double a = 0.0;
    Vec2 c = Vec2::Zero();
    const std::size_t n = vertices.size();
    for (std::size_t k = 0; k < n; ++k) {
        const Vec2 p = vertices[k].to_vec();
        const Vec2 q = vertices[(k + 1) % n].to_vec();
        const double cross = p.x() * q.y() - q.x() * p.y();
        a += cross;
        c += cross * (p + q);
    }
    return c / (3.0 * a);
}

std::shared_ptr<const Polytope> make_polytope(const ProblemConfig& config)
{
    const ValidationReport report = validate_delzant(config.polytope.facets);
    if (!report.valid) {
        std::string what = "not a Delzant polytope";
        for (const std::string& p : report.problems) what += "; " + p;
        throw ValidationError(what);
    }
    Vec2 base;
    if (config.polytope.base_point) {
        base = config.polytope.base_point->to_vec();
    } else {
        std::vector<RationalPoint> vertices;
        for (const VertexReport& r : report.vertices) vertices.push_back(r.point);
        base = area_centroid(vertices);
    }
    return std::make_shared<const Polytope>(config.polytope.facets, base);
}

DHData make_dh(const ProblemConfig& config)
{
    std::vector<Vec2> roots;
    for (const auto& r : config.bundle.roots) roots.emplace_back(r[0].to_double(), r[1].to_double());
    DHData probe(roots, Vec2::Zero());
    const Vec2 sigma = config.bundle.sigma
                           ? Vec2((*config.bundle.sigma)[0].to_double(), (*config.bundle.sigma)[1].to_double())
                           : probe.root_sum();
    return DHData(std::move(roots), sigma);
}

} // namespace

Problem assemble(const ProblemConfig& config)
{
    Problem p;
    p.polytope = make_polytope(config);
    p.dh = make_dh(config);
    const AdmissibilityReport adm = check_admissibility(p.dh, *p.polytope);
    if (!adm.factors_positive) {
        for (std::size_t a = 0; a < adm.min_factor.size(); ++a) {
            if (!(adm.min_factor[a] > 0.0)) {
                throw ValidationError("D_alpha for root " + std::to_string(a) + " is not positive on the polytope (min " +
                                      format_double(adm.min_factor[a]) + ")");
            }
        }
        throw ValidationError("D is not positive on the polytope");
    }
    p.grid = std::make_shared<const GridSpec>(*p.polytope, config.grid.h,
                                              config.grid.h_min > 0.0 ? config.grid.h_min : 4.0 * config.grid.h);
    p.kind = config.prescribed.kind;

    ScalarField base;
    switch (config.prescribed.kind) {
    case AKind::Endpoint:
        base = endpoint_field(p.polytope, p.dh);
        break;
    case AKind::Constant: {
        const double c = config.prescribed.constant;
        base = [c](const Vec2&) { return c; };
        break;
    }
    case AKind::Expression:
        base = config.prescribed.expression;
        break;
    }
    if (config.prescribed.perturbation) {
        p.perturbation = orthogonalize_affine(*config.prescribed.perturbation, *p.polytope, p.dh);
        ScalarField pert = p.perturbation;
        p.data.A = [base, pert](const Vec2& xi) { return base(xi) + pert(xi); };
    } else {
        p.data.A = base;
    }
    p.data.dh = p.dh;
    if (config.potential.psi) p.psi = *config.potential.psi;
    return p;
}

SymplecticPotential Problem::probe() const
{
    if (psi) return SymplecticPotential::sampled(polytope, grid, psi);
    return SymplecticPotential::guillemin(polytope, grid);
}

std::vector<double> Problem::solver_target() const
{
    std::vector<double> target(grid->size(), std::numeric_limits<double>::quiet_NaN());
    const std::vector<char> masked = stencil_mask(*grid);
    if (kind == AKind::Endpoint) {
        const AbreuStencil stencil(polytope, grid, dh);
        target = stencil.apply(std::vector<Mat2>(grid->size(), Mat2::Zero()));
        if (perturbation) {
            for (std::size_t n = 0; n < grid->size(); ++n)
                if (!masked[n]) target[n] += perturbation(grid->node(n).xi);
        }
        return target;
    }
    for (std::size_t n = 0; n < grid->size(); ++n)
        if (!masked[n]) target[n] = data.A(grid->node(n).xi);
    return target;
}

// ---------------------------------------------------------------------------
// Commands

std::optional<Command> parse_command(std::string_view name)
{
    if (name == "validate") return Command::Validate;
    if (name == "curvature") return Command::Curvature;
    if (name == "functional") return Command::Functional;
    if (name == "stability") return Command::Stability;
    if (name == "solve") return Command::Solve;
    if (name == "export-plot") return Command::ExportPlot;
    return std::nullopt;
}

std::string to_string(Command command)
{
    switch (command) {
    case Command::Validate:
        return "validate";
    case Command::Curvature:
        return "curvature";
    case Command::Functional:
        return "functional";
    case Command::Stability:
        return "stability";
    case Command::Solve:
        return "solve";
    case Command::ExportPlot:
        return "export-plot";
    }
    return "unknown";
}

int exit_code_for(const std::exception& error)
{
    if (dynamic_cast<const ConfigError*>(&error)) return exit_code::config;
    if (dynamic_cast<const ValidationError*>(&error)) return exit_code::validation;
    if (dynamic_cast<const DomainError*>(&error)) return exit_code::domain;
    if (dynamic_cast<const ConvexityError*>(&error)) return exit_code::convexity;
    if (dynamic_cast<const ConvergenceError*>(&error)) return exit_code::convergence;
    if (dynamic_cast<const LpError*>(&error)) return exit_code::lp;
    if (dynamic_cast<const IoError*>(&error)) return exit_code::io;
    return exit_code::internal;
}

JacobianCheck jacobian_self_check(const ContinuityPath& path, double t, const std::vector<double>& psi,
                                  const SolverConfig& config, std::uint64_t seed)
{
    const DiscreteSystem system(path, path.a_t(t), psi, worker_count(config.threads), config.fd_step,
                                config.central_differences);
    const Eigen::VectorXd z = system.pack(psi);
    const Eigen::VectorXd f = system.residual(z);
    const Eigen::MatrixXd jac = system.jacobian(z, f);

    // Smooth random direction: a cubic in xi with coefficients in [-1, 1].
    std::mt19937_64 rng(seed);
    auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
    std::array<double, 10> coef{};
    for (double& c : coef) c = uniform();
    const Vec2 po = path.polytope().base_point();
    Eigen::VectorXd d(system.size());
    const auto& nodes = system.unmasked_nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const Vec2 x = path.grid().node(nodes[k]).xi - po;
        const double a = x.x();
        const double b = x.y();
        d[static_cast<Eigen::Index>(k)] = coef[0] + coef[1] * a + coef[2] * b + coef[3] * a * a + coef[4] * a * b +
                                          coef[5] * b * b + coef[6] * a * a * a + coef[7] * a * a * b +
                                          coef[8] * a * b * b + coef[9] * b * b * b;
    }
    for (int k = 0; k < 3; ++k) d[system.size() - 3 + k] = uniform();
    d /= d.lpNorm<Eigen::Infinity>();

    JacobianCheck check;
    const double eps = check.epsilon;
    const Eigen::VectorXd jd = jac * d;
    const Eigen::VectorXd fd = (system.residual(z + eps * d) - system.residual(z - eps * d)) / (2.0 * eps);
    check.relative_error = (jd - fd).norm() / std::max(jd.norm(), std::numeric_limits<double>::min());
    return check;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string vec_str(const Vec2& v) { return "(" + format_double(v.x()) + ", " + format_double(v.y()) + ")"; }

using ordered_json = nlohmann::ordered_json;

int cmd_validate(const ProblemConfig& config, const std::filesystem::path& out_dir, std::ostream& out,
                 std::string& module)
{
    module = "polytope";
    const ValidationReport report = validate_delzant(config.polytope.facets);
    ordered_json j;
    j["polytope"]["valid"] = report.valid;
    out << "polytope: " << (report.valid ? "valid" : "INVALID") << " (" << config.polytope.facets.size()
        << " facets, " << report.vertices.size() << " vertices)\n";
    ordered_json verts = ordered_json::array();
    for (const VertexReport& v : report.vertices) {
        out << "  vertex (" << v.point.x.str() << ", " << v.point.y.str() << ") facets " << v.facet_a << "," << v.facet_b
            << " det " << v.determinant << "\n";
        verts.push_back({{"xi1", v.point.x.str()},
                         {"xi2", v.point.y.str()},
                         {"facets", {v.facet_a, v.facet_b}},
                         {"determinant", v.determinant}});
    }
    j["polytope"]["vertices"] = verts;
    j["polytope"]["problems"] = report.problems;
    for (const std::string& p : report.problems) out << "  problem: " << p << "\n";
    if (!report.valid) {
        write_file(out_dir / "validate.json", j.dump(2) + "\n");
        return exit_code::validation;
    }
    const std::shared_ptr<const Polytope> polytope = make_polytope(config);
    out << "  base point " << vec_str(polytope->base_point()) << "\n";
    j["polytope"]["base_point"] = {polytope->base_point().x(), polytope->base_point().y()};

    module = "bundle";
    const DHData dh = make_dh(config);
    const AdmissibilityReport adm = check_admissibility(dh, *polytope);
    const std::vector<bool> nonconst = edge_nonconstant(dh, *polytope);
    out << "bundle: " << dh.roots().size() << " roots, sigma " << vec_str(dh.sigma()) << ", root sum "
        << vec_str(dh.root_sum()) << "\n";
    out << "  D_alpha positive: " << (adm.factors_positive ? "yes" : "NO") << "\n";
    out << "  positive quadrant: " << (adm.in_positive_quadrant ? "yes" : "NO") << "\n";
    out << "  cone condition: " << format_double(adm.cone_value) << " < " << format_double(adm.cone_bound) << " "
        << (adm.cone_condition ? "yes" : "NO") << "\n";
    out << "  D nonconstant on edges:";
    for (bool b : nonconst) out << " " << (b ? "yes" : "no");
    out << "\n";
    j["bundle"] = {{"roots", dh.roots().size()},
                   {"sigma", {dh.sigma().x(), dh.sigma().y()}},
                   {"factors_positive", adm.factors_positive},
                   {"min_factor", adm.min_factor},
                   {"in_positive_quadrant", adm.in_positive_quadrant},
                   {"cone_value", adm.cone_value},
                   {"cone_bound", adm.cone_bound},
                   {"cone_condition", adm.cone_condition},
                   {"edge_nonconstant", nonconst},
                   {"admissible", adm.passed()}};
    out << "admissibility: " << (adm.passed() ? "PASS" : "FAIL") << "\n";
    if (!adm.factors_positive) {
        write_file(out_dir / "validate.json", j.dump(2) + "\n");
        return exit_code::validation;
    }

    module = "functionals";
    const Problem problem = assemble(config);
    FunctionalSettings fs{config.functional.tol_quad, config.prescribed.sign};
    const AffineCheck affine = check_affine_vanishing(problem.data, *problem.polytope, fs);
    out << "affine vanishing: max |L_A(l)| = " << format_double(affine.max_abs) << "\n";
    j["affine_check"] = {{"values", affine.values}, {"max_abs", affine.max_abs}};

    const GridSpec& grid = *problem.grid;
    const std::vector<char> masked = stencil_mask(grid);
    const auto unmasked = std::count(masked.begin(), masked.end(), 0);
    out << "grid: h " << format_double(grid.h()) << ", h_min " << format_double(grid.h_min()) << ", " << grid.size()
        << " nodes, " << unmasked << " unmasked\n";
    j["grid"] = {{"h", grid.h()}, {"h_min", grid.h_min()}, {"nodes", grid.size()}, {"unmasked", unmasked}};

    write_file(out_dir / "validate.json", j.dump(2) + "\n");
    return adm.passed() ? exit_code::ok : exit_code::validation;
}

int cmd_curvature(const Problem& problem, const std::filesystem::path& out_dir, std::ostream& out,
                  std::string& module)
{
    module = "operators";
    const SymplecticPotential u = problem.probe();
    const OperatorField field = abreu_apply(u, problem.dh);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t n = 0; n < field.value.size(); ++n) {
        if (field.masked[n]) continue;
        lo = std::min(lo, field.value[n]);
        hi = std::max(hi, field.value[n]);
    }
    module = "io";
    write_file(out_dir / "curvature.csv", field_to_csv(field));
    out << "curvature: " << field.unmasked_count() << " unmasked nodes, S_D in [" << format_double(lo) << ", "
        << format_double(hi) << "]\n";
    return exit_code::ok;
}

int cmd_functional(const ProblemConfig& config, const Problem& problem, const std::filesystem::path& out_dir,
                   std::ostream& out, std::string& module)
{
    module = "functionals";
    const SymplecticPotential u = problem.probe();
    const FunctionalSettings fs{config.functional.tol_quad, config.prescribed.sign};
    const FunctionalValue l = l_functional(problem.data, u, fs);
    const MabuchiValue f = mabuchi_functional(problem.data, u, fs);
    const AffineCheck affine = check_affine_vanishing(problem.data, *problem.polytope, fs);
    ordered_json j;
    j["L_A"] = l.value;
    j["L_A_error"] = l.error;
    j["F_A"] = f.value;
    j["F_A_error"] = f.error;
    j["log_det_term"] = f.log_det_term;
    j["linear_term"] = f.linear_term;
    j["affine_check"] = {{"values", affine.values}, {"max_abs", affine.max_abs}};
    j["sign"] = config.prescribed.sign == LSign::Minus ? "minus" : "plus";
    j["tol_quad"] = config.functional.tol_quad;
    module = "io";
    write_file(out_dir / "functional.json", j.dump(2) + "\n");
    out << "L_A = " << format_double(l.value) << "\nF_A = " << format_double(f.value) << "\n";
    return exit_code::ok;
}

int cmd_stability(const ProblemConfig& config, const Problem& problem, const std::filesystem::path& out_dir,
                  std::ostream& out, std::string& module)
{
    module = "functionals";
    StabilitySettings settings;
    settings.functional = {config.functional.tol_quad, config.prescribed.sign};
    settings.enforce_affine_vanishing = config.prescribed.enforce_affine;
    settings.cell_rule = config.stability.cell_rule;
    const StabilityCertificate cert = stability_lambda(problem.data, *problem.polytope, config.stability.size, settings);
    module = "io";
    write_file(out_dir / "certificate.json", certificate_to_json(cert));
    out << "lambda* = " << format_double(cert.lambda_star) << "\n";
    out << "binding constraints: " << cert.binding_count << " of " << cert.hinge_count << "\n";
    out << (cert.destabilizing() ? "destabilizing PL function found" : "stable at this resolution") << "\n";
    return exit_code::ok;
}

int cmd_solve(const ProblemConfig& config, const Problem& problem, const RunOptions& options,
              const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err, std::string& module)
{
    module = "solver";
    ContinuityPath path = build_path(problem.polytope, problem.dh, problem.solver_target(), problem.grid);
    const SolutionTrace trace = continue_path(path, config.solver);
    module = "io";
    write_file(out_dir / "trace.jsonl", trace_to_jsonl(trace));
    write_file(out_dir / "psi.csv", psi_to_csv(SymplecticPotential(problem.polytope, problem.grid, trace.psi)));
    const auto rejected = std::count_if(trace.steps.begin(), trace.steps.end(), [](const PathStep& s) { return !s.accepted; });
    out << "path steps: " << trace.accepted_steps() << " accepted, " << rejected << " rejected\n";
    out << "final t = " << format_double(trace.final_t) << "\n";
    if (!trace.steps.empty()) out << "final residual = " << format_double(trace.steps.back().residual) << "\n";
    if (options.seed) {
        module = "solver";
        const JacobianCheck check = jacobian_self_check(path, trace.final_t, trace.psi, config.solver, *options.seed);
        out << "jacobian check (seed " << *options.seed << "): relative error " << format_double(check.relative_error)
            << "\n";
    }
    if (!trace.success) {
        err << "abreu: solver: continuation stalled at t = " << format_double(trace.blocking_t) << ": " << trace.message
            << "\n";
        return exit_code::stalled;
    }
    return exit_code::ok;
}

int cmd_export(const Problem& problem, const std::filesystem::path& out_dir, std::ostream& out, std::string& module)
{
    module = "operators";
    const SymplecticPotential u = problem.probe();
    const OperatorField field = abreu_apply(u, problem.dh);
    const GridSpec& grid = *problem.grid;

    std::ostringstream poly;
    poly << "index,xi1,xi2\n";
    const auto verts = problem.polytope->vertices();
    for (std::size_t k = 0; k < verts.size(); ++k) {
        poly << k << "," << format_double(verts[k].x()) << "," << format_double(verts[k].y()) << "\n";
    }

    std::ostringstream pot;
    pot << "i,j,xi1,xi2,u,psi,det_hess_u,D,h_G,A,masked\n";
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const GridSpec::Node& node = grid.node(n);
        const double un = u.evaluate(node.xi, 0).value;
        pot << node.i << "," << node.j << "," << format_double(node.xi.x()) << "," << format_double(node.xi.y()) << ","
            << format_double(un) << "," << format_double(u.psi()[n]) << "," << format_double(field.det_hess_u[n])
            << "," << format_double(field.dh[n]) << "," << format_double(field.h_g[n]) << ","
            << format_double(problem.data.A(node.xi)) << "," << (field.masked[n] ? 1 : 0) << "\n";
    }
    module = "io";
    write_file(out_dir / "polytope.csv", poly.str());
    write_file(out_dir / "nodes.csv", pot.str());
    write_file(out_dir / "curvature.csv", field_to_csv(field));
    out << "wrote polytope.csv, nodes.csv, curvature.csv (" << grid.size() << " nodes)\n";
    return exit_code::ok;
}

} // namespace

int run_command(const ProblemConfig& config, Command command, const RunOptions& options, std::ostream& out,
                std::ostream& err)
{
    std::string module = "io";
    try {
        const std::filesystem::path out_dir(options.out_dir);
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory '" + options.out_dir + "': " + ec.message());

        if (command == Command::Validate) return cmd_validate(config, out_dir, out, module);

        module = "polytope";
        const Problem problem = assemble(config);
        switch (command) {
        case Command::Curvature:
            return cmd_curvature(problem, out_dir, out, module);
        case Command::Functional:
            return cmd_functional(config, problem, out_dir, out, module);
        case Command::Stability:
            return cmd_stability(config, problem, out_dir, out, module);
        case Command::Solve:
            return cmd_solve(config, problem, options, out_dir, out, err, module);
        case Command::ExportPlot:
            return cmd_export(problem, out_dir, out, module);
        case Command::Validate:
            break;
        }
        return exit_code::internal;
    } catch (const std::exception& e) {
        err << "abreu: " << module << ": " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace abreu
