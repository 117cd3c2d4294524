#pragma once

#include <stdexcept>
#include <string>

namespace abreu {

/// Base of every error raised by the toolkit. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Point outside the open polytope, or a function evaluated where it is undefined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid polytope or bundle data.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Hessian of a symplectic potential is not positive definite somewhere.
class ConvexityError : public Error {
public:
    using Error::Error;
};

/// Iterative method (Newton, quadrature, continuation) did not reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Linear program infeasible or unbounded.
class LpError : public Error {
public:
    using Error::Error;
};

enum class ConfigErrorKind { Syntax, UnknownKey, TypeMismatch, Domain, Missing };

/// Malformed or out-of-range configuration.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0, int column = 0,
                ConfigErrorKind kind = ConfigErrorKind::Domain)
        : Error(line > 0 ? std::to_string(line) + ":" + std::to_string(column) + ": " + what : what),
          line_(line),
          column_(column),
          kind_(kind) {}
    ConfigError(ConfigErrorKind kind, const std::string& what, int line = 0, int column = 0)
        : ConfigError(what, line, column, kind) {}

    int line() const { return line_; }
    int column() const { return column_; }
    ConfigErrorKind kind() const { return kind_; }

private:
    int line_;
    int column_;
    ConfigErrorKind kind_;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace abreu
