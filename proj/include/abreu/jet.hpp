#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace abreu {

/// Second-order forward-mode jet in two variables: value, gradient, Hessian.
struct Jet2 {
    double v = 0.0;
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();

    static Jet2 constant(double c) { return {c, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()}; }
    /// a . xi + b
    static Jet2 affine(const Eigen::Vector2d& a, double b, const Eigen::Vector2d& xi)
    {
        return {a.dot(xi) + b, a, Eigen::Matrix2d::Zero()};
    }
};

inline Jet2 operator+(const Jet2& a, const Jet2& b)
{
    return {a.v + b.v, a.g + b.g, a.h + b.h};
}

inline Jet2 operator-(const Jet2& a, const Jet2& b)
{
    return {a.v - b.v, a.g - b.g, a.h - b.h};
}

inline Jet2 operator-(const Jet2& a)
{
    return {-a.v, -a.g, -a.h};
}

inline Jet2 operator*(double s, const Jet2& a)
{
    return {s * a.v, s * a.g, s * a.h};
}

inline Jet2 operator*(const Jet2& a, const Jet2& b)
{
    return {a.v * b.v, a.g * b.v + a.v * b.g, a.h * b.v + b.h * a.v + a.g * b.g.transpose() + b.g * a.g.transpose()};
}

inline Jet2 reciprocal(const Jet2& a)
{
    const double r = 1.0 / a.v;
    return {r, -r * r * a.g, 2.0 * r * r * r * a.g * a.g.transpose() - r * r * a.h};
}

inline Jet2 operator/(const Jet2& a, const Jet2& b)
{
    return a * reciprocal(b);
}

inline Jet2 log(const Jet2& a)
{
    const double r = 1.0 / a.v;
    return {std::log(a.v), r * a.g, r * a.h - r * r * a.g * a.g.transpose()};
}

} // namespace abreu
