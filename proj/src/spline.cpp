#include "abreu/spline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace abreu {

namespace spline_detail {

namespace {

// Unit-spacing operators, cached by size.
struct UnitOperators {
    Eigen::MatrixXd second;
    Eigen::MatrixXd first;
};

UnitOperators build_unit(Eigen::Index n)
{
    UnitOperators ops;
    ops.second = Eigen::MatrixXd::Zero(n, n);
    if (n == 3) {
        for (Eigen::Index i = 0; i < 3; ++i) ops.second.row(i) << 1.0, -2.0, 1.0;
    } else if (n >= 4) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
        // Not-a-knot: third derivative continuous across the second and
        // second-to-last knots.
        a(0, 0) = 1.0;
        a(0, 1) = -2.0;
        a(0, 2) = 1.0;
        a(n - 1, n - 3) = 1.0;
        a(n - 1, n - 2) = -2.0;
        a(n - 1, n - 1) = 1.0;
        for (Eigen::Index i = 1; i + 1 < n; ++i) {
            a(i, i - 1) = 1.0;
            a(i, i) = 4.0;
            a(i, i + 1) = 1.0;
            b(i, i - 1) = 6.0;
            b(i, i) = -12.0;
            b(i, i + 1) = 6.0;
        }
        ops.second = a.partialPivLu().solve(b);
    }

    ops.first = Eigen::MatrixXd::Zero(n, n);
    if (n >= 2) {
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            ops.first(i, i + 1) += 1.0;
            ops.first(i, i) -= 1.0;
            ops.first.row(i) -= (2.0 * ops.second.row(i) + ops.second.row(i + 1)) / 6.0;
        }
        Eigen::Index last = n - 1;
        ops.first(last, last) += 1.0;
        ops.first(last, last - 1) -= 1.0;
        ops.first.row(last) += (ops.second.row(last - 1) + 2.0 * ops.second.row(last)) / 6.0;
    }
    return ops;
}

const UnitOperators& unit_operators(Eigen::Index n)
{
    static std::mutex mutex;
    static std::map<Eigen::Index, UnitOperators> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_unit(n)).first;
    return it->second;
}

} // namespace

Eigen::MatrixXd second_derivative_operator(Eigen::Index n, double h)
{
    return unit_operators(n).second / (h * h);
}

Eigen::MatrixXd first_derivative_operator(Eigen::Index n, double h)
{
    return unit_operators(n).first / h;
}

} // namespace spline_detail

namespace {

// 1D basis on one cell: weights for (y_c, y_c+1, M_c, M_c+1) and derivatives.
struct AxisBasis {
    Eigen::Index cell = 0;
    double w[4][3] = {}; // [basis][derivative order]
};

AxisBasis axis_basis(double t, Eigen::Index n, double h)
{
    AxisBasis b;
    if (n == 1) {
        b.w[0][0] = 1.0;
        return b;
    }
    Eigen::Index c = static_cast<Eigen::Index>(std::floor(t));
    c = std::clamp<Eigen::Index>(c, 0, n - 2);
    b.cell = c;
    double a = static_cast<double>(c + 1) - t; // (x_{c+1} - x) / h
    double bb = 1.0 - a;
    double h2 = h * h;
    b.w[0][0] = a;
    b.w[0][1] = -1.0 / h;
    b.w[0][2] = 0.0;
    b.w[1][0] = bb;
    b.w[1][1] = 1.0 / h;
    b.w[1][2] = 0.0;
    b.w[2][0] = (a * a * a - a) * h2 / 6.0;
    b.w[2][1] = -(3.0 * a * a - 1.0) * h / 6.0;
    b.w[2][2] = a;
    b.w[3][0] = (bb * bb * bb - bb) * h2 / 6.0;
    b.w[3][1] = (3.0 * bb * bb - 1.0) * h / 6.0;
    b.w[3][2] = bb;
    return b;
}

} // namespace

TensorSpline::TensorSpline(Eigen::Vector2d origin, double h, Eigen::MatrixXd values)
    : origin_(origin), h_(h), values_(std::move(values))
{
    Eigen::MatrixXd kx = spline_detail::second_derivative_operator(values_.rows(), h_);
    Eigen::MatrixXd ky = spline_detail::second_derivative_operator(values_.cols(), h_);
    mxx_ = kx * values_;
    myy_ = values_ * ky.transpose();
    mxxyy_ = kx * myy_;
}

bool TensorSpline::inside(const Eigen::Vector2d& p) const
{
    Eigen::Vector2d t = (p - origin_) / h_;
    const double eps = 1e-12;
    return t.x() >= -eps && t.y() >= -eps && t.x() <= static_cast<double>(values_.rows() - 1) + eps &&
           t.y() <= static_cast<double>(values_.cols() - 1) + eps;
}

TensorSpline::Jet TensorSpline::evaluate(const Eigen::Vector2d& p) const
{
    // Outside the box the end cells' polynomials are simply continued.
    Eigen::Vector2d t = (p - origin_) / h_;
    AxisBasis bx = axis_basis(t.x(), values_.rows(), h_);
    AxisBasis by = axis_basis(t.y(), values_.cols(), h_);
    const bool flat_x = values_.rows() == 1;
    const bool flat_y = values_.cols() == 1;

    Jet jet;
    double d[3][3] = {}; // d[order_x][order_y]
    for (int px = 0; px < 2; ++px) {
        if (flat_x && px == 1) continue;
        Eigen::Index i = bx.cell + px;
        for (int py = 0; py < 2; ++py) {
            if (flat_y && py == 1) continue;
            Eigen::Index j = by.cell + py;
            const double y = values_(i, j);
            const double myy = myy_(i, j);
            const double mxx = mxx_(i, j);
            const double mxxyy = mxxyy_(i, j);
            for (int ox = 0; ox < 3; ++ox) {
                for (int oy = 0; oy + ox < 3; ++oy) {
                    d[ox][oy] += bx.w[px][ox] * by.w[py][oy] * y + bx.w[px][ox] * by.w[2 + py][oy] * myy +
                                 bx.w[2 + px][ox] * by.w[py][oy] * mxx + bx.w[2 + px][ox] * by.w[2 + py][oy] * mxxyy;
                }
            }
        }
    }
    jet.value = d[0][0];
    jet.gradient << d[1][0], d[0][1];
    jet.hessian << d[2][0], d[1][1], d[1][1], d[0][2];
    return jet;
}

void TensorSpline::lattice_hessians(Eigen::MatrixXd& dxx, Eigen::MatrixXd& dxy, Eigen::MatrixXd& dyy) const
{
    Eigen::MatrixXd gx = spline_detail::first_derivative_operator(values_.rows(), h_);
    Eigen::MatrixXd gy = spline_detail::first_derivative_operator(values_.cols(), h_);
    dxx = mxx_;
    dyy = myy_;
    dxy = gx * values_ * gy.transpose();
}

} // namespace abreu
