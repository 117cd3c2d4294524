#pragma once

#include <Eigen/Dense>

namespace abreu {

/// Tensor-product cubic spline (not-a-knot ends) on a uniform rectangular
/// lattice. C^2 inside the lattice box; reproduces polynomials of degree <= 3
/// in each variable when both extents are >= 4.
class TensorSpline {
public:
    struct Jet {
        double value = 0.0;
        Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
        Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
    };

    TensorSpline() = default;
    /// values(i, j) sits at origin + h * (i, j).
    TensorSpline(Eigen::Vector2d origin, double h, Eigen::MatrixXd values);

    /// Value, gradient and Hessian. Outside the lattice box the polynomial
    /// piece of the nearest end cell is continued, so all three stay the
    /// exact derivatives of one C^2 function.
    Jet evaluate(const Eigen::Vector2d& p) const;

    /// Second derivatives at every lattice point: (d_xx, d_xy, d_yy).
    void lattice_hessians(Eigen::MatrixXd& dxx, Eigen::MatrixXd& dxy, Eigen::MatrixXd& dyy) const;

    const Eigen::Vector2d& origin() const { return origin_; }
    double h() const { return h_; }
    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }
    bool inside(const Eigen::Vector2d& p) const;

private:
    Eigen::Vector2d origin_ = Eigen::Vector2d::Zero();
    double h_ = 1.0;
    Eigen::MatrixXd values_;
    Eigen::MatrixXd mxx_;
    Eigen::MatrixXd myy_;
    Eigen::MatrixXd mxxyy_;
};

namespace spline_detail {
/// Maps values to second derivatives at the knots of a 1D not-a-knot spline.
Eigen::MatrixXd second_derivative_operator(Eigen::Index n, double h);
/// Maps values to first derivatives at the knots.
Eigen::MatrixXd first_derivative_operator(Eigen::Index n, double h);
} // namespace spline_detail

} // namespace abreu
