#pragma once

// Cox-de Boor B-spline basis evaluation on a clamped knot vector, used by
// the spline-based comparison model.

#include <Eigen/Dense>
#include <vector>

namespace frodo {

// Clamped knot vector on [a, b]: each endpoint repeated degree+1 times with
// `interior` equally spaced knots strictly between.  The resulting basis has
// interior + degree + 1 functions.
std::vector<double> clamped_uniform_knots(double a, double b, int interior,
                                          int degree);

// All basis function values at x via the Cox-de Boor recursion.  x must lie
// inside the knot span; the right endpoint belongs to the last interval.
Eigen::VectorXd bspline_basis(double x, const std::vector<double>& knots,
                              int degree);

// Rows of basis values, one per evaluation point.
Eigen::MatrixXd bspline_design(const std::vector<double>& xs,
                               const std::vector<double>& knots, int degree);

}  // namespace frodo
