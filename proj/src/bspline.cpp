#include "frodo/bspline.hpp"

#include <cmath>
#include <string>

#include "frodo/common.hpp"

namespace frodo {

std::vector<double> clamped_uniform_knots(double a, double b, int interior,
                                          int degree) {
  if (!(b > a)) throw config_error("bspline: knot span must be non-empty");
  if (interior < 0) throw config_error("bspline: negative interior knot count");
  if (degree < 0) throw config_error("bspline: negative degree");
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(2 * (degree + 1) + interior));
  for (int i = 0; i <= degree; ++i) knots.push_back(a);
  const double step = (b - a) / (interior + 1);
  for (int i = 1; i <= interior; ++i) knots.push_back(a + i * step);
  for (int i = 0; i <= degree; ++i) knots.push_back(b);
  return knots;
}

Eigen::VectorXd bspline_basis(double x, const std::vector<double>& knots,
                              int degree) {
  const int m = static_cast<int>(knots.size());
  const int nb = m - degree - 1;
  if (degree < 0) throw config_error("bspline: negative degree");
  if (nb < 1) throw config_error("bspline: too few knots for the degree");
  const double lo = knots[static_cast<std::size_t>(degree)];
  const double hi = knots[static_cast<std::size_t>(m - degree - 1)];
  if (!(x >= lo) || !(x <= hi)) {
    throw config_error("bspline: point " + std::to_string(x) +
                       " lies outside the knot span [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  }

  // Degree-zero layer: indicators of the knot intervals, with the span's
  // right endpoint assigned to the last non-empty interval.
  std::vector<double> B(static_cast<std::size_t>(m - 1), 0.0);
  if (x == hi) {
    for (int i = m - 2; i >= 0; --i) {
      if (knots[static_cast<std::size_t>(i)] <
          knots[static_cast<std::size_t>(i + 1)]) {
        B[static_cast<std::size_t>(i)] = 1.0;
        break;
      }
    }
  } else {
    for (int i = 0; i < m - 1; ++i) {
      if (knots[static_cast<std::size_t>(i)] <= x &&
          x < knots[static_cast<std::size_t>(i + 1)]) {
        B[static_cast<std::size_t>(i)] = 1.0;
        break;
      }
    }
  }

  for (int d = 1; d <= degree; ++d) {
    for (int i = 0; i + d < m - 1; ++i) {
      const double t_i = knots[static_cast<std::size_t>(i)];
      const double t_id = knots[static_cast<std::size_t>(i + d)];
      const double t_i1 = knots[static_cast<std::size_t>(i + 1)];
      const double t_id1 = knots[static_cast<std::size_t>(i + d + 1)];
      double left = 0.0;
      if (t_id > t_i) {
        left = (x - t_i) / (t_id - t_i) * B[static_cast<std::size_t>(i)];
      }
      double right = 0.0;
      if (t_id1 > t_i1) {
        right = (t_id1 - x) / (t_id1 - t_i1) *
                B[static_cast<std::size_t>(i + 1)];
      }
      B[static_cast<std::size_t>(i)] = left + right;
    }
  }

  Eigen::VectorXd out(nb);
  for (int i = 0; i < nb; ++i) out[i] = B[static_cast<std::size_t>(i)];
  return out;
}

Eigen::MatrixXd bspline_design(const std::vector<double>& xs,
                               const std::vector<double>& knots, int degree) {
  const int nb = static_cast<int>(knots.size()) - degree - 1;
  Eigen::MatrixXd out(static_cast<int>(xs.size()), nb);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.row(static_cast<int>(i)) = bspline_basis(xs[i], knots, degree).transpose();
  }
  return out;
}

}  // namespace frodo
