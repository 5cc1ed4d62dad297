#include "curio/nnet/gradcheck.hpp"

#include <algorithm>

namespace curio::nn {

Matrix numeric_gradient(Matrix& param, const std::function<double()>& loss, double h) {
  Matrix g(param.rows(), param.cols());
  for (Eigen::Index r = 0; r < param.rows(); ++r)
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      const double orig = param(r, c);
      param(r, c) = orig + h;
      const double up = loss();
      param(r, c) = orig - h;
      const double down = loss();
      param(r, c) = orig;
      g(r, c) = (up - down) / (2.0 * h);
    }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  check_shape(numeric, analytic.rows(), analytic.cols(), "relative_error");
  const double denom = std::max(analytic.norm() + numeric.norm(), floor);
  return (analytic - numeric).norm() / denom;
}

}  // namespace curio::nn
