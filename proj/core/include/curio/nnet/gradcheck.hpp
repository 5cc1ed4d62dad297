#pragma once

#include <functional>

#include "curio/nnet/tensor.hpp"

namespace curio::nn {

/// Central-difference gradient of `loss` w.r.t. every entry of `param`.
/// `param` is perturbed in place and restored.
Matrix numeric_gradient(Matrix& param, const std::function<double()>& loss, double h = 1e-5);

/// ‖analytic − numeric‖ / max(‖analytic‖ + ‖numeric‖, floor). Norm-based so
/// that near-zero individual entries do not dominate.
double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-12);

}  // namespace curio::nn
