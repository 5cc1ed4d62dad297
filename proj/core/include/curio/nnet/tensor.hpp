#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace curio::nn {

/// Row-major 64-bit matrix; rows are batch items (objects, slots).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejects NaN/Inf at layer boundaries.
inline void check_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw NnError(std::string("non-finite values at ") + where);
}

inline void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* where) {
  if (m.rows() != rows || m.cols() != cols)
    throw NnError(std::string("shape mismatch at ") + where + ": got " + std::to_string(m.rows()) + "x" +
                  std::to_string(m.cols()) + ", want " + std::to_string(rows) + "x" + std::to_string(cols));
}

}  // namespace curio::nn
