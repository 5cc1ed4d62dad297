#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "curio/nnet/tensor.hpp"
#include "curio/random.hpp"

namespace curio::nn {

/// A learnable matrix with its gradient accumulator and Adam moments.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named parameters plus optimizer state. Addresses of stored Params are
/// stable for the lifetime of the store, so layers may hold pointers.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  /// Glorot-uniform initialized matrix (zeros when `scale` is 0).
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0);
  Param& add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double value);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Param>& params() { return params_; }
  const std::map<std::string, Param>& params() const { return params_; }

  std::int64_t step() const { return step_; }

  void zero_grad();
  double grad_norm() const;
  /// Rescales gradients so their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
  double clip_grad_norm(double max_norm);
  /// One bias-corrected adaptive-moment update using the accumulated gradients.
  void adam_step(double lr, const AdamConfig& cfg = {});

  /// Copies parameter values (not optimizer state) from `other`; names and shapes must match.
  void copy_values_from(const ParamStore& other);
  /// Resets moments and step counter.
  void reset_optimizer();

  std::size_t num_scalars() const;

  /// Structured-text checkpoint with a header naming `kind`.
  std::string to_json(const std::string& kind) const;
  void load_json(const std::string& text, const std::string& kind);

 private:
  std::map<std::string, Param> params_;
  std::int64_t step_ = 0;
};

/// Learning rate for 1-based image i under multiplicative per-image decay.
double scheduled_lr(double base_lr, double decay, std::size_t image_index);

}  // namespace curio::nn
