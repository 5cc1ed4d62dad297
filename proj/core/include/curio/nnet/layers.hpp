#pragma once

#include <string>

#include "curio/nnet/params.hpp"
#include "curio/nnet/tensor.hpp"

namespace curio::nn {

enum class Activation { kLinear, kRelu, kTanh };

Matrix activate(const Matrix& pre, Activation act);
/// dL/dpre given dL/dout, the pre-activation and the activation output.
Matrix activate_backward(const Matrix& dout, const Matrix& pre, const Matrix& out, Activation act);

/// y = act(x Wᵀ + b); W is out×in, b is 1×out, x is N×in.
class Dense {
 public:
  struct Cache {
    Matrix x;
    Matrix pre;
    Matrix out;
  };

  Dense() = default;
  Dense(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
        Rng& rng, double init_scale = 1.0);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  /// Accumulates dW, db and returns dL/dx.
  Matrix backward(const Cache& cache, const Matrix& dy) const;

  Eigen::Index in_dim() const { return W_->value.cols(); }
  Eigen::Index out_dim() const { return W_->value.rows(); }
  Param& weight() const { return *W_; }
  Param& bias() const { return *b_; }

 private:
  Param* W_ = nullptr;
  Param* b_ = nullptr;
  Activation act_ = Activation::kLinear;
};

/// Two dense layers: ReLU hidden, linear output.
class Mlp2 {
 public:
  struct Cache {
    Dense::Cache hidden;
    Dense::Cache output;
  };

  Mlp2() = default;
  Mlp2(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
       Rng& rng, double output_scale = 1.0);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dy) const;

 private:
  Dense hidden_;
  Dense output_;
};

/// Standard four-gate LSTM cell applied row-wise with shared weights, so a
/// K-row input advances K independent recurrent states.
class LstmCell {
 public:
  struct State {
    Matrix h;
    Matrix c;
  };
  struct Cache {
    Matrix x, h_prev, c_prev;
    Matrix i, f, g, o;  // post-activation gates
    Matrix c, tanh_c;
  };
  struct Grads {
    Matrix dx;
    Matrix dh_prev;
    Matrix dc_prev;
  };

  LstmCell() = default;
  LstmCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);

  State zero_state(Eigen::Index rows) const;
  State step(const Matrix& x, const State& prev, Cache* cache = nullptr) const;
  /// dh/dc are gradients w.r.t. this step's outputs h_t, c_t.
  Grads backward(const Cache& cache, const Matrix& dh, const Matrix& dc) const;

  Eigen::Index hidden() const { return Wh_->value.cols(); }
  Eigen::Index in_dim() const { return Wx_->value.cols(); }

 private:
  Param* Wx_ = nullptr;  // 4H×in, gate order i, f, g, o
  Param* Wh_ = nullptr;  // 4H×H
  Param* b_ = nullptr;   // 1×4H
};

/// Z'_i = act(Σ_j A_ij · W z_j): a graph convolution over a dense affinity matrix.
class GcnLayer {
 public:
  struct Cache {
    Matrix z;
    Matrix a;
    Matrix pre;
    Matrix out;
  };
  struct Grads {
    Matrix dz;
  };

  GcnLayer() = default;
  GcnLayer(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
           Rng& rng);

  Matrix forward(const Matrix& z, const Matrix& affinity, Cache* cache = nullptr) const;
  /// Accumulates dW; returns dL/dZ (affinity is treated as a constant).
  Matrix backward(const Cache& cache, const Matrix& dout) const;

  Param& weight() const { return *W_; }

 private:
  Param* W_ = nullptr;  // out×in
  Activation act_ = Activation::kRelu;
};

/// Free-function forms over explicit weights, used by tests and grad checks.
Matrix dense_forward(const Matrix& W, const Matrix& b, const Matrix& x, Activation act);
Matrix gcn_forward(const Matrix& W, const Matrix& z, const Matrix& affinity, Activation act);

/// α_ij = exp(-d_ij / d_max) over row points; d_max is the largest pairwise
/// distance (α ≡ 1 when all points coincide).
Matrix affinity_from_points(const Matrix& points);

}  // namespace curio::nn
