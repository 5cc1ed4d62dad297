#include "curio/nnet/layers.hpp"

#include <cmath>

namespace curio::nn {

Matrix activate(const Matrix& pre, Activation act) {
  switch (act) {
    case Activation::kLinear: return pre;
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kTanh: return pre.array().tanh().matrix();
  }
  return pre;
}

Matrix activate_backward(const Matrix& dout, const Matrix& pre, const Matrix& out, Activation act) {
  switch (act) {
    case Activation::kLinear: return dout;
    case Activation::kRelu: return (pre.array() > 0.0).select(dout, 0.0);
    case Activation::kTanh: return (dout.array() * (1.0 - out.array().square())).matrix();
  }
  return dout;
}

namespace {

Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

// ---------------------------------------------------------------------------

Dense::Dense(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
             Rng& rng, double init_scale)
    : W_(&store.add(name + ".W", out, in, rng, init_scale)), b_(&store.add(name + ".b", 1, out, rng, 0.0)), act_(act) {}

Matrix Dense::forward(const Matrix& x, Cache* cache) const {
  if (x.cols() != W_->value.cols()) throw NnError("dense: input width mismatch");
  Matrix pre = x * W_->value.transpose();
  pre.rowwise() += b_->value.row(0);
  Matrix out = activate(pre, act_);
  check_finite(out, "dense output");
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->out = out;
  }
  return out;
}

Matrix Dense::backward(const Cache& cache, const Matrix& dy) const {
  const Matrix dpre = activate_backward(dy, cache.pre, cache.out, act_);
  W_->grad.noalias() += dpre.transpose() * cache.x;
  b_->grad.row(0) += dpre.colwise().sum();
  return dpre * W_->value;
}

Mlp2::Mlp2(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
           Rng& rng, double output_scale)
    : hidden_(store, name + ".l1", in, hidden, Activation::kRelu, rng),
      output_(store, name + ".l2", hidden, out, Activation::kLinear, rng, output_scale) {}

Matrix Mlp2::forward(const Matrix& x, Cache* cache) const {
  Matrix h = hidden_.forward(x, cache ? &cache->hidden : nullptr);
  return output_.forward(h, cache ? &cache->output : nullptr);
}

Matrix Mlp2::backward(const Cache& cache, const Matrix& dy) const {
  return hidden_.backward(cache.hidden, output_.backward(cache.output, dy));
}

// ---------------------------------------------------------------------------

LstmCell::LstmCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng)
    : Wx_(&store.add(name + ".Wx", 4 * hidden, in, rng)),
      Wh_(&store.add(name + ".Wh", 4 * hidden, hidden, rng)),
      b_(&store.add(name + ".b", 1, 4 * hidden, rng, 0.0)) {
  // forget-gate bias starts at 1
  b_->value.block(0, hidden, 1, hidden).setOnes();
}

LstmCell::State LstmCell::zero_state(Eigen::Index rows) const {
  return {Matrix::Zero(rows, hidden()), Matrix::Zero(rows, hidden())};
}

LstmCell::State LstmCell::step(const Matrix& x, const State& prev, Cache* cache) const {
  const Eigen::Index H = hidden();
  if (x.cols() != in_dim()) throw NnError("lstm: input width mismatch");
  if (prev.h.rows() != x.rows() || prev.h.cols() != H || prev.c.rows() != x.rows() || prev.c.cols() != H)
    throw NnError("lstm: state shape mismatch");
  check_finite(x, "lstm input");
  Matrix a = x * Wx_->value.transpose() + prev.h * Wh_->value.transpose();
  a.rowwise() += b_->value.row(0);
  Matrix i = sigmoid(a.leftCols(H));
  Matrix f = sigmoid(a.middleCols(H, H));
  Matrix g = a.middleCols(2 * H, H).array().tanh().matrix();
  Matrix o = sigmoid(a.rightCols(H));
  Matrix c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  Matrix tanh_c = c.array().tanh().matrix();
  State next{o.cwiseProduct(tanh_c), c};
  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c = std::move(c);
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

LstmCell::Grads LstmCell::backward(const Cache& k, const Matrix& dh, const Matrix& dc) const {
  const Eigen::Index H = hidden();
  const Eigen::Index N = k.x.rows();
  const Matrix d_o = dh.cwiseProduct(k.tanh_c);
  const Matrix dc_total =
      dc + (dh.array() * k.o.array() * (1.0 - k.tanh_c.array().square())).matrix();
  Matrix da(N, 4 * H);
  da.leftCols(H) = (dc_total.array() * k.g.array() * k.i.array() * (1.0 - k.i.array())).matrix();
  da.middleCols(H, H) = (dc_total.array() * k.c_prev.array() * k.f.array() * (1.0 - k.f.array())).matrix();
  da.middleCols(2 * H, H) = (dc_total.array() * k.i.array() * (1.0 - k.g.array().square())).matrix();
  da.rightCols(H) = (d_o.array() * k.o.array() * (1.0 - k.o.array())).matrix();

  Wx_->grad.noalias() += da.transpose() * k.x;
  Wh_->grad.noalias() += da.transpose() * k.h_prev;
  b_->grad.row(0) += da.colwise().sum();
  return {da * Wx_->value, da * Wh_->value, dc_total.cwiseProduct(k.f)};
}

// ---------------------------------------------------------------------------

GcnLayer::GcnLayer(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                   Activation act, Rng& rng)
    : W_(&store.add(name + ".W", out, in, rng)), act_(act) {}

Matrix GcnLayer::forward(const Matrix& z, const Matrix& affinity, Cache* cache) const {
  if (affinity.rows() != z.rows() || affinity.cols() != z.rows()) throw NnError("gcn: affinity shape mismatch");
  if (z.cols() != W_->value.cols()) throw NnError("gcn: input width mismatch");
  Matrix pre = affinity * (z * W_->value.transpose());
  Matrix out = activate(pre, act_);
  check_finite(out, "gcn output");
  if (cache) {
    cache->z = z;
    cache->a = affinity;
    cache->pre = std::move(pre);
    cache->out = out;
  }
  return out;
}

Matrix GcnLayer::backward(const Cache& cache, const Matrix& dout) const {
  const Matrix dpre = activate_backward(dout, cache.pre, cache.out, act_);
  const Matrix dproj = cache.a.transpose() * dpre;  // gradient w.r.t. Z Wᵀ
  W_->grad.noalias() += dproj.transpose() * cache.z;
  return dproj * W_->value;
}

Matrix dense_forward(const Matrix& W, const Matrix& b, const Matrix& x, Activation act) {
  Matrix pre = x * W.transpose();
  pre.rowwise() += b.row(0);
  return activate(pre, act);
}

Matrix gcn_forward(const Matrix& W, const Matrix& z, const Matrix& affinity, Activation act) {
  return activate(affinity * (z * W.transpose()), act);
}

Matrix affinity_from_points(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d(n, n);
  double d_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      d(i, j) = (points.row(i) - points.row(j)).norm();
      d_max = std::max(d_max, d(i, j));
    }
  if (d_max == 0.0) return Matrix::Ones(n, n);
  return (-d.array() / d_max).exp().matrix();
}

}  // namespace curio::nn
