#include "curio/nnet/params.hpp"

#include <cmath>

#include "json.hpp"

namespace curio::nn {

Param& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  if (params_.count(name)) throw NnError("duplicate parameter '" + name + "'");
  Param p;
  p.value = Matrix::Zero(rows, cols);
  if (scale != 0.0) {
    const double limit = scale * std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) p.value(r, c) = dist(rng);
  }
  p.grad = Matrix::Zero(rows, cols);
  p.m = Matrix::Zero(rows, cols);
  p.v = Matrix::Zero(rows, cols);
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double value) {
  if (params_.count(name)) throw NnError("duplicate parameter '" + name + "'");
  Param p;
  p.value = Matrix::Constant(rows, cols, value);
  p.grad = Matrix::Zero(rows, cols);
  p.m = Matrix::Zero(rows, cols);
  p.v = Matrix::Zero(rows, cols);
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw NnError("no parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NnError("no parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [_, p] : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [_, p] : params_) p.grad *= s;
  }
  return norm;
}

void ParamStore::adam_step(double lr, const AdamConfig& cfg) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params_) {
    check_finite(p.grad, name.c_str());
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
  }
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& [name, p] : params_) {
    const Param& o = other.at(name);
    check_shape(o.value, p.value.rows(), p.value.cols(), name.c_str());
    p.value = o.value;
  }
}

void ParamStore::reset_optimizer() {
  step_ = 0;
  for (auto& [_, p] : params_) {
    p.m.setZero();
    p.v.setZero();
    p.grad.setZero();
  }
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::string ParamStore::to_json(const std::string& kind) const {
  using nlohmann::json;
  json j;
  j["format"] = "curio-params/1";
  j["kind"] = kind;
  j["step"] = step_;
  json ps = json::object();
  for (const auto& [name, p] : params_) {
    std::vector<double> data(p.value.data(), p.value.data() + p.value.size());
    ps[name] = {{"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", std::move(data)}};
  }
  j["params"] = std::move(ps);
  return j.dump();
}

void ParamStore::load_json(const std::string& text, const std::string& kind) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw NnError(std::string("malformed checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "curio-params/1") throw NnError("checkpoint has an unknown format header");
  if (j.value("kind", "") != kind) throw NnError("checkpoint holds '" + j.value("kind", "") + "', want '" + kind + "'");
  const json& ps = j.at("params");
  for (auto& [name, p] : params_) {
    if (!ps.contains(name)) throw NnError("checkpoint lacks parameter '" + name + "'");
    const json& e = ps.at(name);
    check_shape(p.value, e.at("rows").get<Eigen::Index>(), e.at("cols").get<Eigen::Index>(), name.c_str());
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != p.value.size()) throw NnError("checkpoint size mismatch");
    std::copy(data.begin(), data.end(), p.value.data());
  }
  reset_optimizer();
  step_ = j.value("step", std::int64_t{0});
}

double scheduled_lr(double base_lr, double decay, std::size_t image_index) {
  if (image_index == 0) throw NnError("scheduled_lr: images are 1-based");
  return base_lr * std::pow(decay, static_cast<double>(image_index - 1));
}

}  // namespace curio::nn
