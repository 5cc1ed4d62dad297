#include "curio/nnet/distributions.hpp"

#include <cmath>
#include <limits>

namespace curio::nn {

namespace {

bool masked(std::span<const char> mask, std::size_t i) { return !mask.empty() && mask[i] != 0; }

}  // namespace

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const char> mask) {
  if (!mask.empty() && mask.size() != logits.size()) throw NnError("masked_softmax: mask size mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!masked(mask, i)) mx = std::max(mx, logits[i]);
  if (!std::isfinite(mx)) throw NnError("masked_softmax: every entry is masked or logits are non-finite");
  std::vector<double> p(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!masked(mask, i)) sum += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= sum;
  return p;
}

double log_prob(std::span<const double> probs, std::size_t index) { return std::log(probs[index]); }

std::vector<double> log_prob_grad(std::span<const double> probs, std::size_t index) {
  std::vector<double> g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (i == index ? 1.0 : 0.0) - probs[i];
  // masked entries have p = 0 and carry no gradient
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] == 0.0 && i != index) g[i] = 0.0;
  return g;
}

double categorical_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::vector<double> entropy_grad(std::span<const double> probs) {
  const double h = categorical_entropy(probs);
  std::vector<double> g(probs.size(), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) g[i] = -probs[i] * (std::log(probs[i]) + h);
  return g;
}

std::size_t softmax_sample_eps(std::span<const double> logits, std::span<const char> mask, double eps, Mode mode,
                               Rng& rng) {
  if (!mask.empty() && mask.size() != logits.size()) throw NnError("sample: mask size mismatch");
  std::size_t best = logits.size();
  std::size_t unmasked = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (masked(mask, i)) continue;
    ++unmasked;
    if (best == logits.size() || logits[i] > logits[best]) best = i;
  }
  if (unmasked == 0) throw NnError("sample: no unmasked entry");
  if (mode == Mode::kEval || eps <= 0.0) return best;
  if (uniform01(rng) >= eps) return best;
  std::size_t pick = uniform_index(rng, unmasked);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (masked(mask, i)) continue;
    if (pick-- == 0) return i;
  }
  return best;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  double u = uniform01(rng);
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = i;
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return last;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double cross_entropy(const Matrix& probs, std::span<const int> targets) {
  if (static_cast<std::size_t>(probs.rows()) != targets.size()) throw NnError("cross_entropy: size mismatch");
  if (targets.empty()) return 0.0;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r)
    loss -= std::log(std::max(probs(r, targets[static_cast<std::size_t>(r)]), 1e-300));
  return loss / static_cast<double>(targets.size());
}

Matrix cross_entropy_grad(const Matrix& probs, std::span<const int> targets) {
  Matrix g = probs;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) g(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
  return g / static_cast<double>(std::max<std::size_t>(1, targets.size()));
}

}  // namespace curio::nn
