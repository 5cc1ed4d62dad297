#pragma once

#include <span>
#include <vector>

#include "curio/nnet/tensor.hpp"
#include "curio/random.hpp"

namespace curio::nn {

enum class Mode { kTrain, kEval };

/// Softmax over unmasked entries; masked entries get probability exactly 0.
/// An empty mask means "nothing masked".
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const char> mask = {});

/// log p_index under masked_softmax, and its gradient w.r.t. the logits.
double log_prob(std::span<const double> probs, std::size_t index);
std::vector<double> log_prob_grad(std::span<const double> probs, std::size_t index);

/// Entropy of `probs` and its gradient w.r.t. the logits that produced them.
double categorical_entropy(std::span<const double> probs);
std::vector<double> entropy_grad(std::span<const double> probs);

/// Train: with probability eps uniform over unmasked entries, else argmax.
/// Eval: argmax. Masked entries (mask[i] != 0) are never returned; ties go to the lowest index.
std::size_t softmax_sample_eps(std::span<const double> logits, std::span<const char> mask, double eps, Mode mode,
                               Rng& rng);

/// Draw from the categorical distribution `probs`.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

/// Row-wise softmax and mean cross-entropy against integer targets.
Matrix softmax_rows(const Matrix& logits);
double cross_entropy(const Matrix& probs, std::span<const int> targets);
/// d(mean CE)/dlogits.
Matrix cross_entropy_grad(const Matrix& probs, std::span<const int> targets);

}  // namespace curio::nn
