#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace curio {

struct GradCheckResult {
  std::string name;  // dense, lstm, gcn or policy
  std::uint64_t seed = 0;
  double rel_error = 0.0;  // worst parameter or input over the case
  double tolerance = 0.0;

  bool passed() const { return rel_error <= tolerance; }
};

/// Analytic vs central-difference gradients for each network piece.
double check_dense_gradients(std::uint64_t seed);
/// Three-step unroll; checks weights, the first input and the initial state.
double check_lstm_gradients(std::uint64_t seed, std::size_t steps = 3);
double check_gcn_gradients(std::uint64_t seed);
/// Full round loss (policy, value and entropy terms) of a small policy
/// network replayed over a three-round dialog.
double check_policy_gradients(std::uint64_t seed);

/// Every case above for `seeds` consecutive seeds starting at `base_seed`.
std::vector<GradCheckResult> gradient_suite(std::uint64_t base_seed, std::size_t seeds = 10);

}  // namespace curio
