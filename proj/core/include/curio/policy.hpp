#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "curio/memory.hpp"
#include "curio/nnet/distributions.hpp"
#include "curio/nnet/layers.hpp"
#include "curio/qdsl.hpp"

namespace curio {

/// What the agent did and heard in the previous dialog round.
struct PreviousRound {
  QuestionAction action;
  AnswerKind answer = AnswerKind::kInvalid;
};

/// Common interface of the learned questioner and the heuristic baselines.
class QuestionPolicy {
 public:
  virtual ~QuestionPolicy() = default;

  virtual std::string name() const = 0;
  /// Called before the first round on each image.
  virtual void begin_dialog(const GraphMemory& memory) { (void)memory; }
  /// Picks the next question. Callers stop the dialog once every slot is committed.
  virtual QuestionAction act(const GraphMemory& memory, const std::optional<PreviousRound>& last, Rng& rng) = 0;

  struct Estimate {
    double value = 0.0;
    double log_prob = 0.0;
  };
  /// Critic value and log-probability behind the latest action, if the policy has them.
  virtual std::optional<Estimate> last_estimate() const { return std::nullopt; }
};

// ---------------------------------------------------------------------------
// Heuristic baselines

struct BaselineConfig {
  double temperature = 0.5;
  std::size_t context_neighbors = 3;
  /// Mean object entropy (nats) below which a reference is considered reliable.
  double reference_threshold = 0.1;
};

/// Uniform over uncommitted slots; fair coin for using a reference; uniform reference.
QuestionAction baseline_random(const GraphMemory& memory, Rng& rng);
/// Target ∝ softmax(entropy / T); reference ∝ softmax(−mean object entropy / T).
QuestionAction baseline_entropy(const GraphMemory& memory, Rng& rng, const BaselineConfig& cfg = {});
/// As baseline_entropy, but references restricted to the target's nearest neighbors.
QuestionAction baseline_entropy_context(const GraphMemory& memory, Rng& rng, const BaselineConfig& cfg = {});

enum class BaselineKind { kRandom, kEntropy, kEntropyContext };

class BaselinePolicy final : public QuestionPolicy {
 public:
  explicit BaselinePolicy(BaselineKind kind, BaselineConfig cfg = {}) : kind_(kind), cfg_(cfg) {}
  std::string name() const override;
  QuestionAction act(const GraphMemory& memory, const std::optional<PreviousRound>& last, Rng& rng) override;

 private:
  BaselineKind kind_;
  BaselineConfig cfg_;
};

// ---------------------------------------------------------------------------
// Learned questioner

enum class Exploration { kEpsGreedy, kSoftmax };

struct PolicyConfig {
  /// Concept slots per object the network is built for; schemas with fewer
  /// concepts are padded and the padding is masked.
  std::size_t max_concepts = 4;
  std::size_t slot_dim = 16;  // LSTM hidden = max_concepts · slot_dim
  std::size_t ref_dim = 64;
  double epsilon = 0.1;
  /// Train-mode action selection: ε-greedy over logits, or sampling from π.
  Exploration exploration = Exploration::kSoftmax;
  bool mask_committed = true;
  /// Mask questions whose program failed since the memory last changed;
  /// asking it again against an unchanged memory gets the same answer.
  bool mask_failed = true;

  std::size_t lstm_hidden() const { return max_concepts * slot_dim; }
};

/// Number of input channels per (object, concept) slot.
inline constexpr std::size_t kInputChannels = 8;

/// Channel layout of the per-slot input vector.
enum InputChannel : std::size_t {
  kChEntropy = 0,       // slot entropy
  kChLocation0 = 1,     // learned 2-d location embedding
  kChLocation1 = 2,
  kChLastTarget = 3,    // 1 at last round's target slot
  kChLastReference = 4, // 1 on every slot of last round's reference object
  kChLastUsedRef = 5,   // 1 on every slot of last round's target object iff it used a reference
  kChAnswerTarget = 6,  // 1 at last round's target slot iff the answer was a value
  kChAnswerRef = 7,     // 1 on last round's reference object iff the answer was a value
};

/// Everything the network sees at one round, before the learned location embedding.
struct Observation {
  std::size_t num_objects = 0;
  std::size_t num_concepts = 0;   // schema concepts (≤ max_concepts)
  nn::Matrix boxes;               // K × 4, see normalized_boxes
  nn::Matrix raw;                 // K × (max_concepts · 8); location channels left 0
  std::vector<char> slot_mask;    // K · max_concepts, nonzero = not selectable
  /// Per slot, K + 1 flags of questions known to fail: [0] without a reference,
  /// [1 + j] with reference object j. Empty when nothing is masked.
  std::vector<char> failed;
  nn::Matrix affinity;            // K × K object affinities
};

/// The recurrent target/reference network with value heads.
class PolicyNetwork {
 public:
  using State = nn::LstmCell::State;

  struct Forced {
    std::size_t target_slot = 0;
    bool use_reference = false;
    std::size_t reference_candidate = 0;
  };

  /// Per-round forward results. Candidate index c maps to object `candidates[c]`.
  struct Output {
    QuestionAction action;
    std::size_t target_slot = 0;
    std::size_t reference_candidate = 0;
    std::vector<double> target_probs;
    std::vector<std::size_t> candidates;
    std::vector<double> reference_probs;
    std::vector<double> use_probs;  // {no, yes}
    double value = 0.0;             // state value used as the A2C baseline
    double value_reference = 0.0;
    double value_use = 0.0;
    double log_prob = 0.0;          // of the sampled joint action
    State next;
  };

  /// Activations kept from forward for backward.
  struct Cache {
    std::size_t K = 0;
    nn::Mlp2::Cache location;
    nn::LstmCell::Cache lstm;
    nn::GcnLayer::Cache tg1, tg2;
    nn::Mlp2::Cache tscore, tvalue;
    bool has_ref = false;
    nn::GcnLayer::Cache rg1, rg2, ug1, ug2;
    nn::Mlp2::Cache rscore, rvalue, uscore, uvalue;
    Output out;
  };

  PolicyNetwork(const PolicyConfig& config, std::uint64_t seed);
  ~PolicyNetwork();
  PolicyNetwork(PolicyNetwork&&) noexcept;
  PolicyNetwork& operator=(PolicyNetwork&&) noexcept;

  const PolicyConfig& config() const { return config_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  State initial_state(std::size_t num_objects) const;

  /// `failed` (K · max_concepts · (K + 1), optional) flags failed questions, laid
  /// out as Observation::failed; honored under `mask_failed`.
  Observation observe(const GraphMemory& memory, const std::optional<PreviousRound>& last,
                      std::span<const char> failed = {}) const;

  /// The K × |A| × 8 input tensor flattened to K × (|A|·8), including the location embedding.
  nn::Matrix build_input(const Observation& obs) const;

  /// One round. With `forced`, replays the given choices instead of sampling.
  Output forward(const Observation& obs, const State& prev, nn::Mode mode, Rng& rng,
                 std::unique_ptr<Cache>* cache = nullptr, const Forced* forced = nullptr) const;

  struct LossWeights {
    double policy = 0.0;   // multiplies −Σ log π (i.e. the advantage / batch size)
    double value = 0.0;    // multiplies Σ_heads (V − G)²
    double target_return = 0.0;
    double entropy = 0.0;  // multiplies −Σ H
  };

  /// Loss contributed by one round (for grad checks and logging).
  static double round_loss(const Output& out, const LossWeights& w);

  /// Backpropagates one round's loss. `dh`/`dc` hold dL/d(h_t, c_t) from later
  /// rounds on entry and dL/d(h_{t−1}, c_{t−1}) on return.
  void backward(const Cache& cache, const LossWeights& w, nn::Matrix& dh, nn::Matrix& dc);

  void copy_from(const PolicyNetwork& other) { store_.copy_values_from(other.store_); }
  std::string to_json() const;
  void load_json(const std::string& text);
  /// Rebuilds a network with the configuration stored in the checkpoint.
  static PolicyNetwork from_json(const std::string& text);

 private:
  PolicyConfig config_;
  nn::ParamStore store_;
  nn::Mlp2 location_;
  nn::LstmCell lstm_;
  nn::GcnLayer target_gcn1_, target_gcn2_;
  nn::Mlp2 target_score_, target_value_;
  nn::GcnLayer ref_gcn1_, ref_gcn2_;
  nn::Mlp2 ref_score_, ref_value_;
  nn::GcnLayer use_gcn1_, use_gcn2_;
  nn::Mlp2 use_score_, use_value_;
};

/// Slot-level affinity: slots of the same concept exchange messages with
/// weight α_kj; slots of different concepts are not connected.
nn::Matrix slot_affinity(const nn::Matrix& object_affinity, std::size_t concepts);
/// Box centers min-max normalized over the scene and sizes divided by the
/// larger center span: (cx, cy, w, h), invariant to translating or scaling the scene.
nn::Matrix normalized_boxes(const std::vector<Box>& boxes);
/// Affinity of object centers, α_ij = exp(−d_ij / d_max).
nn::Matrix object_affinity(const std::vector<Box>& boxes);

/// Adapter running a PolicyNetwork as a QuestionPolicy. In train mode it can
/// record per-round caches for the A2C update.
class LearnedPolicy final : public QuestionPolicy {
 public:
  LearnedPolicy(std::shared_ptr<const PolicyNetwork> network, nn::Mode mode);

  std::string name() const override { return "learned"; }
  void begin_dialog(const GraphMemory& memory) override;
  QuestionAction act(const GraphMemory& memory, const std::optional<PreviousRound>& last, Rng& rng) override;

  std::optional<Estimate> last_estimate() const override;

  void set_recording(bool on) { recording_ = on; }

  struct RoundTrace {
    std::unique_ptr<PolicyNetwork::Cache> cache;
    PolicyNetwork::Output output;
  };
  /// One trace list per dialog since the last clear.
  std::vector<std::vector<RoundTrace>>& traces() { return traces_; }
  void clear_traces() { traces_.clear(); }

  const PolicyNetwork::Output* last_output() const { return has_last_ ? &last_ : nullptr; }

 private:
  void mark_failed(const GraphMemory& memory);

  std::shared_ptr<const PolicyNetwork> network_;
  nn::Mode mode_;
  bool recording_ = false;
  PolicyNetwork::State state_;
  PolicyNetwork::Output last_;
  bool has_last_ = false;
  std::vector<char> failed_;
  std::vector<std::pair<std::size_t, std::string>> failed_programs_;  // (queried concept, program)
  std::vector<std::vector<RoundTrace>> traces_;
};

}  // namespace curio
