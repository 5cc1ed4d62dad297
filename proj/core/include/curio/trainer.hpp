#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "curio/policy.hpp"
#include "curio/vision.hpp"

namespace curio {

struct RoundRecord {
  QuestionAction action;
  std::string program;     // call-syntax program text
  std::string transcript;  // one transcript line
  bool one_hop = false;
  OracleAnswer answer;
  double reward = 0.0;
  double recall_after = 0.0;
  double value = 0.0;
  double log_prob = 0.0;
};

struct DialogRecord {
  std::size_t image_index = 0;  // 1-based position in the image sequence
  std::uint64_t scene_id = 0;
  std::size_t num_objects = 0;
  double recall_initial = 0.0;  // after bottom-up initialization
  double recall_final = 0.0;
  std::size_t vision_commits = 0;
  std::size_t oracle_commits = 0;
  std::vector<RoundRecord> rounds;

  double total_reward() const;
};

struct RolloutOptions {
  std::size_t budget = 20;          // dialog rounds T
  std::size_t episode_length = 0;   // n in the annealed threshold; 0 = number of scenes
  bool train_vision = true;
  double sigma = 0.1;
  std::uint64_t noise_seed = 0;
  /// Verify monotone recall, oracle-slot immutability and simplex rows every round.
  bool check_invariants = true;
};

struct RolloutResult {
  std::vector<DialogRecord> dialogs;
  std::vector<GraphMemory> memories;
};

/// Called after each image once the visual system has been retrained.
using ImageCallback = std::function<void(const DialogRecord& dialog, const VisualSystem& vision)>;

/// Runs question dialogs over `scenes` in order, retraining `vision` on the
/// accumulated committed memories after every image.
RolloutResult rollout(std::span<const Scene> scenes, QuestionPolicy& policy, VisualSystem& vision,
                      const FeatureEmbedding& embedding, const RolloutOptions& options, Rng& rng,
                      const ImageCallback& after_image = {});

struct Returns {
  std::vector<std::vector<double>> returns;     // per dialog, per round
  std::vector<std::vector<double>> advantages;  // normalized over the whole batch
};

Returns compute_returns(std::span<const DialogRecord> dialogs, double gamma, bool normalize = true);

struct A2cConfig {
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double grad_clip = 5.0;
};

struct UpdateStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t rounds = 0;
};

/// One actor-critic step over recorded dialogs. `traces[d]` must hold the
/// forward caches of `dialogs[d]` round for round.
UpdateStats a2c_update(PolicyNetwork& network, std::span<const DialogRecord> dialogs,
                       std::vector<std::vector<LearnedPolicy::RoundTrace>>& traces, const Returns& returns,
                       const A2cConfig& config, double lr);

/// Every knob of a training (and default evaluation) run.
struct EpisodeConfig {
  std::string schema = "standard";
  std::size_t episodes = 60;
  std::size_t images = 30;  // n, images per episode
  std::size_t budget = 20;  // T
  std::size_t min_objects = 5;
  std::size_t max_objects = 8;
  std::size_t dataset_size = 1800;
  std::string dataset;  // optional dataset file; generated from the seed when empty
  double policy_lr = 2e-3;
  double policy_lr_decay = 1.0;  // per episode
  bool per_image_updates = true;
  double gamma = 0.0;
  A2cConfig a2c;
  PolicyConfig policy;
  VisionConfig vision;
  std::uint64_t seed = 0;
  // evaluation
  std::size_t eval_folds = 6;
  std::size_t fold_size = 50;
  std::size_t eval_budget = 0;  // 0 = same as budget
  std::size_t workers = 0;      // 0 = hardware concurrency

  void validate() const;
};

EpisodeConfig episode_config_from_json(const std::string& text);
std::string episode_config_to_json(const EpisodeConfig& config);
EpisodeConfig load_episode_config(const std::string& path);

struct EpisodeStats {
  std::size_t episode = 0;
  double mean_reward = 0.0;        // mean over images of the dialog's total reward
  double mean_final_recall = 0.0;
  double mean_initial_recall = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double mean_rounds = 0.0;
};

struct TrainResult {
  std::shared_ptr<PolicyNetwork> network;
  std::vector<EpisodeStats> curve;
};

/// Seed-derived stream tags shared by training and evaluation.
enum StreamTag : std::uint64_t {
  kTagDataset = 1,
  kTagEmbedding = 2,
  kTagNoise = 3,
  kTagVisionInit = 4,
  kTagPolicyInit = 5,
  kTagEpisode = 6,
  kTagFold = 7,
  kTagPretrain = 8,
};

/// Builds the run's dataset: read from `config.dataset` or generated from the seed.
Dataset make_dataset(const EpisodeConfig& config);

/// Episode loop: reset vision, sample n training scenes, roll out, update the policy.
TrainResult train(const EpisodeConfig& config, std::span<const Scene> train_scenes,
                  const std::function<void(const EpisodeStats&)>& on_episode = {});

}  // namespace curio
