#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "curio/trainer.hpp"

namespace curio {

using PolicyFactory = std::function<std::unique_ptr<QuestionPolicy>()>;

/// Factory for `random`, `entropy`, `entropy-context` or `learned` (the latter needs `network`).
PolicyFactory make_policy_factory(const std::string& name, std::shared_ptr<const PolicyNetwork> network = nullptr,
                                  const BaselineConfig& baseline = {});

struct EvalOptions {
  std::size_t budget = 20;
  double sigma = 0.1;
  VisionConfig vision;
  std::uint64_t seed = 0;
  bool train_vision = true;
  std::size_t workers = 0;  // 0 = hardware concurrency
  /// Visual accuracy is measured every `visual_every` images (0 = never) on `heldout`.
  std::size_t visual_every = 0;
  std::span<const Scene> heldout;
  /// Starting point for each fold's visual system instead of a fresh draw.
  const VisualSystem* initial_vision = nullptr;
};

struct FoldResult {
  std::size_t fold = 0;
  /// Mean recall over the fold's images; index 0 is after bottom-up, index t after round t.
  std::vector<double> curve;
  double auc = 0.0;
  std::vector<std::pair<std::size_t, double>> visual_accuracy;  // (image index, accuracy)
  std::vector<DialogRecord> dialogs;
};

/// Per-image recall after each round t = 0..budget; dialogs that ended early hold their last value.
std::vector<double> dialog_curve(const DialogRecord& dialog, std::size_t budget);
/// R@K from a curve indexed 0..T; K beyond T reads R@T.
double recall_at(std::span<const double> curve, std::size_t k);
/// Mean of R@1..R@T.
double area_under_curve(std::span<const double> curve);

/// Runs one independent rollout per fold (fresh visual system and RNG stream
/// keyed by the fold's first scene), in parallel workers.
std::vector<FoldResult> evaluate(const PolicyFactory& factory, std::span<const std::span<const Scene>> folds,
                                 const EvalOptions& options);

/// Argmax accuracy of `vision` over every slot of `scenes`.
double eval_visual(const VisualSystem& vision, std::span<const Scene> scenes, const FeatureEmbedding& embedding,
                   double sigma, std::uint64_t noise_seed);

/// Feature embedding and noise stream used by evaluation under `seed`.
FeatureEmbedding eval_embedding(std::shared_ptr<const AttributeSchema> schema, std::size_t dim, std::uint64_t seed);
std::uint64_t eval_noise_seed(std::uint64_t seed);

struct PolicySummary {
  std::string policy;
  std::string split;
  std::vector<FoldResult> folds;
};

/// Mean recall curve over folds.
std::vector<double> mean_curve(std::span<const FoldResult> folds);
double mean_auc(std::span<const FoldResult> folds);

// ---------------------------------------------------------------------------
// ablations

struct QuestionTypeCounts {
  std::size_t zero_hop_valid = 0;
  std::size_t one_hop_valid = 0;
  std::size_t ambiguous = 0;
  std::size_t invalid = 0;

  std::size_t total() const { return zero_hop_valid + one_hop_valid + ambiguous + invalid; }
};

/// Histogram of question outcomes per round (index t−1 for round t).
std::vector<QuestionTypeCounts> question_types(std::span<const FoldResult> folds, std::size_t budget);

struct ObjectCountRow {
  std::size_t objects = 0;
  double recall_at_budget = 0.0;
  double failed_share = 0.0;  // ambiguous + invalid over all questions
  double mean_dialog_length = 0.0;
};

ObjectCountRow object_count_row(std::size_t objects, std::span<const FoldResult> folds, std::size_t budget);

struct CommitCounts {
  double vision = 0.0;
  double oracle = 0.0;
};

/// Mean final vision/oracle commit counts per image index.
std::vector<CommitCounts> commit_sources(std::span<const FoldResult> folds);

struct AblationReport {
  std::size_t budget = 0;
  std::vector<double> full_curve;
  std::vector<double> static_curve;        // visual system never trained
  std::size_t static_vision_commits = 0;
  std::vector<double> mixed_curve;         // Mixed vocabulary, fresh visual system
  std::vector<double> partial_curve;       // Mixed vocabulary, pretrained on Standard labels
  std::vector<QuestionTypeCounts> question_types;  // static visual system
  ObjectCountRow few_objects;
  ObjectCountRow many_objects;
  std::vector<CommitCounts> commits;
};

struct AblationOptions {
  EpisodeConfig config;
  std::size_t budget = 50;
  std::size_t few_objects = 5;
  std::size_t many_objects = 8;
  std::size_t pretrain_objects = 500;
};

/// Visual system for the Mixed schema fitted on `count` labeled objects drawn
/// from the Standard vocabulary.
VisualSystem pretrain_partial_vision(const AttributeSchema& mixed, std::size_t count, const EvalOptions& options);

AblationReport ablate(const PolicyFactory& factory, const AblationOptions& options);

// ---------------------------------------------------------------------------
// output files

/// Fails with a message if `dir` cannot be used as an output directory; creates it if needed.
void prepare_output_dir(const std::string& dir);

void write_summary_csv(const std::string& path, std::span<const PolicySummary> rows);
void write_curve_csv(const std::string& path, std::span<const double> curve);
void write_transcripts(const std::string& path, std::span<const FoldResult> folds);
void write_ablation(const std::string& dir, const AblationReport& report);
void write_training_curve(const std::string& path, std::span<const EpisodeStats> curve);

/// Fixed-precision decimal used for every CSV value.
std::string format_number(double value);

}  // namespace curio
