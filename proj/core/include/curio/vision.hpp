#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "curio/memory.hpp"
#include "curio/nnet/layers.hpp"
#include "curio/scene.hpp"

namespace curio {

struct VisionConfig {
  std::size_t feature_dim = 64;
  std::size_t hidden = 64;
  /// Std-dev of per-object Gaussian feature noise.
  double noise = 0.1;
  double lr = 1e-4;
  double lr_decay = 0.99;
  std::size_t steps = 50;
  std::size_t batch = 32;
  /// A head trains once its concept has at least factor·n_a annotations.
  std::size_t annotation_factor = 5;
};

/// Per-object feature rows (K × F).
using ObjectFeatures = nn::Matrix;

/// Experiment-wide random linear map from concatenated attribute one-hots
/// to features. Drawn once from the experiment seed, shared by every scene.
class FeatureEmbedding {
 public:
  FeatureEmbedding(std::shared_ptr<const AttributeSchema> schema, std::size_t feature_dim, std::uint64_t seed);

  /// Embedding plus N(0, sigma²) noise; the noise stream is a function of
  /// (noise_seed, scene seed, object index).
  ObjectFeatures featurize(const Scene& scene, double sigma, std::uint64_t noise_seed) const;
  /// Noise-free feature of one attribute assignment.
  nn::Matrix embed(const std::vector<int>& attributes) const;

  std::size_t dim() const { return static_cast<std::size_t>(matrix_.cols()); }
  const AttributeSchema& schema() const { return *schema_; }

 private:
  std::shared_ptr<const AttributeSchema> schema_;
  std::vector<std::size_t> offsets_;
  nn::Matrix matrix_;  // (Σ n_a) × F
};

/// Labeled feature rows per concept, accumulated from finished graph memories.
class AnnotationSet {
 public:
  explicit AnnotationSet(std::size_t num_concepts = 0, std::size_t feature_dim = 0);

  void add(std::size_t concept_index, std::span<const double> feature, int label);
  /// Adds every committed slot of `memory` (vision or oracle provenance).
  void add_memory(const GraphMemory& memory, const ObjectFeatures& features);

  std::size_t count(std::size_t concept_index) const { return labels_.at(concept_index).size(); }
  std::size_t num_concepts() const { return labels_.size(); }
  bool empty() const;

  /// Rows `rows` of concept `a` as a matrix plus labels.
  nn::Matrix features(std::size_t a, std::span<const std::size_t> rows) const;
  nn::Matrix all_features(std::size_t a) const;
  const std::vector<int>& labels(std::size_t a) const { return labels_.at(a); }

 private:
  std::size_t dim_;
  std::vector<std::vector<double>> features_;
  std::vector<std::vector<int>> labels_;
};

struct HeadTrainStats {
  bool trained = false;
  double loss_before = 0.0;
  double loss_after = 0.0;
};

/// The trainable visual system: one two-layer perceptron per concept over fixed features.
class VisualSystem {
 public:
  VisualSystem(std::shared_ptr<const AttributeSchema> schema, const VisionConfig& config, std::uint64_t init_seed);

  /// Fresh draw from the initialization distribution under `init_seed`.
  void reset(std::uint64_t init_seed);

  /// Softmax outputs for concept `a` over the feature rows.
  nn::Matrix predict_concept(std::size_t a, const ObjectFeatures& features) const;
  VisualGraph predict(const ObjectFeatures& features, const std::vector<Box>& locations) const;

  /// `steps` minibatch Adam steps of cross-entropy on each concept with enough annotations.
  std::vector<HeadTrainStats> train(const AnnotationSet& data, std::size_t steps, double lr, Rng& rng);

  /// Argmax accuracy over every slot of `scenes`.
  double accuracy(std::span<const Scene> scenes, const FeatureEmbedding& embedding, double sigma,
                  std::uint64_t noise_seed) const;

  const AttributeSchema& schema() const { return *schema_; }
  const VisionConfig& config() const { return config_; }
  std::uint64_t init_seed() const { return init_seed_; }

  nn::ParamStore& head_params(std::size_t a) { return heads_.at(a)->store; }
  const nn::ParamStore& head_params(std::size_t a) const { return heads_.at(a)->store; }

  /// Copies parameter values from another system with the same schema and widths.
  void copy_from(const VisualSystem& other);

  std::string to_json() const;
  void load_json(const std::string& text);

 private:
  struct Head {
    nn::ParamStore store;
    nn::Mlp2 mlp;
  };

  std::shared_ptr<const AttributeSchema> schema_;
  VisionConfig config_;
  std::uint64_t init_seed_ = 0;
  std::vector<std::unique_ptr<Head>> heads_;
};

}  // namespace curio
