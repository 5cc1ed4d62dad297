#include "curio/vision.hpp"

#include <cmath>

#include "curio/nnet/distributions.hpp"
#include "json.hpp"

namespace curio {

FeatureEmbedding::FeatureEmbedding(std::shared_ptr<const AttributeSchema> schema, std::size_t feature_dim,
                                   std::uint64_t seed)
    : schema_(std::move(schema)) {
  std::size_t total = 0;
  for (std::size_t a = 0; a < schema_->num_concepts(); ++a) {
    offsets_.push_back(total);
    total += schema_->num_values(a);
  }
  Rng rng(derive_seed(seed, {0xfea7}));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(schema_->num_concepts())));
  matrix_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(feature_dim));
  for (Eigen::Index r = 0; r < matrix_.rows(); ++r)
    for (Eigen::Index c = 0; c < matrix_.cols(); ++c) matrix_(r, c) = normal(rng);
}

nn::Matrix FeatureEmbedding::embed(const std::vector<int>& attributes) const {
  nn::Matrix f = nn::Matrix::Zero(1, matrix_.cols());
  for (std::size_t a = 0; a < attributes.size(); ++a)
    f.row(0) += matrix_.row(static_cast<Eigen::Index>(offsets_[a] + static_cast<std::size_t>(attributes[a])));
  return f;
}

ObjectFeatures FeatureEmbedding::featurize(const Scene& scene, double sigma, std::uint64_t noise_seed) const {
  if (sigma < 0.0) throw nn::NnError("featurize: sigma must be non-negative");
  ObjectFeatures out(static_cast<Eigen::Index>(scene.size()), matrix_.cols());
  for (std::size_t k = 0; k < scene.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = embed(scene.objects[k].attributes).row(0);
    if (sigma > 0.0) {
      Rng rng(derive_seed(noise_seed, {scene.seed, k}));
      std::normal_distribution<double> normal(0.0, sigma);
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(static_cast<Eigen::Index>(k), c) += normal(rng);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

AnnotationSet::AnnotationSet(std::size_t num_concepts, std::size_t feature_dim)
    : dim_(feature_dim), features_(num_concepts), labels_(num_concepts) {}

void AnnotationSet::add(std::size_t a, std::span<const double> feature, int label) {
  if (feature.size() != dim_) throw nn::NnError("annotation feature width mismatch");
  features_.at(a).insert(features_[a].end(), feature.begin(), feature.end());
  labels_.at(a).push_back(label);
}

void AnnotationSet::add_memory(const GraphMemory& memory, const ObjectFeatures& features) {
  if (static_cast<std::size_t>(features.rows()) != memory.num_objects())
    throw nn::NnError("add_memory: feature rows do not match objects");
  for (std::size_t k = 0; k < memory.num_objects(); ++k)
    for (std::size_t a = 0; a < memory.num_concepts(); ++a)
      if (auto v = memory.committed_value(k, a)) {
        const auto row = features.row(static_cast<Eigen::Index>(k));
        add(a, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), *v);
      }
}

bool AnnotationSet::empty() const {
  for (const auto& l : labels_)
    if (!l.empty()) return false;
  return true;
}

nn::Matrix AnnotationSet::features(std::size_t a, std::span<const std::size_t> rows) const {
  nn::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim_));
  const auto& f = features_.at(a);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < dim_; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = f[rows[i] * dim_ + c];
  return m;
}

nn::Matrix AnnotationSet::all_features(std::size_t a) const {
  std::vector<std::size_t> rows(count(a));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return features(a, rows);
}

// ---------------------------------------------------------------------------

VisualSystem::VisualSystem(std::shared_ptr<const AttributeSchema> schema, const VisionConfig& config,
                           std::uint64_t init_seed)
    : schema_(std::move(schema)), config_(config) {
  reset(init_seed);
}

void VisualSystem::reset(std::uint64_t init_seed) {
  init_seed_ = init_seed;
  heads_.clear();
  for (std::size_t a = 0; a < schema_->num_concepts(); ++a) {
    auto head = std::make_unique<Head>();
    Rng rng(derive_seed(init_seed, {0x7e5, a}));
    // small output layer keeps fresh heads near uniform
    head->mlp = nn::Mlp2(head->store, "head." + schema_->concepts[a], static_cast<Eigen::Index>(config_.feature_dim),
                         static_cast<Eigen::Index>(config_.hidden),
                         static_cast<Eigen::Index>(schema_->num_values(a)), rng, 0.05);
    heads_.push_back(std::move(head));
  }
}

nn::Matrix VisualSystem::predict_concept(std::size_t a, const ObjectFeatures& features) const {
  return nn::softmax_rows(heads_.at(a)->mlp.forward(features));
}

VisualGraph VisualSystem::predict(const ObjectFeatures& features, const std::vector<Box>& locations) const {
  if (static_cast<std::size_t>(features.rows()) != locations.size())
    throw nn::NnError("predict: feature rows do not match locations");
  VisualGraph vg;
  vg.locations = locations;
  vg.num_concepts = schema_->num_concepts();
  vg.slots.resize(locations.size() * vg.num_concepts);
  for (std::size_t a = 0; a < vg.num_concepts; ++a) {
    const nn::Matrix p = predict_concept(a, features);
    for (std::size_t k = 0; k < locations.size(); ++k) {
      const auto row = p.row(static_cast<Eigen::Index>(k));
      vg.slots[k * vg.num_concepts + a].assign(row.data(), row.data() + row.size());
    }
  }
  return vg;
}

std::vector<HeadTrainStats> VisualSystem::train(const AnnotationSet& data, std::size_t steps, double lr, Rng& rng) {
  std::vector<HeadTrainStats> stats(schema_->num_concepts());
  if (data.num_concepts() != schema_->num_concepts()) throw nn::NnError("train: annotation concept count mismatch");
  for (std::size_t a = 0; a < schema_->num_concepts(); ++a) {
    const std::size_t n = data.count(a);
    if (n == 0 || n < config_.annotation_factor * schema_->num_values(a)) continue;
    Head& head = *heads_[a];
    const auto& labels = data.labels(a);
    const nn::Matrix all = data.all_features(a);
    stats[a].trained = true;
    stats[a].loss_before = nn::cross_entropy(nn::softmax_rows(head.mlp.forward(all)), labels);

    const std::size_t batch = std::min(config_.batch, n);
    std::vector<std::size_t> rows(batch);
    std::vector<int> targets(batch);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t i = 0; i < batch; ++i) {
        rows[i] = batch == n ? i : uniform_index(rng, n);
        targets[i] = labels[rows[i]];
      }
      const nn::Matrix x = batch == n ? all : data.features(a, rows);
      nn::Mlp2::Cache cache;
      const nn::Matrix probs = nn::softmax_rows(head.mlp.forward(x, &cache));
      head.store.zero_grad();
      head.mlp.backward(cache, nn::cross_entropy_grad(probs, targets));
      head.store.adam_step(lr);
    }
    stats[a].loss_after = nn::cross_entropy(nn::softmax_rows(head.mlp.forward(all)), labels);
  }
  return stats;
}

double VisualSystem::accuracy(std::span<const Scene> scenes, const FeatureEmbedding& embedding, double sigma,
                              std::uint64_t noise_seed) const {
  std::size_t correct = 0, total = 0;
  for (const Scene& s : scenes) {
    const ObjectFeatures f = embedding.featurize(s, sigma, noise_seed);
    for (std::size_t a = 0; a < schema_->num_concepts(); ++a) {
      const nn::Matrix p = predict_concept(a, f);
      for (std::size_t k = 0; k < s.size(); ++k) {
        Eigen::Index arg;
        p.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
        correct += static_cast<int>(arg) == s.value(k, a) ? 1 : 0;
        ++total;
      }
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

void VisualSystem::copy_from(const VisualSystem& other) {
  if (other.heads_.size() != heads_.size()) throw nn::NnError("copy_from: concept count mismatch");
  for (std::size_t a = 0; a < heads_.size(); ++a) {
    heads_[a]->store.copy_values_from(other.heads_[a]->store);
    heads_[a]->store.reset_optimizer();
  }
}

std::string VisualSystem::to_json() const {
  nlohmann::json j;
  j["format"] = "curio-vision/1";
  j["schema"] = nlohmann::json::parse(schema_to_json(*schema_));
  j["init_seed"] = init_seed_;
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : heads_) heads.push_back(nlohmann::json::parse(h->store.to_json("vision-head")));
  j["heads"] = std::move(heads);
  return j.dump();
}

void VisualSystem::load_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "curio-vision/1") throw nn::NnError("not a vision checkpoint");
  if (schema_from_json(j.at("schema").dump()) != *schema_) throw nn::NnError("vision checkpoint schema mismatch");
  const auto& heads = j.at("heads");
  if (heads.size() != heads_.size()) throw nn::NnError("vision checkpoint head count mismatch");
  for (std::size_t a = 0; a < heads_.size(); ++a) heads_[a]->store.load_json(heads[a].dump(), "vision-head");
}

}  // namespace curio
