#include "curio/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace curio {

using nlohmann::json;

double DialogRecord::total_reward() const {
  double s = 0.0;
  for (const auto& r : rounds) s += r.reward;
  return s;
}

namespace {

struct OracleSnapshot {
  std::vector<std::pair<std::size_t, int>> slots;  // (slot index, value)
};

OracleSnapshot oracle_slots(const GraphMemory& m) {
  OracleSnapshot s;
  for (std::size_t k = 0; k < m.num_objects(); ++k)
    for (std::size_t a = 0; a < m.num_concepts(); ++a)
      if (m.provenance(k, a) == Provenance::kOracle)
        s.slots.emplace_back(k * m.num_concepts() + a, *m.committed_value(k, a));
  return s;
}

void check_round(const GraphMemory& m, const OracleSnapshot& before, double recall_before, double recall_after) {
  if (recall_after < recall_before) throw MemoryError("invariant: recall decreased during a dialog");
  for (const auto& [slot, value] : before.slots) {
    const std::size_t k = slot / m.num_concepts(), a = slot % m.num_concepts();
    if (m.provenance(k, a) != Provenance::kOracle || m.committed_value(k, a) != value)
      throw MemoryError("invariant: oracle-provenance slot changed");
  }
  for (std::size_t k = 0; k < m.num_objects(); ++k)
    for (std::size_t a = 0; a < m.num_concepts(); ++a) {
      const auto p = m.distribution(k, a);
      const double sum = std::accumulate(p.begin(), p.end(), 0.0);
      if (std::abs(sum - 1.0) > 1e-9) throw MemoryError("invariant: slot distribution off the simplex");
    }
}

}  // namespace

RolloutResult rollout(std::span<const Scene> scenes, QuestionPolicy& policy, VisualSystem& vision,
                      const FeatureEmbedding& embedding, const RolloutOptions& options, Rng& rng,
                      const ImageCallback& after_image) {
  RolloutResult result;
  if (scenes.empty()) return result;
  const auto& schema = vision.schema();
  const std::size_t n = options.episode_length ? options.episode_length : scenes.size();
  AnnotationSet annotations(schema.num_concepts(), embedding.dim());
  const VisionConfig& vcfg = vision.config();

  for (std::size_t idx = 0; idx < scenes.size(); ++idx) {
    const Scene& scene = scenes[idx];
    if (*scene.schema != schema) throw SceneError("rollout: scene schema differs from the visual system's");
    const std::size_t image = idx + 1;
    const ObjectFeatures features = embedding.featurize(scene, options.sigma, options.noise_seed);
    std::vector<Box> boxes;
    for (const auto& o : scene.objects) boxes.push_back(o.location);

    GraphMemory memory = init_uniform(scene);
    bottom_up_update(memory, vision.predict(features, boxes), image, n);

    DialogRecord dialog;
    dialog.image_index = image;
    dialog.scene_id = scene.id;
    dialog.num_objects = scene.size();
    dialog.recall_initial = recall(memory, scene);

    policy.begin_dialog(memory);
    std::optional<PreviousRound> last;
    double current = dialog.recall_initial;
    for (std::size_t t = 1; t <= options.budget && !memory.all_committed(); ++t) {
      const OracleSnapshot before = options.check_invariants ? oracle_slots(memory) : OracleSnapshot{};
      const QuestionAction action = policy.act(memory, last, rng);
      const ComposedQuestion q = compose_program(action, memory);
      const OracleAnswer answer = execute(q.program, scene);
      top_down_update(memory, action.target_object, action.target_concept, answer);
      const double after = recall(memory, scene);
      if (options.check_invariants) check_round(memory, before, current, after);

      RoundRecord r;
      r.action = action;
      r.program = serialize_program(q.program, schema);
      r.transcript = transcript_line(t, q.program, answer, schema);
      r.one_hop = q.one_hop;
      r.answer = answer;
      r.reward = after - current;
      r.recall_after = after;
      if (auto est = policy.last_estimate()) {
        r.value = est->value;
        r.log_prob = est->log_prob;
      }
      dialog.rounds.push_back(std::move(r));
      current = after;
      last = PreviousRound{action, answer.kind};
    }
    dialog.recall_final = current;
    dialog.vision_commits = memory.count_provenance(Provenance::kVision);
    dialog.oracle_commits = memory.count_provenance(Provenance::kOracle);

    annotations.add_memory(memory, features);
    if (options.train_vision) vision.train(annotations, vcfg.steps, nn::scheduled_lr(vcfg.lr, vcfg.lr_decay, image), rng);
    if (after_image) after_image(dialog, vision);

    result.dialogs.push_back(std::move(dialog));
    result.memories.push_back(std::move(memory));
  }
  return result;
}

Returns compute_returns(std::span<const DialogRecord> dialogs, double gamma, bool normalize) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must lie in [0, 1]");
  Returns out;
  std::vector<double> all;
  for (const auto& d : dialogs) {
    const std::size_t T = d.rounds.size();
    std::vector<double> g(T), adv(T);
    double acc = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      acc = d.rounds[t].reward + gamma * acc;
      g[t] = acc;
      adv[t] = acc - d.rounds[t].value;
      all.push_back(adv[t]);
    }
    out.returns.push_back(std::move(g));
    out.advantages.push_back(std::move(adv));
  }
  if (normalize && !all.empty()) {
    const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
    double var = 0.0;
    for (double a : all) var += (a - mean) * (a - mean);
    const double sd = std::max(std::sqrt(var / static_cast<double>(all.size())), 1e-6);
    for (auto& adv : out.advantages)
      for (double& a : adv) a = (a - mean) / sd;
  }
  return out;
}

UpdateStats a2c_update(PolicyNetwork& network, std::span<const DialogRecord> dialogs,
                       std::vector<std::vector<LearnedPolicy::RoundTrace>>& traces, const Returns& returns,
                       const A2cConfig& config, double lr) {
  if (traces.size() != dialogs.size()) throw nn::NnError("a2c: trace count does not match dialogs");
  UpdateStats stats;
  for (std::size_t d = 0; d < dialogs.size(); ++d) {
    if (traces[d].size() != dialogs[d].rounds.size()) throw nn::NnError("a2c: trace length does not match dialog");
    stats.rounds += dialogs[d].rounds.size();
  }
  if (stats.rounds == 0) return stats;
  const double scale = 1.0 / static_cast<double>(stats.rounds);
  const auto H = static_cast<Eigen::Index>(network.config().lstm_hidden());

  network.params().zero_grad();
  for (std::size_t d = 0; d < dialogs.size(); ++d) {
    auto& tr = traces[d];
    if (tr.empty()) continue;
    const auto K = static_cast<Eigen::Index>(dialogs[d].num_objects);
    nn::Matrix dh = nn::Matrix::Zero(K, H), dc = nn::Matrix::Zero(K, H);
    for (std::size_t t = tr.size(); t-- > 0;) {
      PolicyNetwork::LossWeights w;
      w.policy = returns.advantages[d][t] * scale;
      w.value = config.value_coef * scale;
      w.entropy = config.entropy_coef * scale;
      w.target_return = returns.returns[d][t];
      stats.loss += PolicyNetwork::round_loss(tr[t].output, w);
      network.backward(*tr[t].cache, w, dh, dc);
    }
  }
  stats.grad_norm = network.params().clip_grad_norm(config.grad_clip);
  network.params().adam_step(lr);
  return stats;
}

// ---------------------------------------------------------------------------
// configuration

void EpisodeConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (episodes < 1 || images < 1 || budget < 1) fail("episodes, images and budget must be at least 1");
  if (gamma < 0.0 || gamma > 1.0) fail("gamma must lie in [0, 1]");
  if (min_objects < 1 || min_objects > max_objects) fail("object count range is empty");
  if (policy_lr < 0.0 || vision.lr < 0.0) fail("learning rates must be non-negative");
  if (policy.epsilon < 0.0 || policy.epsilon > 1.0) fail("epsilon must lie in [0, 1]");
  if (vision.noise < 0.0) fail("vision noise must be non-negative");
  if (eval_folds < 1 || fold_size < 1) fail("evaluation needs at least one non-empty fold");
  schema_by_name(schema);
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw std::invalid_argument("config: unknown key '" + where + k + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

EpisodeConfig episode_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  EpisodeConfig c;
  try {
    check_keys(j,
               {"schema", "episodes", "images", "budget", "min_objects", "max_objects", "dataset_size", "dataset",
                "policy_lr", "policy_lr_decay", "per_image_updates", "gamma", "seed", "eval_folds", "fold_size",
                "eval_budget", "workers", "a2c", "policy", "vision"},
               "");
    read(j, "schema", c.schema);
    read(j, "episodes", c.episodes);
    read(j, "images", c.images);
    read(j, "budget", c.budget);
    read(j, "min_objects", c.min_objects);
    read(j, "max_objects", c.max_objects);
    read(j, "dataset_size", c.dataset_size);
    read(j, "dataset", c.dataset);
    read(j, "policy_lr", c.policy_lr);
    read(j, "policy_lr_decay", c.policy_lr_decay);
    read(j, "per_image_updates", c.per_image_updates);
    read(j, "gamma", c.gamma);
    read(j, "seed", c.seed);
    read(j, "eval_folds", c.eval_folds);
    read(j, "fold_size", c.fold_size);
    read(j, "eval_budget", c.eval_budget);
    read(j, "workers", c.workers);
    if (j.contains("a2c")) {
      const auto& a = j["a2c"];
      check_keys(a, {"value_coef", "entropy_coef", "grad_clip"}, "a2c.");
      read(a, "value_coef", c.a2c.value_coef);
      read(a, "entropy_coef", c.a2c.entropy_coef);
      read(a, "grad_clip", c.a2c.grad_clip);
    }
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      check_keys(p, {"max_concepts", "slot_dim", "ref_dim", "epsilon", "exploration", "mask_committed", "mask_failed"},
                 "policy.");
      read(p, "max_concepts", c.policy.max_concepts);
      read(p, "slot_dim", c.policy.slot_dim);
      read(p, "ref_dim", c.policy.ref_dim);
      read(p, "epsilon", c.policy.epsilon);
      read(p, "mask_committed", c.policy.mask_committed);
      read(p, "mask_failed", c.policy.mask_failed);
      if (p.contains("exploration")) {
        const auto e = p["exploration"].get<std::string>();
        if (e == "eps-greedy") c.policy.exploration = Exploration::kEpsGreedy;
        else if (e == "softmax") c.policy.exploration = Exploration::kSoftmax;
        else throw std::invalid_argument("config: policy.exploration must be eps-greedy or softmax");
      }
    }
    if (j.contains("vision")) {
      const auto& v = j["vision"];
      check_keys(v, {"feature_dim", "hidden", "noise", "lr", "lr_decay", "steps", "batch", "annotation_factor"},
                 "vision.");
      read(v, "feature_dim", c.vision.feature_dim);
      read(v, "hidden", c.vision.hidden);
      read(v, "noise", c.vision.noise);
      read(v, "lr", c.vision.lr);
      read(v, "lr_decay", c.vision.lr_decay);
      read(v, "steps", c.vision.steps);
      read(v, "batch", c.vision.batch);
      read(v, "annotation_factor", c.vision.annotation_factor);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string episode_config_to_json(const EpisodeConfig& c) {
  json j;
  j["schema"] = c.schema;
  j["episodes"] = c.episodes;
  j["images"] = c.images;
  j["budget"] = c.budget;
  j["min_objects"] = c.min_objects;
  j["max_objects"] = c.max_objects;
  j["dataset_size"] = c.dataset_size;
  j["dataset"] = c.dataset;
  j["policy_lr"] = c.policy_lr;
  j["policy_lr_decay"] = c.policy_lr_decay;
  j["per_image_updates"] = c.per_image_updates;
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  j["eval_folds"] = c.eval_folds;
  j["fold_size"] = c.fold_size;
  j["eval_budget"] = c.eval_budget;
  j["workers"] = c.workers;
  j["a2c"] = {{"value_coef", c.a2c.value_coef}, {"entropy_coef", c.a2c.entropy_coef}, {"grad_clip", c.a2c.grad_clip}};
  j["policy"] = {{"max_concepts", c.policy.max_concepts},
                 {"slot_dim", c.policy.slot_dim},
                 {"ref_dim", c.policy.ref_dim},
                 {"epsilon", c.policy.epsilon},
                 {"exploration", c.policy.exploration == Exploration::kSoftmax ? "softmax" : "eps-greedy"},
                 {"mask_committed", c.policy.mask_committed},
                 {"mask_failed", c.policy.mask_failed}};
  j["vision"] = {{"feature_dim", c.vision.feature_dim}, {"hidden", c.vision.hidden},
                 {"noise", c.vision.noise},             {"lr", c.vision.lr},
                 {"lr_decay", c.vision.lr_decay},       {"steps", c.vision.steps},
                 {"batch", c.vision.batch},             {"annotation_factor", c.vision.annotation_factor}};
  return j.dump(2);
}

EpisodeConfig load_episode_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return episode_config_from_json(ss.str());
}

Dataset make_dataset(const EpisodeConfig& config) {
  if (!config.dataset.empty()) {
    Dataset ds = read_dataset(config.dataset);
    ds.fold_size = config.fold_size;
    return ds;
  }
  SceneGenParams params;
  params.min_objects = config.min_objects;
  params.max_objects = config.max_objects;
  Dataset ds = generate_dataset(schema_by_name(config.schema), config.dataset_size,
                                derive_seed(config.seed, {kTagDataset}), params);
  ds.fold_size = config.fold_size;
  return ds;
}

// ---------------------------------------------------------------------------

TrainResult train(const EpisodeConfig& config, std::span<const Scene> train_scenes,
                  const std::function<void(const EpisodeStats&)>& on_episode) {
  config.validate();
  if (train_scenes.empty()) throw std::invalid_argument("train: no training scenes");
  const auto schema = train_scenes.front().schema;

  TrainResult result;
  result.network = std::make_shared<PolicyNetwork>(config.policy, derive_seed(config.seed, {kTagPolicyInit}));
  PolicyNetwork& net = *result.network;
  const FeatureEmbedding embedding(schema, config.vision.feature_dim, derive_seed(config.seed, {kTagEmbedding}));
  VisualSystem vision(schema, config.vision, 0);
  LearnedPolicy policy(result.network, nn::Mode::kTrain);
  policy.set_recording(true);

  RolloutOptions opt;
  opt.budget = config.budget;
  opt.episode_length = config.images;
  opt.sigma = config.vision.noise;
  opt.noise_seed = derive_seed(config.seed, {kTagNoise});

  for (std::size_t e = 1; e <= config.episodes; ++e) {
    Rng rng(derive_seed(config.seed, {kTagEpisode, e}));
    vision.reset(derive_seed(config.seed, {kTagVisionInit, e}));
    std::vector<Scene> scenes;
    for (std::size_t i = 0; i < config.images; ++i) scenes.push_back(train_scenes[uniform_index(rng, train_scenes.size())]);
    const double lr = config.policy_lr * std::pow(config.policy_lr_decay, static_cast<double>(e - 1));

    EpisodeStats st;
    st.episode = e;
    policy.clear_traces();
    ImageCallback per_image;
    if (config.per_image_updates) {
      per_image = [&](const DialogRecord& d, const VisualSystem&) {
        std::vector<std::vector<LearnedPolicy::RoundTrace>> one;
        one.push_back(std::move(policy.traces().back()));
        policy.clear_traces();
        const Returns ret = compute_returns(std::span<const DialogRecord>(&d, 1), config.gamma);
        const UpdateStats us = a2c_update(net, std::span<const DialogRecord>(&d, 1), one, ret, config.a2c, lr);
        st.loss += us.loss;
        st.grad_norm = std::max(st.grad_norm, us.grad_norm);
      };
    }
    const RolloutResult rr = rollout(scenes, policy, vision, embedding, opt, rng, per_image);
    if (!config.per_image_updates) {
      const Returns ret = compute_returns(rr.dialogs, config.gamma);
      const UpdateStats us = a2c_update(net, rr.dialogs, policy.traces(), ret, config.a2c, lr);
      st.loss = us.loss;
      st.grad_norm = us.grad_norm;
    }
    for (const auto& d : rr.dialogs) {
      st.mean_reward += d.total_reward();
      st.mean_final_recall += d.recall_final;
      st.mean_initial_recall += d.recall_initial;
      st.mean_rounds += static_cast<double>(d.rounds.size());
    }
    const double nd = static_cast<double>(rr.dialogs.size());
    st.mean_reward /= nd;
    st.mean_final_recall /= nd;
    st.mean_initial_recall /= nd;
    st.mean_rounds /= nd;
    policy.clear_traces();
    result.curve.push_back(st);
    if (on_episode) on_episode(st);
  }
  return result;
}

}  // namespace curio
