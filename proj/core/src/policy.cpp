#include "curio/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace curio {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> selectable_slots(const GraphMemory& memory) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < memory.num_objects(); ++k)
    for (std::size_t a = 0; a < memory.num_concepts(); ++a)
      if (!memory.committed(k, a)) out.emplace_back(k, a);
  if (out.empty())
    for (std::size_t k = 0; k < memory.num_objects(); ++k)
      for (std::size_t a = 0; a < memory.num_concepts(); ++a) out.emplace_back(k, a);
  return out;
}

double mean_object_entropy(const GraphMemory& memory, std::size_t k) {
  double s = 0.0;
  for (std::size_t a = 0; a < memory.num_concepts(); ++a) s += slot_entropy(memory, k, a);
  return s / static_cast<double>(memory.num_concepts());
}

double box_distance(const Box& a, const Box& b) {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

QuestionAction entropy_choice(const GraphMemory& memory, Rng& rng, const BaselineConfig& cfg,
                              std::size_t neighbor_limit) {
  if (cfg.temperature <= 0.0) throw MemoryError("baseline temperature must be positive");
  const auto slots = selectable_slots(memory);
  std::vector<double> logits(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i)
    logits[i] = slot_entropy(memory, slots[i].first, slots[i].second) / cfg.temperature;
  const auto [k, a] = slots[nn::sample_categorical(nn::masked_softmax(logits), rng)];

  QuestionAction action{k, a, false, std::nullopt};
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < memory.num_objects(); ++j)
    if (j != k) candidates.push_back(j);
  if (candidates.empty()) return action;
  if (neighbor_limit < candidates.size()) {
    const auto& loc = memory.locations();
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
      return box_distance(loc[k], loc[x]) < box_distance(loc[k], loc[y]);
    });
    candidates.resize(neighbor_limit);
  }
  std::vector<double> mean(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) mean[i] = mean_object_entropy(memory, candidates[i]);
  if (*std::min_element(mean.begin(), mean.end()) >= cfg.reference_threshold) return action;
  std::vector<double> ref_logits(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) ref_logits[i] = -mean[i] / cfg.temperature;
  action.use_reference = true;
  action.reference_object = candidates[nn::sample_categorical(nn::masked_softmax(ref_logits), rng)];
  return action;
}

}  // namespace

QuestionAction baseline_random(const GraphMemory& memory, Rng& rng) {
  const auto slots = selectable_slots(memory);
  const auto [k, a] = slots[uniform_index(rng, slots.size())];
  QuestionAction action{k, a, false, std::nullopt};
  const std::size_t K = memory.num_objects();
  if (K >= 2 && uniform01(rng) < 0.5) {
    std::size_t j = uniform_index(rng, K - 1);
    if (j >= k) ++j;
    action.use_reference = true;
    action.reference_object = j;
  }
  return action;
}

QuestionAction baseline_entropy(const GraphMemory& memory, Rng& rng, const BaselineConfig& cfg) {
  return entropy_choice(memory, rng, cfg, memory.num_objects());
}

QuestionAction baseline_entropy_context(const GraphMemory& memory, Rng& rng, const BaselineConfig& cfg) {
  return entropy_choice(memory, rng, cfg, cfg.context_neighbors);
}

std::string BaselinePolicy::name() const {
  switch (kind_) {
    case BaselineKind::kRandom: return "random";
    case BaselineKind::kEntropy: return "entropy";
    case BaselineKind::kEntropyContext: return "entropy-context";
  }
  return "baseline";
}

QuestionAction BaselinePolicy::act(const GraphMemory& memory, const std::optional<PreviousRound>&, Rng& rng) {
  switch (kind_) {
    case BaselineKind::kRandom: return baseline_random(memory, rng);
    case BaselineKind::kEntropy: return baseline_entropy(memory, rng, cfg_);
    case BaselineKind::kEntropyContext: return baseline_entropy_context(memory, rng, cfg_);
  }
  return baseline_random(memory, rng);
}

// ---------------------------------------------------------------------------

nn::Matrix object_affinity(const std::vector<Box>& boxes) {
  nn::Matrix pts(static_cast<Eigen::Index>(boxes.size()), 2);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    pts(static_cast<Eigen::Index>(k), 0) = boxes[k].center_x();
    pts(static_cast<Eigen::Index>(k), 1) = boxes[k].center_y();
  }
  return nn::affinity_from_points(pts);
}

nn::Matrix slot_affinity(const nn::Matrix& object_affinity, std::size_t concepts) {
  const auto C = static_cast<Eigen::Index>(concepts);
  const Eigen::Index K = object_affinity.rows();
  nn::Matrix out = nn::Matrix::Zero(K * C, K * C);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < K; ++j)
      for (Eigen::Index a = 0; a < C; ++a) out(k * C + a, j * C + a) = object_affinity(k, j);
  return out;
}


namespace {

nn::Matrix column(const std::vector<double>& v) {
  nn::Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

std::vector<double> to_vector(const nn::Matrix& col) { return {col.data(), col.data() + col.size()}; }

nn::Matrix mean_rows(const nn::Matrix& m) { return m.colwise().mean(); }

/// Gradient of a row-mean pooled vector broadcast back to every row.
nn::Matrix unpool(const nn::Matrix& d, Eigen::Index rows) {
  return d.replicate(rows, 1) / static_cast<double>(rows);
}

std::size_t choose(const std::vector<double>& logits, const std::vector<double>& probs, std::span<const char> mask,
                   const PolicyConfig& cfg, nn::Mode mode, Rng& rng) {
  if (mode == nn::Mode::kTrain && cfg.exploration == Exploration::kSoftmax) return nn::sample_categorical(probs, rng);
  return nn::softmax_sample_eps(logits, mask, cfg.epsilon, mode, rng);
}

// score heads start small so the initial policy is close to uniform
constexpr double kScoreInitScale = 0.05;

}  // namespace

PolicyNetwork::PolicyNetwork(const PolicyConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.max_concepts == 0 || config_.slot_dim == 0 || config_.ref_dim == 0)
    throw nn::NnError("policy: dimensions must be positive");
  Rng rng(derive_seed(seed, {0x9011c7}));
  const auto C = static_cast<Eigen::Index>(config_.max_concepts);
  const auto S = static_cast<Eigen::Index>(config_.slot_dim);
  const auto H = static_cast<Eigen::Index>(config_.lstm_hidden());
  const auto R = static_cast<Eigen::Index>(config_.ref_dim);
  using nn::Activation;
  location_ = nn::Mlp2(store_, "location", 4, 4, 2, rng);
  lstm_ = nn::LstmCell(store_, "lstm", C * static_cast<Eigen::Index>(kInputChannels), H, rng);
  target_gcn1_ = nn::GcnLayer(store_, "target.gcn1", S, S, Activation::kRelu, rng);
  target_gcn2_ = nn::GcnLayer(store_, "target.gcn2", S, S, Activation::kRelu, rng);
  target_score_ = nn::Mlp2(store_, "target.score", 2 * S, S, 1, rng, kScoreInitScale);
  target_value_ = nn::Mlp2(store_, "target.value", S, S, 1, rng);
  ref_gcn1_ = nn::GcnLayer(store_, "ref.gcn1", 2 * H, R, Activation::kRelu, rng);
  ref_gcn2_ = nn::GcnLayer(store_, "ref.gcn2", R, R, Activation::kRelu, rng);
  ref_score_ = nn::Mlp2(store_, "ref.score", 2 * H + R, R / 2, 1, rng, kScoreInitScale);
  ref_value_ = nn::Mlp2(store_, "ref.value", R, R / 2, 1, rng);
  use_gcn1_ = nn::GcnLayer(store_, "use.gcn1", 2 * H, R, Activation::kRelu, rng);
  use_gcn2_ = nn::GcnLayer(store_, "use.gcn2", R, R, Activation::kRelu, rng);
  use_score_ = nn::Mlp2(store_, "use.score", R, R / 2, 1, rng, kScoreInitScale);
  use_value_ = nn::Mlp2(store_, "use.value", R, R / 2, 1, rng);
}

PolicyNetwork::~PolicyNetwork() = default;
PolicyNetwork::PolicyNetwork(PolicyNetwork&&) noexcept = default;
PolicyNetwork& PolicyNetwork::operator=(PolicyNetwork&&) noexcept = default;

PolicyNetwork::State PolicyNetwork::initial_state(std::size_t num_objects) const {
  return lstm_.zero_state(static_cast<Eigen::Index>(num_objects));
}

nn::Matrix normalized_boxes(const std::vector<Box>& boxes) {
  const auto K = static_cast<Eigen::Index>(boxes.size());
  nn::Matrix out(K, 4);
  if (boxes.empty()) return out;
  double x0 = boxes[0].center_x(), x1 = x0, y0 = boxes[0].center_y(), y1 = y0;
  for (const Box& b : boxes) {
    x0 = std::min(x0, b.center_x());
    x1 = std::max(x1, b.center_x());
    y0 = std::min(y0, b.center_y());
    y1 = std::max(y1, b.center_y());
  }
  const double span = std::max(x1 - x0, y1 - y0);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Box& b = boxes[static_cast<std::size_t>(k)];
    out(k, 0) = x1 > x0 ? (b.center_x() - x0) / (x1 - x0) : 0.5;
    out(k, 1) = y1 > y0 ? (b.center_y() - y0) / (y1 - y0) : 0.5;
    out(k, 2) = span > 0.0 ? b.w / span : 0.0;
    out(k, 3) = span > 0.0 ? b.h / span : 0.0;
  }
  return out;
}

Observation PolicyNetwork::observe(const GraphMemory& memory, const std::optional<PreviousRound>& last,
                                   std::span<const char> failed) const {
  const std::size_t K = memory.num_objects();
  const std::size_t C = config_.max_concepts;
  const std::size_t A = memory.num_concepts();
  if (K == 0) throw nn::NnError("policy: scene has no objects");
  if (A > C) throw nn::NnError("policy: schema has more concepts than the network supports");

  Observation obs;
  obs.num_objects = K;
  obs.num_concepts = A;
  obs.boxes = normalized_boxes(memory.locations());
  if (!failed.empty() && failed.size() != K * C * (K + 1))
    throw nn::NnError("policy: failed-question mask size mismatch");
  if (config_.mask_failed) obs.failed.assign(failed.begin(), failed.end());
  obs.raw = nn::Matrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(C * kInputChannels));
  obs.slot_mask.assign(K * C, 1);
  bool any_open = false;
  for (std::size_t k = 0; k < K; ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    for (std::size_t a = 0; a < A; ++a) {
      obs.raw(r, static_cast<Eigen::Index>(a * kInputChannels + kChEntropy)) = slot_entropy(memory, k, a);
    }
  }
  // a slot is exhausted once it failed without a reference and with every other object
  auto exhausted = [&](std::size_t k, std::size_t a) {
    if (obs.failed.empty()) return false;
    const char* f = &obs.failed[(k * C + a) * (K + 1)];
    for (std::size_t o = 0; o <= K; ++o)
      if (o != k + 1 && !f[o]) return false;
    return true;
  };
  // progressively relax the mask so at least one real slot stays selectable
  for (int level = 0; level < 3 && !any_open; ++level)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t a = 0; a < A; ++a) {
        const bool committed = config_.mask_committed && memory.committed(k, a);
        const bool was_failed = exhausted(k, a);
        const bool open = level == 2 || (!committed && (level == 1 || !was_failed));
        obs.slot_mask[k * C + a] = open ? 0 : 1;
        any_open = any_open || open;
      }

  if (last) {
    const QuestionAction& act = last->action;
    if (act.target_object >= K || act.target_concept >= A) throw nn::NnError("policy: previous action out of range");
    const bool valid = last->answer == AnswerKind::kValue;
    auto set = [&](std::size_t k, std::size_t a, std::size_t ch) {
      obs.raw(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a * kInputChannels + ch)) = 1.0;
    };
    set(act.target_object, act.target_concept, kChLastTarget);
    if (valid) set(act.target_object, act.target_concept, kChAnswerTarget);
    if (act.use_reference && act.reference_object) {
      for (std::size_t a = 0; a < A; ++a) {
        set(*act.reference_object, a, kChLastReference);
        set(act.target_object, a, kChLastUsedRef);
        if (valid) set(*act.reference_object, a, kChAnswerRef);
      }
    }
  }
  obs.affinity = object_affinity(memory.locations());
  return obs;
}

nn::Matrix PolicyNetwork::build_input(const Observation& obs) const {
  nn::Matrix x = obs.raw;
  const nn::Matrix loc = location_.forward(obs.boxes);
  for (std::size_t a = 0; a < obs.num_concepts; ++a) {
    x.col(static_cast<Eigen::Index>(a * kInputChannels + kChLocation0)) = loc.col(0);
    x.col(static_cast<Eigen::Index>(a * kInputChannels + kChLocation1)) = loc.col(1);
  }
  return x;
}

PolicyNetwork::Output PolicyNetwork::forward(const Observation& obs, const State& prev, nn::Mode mode, Rng& rng,
                                             std::unique_ptr<Cache>* cache_out, const Forced* forced) const {
  const std::size_t K = obs.num_objects;
  const auto C = static_cast<Eigen::Index>(config_.max_concepts);
  const auto S = static_cast<Eigen::Index>(config_.slot_dim);
  const auto Ki = static_cast<Eigen::Index>(K);
  auto cache = cache_out ? std::make_unique<Cache>() : nullptr;
  Cache* c = cache.get();
  if (c) c->K = K;

  // input tensor with learned location embedding
  nn::Matrix x = obs.raw;
  const nn::Matrix loc = location_.forward(obs.boxes, c ? &c->location : nullptr);
  for (std::size_t a = 0; a < obs.num_concepts; ++a) {
    x.col(static_cast<Eigen::Index>(a * kInputChannels + kChLocation0)) = loc.col(0);
    x.col(static_cast<Eigen::Index>(a * kInputChannels + kChLocation1)) = loc.col(1);
  }

  Output out;
  out.next = lstm_.step(x, prev, c ? &c->lstm : nullptr);
  const nn::Matrix& h = out.next.h;

  // target branch over (object, concept) slots
  nn::Matrix slots(Ki * C, S);
  for (Eigen::Index k = 0; k < Ki; ++k)
    for (Eigen::Index a = 0; a < C; ++a) slots.row(k * C + a) = h.block(k, a * S, 1, S);
  const nn::Matrix a_slot = slot_affinity(obs.affinity, config_.max_concepts);
  const nn::Matrix z1 = target_gcn1_.forward(slots, a_slot, c ? &c->tg1 : nullptr);
  const nn::Matrix z2 = target_gcn2_.forward(z1, a_slot, c ? &c->tg2 : nullptr);
  // score heads see each node's own features next to the graph-smoothed ones
  nn::Matrix tin(z2.rows(), 2 * S);
  tin << slots, z2;
  const std::vector<double> tlogits = to_vector(target_score_.forward(tin, c ? &c->tscore : nullptr));
  out.target_probs = nn::masked_softmax(tlogits, obs.slot_mask);
  out.value = target_value_.forward(mean_rows(z2), c ? &c->tvalue : nullptr)(0, 0);
  out.target_slot = forced ? forced->target_slot : choose(tlogits, out.target_probs, obs.slot_mask, config_, mode, rng);
  if (out.target_slot >= out.target_probs.size() || obs.slot_mask[out.target_slot])
    throw nn::NnError("policy: target slot is masked");
  const std::size_t kt = out.target_slot / config_.max_concepts;
  out.action.target_object = kt;
  out.action.target_concept = out.target_slot % config_.max_concepts;
  out.log_prob = std::log(out.target_probs[out.target_slot]);

  // reference branch over candidate objects paired with the target
  if (K >= 2) {
    for (std::size_t j = 0; j < K; ++j)
      if (j != kt) out.candidates.push_back(j);
    const auto N = static_cast<Eigen::Index>(out.candidates.size());
    const Eigen::Index H = h.cols();
    nn::Matrix xref(N, 2 * H);
    nn::Matrix a_ref(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto ji = static_cast<Eigen::Index>(out.candidates[static_cast<std::size_t>(i)]);
      xref.row(i) << h.row(static_cast<Eigen::Index>(kt)), h.row(ji);
      for (Eigen::Index l = 0; l < N; ++l)
        a_ref(i, l) = obs.affinity(ji, static_cast<Eigen::Index>(out.candidates[static_cast<std::size_t>(l)]));
    }
    const nn::Matrix r1 = ref_gcn1_.forward(xref, a_ref, c ? &c->rg1 : nullptr);
    const nn::Matrix r2 = ref_gcn2_.forward(r1, a_ref, c ? &c->rg2 : nullptr);
    nn::Matrix rin(N, 2 * H + r2.cols());
    rin << xref, r2;
    const std::vector<double> rlogits = to_vector(ref_score_.forward(rin, c ? &c->rscore : nullptr));
    // questions about this target already known to fail, unless that leaves nothing
    std::vector<char> rmask(out.candidates.size(), 0);
    std::vector<char> umask(2, 0);
    if (!obs.failed.empty()) {
      const char* f = &obs.failed[out.target_slot * (K + 1)];
      bool any_ref = false;
      for (std::size_t i = 0; i < out.candidates.size(); ++i) {
        rmask[i] = f[1 + out.candidates[i]];
        any_ref = any_ref || !rmask[i];
      }
      if (!any_ref) std::fill(rmask.begin(), rmask.end(), 0);
      if (f[0] && any_ref) umask[0] = 1;
      if (!f[0] && !any_ref) umask[1] = 1;
    }
    out.reference_probs = nn::masked_softmax(rlogits, rmask);
    out.value_reference = ref_value_.forward(mean_rows(r2), c ? &c->rvalue : nullptr)(0, 0);

    const nn::Matrix u1 = use_gcn1_.forward(xref, a_ref, c ? &c->ug1 : nullptr);
    const nn::Matrix u2 = use_gcn2_.forward(u1, a_ref, c ? &c->ug2 : nullptr);
    const nn::Matrix pooled = mean_rows(u2);
    const double s = use_score_.forward(pooled, c ? &c->uscore : nullptr)(0, 0);
    out.value_use = use_value_.forward(pooled, c ? &c->uvalue : nullptr)(0, 0);
    const std::vector<double> ulogits{0.0, s};
    out.use_probs = nn::masked_softmax(ulogits, umask);

    const bool use = forced ? forced->use_reference : choose(ulogits, out.use_probs, umask, config_, mode, rng) == 1;
    out.log_prob += std::log(out.use_probs[use ? 1 : 0]);
    if (use) {
      out.reference_candidate =
          forced ? forced->reference_candidate : choose(rlogits, out.reference_probs, rmask, config_, mode, rng);
      if (out.reference_candidate >= out.candidates.size()) throw nn::NnError("policy: reference out of range");
      out.action.use_reference = true;
      out.action.reference_object = out.candidates[out.reference_candidate];
      out.log_prob += std::log(out.reference_probs[out.reference_candidate]);
    }
    if (c) c->has_ref = true;
  }
  if (c) {
    c->out = out;
    *cache_out = std::move(cache);
  }
  return out;
}

double PolicyNetwork::round_loss(const Output& out, const LossWeights& w) {
  double value_sq = (out.value - w.target_return) * (out.value - w.target_return);
  double ent = nn::categorical_entropy(out.target_probs);
  if (!out.candidates.empty()) {
    value_sq += (out.value_reference - w.target_return) * (out.value_reference - w.target_return);
    value_sq += (out.value_use - w.target_return) * (out.value_use - w.target_return);
    ent += nn::categorical_entropy(out.use_probs) + nn::categorical_entropy(out.reference_probs);
  }
  return -w.policy * out.log_prob + w.value * value_sq - w.entropy * ent;
}

void PolicyNetwork::backward(const Cache& c, const LossWeights& w, nn::Matrix& dh, nn::Matrix& dc) {
  const Output& out = c.out;
  const auto Ki = static_cast<Eigen::Index>(c.K);
  const auto C = static_cast<Eigen::Index>(config_.max_concepts);
  const auto S = static_cast<Eigen::Index>(config_.slot_dim);
  const Eigen::Index H = C * S;
  if (dh.rows() != Ki || dh.cols() != H || dc.rows() != Ki || dc.cols() != H)
    throw nn::NnError("policy backward: state gradient shape mismatch");

  auto logit_grad = [&](const std::vector<double>& probs, std::optional<std::size_t> chosen) {
    std::vector<double> g(probs.size(), 0.0);
    if (chosen) {
      const auto lg = nn::log_prob_grad(probs, *chosen);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= w.policy * lg[i];
    }
    const auto eg = nn::entropy_grad(probs);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= w.entropy * eg[i];
    return g;
  };
  auto value_grad = [&](double v) {
    nn::Matrix m(1, 1);
    m(0, 0) = 2.0 * w.value * (v - w.target_return);
    return m;
  };

  nn::Matrix dh_total = dh;

  // target branch
  {
    const nn::Matrix dtin = target_score_.backward(c.tscore, column(logit_grad(out.target_probs, out.target_slot)));
    nn::Matrix dz2 = dtin.rightCols(S);
    dz2 += unpool(target_value_.backward(c.tvalue, value_grad(out.value)), dz2.rows());
    const nn::Matrix dz1 = target_gcn2_.backward(c.tg2, dz2);
    const nn::Matrix dslots = target_gcn1_.backward(c.tg1, dz1) + dtin.leftCols(S);
    for (Eigen::Index k = 0; k < Ki; ++k)
      for (Eigen::Index a = 0; a < C; ++a) dh_total.block(k, a * S, 1, S) += dslots.row(k * C + a);
  }

  // reference branch
  if (c.has_ref) {
    const bool used = out.action.use_reference;
    const auto N = static_cast<Eigen::Index>(out.candidates.size());
    const nn::Matrix drin = ref_score_.backward(
        c.rscore, column(logit_grad(out.reference_probs,
                                    used ? std::optional<std::size_t>(out.reference_candidate) : std::nullopt)));
    nn::Matrix dr2 = drin.rightCols(drin.cols() - 2 * H);
    dr2 += unpool(ref_value_.backward(c.rvalue, value_grad(out.value_reference)), N);
    nn::Matrix dxref = ref_gcn1_.backward(c.rg1, ref_gcn2_.backward(c.rg2, dr2)) + drin.leftCols(2 * H);

    nn::Matrix ds(1, 1);
    ds(0, 0) = logit_grad(out.use_probs, used ? 1 : 0)[1];
    nn::Matrix dpooled = use_score_.backward(c.uscore, ds);
    dpooled += use_value_.backward(c.uvalue, value_grad(out.value_use));
    dxref += use_gcn1_.backward(c.ug1, use_gcn2_.backward(c.ug2, unpool(dpooled, N)));

    const auto kt = static_cast<Eigen::Index>(out.action.target_object);
    for (Eigen::Index i = 0; i < N; ++i) {
      dh_total.row(kt) += dxref.row(i).leftCols(H);
      dh_total.row(static_cast<Eigen::Index>(out.candidates[static_cast<std::size_t>(i)])) += dxref.row(i).rightCols(H);
    }
  }

  const nn::LstmCell::Grads g = lstm_.backward(c.lstm, dh_total, dc);
  nn::Matrix dloc = nn::Matrix::Zero(Ki, 2);
  for (Eigen::Index a = 0; a < C; ++a) {
    dloc.col(0) += g.dx.col(a * static_cast<Eigen::Index>(kInputChannels) + kChLocation0);
    dloc.col(1) += g.dx.col(a * static_cast<Eigen::Index>(kInputChannels) + kChLocation1);
  }
  location_.backward(c.location, dloc);
  dh = g.dh_prev;
  dc = g.dc_prev;
}

std::string PolicyNetwork::to_json() const {
  nlohmann::json j;
  j["format"] = "curio-policy/1";
  j["config"] = {{"max_concepts", config_.max_concepts},
                 {"slot_dim", config_.slot_dim},
                 {"ref_dim", config_.ref_dim},
                 {"epsilon", config_.epsilon},
                 {"exploration", config_.exploration == Exploration::kSoftmax ? "softmax" : "eps-greedy"},
                 {"mask_committed", config_.mask_committed},
                 {"mask_failed", config_.mask_failed}};
  j["params"] = nlohmann::json::parse(store_.to_json("policy"));
  return j.dump();
}

namespace {

nlohmann::json parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw nn::NnError(std::string("policy checkpoint: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "curio-policy/1") throw nn::NnError("not a policy checkpoint");
  return j;
}

}  // namespace

void PolicyNetwork::load_json(const std::string& text) {
  const nlohmann::json j = parse_checkpoint(text);
  try {
    const auto& cfg = j.at("config");
    if (cfg.at("max_concepts").get<std::size_t>() != config_.max_concepts ||
        cfg.at("slot_dim").get<std::size_t>() != config_.slot_dim ||
        cfg.at("ref_dim").get<std::size_t>() != config_.ref_dim)
      throw nn::NnError("policy checkpoint dimensions do not match the network");
    store_.load_json(j.at("params").dump(), "policy");
  } catch (const nlohmann::json::exception& e) {
    throw nn::NnError(std::string("policy checkpoint: ") + e.what());
  }
}

PolicyNetwork PolicyNetwork::from_json(const std::string& text) {
  const nlohmann::json j = parse_checkpoint(text);
  PolicyConfig cfg;
  try {
    const auto& c = j.at("config");
    cfg.max_concepts = c.at("max_concepts").get<std::size_t>();
    cfg.slot_dim = c.at("slot_dim").get<std::size_t>();
    cfg.ref_dim = c.at("ref_dim").get<std::size_t>();
    cfg.epsilon = c.at("epsilon").get<double>();
    const auto ex = c.at("exploration").get<std::string>();
    if (ex != "softmax" && ex != "eps-greedy") throw nn::NnError("policy checkpoint: unknown exploration '" + ex + "'");
    cfg.exploration = ex == "softmax" ? Exploration::kSoftmax : Exploration::kEpsGreedy;
    cfg.mask_committed = c.at("mask_committed").get<bool>();
    cfg.mask_failed = c.at("mask_failed").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw nn::NnError(std::string("policy checkpoint: ") + e.what());
  }
  PolicyNetwork net(cfg, 0);
  net.load_json(text);
  return net;
}

// ---------------------------------------------------------------------------

LearnedPolicy::LearnedPolicy(std::shared_ptr<const PolicyNetwork> network, nn::Mode mode)
    : network_(std::move(network)), mode_(mode) {
  if (!network_) throw nn::NnError("learned policy needs a network");
}

void LearnedPolicy::begin_dialog(const GraphMemory& memory) {
  state_ = network_->initial_state(memory.num_objects());
  has_last_ = false;
  const std::size_t K = memory.num_objects();
  failed_.assign(K * network_->config().max_concepts * (K + 1), 0);
  failed_programs_.clear();
  if (recording_) traces_.emplace_back();
}

QuestionAction LearnedPolicy::act(const GraphMemory& memory, const std::optional<PreviousRound>& last, Rng& rng) {
  if (state_.h.rows() != static_cast<Eigen::Index>(memory.num_objects())) begin_dialog(memory);
  if (last) {
    if (last->answer == AnswerKind::kValue) {
      failed_programs_.clear();
    } else {
      // memory has not changed since the question, so it composes the same program
      failed_programs_.emplace_back(last->action.target_concept,
                                    serialize_program(compose_program(last->action, memory).program, memory.schema()));
    }
    mark_failed(memory);
  }
  const Observation obs = network_->observe(memory, last, failed_);
  std::unique_ptr<PolicyNetwork::Cache> cache;
  last_ = network_->forward(obs, state_, mode_, rng, recording_ ? &cache : nullptr);
  has_last_ = true;
  state_ = last_.next;
  if (recording_) {
    if (traces_.empty()) traces_.emplace_back();
    traces_.back().push_back({std::move(cache), last_});
  }
  return last_.action;
}

void LearnedPolicy::mark_failed(const GraphMemory& memory) {
  std::fill(failed_.begin(), failed_.end(), 0);
  if (failed_programs_.empty() || !network_->config().mask_failed) return;
  const std::size_t K = memory.num_objects();
  const std::size_t C = network_->config().max_concepts;
  for (std::size_t a = 0; a < memory.num_concepts(); ++a) {
    if (std::none_of(failed_programs_.begin(), failed_programs_.end(), [&](const auto& f) { return f.first == a; }))
      continue;
    for (std::size_t k = 0; k < K; ++k) {
      if (memory.committed(k, a)) continue;
      for (std::size_t o = 0; o <= K; ++o) {
        if (o == k + 1) continue;
        QuestionAction act{k, a, o > 0, o > 0 ? std::optional<std::size_t>(o - 1) : std::nullopt};
        const std::string text = serialize_program(compose_program(act, memory).program, memory.schema());
        if (std::any_of(failed_programs_.begin(), failed_programs_.end(),
                        [&](const auto& f) { return f.first == a && f.second == text; }))
          failed_[(k * C + a) * (K + 1) + o] = 1;
      }
    }
  }
}

std::optional<QuestionPolicy::Estimate> LearnedPolicy::last_estimate() const {
  if (!has_last_) return std::nullopt;
  return Estimate{last_.value, last_.log_prob};
}

}  // namespace curio
