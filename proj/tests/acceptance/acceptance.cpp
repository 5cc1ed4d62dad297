// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   curio_acceptance [--cli PATH] [--work DIR] [--only N,N,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curio/gradsuite.hpp"
#include "curio/harness.hpp"

namespace fs = std::filesystem;
using namespace curio;
using nn::Matrix;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. oracle equivalence

// Set-intersection evaluator: every filter is the intersection of its input
// with the set of objects satisfying it.
class SetOracle {
 public:
  SetOracle(const Program& p, const Scene& s) : p_(p), s_(s) {}

  OracleAnswer answer() {
    const auto& root = p_.node(p_.root());
    const auto [k, fail] = unique(root.children[0]);
    if (fail) return *fail == AnswerKind::kAmbiguous ? OracleAnswer::ambiguous() : OracleAnswer::invalid();
    return OracleAnswer::of_value(root.concept_index, s_.value(k, root.concept_index));
  }

 private:
  using Set = std::set<std::size_t>;

  Set where(const std::function<bool(std::size_t)>& pred) const {
    Set out;
    for (std::size_t k = 0; k < s_.size(); ++k)
      if (pred(k)) out.insert(k);
    return out;
  }

  static Set intersect(const Set& a, const Set& b) {
    Set out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.begin()));
    return out;
  }

  std::pair<std::size_t, std::optional<AnswerKind>> unique(std::size_t i) {
    std::optional<AnswerKind> fail;
    const Set in = set(p_.node(i).children[0], fail);
    if (fail) return {0, fail};
    if (in.empty()) return {0, AnswerKind::kInvalid};
    if (in.size() > 1) return {0, AnswerKind::kAmbiguous};
    return {*in.begin(), std::nullopt};
  }

  double cx(std::size_t k) const { return s_.object(k).location.center_x(); }
  double cy(std::size_t k) const { return s_.object(k).location.center_y(); }

  Set set(std::size_t i, std::optional<AnswerKind>& fail) {
    const auto& n = p_.node(i);
    switch (n.kind) {
      case NodeKind::kScene:
        return where([](std::size_t) { return true; });
      case NodeKind::kFilterAttribute: {
        const Set in = set(n.children[0], fail);
        return intersect(in, where([&](std::size_t k) { return s_.value(k, n.concept_index) == n.value; }));
      }
      case NodeKind::kFilterPosition: {
        const Set in = set(n.children[0], fail);
        std::vector<double> key(s_.size());
        for (std::size_t k = 0; k < s_.size(); ++k)
          key[k] = n.position == Position::kLeftMost    ? -cx(k)
                   : n.position == Position::kRightMost ? cx(k)
                   : n.position == Position::kClosest   ? cy(k)
                                                        : -cy(k);
        const double best = *std::max_element(key.begin(), key.end());
        return intersect(in, where([&](std::size_t k) { return key[k] == best; }));
      }
      case NodeKind::kFilterRelation: {
        const auto [a, afail] = unique(n.children[0]);
        if (afail) {
          fail = afail;
          return {};
        }
        anchor_ = a;
        const Set in = set(n.children[1], fail);
        return intersect(in, where([&](std::size_t k) {
                           if (k == a) return false;
                           switch (n.relation) {
                             case Relation::kLeft: return cx(k) < cx(a);
                             case Relation::kRight: return cx(k) > cx(a);
                             case Relation::kFront: return cy(k) > cy(a);
                             case Relation::kBehind: return cy(k) < cy(a);
                           }
                           return false;
                         }));
      }
      case NodeKind::kFilterExtreme: {
        const Set in = set(n.children[0], fail);
        if (fail || in.empty()) return in;
        auto d = [&](std::size_t k) { return std::hypot(cx(k) - cx(anchor_), cy(k) - cy(anchor_)); };
        return {*std::min_element(in.begin(), in.end(), [&](std::size_t x, std::size_t y) { return d(x) < d(y); })};
      }
      default:
        throw std::logic_error("unexpected node");
    }
  }

  const Program& p_;
  const Scene& s_;
  std::size_t anchor_ = 0;
};

Verdict oracle_equivalence() {
  const auto schema = std::make_shared<const AttributeSchema>(standard_schema());
  Rng rng(2024);
  std::size_t programs = 0, mismatches = 0, one_hop = 0;
  for (std::uint64_t id = 0; id < 500; ++id) {
    const Scene scene = generate_scene(schema, {2, 10, 0.02}, derive_seed(77, {id}), id);
    // none committed, all committed, and a random subset
    for (int pattern = 0; pattern < 3; ++pattern) {
      GraphMemory m = init_uniform(scene);
      for (std::size_t k = 0; k < scene.size(); ++k)
        for (std::size_t a = 0; a < schema->num_concepts(); ++a)
          if (pattern == 1 || (pattern == 2 && uniform01(rng) < 0.5))
            m.commit(k, a, scene.value(k, a), Provenance::kOracle);
      for (std::size_t k = 0; k < scene.size(); ++k)
        for (std::size_t a = 0; a < schema->num_concepts(); ++a)
          for (std::size_t o = 0; o <= scene.size(); ++o) {
            if (o == k + 1) continue;
            const QuestionAction act{k, a, o > 0, o > 0 ? std::optional<std::size_t>(o - 1) : std::nullopt};
            const Program p = compose_program(act, m).program;
            const Program reparsed = parse_program(serialize_program(p, *schema), *schema);
            if (!(reparsed == p) || !(execute(reparsed, scene) == SetOracle(p, scene).answer())) ++mismatches;
            one_hop += p.is_one_hop();
            ++programs;
          }
    }
  }
  return {mismatches == 0 && programs > 0,
          fmt("%zu programs (%zu one-hop) on 500 scenes, %zu mismatches", programs, one_hop, mismatches)};
}

// ---------------------------------------------------------------------------
// 2. gradient suite

double fd_error(nn::ParamStore& store, const std::function<double()>& loss, double h) {
  double worst = 0.0;
  for (auto& [name, p] : store.params()) {
    Matrix numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + h;
      const double up = loss();
      p.value.data()[i] = keep - h;
      const double down = loss();
      p.value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = std::max(p.grad.norm() + numeric.norm(), 1e-5);
    worst = std::max(worst, (p.grad - numeric).norm() / denom);
  }
  return worst;
}

// Composite policy loss over a replayed three-round dialog, differenced here.
double policy_composite_error(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xacce}));
  PolicyConfig cfg;
  cfg.slot_dim = 3;
  cfg.ref_dim = 6;
  PolicyNetwork net(cfg, seed);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& [_, p] : net.params().params())
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += jitter(rng);

  const auto schema = std::make_shared<const AttributeSchema>(standard_schema());
  const Scene scene = generate_scene(schema, {5, 5, 0.02}, derive_seed(seed, {0x5ce}));
  GraphMemory m = init_uniform(scene);
  for (std::size_t k = 0; k < scene.size(); ++k)
    if (uniform01(rng) < 0.4) m.commit(k, 1, scene.value(k, 1), Provenance::kOracle);

  const std::size_t K = scene.size(), rounds = 3;
  std::vector<Observation> obs;
  std::vector<PolicyNetwork::Forced> forced;
  std::vector<PolicyNetwork::LossWeights> w;
  std::optional<PreviousRound> last;
  auto state = net.initial_state(K);
  for (std::size_t t = 0; t < rounds; ++t) {
    obs.push_back(net.observe(m, last));
    const auto out = net.forward(obs.back(), state, nn::Mode::kTrain, rng);
    forced.push_back({out.target_slot, out.action.use_reference, out.reference_candidate});
    w.push_back({uniform01(rng) - 0.5, 0.5, uniform01(rng), 0.01});
    state = out.next;
    last = PreviousRound{out.action, t == 1 ? AnswerKind::kValue : AnswerKind::kInvalid};
  }
  auto loss = [&] {
    auto s = net.initial_state(K);
    double l = 0.0;
    for (std::size_t t = 0; t < rounds; ++t) {
      const auto out = net.forward(obs[t], s, nn::Mode::kTrain, rng, nullptr, &forced[t]);
      l += PolicyNetwork::round_loss(out, w[t]);
      s = out.next;
    }
    return l;
  };
  net.params().zero_grad();
  std::vector<std::unique_ptr<PolicyNetwork::Cache>> caches(rounds);
  auto s = net.initial_state(K);
  for (std::size_t t = 0; t < rounds; ++t) s = net.forward(obs[t], s, nn::Mode::kTrain, rng, &caches[t], &forced[t]).next;
  Matrix dh = Matrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(cfg.lstm_hidden())), dc = dh;
  for (std::size_t t = rounds; t-- > 0;) net.backward(*caches[t], w[t], dh, dc);
  return fd_error(net.params(), loss, 1e-6);
}

Verdict gradient_suite_check() {
  std::map<std::string, double> worst;
  bool ok = true;
  for (const auto& r : gradient_suite(0, 10)) {
    worst[r.name] = std::max(worst[r.name], r.rel_error);
    ok = ok && r.passed();
  }
  double own = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) own = std::max(own, policy_composite_error(seed));
  ok = ok && own <= 1e-3;
  return {ok, fmt("worst rel err dense %.1e lstm %.1e gcn %.1e policy %.1e; independent composite %.1e",
                  worst["dense"], worst["lstm"], worst["gcn"], worst["policy"], own)};
}

// ---------------------------------------------------------------------------
// 3. memory laws

Verdict memory_laws() {
  const auto schema = std::make_shared<const AttributeSchema>(standard_schema());
  const FeatureEmbedding emb(schema, 64, 5);
  PolicyConfig pc;
  pc.slot_dim = 4;
  pc.ref_dim = 16;
  auto net = std::make_shared<PolicyNetwork>(pc, 9);
  std::size_t rounds = 0, violations = 0;
  double worst_telescope = 0.0;
  Rng rng(31);

  for (std::uint64_t batch = 0; rounds < 10000; ++batch) {
    std::vector<Scene> scenes;
    for (std::uint64_t i = 0; i < 8; ++i) scenes.push_back(generate_scene(schema, {}, derive_seed(batch, {i}), i));
    std::unique_ptr<QuestionPolicy> policy;
    switch (batch % 4) {
      case 0: policy = std::make_unique<BaselinePolicy>(BaselineKind::kRandom); break;
      case 1: policy = std::make_unique<BaselinePolicy>(BaselineKind::kEntropy); break;
      case 2: policy = std::make_unique<BaselinePolicy>(BaselineKind::kEntropyContext); break;
      default: policy = std::make_unique<LearnedPolicy>(net, nn::Mode::kTrain); break;
    }
    // vision that already commits some slots, so oracle and vision provenance mix
    VisualSystem vision(schema, VisionConfig{}, batch);
    AnnotationSet warm(schema->num_concepts(), emb.dim());
    for (std::uint64_t i = 0; i < 10; ++i) {
      const Scene s = generate_scene(schema, {}, derive_seed(batch, {100 + i}));
      const auto f = emb.featurize(s, 0.1, 0);
      for (std::size_t k = 0; k < s.size(); ++k)
        for (std::size_t a = 0; a < schema->num_concepts(); ++a)
          warm.add(a, {f.row(static_cast<Eigen::Index>(k)).data(), emb.dim()}, s.value(k, a));
    }
    vision.train(warm, 40 * (batch % 3), 3e-3, rng);

    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const Scene& scene = scenes[i];
      std::vector<Box> boxes;
      for (const auto& o : scene.objects) boxes.push_back(o.location);
      GraphMemory m = init_uniform(scene);
      bottom_up_update(m, vision.predict(emb.featurize(scene, 0.1, 0), boxes), i + 1, scenes.size());
      const double initial = recall(m, scene);
      double current = initial, reward_sum = 0.0;
      policy->begin_dialog(m);
      std::optional<PreviousRound> last;
      for (std::size_t t = 0; t < 30 && !m.all_committed(); ++t, ++rounds) {
        const GraphMemory before = m;
        const QuestionAction act = policy->act(m, last, rng);
        const OracleAnswer ans = execute(compose_program(act, m).program, scene);
        top_down_update(m, act.target_object, act.target_concept, ans);
        const double after = recall(m, scene);
        reward_sum += after - current;
        if (after < current) ++violations;
        for (std::size_t k = 0; k < m.num_objects(); ++k)
          for (std::size_t a = 0; a < m.num_concepts(); ++a) {
            if (before.provenance(k, a) == Provenance::kOracle &&
                (m.provenance(k, a) != Provenance::kOracle || m.committed_value(k, a) != before.committed_value(k, a)))
              ++violations;
            double sum = 0.0;
            for (double p : m.distribution(k, a)) {
              if (p < 0.0) ++violations;
              sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) ++violations;
            if (m.provenance(k, a) == Provenance::kOracle && !m.committed(k, a)) ++violations;
          }
        current = after;
        last = PreviousRound{act, ans.kind};
      }
      worst_telescope = std::max(worst_telescope, std::abs(reward_sum - (current - initial)));
    }
  }

  // the library rollout checks the same laws internally and records rewards
  std::vector<Scene> scenes;
  for (std::uint64_t i = 0; i < 40; ++i) scenes.push_back(generate_scene(schema, {}, 9000 + i, i));
  VisualSystem vision(schema, VisionConfig{}, 1);
  BaselinePolicy policy(BaselineKind::kEntropyContext);
  RolloutOptions ro;
  ro.budget = 25;
  const auto res = rollout(scenes, policy, vision, emb, ro, rng);
  for (const auto& d : res.dialogs) {
    worst_telescope = std::max(worst_telescope, std::abs(d.total_reward() - (d.recall_final - d.recall_initial)));
    double prev = d.recall_initial;
    for (const auto& r : d.rounds) {
      if (r.recall_after < prev) ++violations;
      prev = r.recall_after;
    }
  }
  return {violations == 0 && worst_telescope <= 1e-12,
          fmt("%zu rounds, %zu violations, worst telescoping error %.1e", rounds, violations, worst_telescope)};
}

// ---------------------------------------------------------------------------
// 4-8. trained policies

struct SeedRun {
  std::map<std::string, double> standard_auc;  // per policy
  double novel_auc = 0.0;
  double mixed_auc = 0.0;
  double mixed_random_auc = 0.0;
  AblationReport ablation;
};

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SeedRun run_seed(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  EpisodeConfig cfg;
  cfg.seed = seed;
  const Dataset ds = make_dataset(cfg);
  const TrainResult trained = train(cfg, ds.train());
  const auto learned = make_policy_factory("learned", trained.network);

  EvalOptions eo;
  eo.budget = cfg.budget;
  eo.sigma = cfg.vision.noise;
  eo.vision = cfg.vision;
  eo.seed = seed;
  eo.workers = cfg.workers;
  auto folds_of = [&](const std::string& schema, Dataset& holder) {
    EpisodeConfig c = cfg;
    c.schema = schema;
    holder = make_dataset(c);
    auto f = holder.test_folds();
    f.resize(std::min(f.size(), cfg.eval_folds));
    return f;
  };

  SeedRun run;
  Dataset standard, novel, mixed;
  const auto sf = folds_of("standard", standard);
  for (const std::string name : {"random", "entropy", "entropy-context"})
    run.standard_auc[name] = mean_auc(evaluate(make_policy_factory(name), sf, eo));
  run.standard_auc["learned"] = mean_auc(evaluate(learned, sf, eo));
  run.novel_auc = mean_auc(evaluate(learned, folds_of("novel", novel), eo));
  const auto mf = folds_of("mixed", mixed);
  run.mixed_auc = mean_auc(evaluate(learned, mf, eo));
  run.mixed_random_auc = mean_auc(evaluate(make_policy_factory("random"), mf, eo));

  AblationOptions ao;
  ao.config = cfg;
  run.ablation = ablate(learned, ao);
  std::printf("  seed %llu: learned %.3f, entropy-context %.3f, entropy %.3f, random %.3f (%.0fs)\n",
              static_cast<unsigned long long>(seed), run.standard_auc["learned"], run.standard_auc["entropy-context"],
              run.standard_auc["entropy"], run.standard_auc["random"], elapsed_since(t0));
  std::fflush(stdout);
  return run;
}

double mean_over(const std::vector<SeedRun>& runs, const std::function<double(const SeedRun&)>& f) {
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

Verdict policy_ordering(const std::vector<SeedRun>& runs) {
  auto m = [&](const char* p) { return mean_over(runs, [&](const SeedRun& r) { return r.standard_auc.at(p); }); };
  const double l = m("learned"), ec = m("entropy-context"), e = m("entropy"), r = m("random");
  return {l > ec && ec > e && e > r && l - r >= 0.10,
          fmt("AUC learned %.3f > entropy-context %.3f > entropy %.3f > random %.3f; gap %.3f", l, ec, e, r, l - r)};
}

Verdict generalization(const std::vector<SeedRun>& runs) {
  const double st = mean_over(runs, [](const SeedRun& r) { return r.standard_auc.at("learned"); });
  const double nv = mean_over(runs, [](const SeedRun& r) { return r.novel_auc; });
  const double mx = mean_over(runs, [](const SeedRun& r) { return r.mixed_auc; });
  const double mr = mean_over(runs, [](const SeedRun& r) { return r.mixed_random_auc; });
  return {std::abs(nv - st) <= 0.08 && mx >= mr + 0.10,
          fmt("standard %.3f novel %.3f (|diff| %.3f); mixed %.3f vs random %.3f", st, nv, std::abs(nv - st), mx, mr)};
}

std::vector<double> mean_curves(const std::vector<SeedRun>& runs, std::vector<double> AblationReport::*curve) {
  std::vector<double> out((runs.front().ablation.*curve).size(), 0.0);
  for (const auto& r : runs)
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += (r.ablation.*curve)[t] / static_cast<double>(runs.size());
  return out;
}

Verdict static_vision(const std::vector<SeedRun>& runs) {
  const auto full = mean_curves(runs, &AblationReport::full_curve);
  const auto stat = mean_curves(runs, &AblationReport::static_curve);
  const std::size_t T = full.size() - 1;
  const double start = full[5] - stat[5], end = full[T] - stat[T];
  std::size_t commits = 0;
  for (const auto& r : runs) commits += r.ablation.static_vision_commits;
  std::string per_seed;
  for (const auto& r : runs) per_seed += fmt(" %.3f", r.ablation.full_curve[T] - r.ablation.static_curve[T]);
  return {start >= 0.05 && end <= 0.08 && commits == 0,
          fmt("R@5 full %.3f static %.3f (gap %.3f); R@%zu full %.3f static %.3f (gap %.3f; per seed%s)", full[5],
              stat[5], start, T, full[T], stat[T], end, per_seed.c_str())};
}

Verdict question_drift(const std::vector<SeedRun>& runs) {
  double z_first = 0, v_first = 0, z_last = 0, v_last = 0;
  for (const auto& r : runs) {
    const auto& q = r.ablation.question_types;
    for (std::size_t t = 0; t < 5; ++t) {
      z_first += static_cast<double>(q[t].zero_hop_valid);
      v_first += static_cast<double>(q[t].zero_hop_valid + q[t].one_hop_valid);
    }
    for (std::size_t t = q.size() - 5; t < q.size(); ++t) {
      z_last += static_cast<double>(q[t].zero_hop_valid);
      v_last += static_cast<double>(q[t].zero_hop_valid + q[t].one_hop_valid);
    }
  }
  const double first = v_first > 0 ? z_first / v_first : 0.0, last = v_last > 0 ? z_last / v_last : 1.0;
  return {v_first > 0 && v_last > 0 && first > last,
          fmt("zero-hop share of valid questions: rounds 1-5 %.3f (%.0f), last 5 rounds %.3f (%.0f)", first, v_first,
              last, v_last)};
}

Verdict object_count(const std::vector<SeedRun>& runs) {
  const double r5 = mean_over(runs, [](const SeedRun& r) { return r.ablation.few_objects.recall_at_budget; });
  const double r8 = mean_over(runs, [](const SeedRun& r) { return r.ablation.many_objects.recall_at_budget; });
  const double f5 = mean_over(runs, [](const SeedRun& r) { return r.ablation.few_objects.failed_share; });
  const double f8 = mean_over(runs, [](const SeedRun& r) { return r.ablation.many_objects.failed_share; });
  return {r8 < r5 && f8 > f5,
          fmt("recall at budget K=5 %.3f, K=8 %.3f; ambiguous+invalid share K=5 %.3f, K=8 %.3f", r5, r8, f5, f8)};
}

// ---------------------------------------------------------------------------
// 9. determinism

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Verdict determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no --cli given"};
  const fs::path cfg = work / "det_config.json";
  std::ofstream(cfg) << R"({"episodes": 4, "images": 6, "budget": 10, "dataset_size": 300, "fold_size": 10,
  "eval_folds": 2, "policy": {"slot_dim": 8, "ref_dim": 32}, "vision": {"steps": 20}})";
  std::vector<std::map<std::string, std::string>> trees;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work / ("det_run" + std::to_string(run));
    fs::remove_all(out);
    const std::string base = "\"" + cli + "\" ";
    const std::string quiet = " > \"" + (work / "det_log.txt").string() + "\" 2>&1";
    const std::string train = base + "train --quiet --seed 7 --config \"" + cfg.string() + "\" --out \"" +
                              (out / "train").string() + "\"" + quiet;
    const std::string eval = base + "eval --seed 7 --config \"" + cfg.string() + "\" --checkpoint \"" +
                             (out / "train" / "checkpoint.json").string() + "\" --out \"" + (out / "eval").string() +
                             "\"" + quiet;
    if (std::system(train.c_str()) != 0 || std::system(eval.c_str()) != 0)
      return {false, "CLI run failed; see " + (work / "det_log.txt").string()};
    trees.push_back(read_tree(out));
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : trees[0]) {
    auto it = trees[1].find(name);
    if (it == trees[1].end() || it->second != bytes) ++differing;
  }
  differing += trees[1].size() > trees[0].size() ? trees[1].size() - trees[0].size() : 0;
  return {differing == 0 && trees[0].size() >= 6,
          fmt("%zu files compared across two train+eval runs, %zu differ", trees[0].size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  fs::path work = fs::temp_directory_path() / "curio_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--cli PATH] [--work DIR] [--only N,N,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(work);
  auto wanted = [&](int n) { return only.empty() || only.count(n) != 0; };

  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Verdict()>& run) {
    if (!wanted(n)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("[%s] %d. %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", n, title, v.detail.c_str(), elapsed_since(t0));
    std::fflush(stdout);
  };

  report(1, "oracle equivalence", oracle_equivalence);
  report(2, "gradient suite", gradient_suite_check);
  report(3, "memory laws", memory_laws);

  std::vector<SeedRun> runs;
  if (wanted(4) || wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
    std::printf("training seeds 0-2 (episodes 60, n 30, T 20, 6 folds)\n");
    std::fflush(stdout);
    try {
      for (std::uint64_t seed = 0; seed < 3; ++seed) runs.push_back(run_seed(seed));
    } catch (const std::exception& e) {
      std::printf("training failed: %s\n", e.what());
      runs.clear();
    }
  }
  auto with_runs = [&](Verdict (*f)(const std::vector<SeedRun>&)) {
    return [&runs, f] { return runs.empty() ? Verdict{false, "no trained runs"} : f(runs); };
  };
  report(4, "policy ordering", with_runs(policy_ordering));
  report(5, "double generalization", with_runs(generalization));
  report(6, "static-vision ablation", with_runs(static_vision));
  report(7, "question-type drift", with_runs(question_drift));
  report(8, "object-count stress", with_runs(object_count));
  report(9, "determinism", [&] { return determinism(cli, work); });

  std::printf("%s\n", failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures).c_str());
  return failures == 0 ? 0 : 1;
}
