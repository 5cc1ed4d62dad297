#include "curio/harness.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace curio {

namespace fs = std::filesystem;

PolicyFactory make_policy_factory(const std::string& name, std::shared_ptr<const PolicyNetwork> network,
                                  const BaselineConfig& baseline) {
  if (name == "random") return [baseline] { return std::make_unique<BaselinePolicy>(BaselineKind::kRandom, baseline); };
  if (name == "entropy")
    return [baseline] { return std::make_unique<BaselinePolicy>(BaselineKind::kEntropy, baseline); };
  if (name == "entropy-context")
    return [baseline] { return std::make_unique<BaselinePolicy>(BaselineKind::kEntropyContext, baseline); };
  if (name == "learned") {
    if (!network) throw std::invalid_argument("the learned policy needs a trained network");
    return [network] { return std::make_unique<LearnedPolicy>(network, nn::Mode::kEval); };
  }
  throw std::invalid_argument("unknown policy '" + name + "' (random|entropy|entropy-context|learned)");
}

std::vector<double> dialog_curve(const DialogRecord& dialog, std::size_t budget) {
  std::vector<double> c(budget + 1, dialog.recall_initial);
  for (std::size_t t = 1; t <= budget; ++t)
    c[t] = t <= dialog.rounds.size() ? dialog.rounds[t - 1].recall_after : c[t - 1];
  return c;
}

double recall_at(std::span<const double> curve, std::size_t k) {
  if (curve.empty()) throw std::invalid_argument("recall_at: empty curve");
  return curve[std::min(k, curve.size() - 1)];
}

double area_under_curve(std::span<const double> curve) {
  if (curve.size() < 2) return curve.empty() ? 0.0 : curve[0];
  double s = 0.0;
  for (std::size_t t = 1; t < curve.size(); ++t) s += curve[t];
  return s / static_cast<double>(curve.size() - 1);
}

FeatureEmbedding eval_embedding(std::shared_ptr<const AttributeSchema> schema, std::size_t dim, std::uint64_t seed) {
  return FeatureEmbedding(std::move(schema), dim, derive_seed(seed, {kTagEmbedding}));
}

std::uint64_t eval_noise_seed(std::uint64_t seed) { return derive_seed(seed, {kTagNoise}); }

double eval_visual(const VisualSystem& vision, std::span<const Scene> scenes, const FeatureEmbedding& embedding,
                   double sigma, std::uint64_t noise_seed) {
  return vision.accuracy(scenes, embedding, sigma, noise_seed);
}

namespace {

FoldResult run_fold(const PolicyFactory& factory, std::span<const Scene> fold, std::size_t index,
                    const FeatureEmbedding& embedding, const EvalOptions& opt) {
  FoldResult fr;
  fr.fold = index;
  if (fold.empty()) throw std::invalid_argument("evaluate: empty fold");
  const std::uint64_t key = derive_seed(opt.seed, {kTagFold, fold.front().id});
  Rng rng(key);
  VisualSystem vision(fold.front().schema, opt.vision, derive_seed(key, {kTagVisionInit}));
  if (opt.initial_vision) vision.copy_from(*opt.initial_vision);
  auto policy = factory();

  RolloutOptions ro;
  ro.budget = opt.budget;
  ro.episode_length = fold.size();
  ro.train_vision = opt.train_vision;
  ro.sigma = opt.sigma;
  ro.noise_seed = eval_noise_seed(opt.seed);
  ImageCallback cb;
  if (opt.visual_every > 0 && !opt.heldout.empty())
    cb = [&](const DialogRecord& d, const VisualSystem& v) {
      if (d.image_index % opt.visual_every == 0)
        fr.visual_accuracy.emplace_back(d.image_index, eval_visual(v, opt.heldout, embedding, opt.sigma, ro.noise_seed));
    };
  RolloutResult rr = rollout(fold, *policy, vision, embedding, ro, rng, cb);
  fr.curve.assign(opt.budget + 1, 0.0);
  for (const auto& d : rr.dialogs) {
    const auto c = dialog_curve(d, opt.budget);
    for (std::size_t t = 0; t < c.size(); ++t) fr.curve[t] += c[t];
  }
  for (double& v : fr.curve) v /= static_cast<double>(rr.dialogs.size());
  fr.auc = area_under_curve(fr.curve);
  fr.dialogs = std::move(rr.dialogs);
  return fr;
}

}  // namespace

std::vector<FoldResult> evaluate(const PolicyFactory& factory, std::span<const std::span<const Scene>> folds,
                                 const EvalOptions& options) {
  std::vector<FoldResult> out(folds.size());
  if (folds.empty()) return out;
  const auto schema = folds.front().front().schema;
  const FeatureEmbedding embedding = eval_embedding(schema, options.vision.feature_dim, options.seed);
  std::size_t workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, folds.size());

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(folds.size());
  auto work = [&] {
    for (std::size_t i = next++; i < folds.size(); i = next++) {
      try {
        out[i] = run_fold(factory, folds[i], i, embedding, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<double> mean_curve(std::span<const FoldResult> folds) {
  if (folds.empty()) return {};
  std::vector<double> c(folds.front().curve.size(), 0.0);
  for (const auto& f : folds)
    for (std::size_t t = 0; t < c.size(); ++t) c[t] += f.curve.at(t);
  for (double& v : c) v /= static_cast<double>(folds.size());
  return c;
}

double mean_auc(std::span<const FoldResult> folds) {
  double s = 0.0;
  for (const auto& f : folds) s += f.auc;
  return folds.empty() ? 0.0 : s / static_cast<double>(folds.size());
}

// ---------------------------------------------------------------------------

std::vector<QuestionTypeCounts> question_types(std::span<const FoldResult> folds, std::size_t budget) {
  std::vector<QuestionTypeCounts> h(budget);
  for (const auto& f : folds)
    for (const auto& d : f.dialogs)
      for (std::size_t t = 0; t < d.rounds.size() && t < budget; ++t) {
        const auto& r = d.rounds[t];
        switch (r.answer.kind) {
          case AnswerKind::kValue: ++(r.one_hop ? h[t].one_hop_valid : h[t].zero_hop_valid); break;
          case AnswerKind::kAmbiguous: ++h[t].ambiguous; break;
          case AnswerKind::kInvalid: ++h[t].invalid; break;
        }
      }
  return h;
}

ObjectCountRow object_count_row(std::size_t objects, std::span<const FoldResult> folds, std::size_t budget) {
  ObjectCountRow row;
  row.objects = objects;
  std::size_t dialogs = 0, questions = 0, failed = 0;
  for (const auto& f : folds)
    for (const auto& d : f.dialogs) {
      row.recall_at_budget += dialog_curve(d, budget).back();
      row.mean_dialog_length += static_cast<double>(d.rounds.size());
      ++dialogs;
      for (const auto& r : d.rounds) {
        ++questions;
        failed += r.answer.is_value() ? 0 : 1;
      }
    }
  if (dialogs) {
    row.recall_at_budget /= static_cast<double>(dialogs);
    row.mean_dialog_length /= static_cast<double>(dialogs);
  }
  row.failed_share = questions ? static_cast<double>(failed) / static_cast<double>(questions) : 0.0;
  return row;
}

std::vector<CommitCounts> commit_sources(std::span<const FoldResult> folds) {
  std::vector<CommitCounts> c;
  std::vector<std::size_t> n;
  for (const auto& f : folds)
    for (const auto& d : f.dialogs) {
      const std::size_t i = d.image_index - 1;
      if (c.size() <= i) {
        c.resize(i + 1);
        n.resize(i + 1, 0);
      }
      c[i].vision += static_cast<double>(d.vision_commits);
      c[i].oracle += static_cast<double>(d.oracle_commits);
      ++n[i];
    }
  for (std::size_t i = 0; i < c.size(); ++i)
    if (n[i]) {
      c[i].vision /= static_cast<double>(n[i]);
      c[i].oracle /= static_cast<double>(n[i]);
    }
  return c;
}

VisualSystem pretrain_partial_vision(const AttributeSchema& mixed, std::size_t count, const EvalOptions& options) {
  const auto target = std::make_shared<const AttributeSchema>(mixed);
  const auto standard = std::make_shared<const AttributeSchema>(standard_schema());
  const FeatureEmbedding embedding = eval_embedding(target, options.vision.feature_dim, options.seed);
  const std::uint64_t noise = derive_seed(options.seed, {kTagPretrain, 1});

  AnnotationSet data(target->num_concepts(), embedding.dim());
  std::size_t objects = 0;
  for (std::uint64_t s = 0; objects < count; ++s) {
    const Scene src = generate_scene(standard, {}, derive_seed(options.seed, {kTagPretrain, 2, s}), s);
    Scene mapped = src;
    mapped.schema = target;
    for (auto& o : mapped.objects)
      for (std::size_t a = 0; a < o.attributes.size(); ++a) {
        const auto& name = standard->values[a][static_cast<std::size_t>(o.attributes[a])];
        const auto idx = target->value_index(a, name);
        if (!idx) throw SceneError("pretrain: Standard value '" + name + "' missing from target schema");
        o.attributes[a] = static_cast<int>(*idx);
      }
    const ObjectFeatures f = embedding.featurize(mapped, options.sigma, noise);
    for (std::size_t k = 0; k < mapped.size() && objects < count; ++k, ++objects)
      for (std::size_t a = 0; a < target->num_concepts(); ++a) {
        const auto row = f.row(static_cast<Eigen::Index>(k));
        data.add(a, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), mapped.value(k, a));
      }
  }
  VisualSystem vision(target, options.vision, derive_seed(options.seed, {kTagPretrain, 3}));
  Rng rng(derive_seed(options.seed, {kTagPretrain, 4}));
  vision.train(data, 10 * options.vision.steps, options.vision.lr, rng);
  return vision;
}

AblationReport ablate(const PolicyFactory& factory, const AblationOptions& ao) {
  const EpisodeConfig& cfg = ao.config;
  AblationReport rep;
  rep.budget = ao.budget;

  EvalOptions eo;
  eo.budget = ao.budget;
  eo.sigma = cfg.vision.noise;
  eo.vision = cfg.vision;
  eo.seed = cfg.seed;
  eo.workers = cfg.workers;

  auto folds_of = [&](EpisodeConfig c) {
    Dataset ds = make_dataset(c);
    auto f = ds.test_folds();
    if (f.size() > cfg.eval_folds) f.resize(cfg.eval_folds);
    return std::make_pair(std::move(ds), std::move(f));
  };

  {
    auto [ds, folds] = folds_of(cfg);
    const auto full = evaluate(factory, folds, eo);
    rep.full_curve = mean_curve(full);
    rep.commits = commit_sources(full);
    EvalOptions st = eo;
    st.train_vision = false;
    const auto stat = evaluate(factory, folds, st);
    rep.static_curve = mean_curve(stat);
    for (const auto& f : stat)
      for (const auto& d : f.dialogs) rep.static_vision_commits += d.vision_commits;
    rep.question_types = question_types(stat, ao.budget);
  }
  {
    EpisodeConfig mc = cfg;
    mc.schema = "mixed";
    mc.dataset.clear();
    auto [ds, folds] = folds_of(mc);
    rep.mixed_curve = mean_curve(evaluate(factory, folds, eo));
    const VisualSystem pre = pretrain_partial_vision(*ds.schema, ao.pretrain_objects, eo);
    EvalOptions po = eo;
    po.initial_vision = &pre;
    rep.partial_curve = mean_curve(evaluate(factory, folds, po));
  }
  for (const std::size_t objects : {ao.few_objects, ao.many_objects}) {
    EpisodeConfig kc = cfg;
    kc.dataset.clear();
    kc.min_objects = kc.max_objects = objects;
    auto [ds, folds] = folds_of(kc);
    const auto res = evaluate(factory, folds, eo);
    (objects == ao.few_objects ? rep.few_objects : rep.many_objects) = object_count_row(objects, res, ao.budget);
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

void prepare_output_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("output directory must not be empty");
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec))
    throw std::invalid_argument("output path '" + dir + "' exists and is not a directory");
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::invalid_argument("cannot create output directory '" + dir + "'");
}

namespace {

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace

void write_summary_csv(const std::string& path, std::span<const PolicySummary> rows) {
  auto out = open_out(path);
  out << "policy,split,fold,R@10,R@20,R@50,AUC\n";
  for (const auto& row : rows) {
    std::vector<std::array<double, 4>> vals;
    for (const auto& f : row.folds)
      vals.push_back({recall_at(f.curve, 10), recall_at(f.curve, 20), recall_at(f.curve, 50), f.auc});
    for (std::size_t i = 0; i < vals.size(); ++i) {
      out << row.policy << ',' << row.split << ',' << (row.folds[i].fold + 1);
      for (double v : vals[i]) out << ',' << format_number(v);
      out << '\n';
    }
    std::array<double, 4> mean{}, sd{};
    for (const auto& v : vals)
      for (std::size_t c = 0; c < 4; ++c) mean[c] += v[c] / static_cast<double>(vals.size());
    for (const auto& v : vals)
      for (std::size_t c = 0; c < 4; ++c) sd[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
    for (double& s : sd) s = vals.size() > 1 ? std::sqrt(s / static_cast<double>(vals.size() - 1)) : 0.0;
    out << row.policy << ',' << row.split << ",mean";
    for (double v : mean) out << ',' << format_number(v);
    out << '\n' << row.policy << ',' << row.split << ",std";
    for (double v : sd) out << ',' << format_number(v);
    out << '\n';
  }
}

void write_curve_csv(const std::string& path, std::span<const double> curve) {
  auto out = open_out(path);
  out << "round,recall\n";
  for (std::size_t t = 0; t < curve.size(); ++t) out << t << ',' << format_number(curve[t]) << '\n';
}

void write_transcripts(const std::string& path, std::span<const FoldResult> folds) {
  auto out = open_out(path);
  for (const auto& f : folds)
    for (const auto& d : f.dialogs) {
      out << "# fold " << (f.fold + 1) << " image " << d.image_index << " scene " << d.scene_id << " objects "
          << d.num_objects << " initial_recall " << format_number(d.recall_initial) << '\n';
      for (const auto& r : d.rounds) out << r.transcript << '\n';
    }
}

void write_ablation(const std::string& dir, const AblationReport& r) {
  write_curve_csv(dir + "/curves/full.csv", r.full_curve);
  write_curve_csv(dir + "/curves/static_vision.csv", r.static_curve);
  write_curve_csv(dir + "/curves/mixed.csv", r.mixed_curve);
  write_curve_csv(dir + "/curves/mixed_partial_vision.csv", r.partial_curve);
  {
    auto out = open_out(dir + "/question_types.csv");
    out << "round,zero_hop_valid,one_hop_valid,ambiguous,invalid\n";
    for (std::size_t t = 0; t < r.question_types.size(); ++t) {
      const auto& q = r.question_types[t];
      out << (t + 1) << ',' << q.zero_hop_valid << ',' << q.one_hop_valid << ',' << q.ambiguous << ',' << q.invalid
          << '\n';
    }
  }
  {
    auto out = open_out(dir + "/object_count.csv");
    out << "objects,recall_at_budget,failed_share,mean_dialog_length\n";
    for (const auto* row : {&r.few_objects, &r.many_objects})
      out << row->objects << ',' << format_number(row->recall_at_budget) << ',' << format_number(row->failed_share)
          << ',' << format_number(row->mean_dialog_length) << '\n';
  }
  {
    auto out = open_out(dir + "/commit_sources.csv");
    out << "image,vision,oracle\n";
    for (std::size_t i = 0; i < r.commits.size(); ++i)
      out << (i + 1) << ',' << format_number(r.commits[i].vision) << ',' << format_number(r.commits[i].oracle) << '\n';
  }
}

void write_training_curve(const std::string& path, std::span<const EpisodeStats> curve) {
  auto out = open_out(path);
  out << "episode,mean_reward,mean_final_recall,mean_initial_recall,mean_rounds,loss,grad_norm\n";
  for (const auto& s : curve)
    out << s.episode << ',' << format_number(s.mean_reward) << ',' << format_number(s.mean_final_recall) << ','
        << format_number(s.mean_initial_recall) << ',' << format_number(s.mean_rounds) << ','
        << format_number(s.loss) << ',' << format_number(s.grad_norm) << '\n';
}

}  // namespace curio
