// curio: dataset generation, training, evaluation and ablations from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "curio/gradsuite.hpp"
#include "curio/harness.hpp"

namespace fs = std::filesystem;
using namespace curio;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Base seed (overrides the config)");
  cmd->add_option("--config", c.config, "Run configuration file (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, out_help)->required();
}

EpisodeConfig resolve_config(const Common& c) {
  EpisodeConfig cfg = c.config.empty() ? EpisodeConfig{} : load_episode_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::vector<std::span<const Scene>> eval_folds(const Dataset& ds, const EpisodeConfig& cfg) {
  auto folds = ds.test_folds();
  if (folds.empty()) throw std::invalid_argument("dataset has no test folds");
  if (folds.size() > cfg.eval_folds) folds.resize(cfg.eval_folds);
  return folds;
}

EvalOptions eval_options(const EpisodeConfig& cfg) {
  EvalOptions eo;
  eo.budget = cfg.eval_budget ? cfg.eval_budget : cfg.budget;
  eo.sigma = cfg.vision.noise;
  eo.vision = cfg.vision;
  eo.seed = cfg.seed;
  eo.workers = cfg.workers;
  return eo;
}

std::shared_ptr<PolicyNetwork> train_network(const EpisodeConfig& cfg, bool verbose) {
  const Dataset ds = make_dataset(cfg);
  TrainResult tr = train(cfg, ds.train(), [&](const EpisodeStats& s) {
    if (verbose)
      std::fprintf(stderr, "episode %zu/%zu reward %.4f final recall %.4f\n", s.episode, cfg.episodes,
                   s.mean_reward, s.mean_final_recall);
  });
  return tr.network;
}

// ---------------------------------------------------------------------------

int run_gen_dataset(const Common& c, const std::string& schema, std::size_t count) {
  EpisodeConfig cfg = resolve_config(c);
  if (fs::is_directory(c.out)) throw std::invalid_argument("output path '" + c.out + "' is a directory");
  const fs::path parent = fs::path(c.out).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw std::invalid_argument("output directory '" + parent.string() + "' does not exist");
  SceneGenParams params;
  params.min_objects = cfg.min_objects;
  params.max_objects = cfg.max_objects;
  Dataset ds = generate_dataset(schema_by_name(schema), count, derive_seed(cfg.seed, {kTagDataset}), params);
  ds.fold_size = cfg.fold_size;
  write_dataset(ds, c.out);
  std::printf("wrote %zu scenes (%zu/%zu/%zu) to %s\n", ds.scenes.size(), ds.train_count, ds.val_count,
              ds.test_count, c.out.c_str());
  return 0;
}

int run_train(const Common& c, bool quiet) {
  const EpisodeConfig cfg = resolve_config(c);
  prepare_output_dir(c.out);
  const Dataset ds = make_dataset(cfg);
  TrainResult tr = train(cfg, ds.train(), [&](const EpisodeStats& s) {
    if (!quiet)
      std::fprintf(stderr, "episode %zu/%zu reward %.4f final recall %.4f\n", s.episode, cfg.episodes,
                   s.mean_reward, s.mean_final_recall);
  });
  write_file(c.out + "/checkpoint.json", tr.network->to_json());
  write_file(c.out + "/config.json", episode_config_to_json(cfg));
  write_training_curve(c.out + "/training.csv", tr.curve);

  const auto folds = eval_folds(ds, cfg);
  const auto res = evaluate(make_policy_factory("learned", tr.network), folds, eval_options(cfg));
  write_curve_csv(c.out + "/curves/learned_" + cfg.schema + ".csv", mean_curve(res));
  std::printf("trained %zu episodes; held-out AUC %s\n", cfg.episodes, format_number(mean_auc(res)).c_str());
  return 0;
}

struct EvalArgs {
  std::vector<std::string> policies;
  std::string checkpoint;
  std::string schema;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> folds;
  std::size_t visual_every = 0;
};

int run_eval(const Common& c, const EvalArgs& a) {
  EpisodeConfig cfg = resolve_config(c);
  if (!a.schema.empty()) {
    cfg.schema = a.schema;
    cfg.dataset.clear();
  }
  if (a.budget) cfg.eval_budget = *a.budget;
  if (a.folds) cfg.eval_folds = *a.folds;
  cfg.validate();

  std::vector<std::string> policies = a.policies;
  if (policies.empty()) {
    policies = {"random", "entropy", "entropy-context"};
    if (!a.checkpoint.empty()) policies.push_back("learned");
  }
  std::shared_ptr<const PolicyNetwork> network;
  if (!a.checkpoint.empty())
    network = std::make_shared<PolicyNetwork>(PolicyNetwork::from_json(read_file(a.checkpoint)));
  for (const auto& p : policies)
    if (p == "learned" && !network) throw std::invalid_argument("--policy learned needs --checkpoint");
  prepare_output_dir(c.out);

  const Dataset ds = make_dataset(cfg);
  const auto folds = eval_folds(ds, cfg);
  EvalOptions eo = eval_options(cfg);
  eo.visual_every = a.visual_every;
  eo.heldout = ds.val();

  std::vector<PolicySummary> rows;
  for (const auto& p : policies) {
    PolicySummary row{p, cfg.schema, evaluate(make_policy_factory(p, network), folds, eo)};
    const std::string tag = p + "_" + cfg.schema;
    write_curve_csv(c.out + "/curves/" + tag + ".csv", mean_curve(row.folds));
    write_transcripts(c.out + "/transcripts/" + tag + ".txt", row.folds);
    if (a.visual_every > 0) {
      std::ofstream v(c.out + "/visual_" + tag + ".csv", std::ios::binary);
      v << "fold,image,accuracy\n";
      for (const auto& f : row.folds)
        for (const auto& [image, acc] : f.visual_accuracy) v << (f.fold + 1) << ',' << image << ',' << format_number(acc) << '\n';
    }
    std::printf("%-16s %-9s AUC %s\n", p.c_str(), cfg.schema.c_str(), format_number(mean_auc(row.folds)).c_str());
    rows.push_back(std::move(row));
  }
  write_summary_csv(c.out + "/summary.csv", rows);
  return 0;
}

int run_ablate(const Common& c, const std::string& checkpoint, std::size_t budget, bool quiet) {
  const EpisodeConfig cfg = resolve_config(c);
  prepare_output_dir(c.out);
  std::shared_ptr<const PolicyNetwork> network;
  if (checkpoint.empty()) {
    auto trained = train_network(cfg, !quiet);
    write_file(c.out + "/checkpoint.json", trained->to_json());
    network = std::move(trained);
  } else {
    network = std::make_shared<PolicyNetwork>(PolicyNetwork::from_json(read_file(checkpoint)));
  }
  AblationOptions ao;
  ao.config = cfg;
  ao.budget = budget;
  const AblationReport rep = ablate(make_policy_factory("learned", network), ao);
  write_ablation(c.out, rep);
  std::printf("R@%zu full %s static %s; mixed R@0 %s partial R@0 %s\n", budget,
              format_number(rep.full_curve.back()).c_str(), format_number(rep.static_curve.back()).c_str(),
              format_number(rep.mixed_curve.front()).c_str(), format_number(rep.partial_curve.front()).c_str());
  return 0;
}

int run_grad_check(const Common& c, std::size_t seeds) {
  const EpisodeConfig cfg = resolve_config(c);
  prepare_output_dir(c.out);
  const auto results = gradient_suite(cfg.seed, seeds);
  std::ofstream out(c.out + "/grad_check.csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + c.out + "/grad_check.csv'");
  out << "case,seed,rel_error,tolerance,passed\n";
  bool ok = true;
  for (const auto& r : results) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", r.rel_error);
    out << r.name << ',' << r.seed << ',' << err << ',' << r.tolerance << ',' << (r.passed() ? 1 : 0) << '\n';
    ok = ok && r.passed();
  }
  for (const char* name : {"dense", "lstm", "gcn", "policy"}) {
    double worst = 0.0;
    for (const auto& r : results)
      if (r.name == name) worst = std::max(worst, r.rel_error);
    std::printf("%-7s worst rel. error %.3e\n", name, worst);
  }
  std::printf("%s\n", ok ? "all gradients match" : "gradient mismatch");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curio: an agent that learns to recognize attributes by asking questions"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, abl_c, grad_c;
  std::string schema = "standard";
  std::size_t count = 1800;
  auto* gen = app.add_subcommand("gen-dataset", "Generate a scene dataset");
  add_common(gen, gen_c, "Dataset file to write");
  gen->add_option("--schema", schema, "Attribute vocabulary")
      ->check(CLI::IsMember({"standard", "novel", "mixed", "arid"}))
      ->capture_default_str();
  gen->add_option("--count", count, "Number of scenes")->check(CLI::PositiveNumber)->capture_default_str();

  bool quiet = false;
  auto* tr = app.add_subcommand("train", "Train the question policy");
  add_common(tr, train_c, "Output directory");
  tr->add_flag("--quiet", quiet, "No per-episode progress");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate policies on the test folds");
  add_common(ev, eval_c, "Output directory");
  ev->add_option("--policy", ea.policies, "random|entropy|entropy-context|learned (repeatable)")
      ->check(CLI::IsMember({"random", "entropy", "entropy-context", "learned"}))
      ->delimiter(',');
  ev->add_option("--checkpoint", ea.checkpoint, "Trained policy checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--schema", ea.schema, "Evaluate on this vocabulary instead of the config's")
      ->check(CLI::IsMember({"standard", "novel", "mixed", "arid"}));
  ev->add_option("--budget", ea.budget, "Dialog rounds per image")->check(CLI::PositiveNumber);
  ev->add_option("--folds", ea.folds, "Number of test folds")->check(CLI::PositiveNumber);
  ev->add_option("--visual-every", ea.visual_every, "Held-out visual accuracy every N images (0 = off)");

  std::string abl_checkpoint;
  std::size_t abl_budget = 50;
  bool abl_quiet = false;
  auto* ab = app.add_subcommand("ablate", "Run the ablation suite");
  add_common(ab, abl_c, "Output directory");
  ab->add_option("--checkpoint", abl_checkpoint, "Trained policy (trained from the config when absent)")
      ->check(CLI::ExistingFile);
  ab->add_option("--budget", abl_budget, "Dialog rounds per image")->check(CLI::PositiveNumber)->capture_default_str();
  ab->add_flag("--quiet", abl_quiet, "No per-episode progress");

  std::size_t grad_seeds = 10;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  add_common(gc, grad_c, "Output directory");
  gc->add_option("--seeds", grad_seeds, "Seeds per case")->check(CLI::PositiveNumber)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_gen_dataset(gen_c, schema, count);
    if (*tr) return run_train(train_c, quiet);
    if (*ev) return run_eval(eval_c, ea);
    if (*ab) return run_ablate(abl_c, abl_checkpoint, abl_budget, abl_quiet);
    if (*gc) return run_grad_check(grad_c, grad_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
