// astnlab: experiment CLI for synthetic footstep-pressure FoG detection.
// Exit codes: 0 success, 1 validation error, 2 runtime failure,
// 3 acceptance-check failure (grad-check).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "astn/experiment.hpp"
#include "astn/gradsuite.hpp"

namespace fs = std::filesystem;
using namespace astn;

namespace {

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& out_path, const std::string& from_csv, int levels) {
  Cohort cohort;
  if (!from_csv.empty()) {
    ExperimentConfig cfg = load_experiment_config(config_path, overrides);
    cohort = ingest_csv_dir(from_csv, cfg.synth.sample_rate, levels);
  } else {
    ExperimentConfig cfg = load_experiment_config(config_path, overrides);
    cohort = generate_cohort(cfg.synth);
  }
  save_cohort(cohort, out_path);
  const auto& s0 = cohort.sequences.front();
  std::size_t seconds = 0;
  for (const auto& s : cohort.sequences) seconds += s.seconds();
  std::printf("wrote %s: %zu trials, %zu subjects, grid %zux%zu @ %zu fps, %zu seconds total\n",
              out_path.c_str(), cohort.sequences.size(), cohort.subject_ids().size(), s0.width,
              s0.height, s0.sample_rate, seconds);
  std::printf("realized positive-second rate: %.4f\n", cohort.positive_second_rate());
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir, bool resume, unsigned threads) {
  ExperimentConfig cfg = load_experiment_config(config_path, overrides);
  if (!fs::exists(cfg.cohort_path))
    throw ConfigError("cohort file not found: " + cfg.cohort_path + " (run gen-data first)");
  const Cohort cohort = load_cohort(cfg.cohort_path);
  auto summary = run_experiment(cohort, cfg, out_dir, resume, threads);
  std::cout << format_summary_table(summary);
  std::printf("artifacts indexed in %s/manifest.json\n", out_dir.c_str());
  return 0;
}

int cmd_sweep_lambda(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_dir, const std::vector<double>& lambdas, bool resume,
                     unsigned threads) {
  ExperimentConfig cfg = load_experiment_config(config_path, overrides);
  if (lambdas.empty()) throw ConfigError("sweep-lambda: need at least one lambda");
  cfg.variants.clear();
  for (double l : lambdas) {
    char name[32];
    std::snprintf(name, sizeof(name), "lambda_%g", l);
    VariantSpec v;
    v.name = name;
    v.bidirectional = cfg.astn.bidirectional;
    v.use_discriminator = l > 0.0;
    v.lambda = l;
    cfg.variants.push_back(v);
  }
  if (!fs::exists(cfg.cohort_path))
    throw ConfigError("cohort file not found: " + cfg.cohort_path + " (run gen-data first)");
  const Cohort cohort = load_cohort(cfg.cohort_path);
  auto summary = run_experiment(cohort, cfg, out_dir, resume, threads);
  std::cout << format_summary_table(summary);
  return 0;
}

void write_pca_levels(const AstnModel<float>& model, const Cohort& cohort,
                      const std::vector<TrialId>& trials, double threshold,
                      const std::string& out_dir) {
  const LevelVectors vec = collect_representation_vectors(model, cohort, trials);
  std::vector<std::uint8_t> pred(vec.scores.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = vec.scores[i] >= threshold ? 1 : 0;
  const std::pair<const char*, const std::vector<std::vector<double>>*> levels[] = {
      {"spatial", &vec.spatial}, {"intrinsic", &vec.intrinsic}, {"dynamic", &vec.dynamic}};
  for (const auto& [name, points] : levels) {
    auto pca = pca_project(*points, 2);
    write_pca_csv(pca, vec.true_labels, pred, out_dir + "/pca_" + name + ".csv");
  }
}

int cmd_eval(const std::string& checkpoint, const std::string& cohort_path,
             const std::string& split_mode, std::uint64_t split_seed,
             const std::string& partition, const std::string& out_dir, bool with_pca) {
  const AstnModel<float> model = load_model(checkpoint);
  const Cohort cohort = load_cohort(cohort_path);
  const SplitPlan split =
      make_split(cohort, split_mode_from_string(split_mode), SplitRatios{}, split_seed);
  const std::vector<TrialId>* trials = &split.test;
  if (partition == "train")
    trials = &split.train;
  else if (partition == "val")
    trials = &split.val;
  else if (partition != "test")
    throw ConfigError("eval: unknown partition '" + partition + "'");

  fs::create_directories(out_dir);
  const EvalResult result = evaluate_model(model, cohort, *trials);
  nlohmann::json j{{"checkpoint", checkpoint},
                   {"cohort", cohort_path},
                   {"split_mode", split_mode},
                   {"split_seed", split_seed},
                   {"partition", partition},
                   {"metrics", result.report.to_json()}};
  std::ofstream rj(out_dir + "/report.json", std::ios::trunc);
  rj << j.dump(2) << '\n';
  write_roc_csv(result.roc, out_dir + "/roc.csv");
  if (with_pca) write_pca_levels(model, cohort, *trials, result.report.threshold, out_dir);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_grad_check(const std::vector<double>& eps_sweep, const std::string& corrupt) {
  const auto checks = run_gradient_suite(corrupt);
  bool all_pass = true;
  for (const auto& c : checks) {
    std::printf("[%s] %-24s max_rel_err %.3e (tol %.0e)\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.max_error, c.tolerance);
    all_pass = all_pass && c.pass;
  }
  for (double eps : eps_sweep)
    std::printf("eps %.1e -> max_rel_err %.3e\n", eps, eps_sweep_error(eps));
  if (!all_pass) {
    std::printf("grad-check: FAILED\n");
    return 3;
  }
  std::printf("grad-check: all %zu checks passed\n", checks.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"astnlab: adversarial spatio-temporal FoG detection experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path = "cohort.fpsq", out_dir = "out";
  std::string from_csv, checkpoint, cohort_path, split_mode = "subject", partition = "test";
  std::vector<std::string> overrides;
  std::vector<double> lambdas{0.0, 0.25, 1.0, 4.0}, eps_sweep;
  std::string corrupt;
  std::uint64_t split_seed = 1;
  unsigned threads = 0;
  bool resume = false, with_pca = false;
  int levels = 0;

  auto* gen = app.add_subcommand("gen-data", "generate (or ingest) a cohort file");
  gen->add_option("config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_path, "output cohort path");
  gen->add_option("--from-csv", from_csv, "ingest a directory of per-trial CSV grids instead");
  gen->add_option("--levels", levels, "raw force levels for CSV normalization");
  gen->add_option("--set", overrides, "override config fields: dotted.path=value");

  auto* tr = app.add_subcommand("train", "train the variant x seed matrix");
  tr->add_option("config", config_path, "experiment config JSON")->required();
  tr->add_option("--out-dir", out_dir, "output directory");
  tr->add_flag("--resume", resume, "resume interrupted cells from their state files");
  tr->add_option("--threads", threads, "worker threads (0 = auto; ASTNLAB_THREADS caps)");
  tr->add_option("--set", overrides, "override config fields: dotted.path=value");

  auto* sw = app.add_subcommand("sweep-lambda", "adversarial-scale sweep");
  sw->add_option("config", config_path, "experiment config JSON")->required();
  sw->add_option("--out-dir", out_dir, "output directory");
  sw->add_option("--lambdas", lambdas, "adversarial scales to sweep")->delimiter(',');
  sw->add_flag("--resume", resume, "resume interrupted cells");
  sw->add_option("--threads", threads, "worker threads");
  sw->add_option("--set", overrides, "override config fields: dotted.path=value");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a cohort split");
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--cohort", cohort_path, "cohort file")->required();
  ev->add_option("--split-mode", split_mode, "subject|trial");
  ev->add_option("--split-seed", split_seed, "split seed");
  ev->add_option("--partition", partition, "test|train|val");
  ev->add_option("--out-dir", out_dir, "output directory");
  ev->add_flag("--pca", with_pca, "also write per-level PCA projections");

  auto* pj = app.add_subcommand("project", "PCA projections of the three representation levels");
  pj->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  pj->add_option("--cohort", cohort_path, "cohort file")->required();
  pj->add_option("--split-mode", split_mode, "subject|trial");
  pj->add_option("--split-seed", split_seed, "split seed");
  pj->add_option("--partition", partition, "test|train|val");
  pj->add_option("--out-dir", out_dir, "output directory");

  auto* gc = app.add_subcommand("grad-check", "finite-difference verification suite (64-bit)");
  gc->add_option("--eps", eps_sweep, "also report FD error at these step sizes")->delimiter(',');
  gc->add_option("--corrupt", corrupt, "fault-injection hook: corrupt this op's gradient");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, overrides, out_path, from_csv, levels);
    if (tr->parsed()) return cmd_train(config_path, overrides, out_dir, resume, threads);
    if (sw->parsed())
      return cmd_sweep_lambda(config_path, overrides, out_dir, lambdas, resume, threads);
    if (ev->parsed())
      return cmd_eval(checkpoint, cohort_path, split_mode, split_seed, partition, out_dir,
                      with_pca);
    if (pj->parsed()) {
      const AstnModel<float> model = load_model(checkpoint);
      const Cohort cohort = load_cohort(cohort_path);
      const SplitPlan split =
          make_split(cohort, split_mode_from_string(split_mode), SplitRatios{}, split_seed);
      const std::vector<TrialId>& trials = partition == "train" ? split.train
                                           : partition == "val" ? split.val
                                                                : split.test;
      fs::create_directories(out_dir);
      const EvalResult result = evaluate_model(model, cohort, trials);
      write_pca_levels(model, cohort, trials, result.report.threshold, out_dir);
      std::printf("wrote pca_{spatial,intrinsic,dynamic}.csv under %s\n", out_dir.c_str());
      return 0;
    }
    if (gc->parsed()) return cmd_grad_check(eps_sweep, corrupt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
