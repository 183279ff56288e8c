#include "astn/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "astn/checkpoint.hpp"

namespace astn {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const VariantSpec& v) {
  j = nlohmann::json{{"name", v.name},
                     {"bidirectional", v.bidirectional},
                     {"use_discriminator", v.use_discriminator},
                     {"discriminator_variant", to_string(v.discriminator_variant)},
                     {"discriminator_levels", to_string(v.discriminator_levels)},
                     {"lambda", v.lambda}};
}

void from_json(const nlohmann::json& j, VariantSpec& v) {
  VariantSpec d;
  v.name = j.at("name").get<std::string>();
  v.bidirectional = j.value("bidirectional", d.bidirectional);
  v.use_discriminator = j.value("use_discriminator", d.use_discriminator);
  v.discriminator_variant =
      disc_variant_from_string(j.value("discriminator_variant", "second_order"));
  v.discriminator_levels = disc_levels_from_string(j.value("discriminator_levels", "multi_level"));
  v.lambda = j.value("lambda", d.lambda);
}

void ExperimentConfig::validate() const {
  synth.validate();
  astn.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("experiment: seed list must be non-empty");
  if (variants.empty()) throw ConfigError("experiment: variant list must be non-empty");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (v.name.empty()) throw ConfigError("experiment: variant with empty name");
    if (!names.insert(v.name).second)
      throw ConfigError("experiment: duplicate variant name '" + v.name + "'");
    if (v.lambda < 0.0) throw ConfigError("experiment: lambda must be >= 0");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"cohort_path", c.cohort_path},
                     {"synth", c.synth},
                     {"astn", c.astn},
                     {"train", c.train},
                     {"split_mode", to_string(c.split_mode)},
                     {"ratios", {{"train", c.ratios.train}, {"val", c.ratios.val},
                                 {"test", c.ratios.test}}},
                     {"seeds", c.seeds},
                     {"variants", c.variants}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c.cohort_path = j.value("cohort_path", d.cohort_path);
  if (j.contains("synth")) c.synth = j.at("synth").get<SynthConfig>();
  if (j.contains("astn")) c.astn = j.at("astn").get<AstnConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  c.split_mode = split_mode_from_string(j.value("split_mode", "subject"));
  if (j.contains("ratios")) {
    const auto& r = j.at("ratios");
    c.ratios.train = r.value("train", d.ratios.train);
    c.ratios.val = r.value("val", d.ratios.val);
    c.ratios.test = r.value("test", d.ratios.test);
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("variants")) c.variants = j.at("variants").get<std::vector<VariantSpec>>();
}

void apply_override(nlohmann::json& j, const std::string& dotted_assignment) {
  const auto eq = dotted_assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects dotted.path=value, got '" + dotted_assignment + "'");
  const std::string path = dotted_assignment.substr(0, eq);
  const std::string raw = dotted_assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // plain string

  nlohmann::json* cur = &j;
  std::stringstream ss(path);
  std::string key, next;
  if (!std::getline(ss, key, '.')) throw ConfigError("--set: empty path");
  while (std::getline(ss, next, '.')) {
    cur = &((*cur)[key]);
    key = next;
  }
  (*cur)[key] = value;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// model checkpoints
// ---------------------------------------------------------------------------

void save_model(const AstnModel<float>& model, const std::string& path,
                const nlohmann::json& extra) {
  std::vector<std::pair<std::string, ag::Tensor<float>>> tensors;
  for (const auto& p : model.named_params()) tensors.emplace_back(p.name, p.tensor);
  nlohmann::json header = extra;
  nlohmann::json jc;
  to_json(jc, model.config());
  header["astn_config"] = jc;
  header["with_discriminator"] = model.has_discriminator();
  ag::save_checkpoint<float>(path, tensors, header);
}

AstnModel<float> load_model(const std::string& path) {
  auto loaded = ag::load_checkpoint<float>(path);
  if (!loaded.extra.contains("astn_config"))
    throw std::runtime_error("checkpoint " + path + " carries no astn_config header");
  AstnConfig cfg = loaded.extra.at("astn_config").get<AstnConfig>();
  const bool with_disc = loaded.extra.value("with_discriminator", true);
  AstnModel<float> model(cfg, 0, with_disc);
  model.load_values(loaded.tensors);
  return model;
}

// ---------------------------------------------------------------------------
// experiment runner
// ---------------------------------------------------------------------------

unsigned worker_thread_cap(unsigned requested) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ASTNLAB_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
  }
  return std::max(1u, n);
}

namespace {

CellResult run_cell(const Cohort& cohort, const ExperimentConfig& cfg, const VariantSpec& variant,
                    std::uint64_t seed, const std::string& dir, bool resume) {
  fs::create_directories(dir);
  const std::string state_path = dir + "/state.bin";
  if (!resume) fs::remove(state_path);

  AstnConfig astn = cfg.astn;
  astn.bidirectional = variant.bidirectional;
  astn.discriminator_variant = variant.discriminator_variant;
  astn.discriminator_levels = variant.discriminator_levels;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.use_discriminator = variant.use_discriminator;
  tc.adversarial_scale = variant.lambda;

  const SplitPlan split = make_split(cohort, cfg.split_mode, cfg.ratios, seed);
  TrainResult result = train(cohort, split, astn, tc, state_path);

  write_trace_csv(result.trace, dir + "/trace.csv");
  const EvalResult test_eval = evaluate_model(result.model, cohort, split.test);

  CellResult cell;
  cell.variant = variant.name;
  cell.seed = seed;
  cell.test_auc = test_eval.report.auc;
  cell.test_disc_auc = std::numeric_limits<double>::quiet_NaN();
  if (variant.use_discriminator) {
    Rng rng(Rng::derive(seed, 0x7E57u));
    try {
      cell.test_disc_auc =
          discriminator_auc(result.model, cohort, split.test, tc.disc_auc_pairs, rng);
    } catch (const std::invalid_argument&) {
    }
  }
  cell.report = test_eval.report;
  cell.iterations = result.iterations_run;
  cell.best_iteration = result.best_iteration;
  cell.best_val_auc = result.best_val_auc;
  cell.dir = dir;

  nlohmann::json vj;
  to_json(vj, variant);
  nlohmann::json report{{"variant", vj},
                        {"seed", seed},
                        {"split_mode", to_string(cfg.split_mode)},
                        {"iterations", result.iterations_run},
                        {"best_iteration", result.best_iteration},
                        {"best_val_auc", std::isfinite(result.best_val_auc)
                                             ? nlohmann::json(result.best_val_auc)
                                             : nlohmann::json(nullptr)},
                        {"test", test_eval.report.to_json()},
                        {"test_disc_auc", std::isfinite(cell.test_disc_auc)
                                              ? nlohmann::json(cell.test_disc_auc)
                                              : nlohmann::json(nullptr)}};
  std::ofstream rj(dir + "/report.json", std::ios::trunc);
  rj << report.dump(2) << '\n';

  save_model(result.model, dir + "/best.ckpt",
             nlohmann::json{{"variant", vj}, {"seed", seed}});
  write_roc_csv(test_eval.roc, dir + "/roc.csv");
  return cell;
}

}  // namespace

ExperimentSummary run_experiment(const Cohort& cohort, const ExperimentConfig& config,
                                 const std::string& out_dir, bool resume, unsigned threads) {
  config.validate();
  fs::create_directories(out_dir);

  struct Job {
    const VariantSpec* variant;
    std::uint64_t seed;
    std::string dir;
  };
  std::vector<Job> jobs;
  for (const auto& v : config.variants)
    for (std::uint64_t s : config.seeds)
      jobs.push_back({&v, s, out_dir + "/" + v.name + "/seed_" + std::to_string(s)});

  std::vector<CellResult> cells(jobs.size());
  std::vector<std::string> failures;
  std::mutex failures_mutex;
  std::atomic<std::size_t> next{0};
  const unsigned n_threads =
      std::min<unsigned>(worker_thread_cap(threads), static_cast<unsigned>(jobs.size()));

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        cells[i] = run_cell(cohort, config, *jobs[i].variant, jobs[i].seed, jobs[i].dir, resume);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failures_mutex);
        failures.push_back(jobs[i].dir + ": " + e.what());
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!failures.empty()) {
    std::string msg = "experiment: " + std::to_string(failures.size()) + " cell(s) failed:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw std::runtime_error(msg);
  }

  ExperimentSummary summary;
  summary.cells = cells;
  for (const auto& v : config.variants) {
    VariantSummary row;
    row.variant = v.name;
    double sum = 0.0, sum2 = 0.0;
    for (const auto& c : cells)
      if (c.variant == v.name) {
        sum += c.test_auc;
        sum2 += c.test_auc * c.test_auc;
        ++row.n;
      }
    if (row.n) {
      row.mean_auc = sum / static_cast<double>(row.n);
      const double var = sum2 / static_cast<double>(row.n) - row.mean_auc * row.mean_auc;
      row.sd_auc = std::sqrt(std::max(0.0, var));
    }
    summary.rows.push_back(row);
  }

  nlohmann::json js;
  js["rows"] = nlohmann::json::array();
  for (const auto& r : summary.rows)
    js["rows"].push_back({{"variant", r.variant},
                          {"mean_test_auc", r.mean_auc},
                          {"sd_test_auc", r.sd_auc},
                          {"cells", r.n}});
  js["cells"] = nlohmann::json::array();
  for (const auto& c : cells)
    js["cells"].push_back({{"variant", c.variant},
                           {"seed", c.seed},
                           {"test_auc", c.test_auc},
                           {"dir", c.dir}});
  std::ofstream sj(out_dir + "/summary.json", std::ios::trunc);
  sj << js.dump(2) << '\n';

  nlohmann::json manifest;
  manifest["summary"] = "summary.json";
  manifest["cells"] = nlohmann::json::array();
  for (const auto& c : cells)
    manifest["cells"].push_back(
        {{"variant", c.variant},
         {"seed", c.seed},
         {"dir", c.dir},
         {"artifacts",
          {{"trace", c.dir + "/trace.csv"},
           {"report", c.dir + "/report.json"},
           {"roc", c.dir + "/roc.csv"},
           {"checkpoint", c.dir + "/best.ckpt"},
           {"state", c.dir + "/state.bin"}}}});
  std::ofstream mj(out_dir + "/manifest.json", std::ios::trunc);
  mj << manifest.dump(2) << '\n';

  return summary;
}

std::string format_summary_table(const ExperimentSummary& summary) {
  std::ostringstream os;
  os << "variant                        mean_auc  sd_auc  cells\n";
  for (const auto& r : summary.rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-30s %8.4f %7.4f %6zu\n", r.variant.c_str(), r.mean_auc,
                  r.sd_auc, r.n);
    os << line;
  }
  return os.str();
}

}  // namespace astn
