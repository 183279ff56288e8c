#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "astn/data.hpp"
#include "astn/evaluation.hpp"
#include "astn/model.hpp"
#include "astn/training.hpp"

namespace astn {

struct VariantSpec {
  std::string name;
  bool bidirectional = true;
  bool use_discriminator = true;
  DiscVariant discriminator_variant = DiscVariant::second_order;
  DiscLevels discriminator_levels = DiscLevels::multi_level;
  double lambda = 1.0;
};

void to_json(nlohmann::json& j, const VariantSpec& v);
void from_json(const nlohmann::json& j, VariantSpec& v);

// One experiment = a cohort, a split protocol, and a variant x seed matrix.
struct ExperimentConfig {
  std::string cohort_path = "cohort.fpsq";
  SynthConfig synth;
  AstnConfig astn;
  TrainConfig train;
  SplitMode split_mode = SplitMode::subject_level;
  SplitRatios ratios;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<VariantSpec> variants = {
      {"forward", false, false, DiscVariant::second_order, DiscLevels::multi_level, 0.0},
      {"forward_disc", false, true, DiscVariant::second_order, DiscLevels::multi_level, 1.0},
      {"bidirectional", true, false, DiscVariant::second_order, DiscLevels::multi_level, 0.0},
      {"bidirectional_disc", true, true, DiscVariant::second_order, DiscLevels::multi_level, 1.0},
  };

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

// Applies one "dotted.path=value" override onto a JSON document; the value is
// parsed as JSON when possible and treated as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& dotted_assignment);

struct CellResult {
  std::string variant;
  std::uint64_t seed = 0;
  double test_auc = 0.0;
  double test_disc_auc = 0.0;  // NaN without a discriminator
  MetricReport report;
  std::size_t iterations = 0;
  std::size_t best_iteration = 0;
  double best_val_auc = 0.0;
  std::string dir;
};

struct VariantSummary {
  std::string variant;
  double mean_auc = 0.0;
  double sd_auc = 0.0;
  std::size_t n = 0;
};

struct ExperimentSummary {
  std::vector<CellResult> cells;
  std::vector<VariantSummary> rows;
};

// Trains every (variant, seed) cell, writing per-cell trace.csv, report.json,
// best.ckpt and state.bin under out_dir/<variant>/seed_<s>/, plus summary.json
// and manifest.json at the top. resume continues interrupted cells from their
// state files. threads caps worker parallelism (further capped by the
// ASTNLAB_THREADS environment variable); cells are independent and each one is
// internally sequential, so results do not depend on the thread count.
ExperimentSummary run_experiment(const Cohort& cohort, const ExperimentConfig& config,
                                 const std::string& out_dir, bool resume = false,
                                 unsigned threads = 0);

std::string format_summary_table(const ExperimentSummary& summary);

unsigned worker_thread_cap(unsigned requested);

// Model checkpoint helpers (config travels in the container header).
void save_model(const AstnModel<float>& model, const std::string& path,
                const nlohmann::json& extra = nlohmann::json::object());
AstnModel<float> load_model(const std::string& path);

}  // namespace astn
