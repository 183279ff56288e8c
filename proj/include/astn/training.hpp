#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "astn/adam.hpp"
#include "astn/data.hpp"
#include "astn/model.hpp"
#include "astn/rng.hpp"

namespace astn {

struct TrainConfig {
  std::size_t max_iterations = 2000;
  std::size_t patience = 10;        // consecutive non-improving validation checks
  double adversarial_scale = 1.0;   // lambda
  std::uint64_t seed = 1;
  std::size_t eval_every = 25;
  double learning_rate = 0.001;
  // Base step-size ratio of the confusion phase relative to phase 1. Adam
  // normalizes away the loss scale, so lambda acts through the phase-3 step
  // size (lr_adv = lambda * adversarial_lr_ratio * learning_rate); the ratio
  // keeps a single confusion pair from thrashing G at lambda = 1.
  double adversarial_lr_ratio = 0.25;
  bool use_discriminator = true;
  bool debug_freeze_checks = false;  // byte-audit frozen partitions each iteration
  std::size_t disc_auc_pairs = 200;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct IterationTrace {
  std::size_t iteration = 0;
  double j_c = 0.0;
  double j_d = 0.0;      // NaN without a discriminator
  double j_a = 0.0;      // NaN without a discriminator; 0 when lambda == 0
  double val_auc = 0.0;  // last computed validation classifier AUC (NaN before first eval)
  double disc_auc = 0.0; // last computed validation discriminator AUC
};

void write_trace_csv(const std::vector<IterationTrace>& trace, const std::string& path);

// Four sequences of Algorithm-1 step 2: a different-subject pair and a
// same-subject pair of distinct trials.
struct Batch {
  TrialId diff_a, diff_b;  // (m1,n1), (m2,n2) with m1 != m2
  TrialId same_a, same_b;  // (m3,n3), (m3,n4) with n3 != n4
};

// Uniform over subjects: m1 uniform, m2 uniform among the rest, m3 uniform
// among subjects holding >= 2 trials; trials uniform within subject.
Batch sample_batch(const std::vector<TrialId>& train, Rng& rng);

struct TrainResult {
  AstnModel<float> model;  // best-validation parameters
  std::vector<IterationTrace> trace;
  std::size_t iterations_run = 0;
  std::size_t best_iteration = 0;
  double best_val_auc = std::numeric_limits<double>::quiet_NaN();
};

class Trainer {
 public:
  Trainer(const Cohort& cohort, const SplitPlan& split, const AstnConfig& astn_config,
          const TrainConfig& train_config);

  // One Algorithm-1 iteration: phase 1 minimizes J_C updating G and C; phase 2
  // recomputes representations and minimizes J_D updating D only; phase 3
  // maximizes lambda*J_A updating G only. Returns the trace entry.
  IterationTrace iterate();

  // Runs to max_iterations or patience exhaustion, evaluating every eval_every
  // iterations; keeps the best-validation parameter snapshot.
  TrainResult run();

  // Resumable state round-trip (parameters, optimizer moments, RNG, trace).
  void save_state(const std::string& path) const;
  bool load_state(const std::string& path);  // false when no file exists

  AstnModel<float>& model() { return model_; }
  const std::vector<IterationTrace>& trace() const { return trace_; }
  std::size_t iteration() const { return iteration_; }

  // The three phase optimizers are deliberately independent states.
  const ag::Adam<float>& optimizer_gc() const { return adam_gc_; }
  const ag::Adam<float>& optimizer_d() const { return adam_d_; }
  const ag::Adam<float>& optimizer_ga() const { return adam_ga_; }

  using CheckpointHook = std::function<void(const Trainer&)>;
  void set_checkpoint_hook(CheckpointHook hook) { hook_ = std::move(hook); }

 private:
  void evaluate_validation(IterationTrace& entry);
  void audit_frozen(const std::vector<std::vector<float>>& before, ParamPartition part,
                    const char* phase) const;

  const Cohort& cohort_;
  SplitPlan split_;
  AstnConfig astn_cfg_;
  TrainConfig cfg_;
  AstnModel<float> model_;
  ag::Adam<float> adam_gc_;
  ag::Adam<float> adam_d_;
  ag::Adam<float> adam_ga_;
  Rng rng_;
  std::vector<IterationTrace> trace_;
  std::size_t iteration_ = 0;
  double last_val_auc_ = std::numeric_limits<double>::quiet_NaN();
  double last_disc_auc_ = std::numeric_limits<double>::quiet_NaN();
  double best_val_auc_ = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_iteration_ = 0;
  std::size_t evals_since_best_ = 0;
  std::vector<std::pair<std::string, ag::Tensor<float>>> best_params_;
  CheckpointHook hook_;
};

// Convenience wrapper: construct, optionally resume, run, return best model.
TrainResult train(const Cohort& cohort, const SplitPlan& split, const AstnConfig& astn_config,
                  const TrainConfig& train_config, const std::string& state_path = "");

}  // namespace astn
