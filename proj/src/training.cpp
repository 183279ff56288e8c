#include "astn/training.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "astn/checkpoint.hpp"
#include "astn/evaluation.hpp"

namespace astn {

void TrainConfig::validate() const {
  if (max_iterations == 0) throw ConfigError("train: max_iterations must be > 0");
  if (adversarial_scale < 0.0) throw ConfigError("train: adversarial_scale must be >= 0");
  if (eval_every == 0) throw ConfigError("train: eval_every must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(adversarial_lr_ratio > 0.0)) throw ConfigError("train: adversarial_lr_ratio must be > 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"max_iterations", c.max_iterations},
                     {"patience", c.patience},
                     {"adversarial_scale", c.adversarial_scale},
                     {"seed", c.seed},
                     {"eval_every", c.eval_every},
                     {"learning_rate", c.learning_rate},
                     {"adversarial_lr_ratio", c.adversarial_lr_ratio},
                     {"use_discriminator", c.use_discriminator},
                     {"debug_freeze_checks", c.debug_freeze_checks},
                     {"disc_auc_pairs", c.disc_auc_pairs}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.max_iterations = j.value("max_iterations", d.max_iterations);
  c.patience = j.value("patience", d.patience);
  c.adversarial_scale = j.value("adversarial_scale", d.adversarial_scale);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.adversarial_lr_ratio = j.value("adversarial_lr_ratio", d.adversarial_lr_ratio);
  c.use_discriminator = j.value("use_discriminator", d.use_discriminator);
  c.debug_freeze_checks = j.value("debug_freeze_checks", d.debug_freeze_checks);
  c.disc_auc_pairs = j.value("disc_auc_pairs", d.disc_auc_pairs);
}

void write_trace_csv(const std::vector<IterationTrace>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "iteration,j_c,j_d,j_a,val_auc,disc_auc\n";
  for (const auto& t : trace)
    out << t.iteration << ',' << t.j_c << ',' << t.j_d << ',' << t.j_a << ',' << t.val_auc << ','
        << t.disc_auc << '\n';
}

Batch sample_batch(const std::vector<TrialId>& train, Rng& rng) {
  std::map<int, std::vector<TrialId>> groups;
  for (const auto& id : train) groups[id.subject].push_back(id);
  std::vector<int> subjects, pair_subjects;
  for (const auto& [m, ids] : groups) {
    subjects.push_back(m);
    if (ids.size() >= 2) pair_subjects.push_back(m);
  }
  if (subjects.size() < 2)
    throw std::invalid_argument("sample_batch: train split has " +
                                std::to_string(subjects.size()) +
                                " subject(s); the different-subject pair needs >= 2");
  if (pair_subjects.empty())
    throw std::invalid_argument(
        "sample_batch: no subject with >= 2 trials in the train split; the same-subject pair "
        "needs one");

  Batch b;
  const std::size_t i1 = rng.uniform_index(subjects.size());
  const auto& t1 = groups[subjects[i1]];
  b.diff_a = t1[rng.uniform_index(t1.size())];
  std::size_t i2 = rng.uniform_index(subjects.size() - 1);
  if (i2 >= i1) ++i2;
  const auto& t2 = groups[subjects[i2]];
  b.diff_b = t2[rng.uniform_index(t2.size())];

  const int m3 = pair_subjects[rng.uniform_index(pair_subjects.size())];
  const auto& t3 = groups[m3];
  const std::size_t n3 = rng.uniform_index(t3.size());
  std::size_t n4 = rng.uniform_index(t3.size() - 1);
  if (n4 >= n3) ++n4;
  b.same_a = t3[n3];
  b.same_b = t3[n4];
  return b;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

std::vector<ag::Tensor<float>> concat_params(std::vector<ag::Tensor<float>> a,
                                             const std::vector<ag::Tensor<float>>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<float> labels_as_float(const PressureSequence& seq) {
  std::vector<float> out(seq.second_labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(seq.second_labels[i]);
  return out;
}

void check_finite(double v, std::size_t iteration, const char* phase) {
  if (!std::isfinite(v))
    throw std::runtime_error("training: non-finite loss in " + std::string(phase) +
                             " at iteration " + std::to_string(iteration) +
                             " (value = " + std::to_string(v) + ")");
}

}  // namespace

Trainer::Trainer(const Cohort& cohort, const SplitPlan& split, const AstnConfig& astn_config,
                 const TrainConfig& train_config)
    : cohort_(cohort),
      split_(split),
      astn_cfg_(astn_config),
      cfg_(train_config),
      model_(astn_config, train_config.seed, train_config.use_discriminator),
      adam_gc_(concat_params(model_.partition(ParamPartition::generator),
                             model_.partition(ParamPartition::classifier)),
               static_cast<float>(train_config.learning_rate)),
      adam_d_(model_.partition(ParamPartition::discriminator),
              static_cast<float>(train_config.learning_rate)),
      // Adam's update magnitude is invariant to a plain scaling of the loss,
      // so the adversarial scale is applied to the phase-3 step size as well;
      // lambda = 1 leaves the paper's default, lambda = 0 disables the phase.
      adam_ga_(model_.partition(ParamPartition::generator),
               static_cast<float>(train_config.learning_rate * train_config.adversarial_scale *
                                  train_config.adversarial_lr_ratio)),
      rng_(Rng::derive(train_config.seed, 0x7EA1Bu)) {
  cfg_.validate();
  if (split_.val.empty()) throw ConfigError("train: split has no validation subset");
}

void Trainer::audit_frozen(const std::vector<std::vector<float>>& before, ParamPartition part,
                           const char* phase) const {
  const auto after = model_.snapshot(part);
  for (std::size_t i = 0; i < before.size(); ++i)
    if (std::memcmp(before[i].data(), after[i].data(), before[i].size() * sizeof(float)) != 0)
      throw std::logic_error("freeze audit: partition changed during " + std::string(phase) +
                             " at iteration " + std::to_string(iteration_));
}

IterationTrace Trainer::iterate() {
  ++iteration_;
  const Batch batch = sample_batch(split_.train, rng_);
  const PressureSequence* seqs[4] = {&cohort_.find(batch.diff_a), &cohort_.find(batch.diff_b),
                                     &cohort_.find(batch.same_a), &cohort_.find(batch.same_b)};
  const float lambda = static_cast<float>(cfg_.adversarial_scale);
  const float clamp = static_cast<float>(astn_cfg_.bce_clamp);
  IterationTrace entry;
  entry.iteration = iteration_;

  // phase 1: minimize J_C over the four sequences, update G and C
  {
    model_.zero_partition_grads(ParamPartition::generator);
    model_.zero_partition_grads(ParamPartition::classifier);
    ag::Tape<float> tape;
    std::vector<ag::Tensor<float>> preds;
    std::vector<std::vector<float>> labels;
    for (const auto* s : seqs) {
      auto reps = model_.represent(tape, *s);
      preds.push_back(model_.classify(tape, reps.dynamic));
      labels.push_back(labels_as_float(*s));
    }
    auto jc = loss_jc(tape, preds, labels, clamp);
    entry.j_c = jc.item();
    check_finite(entry.j_c, iteration_, "phase 1 (J_C)");
    tape.backward(jc);
    adam_gc_.step();
    model_.zero_partition_grads(ParamPartition::generator);
    model_.zero_partition_grads(ParamPartition::classifier);
  }

  entry.j_d = std::numeric_limits<double>::quiet_NaN();
  entry.j_a = std::numeric_limits<double>::quiet_NaN();

  if (cfg_.use_discriminator) {
    // phase 2: recompute representations with the updated G, minimize J_D
    // updating D only; G and C are frozen
    std::vector<std::vector<float>> snap_g, snap_c;
    if (cfg_.debug_freeze_checks) {
      snap_g = model_.snapshot(ParamPartition::generator);
      snap_c = model_.snapshot(ParamPartition::classifier);
    }
    {
      model_.set_partition_requires_grad(ParamPartition::generator, false);
      model_.set_partition_requires_grad(ParamPartition::classifier, false);
      model_.zero_partition_grads(ParamPartition::discriminator);
      ag::Tape<float> tape;
      auto r1 = model_.represent(tape, *seqs[0]);
      auto r2 = model_.represent(tape, *seqs[1]);
      auto r3 = model_.represent(tape, *seqs[2]);
      auto r4 = model_.represent(tape, *seqs[3]);
      auto d_diff = model_.discriminate(tape, model_.discriminator_features(tape, r1, r2));
      auto d_same = model_.discriminate(tape, model_.discriminator_features(tape, r3, r4));
      auto jd = loss_jd(tape, d_same, d_diff, astn_cfg_.flip_discriminator_coding, clamp);
      entry.j_d = jd.item();
      check_finite(entry.j_d, iteration_, "phase 2 (J_D)");
      tape.backward(jd);
      adam_d_.step();
      model_.zero_partition_grads(ParamPartition::discriminator);
      model_.set_partition_requires_grad(ParamPartition::generator, true);
      model_.set_partition_requires_grad(ParamPartition::classifier, true);
    }
    if (cfg_.debug_freeze_checks) {
      audit_frozen(snap_g, ParamPartition::generator, "phase 2");
      audit_frozen(snap_c, ParamPartition::classifier, "phase 2");
    }

    // phase 3: the adversarial confusion objective on the same-subject pair,
    // updating G only; D is frozen. lambda == 0 is an exact no-op on G.
    if (lambda > 0.0f) {
      std::vector<std::vector<float>> snap_d;
      if (cfg_.debug_freeze_checks) snap_d = model_.snapshot(ParamPartition::discriminator);
      {
        model_.set_partition_requires_grad(ParamPartition::discriminator, false);
        model_.zero_partition_grads(ParamPartition::generator);
        ag::Tape<float> tape;
        auto r3 = model_.represent(tape, *seqs[2]);
        auto r4 = model_.represent(tape, *seqs[3]);
        auto d_same = model_.discriminate(tape, model_.discriminator_features(tape, r3, r4));
        auto ja = loss_ja(tape, d_same, lambda, astn_cfg_.flip_discriminator_coding, clamp);
        entry.j_a = ja.item();
        check_finite(entry.j_a, iteration_, "phase 3 (J_A)");
        tape.backward(ja);
        adam_ga_.step();
        model_.zero_partition_grads(ParamPartition::generator);
        model_.set_partition_requires_grad(ParamPartition::discriminator, true);
      }
      if (cfg_.debug_freeze_checks)
        audit_frozen(snap_d, ParamPartition::discriminator, "phase 3");
    } else {
      entry.j_a = 0.0;
    }
  }

  entry.val_auc = last_val_auc_;
  entry.disc_auc = last_disc_auc_;
  trace_.push_back(entry);
  return entry;
}

void Trainer::evaluate_validation(IterationTrace& entry) {
  try {
    last_val_auc_ = evaluate_model(model_, cohort_, split_.val).report.auc;
  } catch (const std::invalid_argument&) {
    last_val_auc_ = std::numeric_limits<double>::quiet_NaN();  // e.g. single-class validation
  }
  if (cfg_.use_discriminator) {
    Rng eval_rng(Rng::derive(cfg_.seed, 0xD15Cu, iteration_));
    try {
      last_disc_auc_ =
          discriminator_auc(model_, cohort_, split_.val, cfg_.disc_auc_pairs, eval_rng);
    } catch (const std::invalid_argument&) {
      last_disc_auc_ = std::numeric_limits<double>::quiet_NaN();
    }
  }
  entry.val_auc = last_val_auc_;
  entry.disc_auc = last_disc_auc_;
  if (!trace_.empty()) {
    trace_.back().val_auc = last_val_auc_;
    trace_.back().disc_auc = last_disc_auc_;
  }

  const bool improved =
      std::isfinite(last_val_auc_) &&
      (!std::isfinite(best_val_auc_) || last_val_auc_ > best_val_auc_);
  if (improved || best_params_.empty()) {
    if (improved) {
      best_val_auc_ = last_val_auc_;
      best_iteration_ = iteration_;
      evals_since_best_ = 0;
    }
    best_params_.clear();
    for (const auto& p : model_.named_params())
      best_params_.emplace_back(p.name,
                                ag::Tensor<float>::from(p.tensor.shape(), p.tensor.value()));
  }
  if (!improved) ++evals_since_best_;
}

TrainResult Trainer::run() {
  while (iteration_ < cfg_.max_iterations) {
    IterationTrace entry = iterate();
    if (iteration_ % cfg_.eval_every == 0) {
      evaluate_validation(entry);
      if (hook_) hook_(*this);
      if (std::isfinite(best_val_auc_) && evals_since_best_ >= cfg_.patience) break;
    }
  }
  if (best_params_.empty())
    for (const auto& p : model_.named_params())
      best_params_.emplace_back(p.name,
                                ag::Tensor<float>::from(p.tensor.shape(), p.tensor.value()));
  if (hook_) hook_(*this);

  TrainResult result{AstnModel<float>(astn_cfg_, cfg_.seed, cfg_.use_discriminator), trace_,
                     iteration_, best_iteration_, best_val_auc_};
  std::map<std::string, ag::Tensor<float>> best;
  for (const auto& [name, t] : best_params_) best.emplace(name, t);
  result.model.load_values(best);
  return result;
}

// ---------------------------------------------------------------------------
// resumable state
// ---------------------------------------------------------------------------

void Trainer::save_state(const std::string& path) const {
  std::vector<std::pair<std::string, ag::Tensor<float>>> tensors;
  for (const auto& p : model_.named_params()) tensors.emplace_back("param." + p.name, p.tensor);
  for (const auto& [name, t] : best_params_) tensors.emplace_back("best." + name, t);

  auto dump_moments = [&tensors](const char* tag, ag::Adam<float>& opt) {
    auto& m = opt.first_moments();
    auto& v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
      tensors.emplace_back(std::string(tag) + ".m" + std::to_string(i),
                           ag::Tensor<float>::from({m[i].size()}, m[i]));
      tensors.emplace_back(std::string(tag) + ".v" + std::to_string(i),
                           ag::Tensor<float>::from({v[i].size()}, v[i]));
    }
  };
  auto& self = const_cast<Trainer&>(*this);
  dump_moments("opt_gc", self.adam_gc_);
  dump_moments("opt_d", self.adam_d_);
  dump_moments("opt_ga", self.adam_ga_);

  nlohmann::json extra;
  extra["iteration"] = iteration_;
  extra["rng"] = rng_.save_state();
  extra["last_val_auc"] = last_val_auc_;
  extra["last_disc_auc"] = last_disc_auc_;
  extra["best_val_auc"] = best_val_auc_;
  extra["best_iteration"] = best_iteration_;
  extra["evals_since_best"] = evals_since_best_;
  extra["steps"] = {adam_gc_.step_count(), adam_d_.step_count(), adam_ga_.step_count()};
  nlohmann::json jtrace = nlohmann::json::array();
  for (const auto& t : trace_)
    jtrace.push_back({t.iteration, t.j_c, t.j_d, t.j_a, t.val_auc, t.disc_auc});
  extra["trace"] = jtrace;
  nlohmann::json jc;
  to_json(jc, astn_cfg_);
  extra["astn_config"] = jc;

  const std::string tmp = path + ".tmp";
  ag::save_checkpoint<float>(tmp, tensors, extra);
  std::filesystem::rename(tmp, path);
}

bool Trainer::load_state(const std::string& path) {
  if (!std::filesystem::exists(path)) return false;
  auto loaded = ag::load_checkpoint<float>(path);
  const auto& extra = loaded.extra;

  std::map<std::string, ag::Tensor<float>> params, best;
  for (const auto& [name, t] : loaded.tensors) {
    if (name.rfind("param.", 0) == 0) params.emplace(name.substr(6), t);
    if (name.rfind("best.", 0) == 0) best.emplace(name.substr(5), t);
  }
  model_.load_values(params);
  best_params_.clear();
  for (const auto& [name, t] : best) best_params_.emplace_back(name, t);

  auto load_moments = [&loaded](const char* tag, ag::Adam<float>& opt) {
    auto& m = opt.first_moments();
    auto& v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = loaded.tensors.at(std::string(tag) + ".m" + std::to_string(i)).value();
      v[i] = loaded.tensors.at(std::string(tag) + ".v" + std::to_string(i)).value();
    }
  };
  load_moments("opt_gc", adam_gc_);
  load_moments("opt_d", adam_d_);
  load_moments("opt_ga", adam_ga_);
  const auto steps = extra.at("steps").get<std::vector<std::uint64_t>>();
  adam_gc_.set_step_count(steps.at(0));
  adam_d_.set_step_count(steps.at(1));
  adam_ga_.set_step_count(steps.at(2));

  iteration_ = extra.at("iteration").get<std::size_t>();
  rng_.load_state(extra.at("rng").get<std::string>());
  // NaN round-trips through JSON as null
  auto read_num = [&extra](const char* key) {
    return extra.contains(key) && extra.at(key).is_number()
               ? extra.at(key).get<double>()
               : std::numeric_limits<double>::quiet_NaN();
  };
  last_val_auc_ = read_num("last_val_auc");
  last_disc_auc_ = read_num("last_disc_auc");
  best_val_auc_ = read_num("best_val_auc");
  best_iteration_ = extra.value("best_iteration", std::size_t(0));
  evals_since_best_ = extra.value("evals_since_best", std::size_t(0));
  trace_.clear();
  for (const auto& row : extra.at("trace")) {
    IterationTrace t;
    t.iteration = row.at(0).get<std::size_t>();
    t.j_c = row.at(1).is_number() ? row.at(1).get<double>() : std::nan("");
    t.j_d = row.at(2).is_number() ? row.at(2).get<double>() : std::nan("");
    t.j_a = row.at(3).is_number() ? row.at(3).get<double>() : std::nan("");
    t.val_auc = row.at(4).is_number() ? row.at(4).get<double>() : std::nan("");
    t.disc_auc = row.at(5).is_number() ? row.at(5).get<double>() : std::nan("");
    trace_.push_back(t);
  }
  return true;
}

TrainResult train(const Cohort& cohort, const SplitPlan& split, const AstnConfig& astn_config,
                  const TrainConfig& train_config, const std::string& state_path) {
  Trainer trainer(cohort, split, astn_config, train_config);
  if (!state_path.empty()) {
    trainer.load_state(state_path);
    trainer.set_checkpoint_hook([state_path](const Trainer& t) { t.save_state(state_path); });
  }
  return trainer.run();
}

}  // namespace astn
