// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria can be selected by number on the command line, e.g.
// `astn_acceptance 1 2 3`; the default runs everything. The synthetic
// experiments (6-8) honor ASTNLAB_THREADS.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "astn/experiment.hpp"
#include "astn/gradsuite.hpp"
#include "astn/training.hpp"
#include "oracles.hpp"

using namespace astn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  const char* outcome_str() const { return pass ? "PASS" : "FAIL"; }

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "astn_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// pinned experiment configuration (criteria 6-8)
// ---------------------------------------------------------------------------

SynthConfig experiment_synth() {
  SynthConfig c;
  c.n_subjects = 12;
  c.trials_per_subject = 6;
  c.width = 16;
  c.height = 8;
  c.sample_rate = 10;
  c.min_seconds = 10;
  c.max_seconds = 16;
  c.subject_nuisance_amplitude = 1.2;  // high
  c.fog_episode_rate = 0.228;
  c.fog_signal_strength = 1.2;  // moderate
  c.noise_sigma = 0.03;
  c.seed = 100;
  return c;
}

AstnConfig experiment_astn() {
  AstnConfig c;
  c.input_width = 16;
  c.input_height = 8;
  c.frames_per_second = 10;
  c.spatial_conv = {{6, 3, 1, 1, true}, {12, 3, 1, 1, true}};
  c.spatial_dim = 16;
  c.intrinsic_conv = {{16, 3, 1, 1, true}, {16, 3, 1, 1, false}};
  c.intrinsic_dim = 16;
  c.dynamic_dim = 16;
  c.bidirectional = false;
  c.classifier_hidden = {16};
  return c;
}

TrainConfig experiment_train() {
  TrainConfig c;
  c.max_iterations = 400;
  c.eval_every = 20;
  c.patience = 1000;  // fixed-length runs
  c.learning_rate = 0.001;
  c.disc_auc_pairs = 120;
  return c;
}

const std::vector<std::uint64_t> kExperimentSeeds = {1, 2, 3};

ExperimentConfig experiment_config(SplitMode mode, std::vector<VariantSpec> variants) {
  ExperimentConfig cfg;
  cfg.synth = experiment_synth();
  cfg.astn = experiment_astn();
  cfg.train = experiment_train();
  cfg.split_mode = mode;
  cfg.seeds = kExperimentSeeds;
  cfg.variants = std::move(variants);
  return cfg;
}

double row_mean(const ExperimentSummary& s, const std::string& variant) {
  for (const auto& r : s.rows)
    if (r.variant == variant) return r.mean_auc;
  throw std::logic_error("missing summary row " + variant);
}

// toy fixtures mirroring the small unit-test setup
SynthConfig tiny_synth() {
  SynthConfig c;
  c.n_subjects = 4;
  c.trials_per_subject = 4;
  c.width = 12;
  c.height = 6;
  c.sample_rate = 6;
  c.min_seconds = 6;
  c.max_seconds = 8;
  c.seed = 5;
  return c;
}

AstnConfig tiny_astn() {
  AstnConfig c;
  c.input_width = 12;
  c.input_height = 6;
  c.frames_per_second = 6;
  c.spatial_conv = {{4, 3, 1, 1, true}};
  c.spatial_dim = 8;
  c.intrinsic_conv = {{8, 3, 1, 1, false}};
  c.intrinsic_dim = 8;
  c.dynamic_dim = 8;
  c.bidirectional = false;
  c.classifier_hidden = {8};
  return c;
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

Outcome criterion_1_metric_formulas() {
  Outcome o;
  const MetricReport r = MetricReport::from_rates(0.834, 0.729);
  o.require(std::abs(r.youden_j - 0.56) <= 0.005, "J = " + fmt(r.youden_j) + " not 0.56 +- 0.005");
  o.require(std::abs(r.lr_positive - 3.08) <= 0.005,
            "LR+ = " + fmt(r.lr_positive) + " not 3.08 +- 0.005");
  o.require(std::abs(r.lr_negative - 0.23) <= 0.005,
            "LR- = " + fmt(r.lr_negative) + " not 0.23 +- 0.005");
  if (o.pass)
    o.note("J=" + fmt(r.youden_j, 3) + " LR+=" + fmt(r.lr_positive, 3) +
           " LR-=" + fmt(r.lr_negative, 3));
  return o;
}

Outcome criterion_2_gradient_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_gradient_suite();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  for (const auto& c : checks) {
    o.require(c.pass, c.name + " err " + fmt(c.max_error, 9));
    worst = std::max(worst, c.max_error);
  }
  o.require(secs < 60.0, "suite took " + fmt(secs, 1) + " s (limit 60)");
  o.note(std::to_string(checks.size()) + " checks, worst err " + fmt(worst, 9) + ", " +
         fmt(secs, 1) + " s");
  return o;
}

Outcome criterion_3_auc_oracle() {
  Outcome o;
  Rng rng(33);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 5 + rng.uniform_index(196);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    const int mode = inst % 3;  // continuous, coarse ties, heavy ties
    for (std::size_t i = 0; i < n; ++i) {
      if (mode == 0)
        scores[i] = rng.uniform();
      else if (mode == 1)
        scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;
      else
        scores[i] = std::floor(rng.uniform() * 3.0) / 3.0;
      labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    labels[0] = 1;
    labels[n - 1] = 0;
    const double trap = roc_auc(scores, labels).auc;
    const double conc = oracle::pairwise_auc(scores, labels);
    worst = std::max(worst, std::abs(trap - conc));
  }
  o.require(worst < 1e-9, "max |trapezoid - concordance| = " + fmt(worst, 12));
  o.note("100 instances, max diff " + fmt(worst, 12));
  return o;
}

Outcome criterion_4_gru() {
  Outcome o;
  // scalar-loop oracle
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t h1 = 5, h2 = 4;
    auto rand_vec = [&rng](std::size_t n) {
      std::vector<double> v(n);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
      return v;
    };
    const auto x = rand_vec(h1), h = rand_vec(h2);
    const auto w_xz = rand_vec(h1 * h2), w_hz = rand_vec(h2 * h2), b_z = rand_vec(h2);
    const auto w_xr = rand_vec(h1 * h2), w_hr = rand_vec(h2 * h2), b_r = rand_vec(h2);
    const auto w_xh = rand_vec(h1 * h2), w_hh = rand_vec(h2 * h2), b_h = rand_vec(h2);
    ag::Tape<double> tp(false);
    auto out = gru_step<double>(
        tp, ag::Tensor<double>::from({h1}, x), ag::Tensor<double>::from({h2}, h),
        ag::Tensor<double>::from({h1, h2}, w_xz), ag::Tensor<double>::from({h2, h2}, w_hz),
        ag::Tensor<double>::from({h2}, b_z), ag::Tensor<double>::from({h1, h2}, w_xr),
        ag::Tensor<double>::from({h2, h2}, w_hr), ag::Tensor<double>::from({h2}, b_r),
        ag::Tensor<double>::from({h1, h2}, w_xh), ag::Tensor<double>::from({h2, h2}, w_hh),
        ag::Tensor<double>::from({h2}, b_h));
    const auto ref =
        oracle::gru_step(x, h, h1, h2, w_xz, w_hz, b_z, w_xr, w_hr, b_r, w_xh, w_hh, b_h);
    for (std::size_t i = 0; i < h2; ++i)
      worst = std::max(worst, std::abs(out.value()[i] - ref[i]));
  }
  o.require(worst < 1e-6, "scalar-loop oracle max diff " + fmt(worst, 10));

  // zero weights: exactly 0.5 * prev
  {
    const std::size_t h = 4;
    auto zm = ag::Tensor<float>::zeros({h, h});
    auto zv = ag::Tensor<float>::zeros({h});
    auto prev = ag::Tensor<float>::from({h}, {0.8f, -0.4f, 0.2f, 1.0f});
    ag::Tape<float> tp(false);
    auto out = gru_step(tp, ag::Tensor<float>::zeros({h}), prev, zm, zm, zv, zm, zm, zv, zm, zm,
                        zv);
    for (std::size_t i = 0; i < h; ++i)
      o.require(out.value()[i] == 0.5f * prev.value()[i], "zero-weight case not exactly 0.5*prev");
  }

  // forward causality across 20 random trials
  AstnConfig cfg = tiny_astn();
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    AstnModel<float> model(cfg, seed);
    Rng rng(Rng::derive(seed, 0xCA05u));
    const std::size_t seconds = 4 + rng.uniform_index(3);
    PressureSequence seq;
    seq.subject_id = 0;
    seq.trial_id = 0;
    seq.width = cfg.input_width;
    seq.height = cfg.input_height;
    seq.sample_rate = cfg.frames_per_second;
    seq.frames.resize(seconds * cfg.frames_per_second * cfg.input_width * cfg.input_height);
    for (auto& v : seq.frames) v = static_cast<float>(rng.uniform());
    seq.frame_labels.assign(seconds * cfg.frames_per_second, 0);
    seq.second_labels = label_windows(seq.frame_labels, cfg.frames_per_second);

    ag::Tape<float> tp(false);
    auto base = model.classify(tp, model.represent(tp, seq).dynamic);
    const std::size_t t_check = rng.uniform_index(seconds - 1);
    PressureSequence fut = seq;
    const std::size_t wsz = seq.frame_values() * cfg.frames_per_second;
    for (std::size_t i = (t_check + 1) * wsz; i < fut.frames.size(); ++i)
      fut.frames[i] = static_cast<float>(rng.uniform());
    auto pert = model.classify(tp, model.represent(tp, fut).dynamic);
    for (std::size_t t = 0; t <= t_check; ++t) {
      o.require(base.value()[t] == pert.value()[t],
                "future perturbation changed y_hat at t=" + std::to_string(t));
      ++checked;
    }
  }
  o.note("oracle diff " + fmt(worst, 10) + ", causality points " + std::to_string(checked));
  return o;
}

Outcome criterion_5_freeze_contract() {
  Outcome o;
  const Cohort cohort = generate_cohort(tiny_synth());
  const SplitPlan split = make_split(cohort, SplitMode::subject_level, SplitRatios{}, 9);
  TrainConfig tc;
  tc.max_iterations = 100;
  tc.eval_every = 20;
  tc.patience = 1000;
  tc.seed = 9;
  tc.debug_freeze_checks = true;  // byte-audits every iteration, throws on violation
  tc.disc_auc_pairs = 40;

  try {
    Trainer t(cohort, split, tiny_astn(), tc);
    for (int i = 0; i < 100; ++i) t.iterate();
  } catch (const std::exception& e) {
    o.require(false, std::string("freeze audit tripped: ") + e.what());
    return o;
  }

  // lambda = 0 training is byte-identical to a build without the discriminator
  TrainConfig l0 = tc;
  l0.debug_freeze_checks = false;
  l0.adversarial_scale = 0.0;
  Trainer ta(cohort, split, tiny_astn(), l0);
  TrainConfig nd = l0;
  nd.use_discriminator = false;
  Trainer tb(cohort, split, tiny_astn(), nd);
  for (int i = 0; i < 100; ++i) {
    ta.iterate();
    tb.iterate();
  }
  o.require(ta.model().snapshot(ParamPartition::generator) ==
                tb.model().snapshot(ParamPartition::generator),
            "theta_G differs between lambda=0 and discriminator-free builds");
  o.require(ta.model().snapshot(ParamPartition::classifier) ==
                tb.model().snapshot(ParamPartition::classifier),
            "theta_C differs between lambda=0 and discriminator-free builds");
  o.note("100 debug-audited iterations; lambda=0 byte-identity holds");
  return o;
}

struct DirectionalResults {
  ExperimentSummary subject;  // fwd, fwd_disc, bi, bi_disc
  ExperimentSummary trial;    // fwd, bi
  std::string dir;
};

DirectionalResults run_directional_experiment() {
  DirectionalResults res;
  res.dir = (work_dir() / "directional").string();
  const Cohort cohort = generate_cohort(experiment_synth());

  ExperimentConfig subj = experiment_config(
      SplitMode::subject_level,
      {{"fwd", false, false, DiscVariant::second_order, DiscLevels::multi_level, 0.0},
       {"fwd_disc", false, true, DiscVariant::second_order, DiscLevels::multi_level, 1.0},
       {"bi", true, false, DiscVariant::second_order, DiscLevels::multi_level, 0.0},
       {"bi_disc", true, true, DiscVariant::second_order, DiscLevels::multi_level, 1.0}});
  res.subject = run_experiment(cohort, subj, res.dir + "/subject", true);

  ExperimentConfig trial = experiment_config(
      SplitMode::trial_level,
      {{"fwd", false, false, DiscVariant::second_order, DiscLevels::multi_level, 0.0},
       {"bi", true, false, DiscVariant::second_order, DiscLevels::multi_level, 0.0}});
  res.trial = run_experiment(cohort, trial, res.dir + "/trial", true);
  return res;
}

Outcome criterion_6_directional(const DirectionalResults& r) {
  Outcome o;
  const double subj_fwd = row_mean(r.subject, "fwd");
  const double subj_fwd_disc = row_mean(r.subject, "fwd_disc");
  const double subj_bi = row_mean(r.subject, "bi");
  const double subj_bi_disc = row_mean(r.subject, "bi_disc");
  const double trial_fwd = row_mean(r.trial, "fwd");
  const double trial_bi = row_mean(r.trial, "bi");

  o.require(trial_fwd - subj_fwd >= 0.02, "(a) fwd: trial " + fmt(trial_fwd) + " - subject " +
                                              fmt(subj_fwd) + " < 0.02");
  o.require(trial_bi - subj_bi >= 0.02,
            "(a) bi: trial " + fmt(trial_bi) + " - subject " + fmt(subj_bi) + " < 0.02");
  o.require(subj_fwd_disc - subj_fwd >= 0.03, "(b) fwd: disc " + fmt(subj_fwd_disc) +
                                                  " - plain " + fmt(subj_fwd) + " < 0.03");
  o.require(subj_bi_disc - subj_bi >= 0.03,
            "(b) bi: disc " + fmt(subj_bi_disc) + " - plain " + fmt(subj_bi) + " < 0.03");
  o.require(subj_bi >= subj_fwd, "(c) subject: bi " + fmt(subj_bi) + " < fwd " + fmt(subj_fwd));
  o.require(subj_bi_disc >= subj_fwd_disc,
            "(c) subject+disc: bi " + fmt(subj_bi_disc) + " < fwd " + fmt(subj_fwd_disc));
  o.require(trial_bi >= trial_fwd, "(c) trial: bi " + fmt(trial_bi) + " < fwd " + fmt(trial_fwd));
  o.note("subject fwd/fwd+D/bi/bi+D = " + fmt(subj_fwd, 3) + "/" + fmt(subj_fwd_disc, 3) + "/" +
         fmt(subj_bi, 3) + "/" + fmt(subj_bi_disc, 3) + "; trial fwd/bi = " + fmt(trial_fwd, 3) +
         "/" + fmt(trial_bi, 3));
  return o;
}

std::vector<double> disc_auc_evals(const std::string& trace_csv, std::size_t eval_every) {
  std::ifstream in(trace_csv);
  if (!in) throw std::runtime_error("missing trace " + trace_csv);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::size_t iter = std::stoul(cells.at(0));
    if (iter % eval_every != 0) continue;
    const double v = std::strtod(cells.at(5).c_str(), nullptr);
    if (std::isfinite(v)) out.push_back(v);
  }
  return out;
}

Outcome criterion_7_equilibrium(const DirectionalResults& r) {
  Outcome o;
  std::vector<double> initial, final_q;
  for (const auto& cell : r.subject.cells) {
    if (cell.variant != "fwd_disc" && cell.variant != "bi_disc") continue;
    const auto evals = disc_auc_evals(cell.dir + "/trace.csv", experiment_train().eval_every);
    if (evals.size() < 4) {
      o.require(false, "too few discriminator evaluations in " + cell.dir);
      continue;
    }
    const std::size_t q = evals.size() / 4;
    initial.insert(initial.end(), evals.begin(), evals.begin() + q);
    final_q.insert(final_q.end(), evals.end() - q, evals.end());
  }
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const double mi = mean(initial), mf = mean(final_q);
  o.require(mf >= 0.40 && mf <= 0.62,
            "final-quarter discriminator AUC " + fmt(mf) + " outside [0.40, 0.62]");
  o.require(mi > mf, "initial-quarter mean " + fmt(mi) + " <= final-quarter mean " + fmt(mf));
  o.note("disc AUC initial-quarter " + fmt(mi, 3) + " -> final-quarter " + fmt(mf, 3));
  return o;
}

Outcome criterion_8_lambda_sweep(const DirectionalResults& r) {
  Outcome o;
  const Cohort cohort = generate_cohort(experiment_synth());
  ExperimentConfig cfg = experiment_config(
      SplitMode::subject_level,
      {{"lambda_0.25", true, true, DiscVariant::second_order, DiscLevels::multi_level, 0.25},
       {"lambda_4", true, true, DiscVariant::second_order, DiscLevels::multi_level, 4.0}});
  const auto extra =
      run_experiment(cohort, cfg, (work_dir() / "lambda").string(), true);
  // lambda = 0 is the plain bidirectional subject-level model, lambda = 1 the
  // default adversarial one; both already trained in the directional matrix.
  const double l0 = row_mean(r.subject, "bi");
  const double l025 = row_mean(extra, "lambda_0.25");
  const double l1 = row_mean(r.subject, "bi_disc");
  const double l4 = row_mean(extra, "lambda_4");
  o.require(l1 >= l0, "AUC(lambda=1) " + fmt(l1) + " < AUC(lambda=0) " + fmt(l0));
  o.require(l1 >= l4, "AUC(lambda=1) " + fmt(l1) + " < AUC(lambda=4) " + fmt(l4));
  o.note("lambda 0/0.25/1/4 -> " + fmt(l0, 3) + "/" + fmt(l025, 3) + "/" + fmt(l1, 3) + "/" +
         fmt(l4, 3));
  return o;
}

Outcome criterion_9_variants() {
  Outcome o;
  // second-order feature properties on 1e4 random representation pairs
  {
    AstnConfig cfg = tiny_astn();
    cfg.bidirectional = true;
    AstnModel<float> model(cfg, 3);
    Rng rng(17);
    ag::Tape<float> tp(false);
    const std::size_t T = 3;
    auto random_reps = [&]() {
      Representations<float> reps;
      auto fill = [&rng](ag::Tensor<float> t) {
        for (auto& v : t.value()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        return t;
      };
      reps.spatial = fill(ag::Tensor<float>::zeros({T, cfg.spatial_window_dim()}));
      reps.intrinsic = fill(ag::Tensor<float>::zeros({T, cfg.intrinsic_dim}));
      reps.dynamic = fill(ag::Tensor<float>::zeros({T, cfg.dynamic_out_dim()}));
      return reps;
    };
    bool nonneg = true, symmetric = true, zero_on_identical = true;
    for (int k = 0; k < 10000; ++k) {
      auto a = random_reps();
      auto b = random_reps();
      auto fab = model.discriminator_features(tp, a, b);
      auto fba = model.discriminator_features(tp, b, a);
      for (std::size_t i = 0; i < fab.numel(); ++i) {
        nonneg = nonneg && fab.value()[i] >= 0.0f;
        symmetric = symmetric && fab.value()[i] == fba.value()[i];
      }
      if (k % 100 == 0) {
        auto faa = model.discriminator_features(tp, a, a);
        for (float v : faa.value()) zero_on_identical = zero_on_identical && v == 0.0f;
      }
    }
    o.require(nonneg, "second-order features not all nonnegative");
    o.require(symmetric, "second-order features not symmetric under pair swap");
    o.require(zero_on_identical, "second-order features nonzero on identical pairs");
  }

  // every variant x level setting trains to completion and emits a summary row
  const Cohort cohort = generate_cohort(experiment_synth());
  std::vector<VariantSpec> variants;
  for (auto dv : {DiscVariant::second_order, DiscVariant::first_order,
                  DiscVariant::abs_first_order, DiscVariant::concatenated})
    for (auto dl : {DiscLevels::multi_level, DiscLevels::dynamic_only})
      variants.push_back({std::string(to_string(dv)) + "__" + to_string(dl), true, true, dv, dl,
                          1.0});
  ExperimentConfig cfg = experiment_config(SplitMode::subject_level, variants);
  cfg.train.max_iterations = 150;
  cfg.seeds = {1};
  const auto summary = run_experiment(cohort, cfg, (work_dir() / "variants").string(), true);
  o.require(summary.rows.size() == variants.size(), "missing variant summary rows");
  for (const auto& row : summary.rows) {
    o.require(row.n == 1, row.variant + " did not complete");
    o.require(std::isfinite(row.mean_auc) && row.mean_auc > 0.0 && row.mean_auc < 1.0,
              row.variant + " AUC not in (0,1)");
  }
  o.note(std::to_string(variants.size()) + " variant rows trained; feature properties on 1e4 pairs");
  return o;
}

int run_cli(const std::string& bin, const std::string& args) {
  const std::string cmd = bin + " " + args;
  return std::system(cmd.c_str());
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

Outcome criterion_10_data_pipeline() {
  Outcome o;
  // exhaustive P=4 labeling
  for (unsigned pattern = 0; pattern < 16; ++pattern) {
    std::vector<std::uint8_t> frames(4);
    for (unsigned b = 0; b < 4; ++b) frames[b] = (pattern >> b) & 1u;
    const auto out = label_windows(frames, 4);
    o.require(out.size() == 1 && out[0] == (pattern != 0 ? 1 : 0),
              "label_windows wrong on pattern " + std::to_string(pattern));
  }

  // subject disjointness over 200 random cohorts/seeds
  Rng rng(2024);
  for (int it = 0; it < 200; ++it) {
    Cohort c;
    const int subjects = 3 + static_cast<int>(rng.uniform_index(10));
    const int trials = 1 + static_cast<int>(rng.uniform_index(5));
    for (int m = 0; m < subjects; ++m)
      for (int n = 0; n < trials; ++n) {
        PressureSequence s;
        s.subject_id = m;
        s.trial_id = n;
        s.width = s.height = 2;
        s.sample_rate = 1;
        s.frames.assign(4, 0.0f);
        s.second_labels = {0};
        s.frame_labels = {0};
        c.sequences.push_back(std::move(s));
      }
    const auto plan = make_split(c, SplitMode::subject_level, SplitRatios{}, rng.next_u64());
    std::set<int> train_side;
    for (const auto& id : plan.train) train_side.insert(id.subject);
    for (const auto& id : plan.val) train_side.insert(id.subject);
    for (const auto& id : plan.test)
      o.require(!train_side.count(id.subject),
                "subject " + std::to_string(id.subject) + " crosses the split at case " +
                    std::to_string(it));
  }

  // cohort round trip is bit-exact at the file level
  const auto dir = work_dir() / "pipeline";
  fs::create_directories(dir);
  {
    SynthConfig sc = tiny_synth();
    const Cohort cohort = generate_cohort(sc);
    save_cohort(cohort, (dir / "a.fpsq").string());
    const Cohort loaded = load_cohort((dir / "a.fpsq").string());
    save_cohort(loaded, (dir / "b.fpsq").string());
    o.require(file_bytes(dir / "a.fpsq") == file_bytes(dir / "b.fpsq"),
              "cohort file round trip not bit-exact");
  }

  // CLI determinism under fixed seeds: every command twice, identical outputs
  const char* bin_env = std::getenv("ASTNLAB_BIN");
  if (!bin_env) {
    o.require(false, "ASTNLAB_BIN not set; cannot exercise the CLI");
    return o;
  }
  const std::string bin = bin_env;
  const auto cli = dir / "cli";
  fs::remove_all(cli);
  fs::create_directories(cli);
  {
    nlohmann::json cfg;
    ExperimentConfig base;
    base.synth = tiny_synth();
    base.astn = tiny_astn();
    base.train.max_iterations = 20;
    base.train.eval_every = 5;
    base.train.patience = 1000;
    base.train.disc_auc_pairs = 20;
    base.seeds = {1};
    base.variants = {{"bi_disc", true, true, DiscVariant::second_order,
                      DiscLevels::multi_level, 1.0}};
    base.cohort_path = (cli / "c.fpsq").string();
    to_json(cfg, base);
    std::ofstream f(cli / "exp.json");
    f << cfg.dump(2);
  }
  const std::string cfg_path = (cli / "exp.json").string();
  const std::string quiet = " > /dev/null 2>&1";

  o.require(run_cli(bin, "gen-data " + cfg_path + " --out " + (cli / "c.fpsq").string() + quiet) == 0,
            "gen-data failed");
  o.require(run_cli(bin, "gen-data " + cfg_path + " --out " + (cli / "c2.fpsq").string() + quiet) == 0,
            "gen-data rerun failed");
  o.require(file_bytes(cli / "c.fpsq") == file_bytes(cli / "c2.fpsq"),
            "gen-data not deterministic");

  o.require(run_cli(bin, "train " + cfg_path + " --out-dir " + (cli / "t1").string() + quiet) == 0,
            "train failed");
  o.require(run_cli(bin, "train " + cfg_path + " --out-dir " + (cli / "t2").string() + quiet) == 0,
            "train rerun failed");
  o.require(file_bytes(cli / "t1/bi_disc/seed_1/trace.csv") ==
                file_bytes(cli / "t2/bi_disc/seed_1/trace.csv"),
            "train traces differ across identical runs");
  o.require(file_bytes(cli / "t1/summary.json") == file_bytes(cli / "t2/summary.json"),
            "train summaries differ across identical runs");

  const std::string ckpt = (cli / "t1/bi_disc/seed_1/best.ckpt").string();
  const std::string eval_args = "eval --checkpoint " + ckpt + " --cohort " +
                                (cli / "c.fpsq").string() + " --split-mode subject --split-seed 1";
  o.require(run_cli(bin, eval_args + " --pca --out-dir " + (cli / "e1").string() + quiet) == 0,
            "eval failed");
  o.require(run_cli(bin, eval_args + " --pca --out-dir " + (cli / "e2").string() + quiet) == 0,
            "eval rerun failed");
  for (const char* f : {"report.json", "roc.csv", "pca_spatial.csv", "pca_dynamic.csv"})
    o.require(file_bytes(cli / "e1" / f) == file_bytes(cli / "e2" / f),
              std::string("eval output differs: ") + f);

  const std::string sweep_args = "sweep-lambda " + cfg_path + " --lambdas 0,1";
  o.require(run_cli(bin, sweep_args + " --out-dir " + (cli / "s1").string() + quiet) == 0,
            "sweep-lambda failed");
  o.require(run_cli(bin, sweep_args + " --out-dir " + (cli / "s2").string() + quiet) == 0,
            "sweep-lambda rerun failed");
  o.require(file_bytes(cli / "s1/summary.json") == file_bytes(cli / "s2/summary.json"),
            "sweep-lambda summaries differ");

  const std::string proj_args = "project --checkpoint " + ckpt + " --cohort " +
                                (cli / "c.fpsq").string() + " --split-mode subject --split-seed 1";
  o.require(run_cli(bin, proj_args + " --out-dir " + (cli / "pr1").string() + quiet) == 0,
            "project failed");
  o.require(run_cli(bin, proj_args + " --out-dir " + (cli / "pr2").string() + quiet) == 0,
            "project rerun failed");
  o.require(file_bytes(cli / "pr1/pca_intrinsic.csv") == file_bytes(cli / "pr2/pca_intrinsic.csv"),
            "project output differs");

  o.note("16 window patterns, 200 split cases, bit-exact round trip, deterministic CLI");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto selected = [&wanted](int id) { return wanted.empty() || wanted.count(id); };

  struct Row {
    int id;
    std::string name;
    Outcome outcome;
  };
  std::vector<Row> rows;

  auto run = [&rows](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    rows.push_back({id, name, o});
    std::printf("[%s] criterion %2d: %s%s%s\n", o.outcome_str(), id, name.c_str(),
                o.detail.empty() ? "" : " -- ", o.detail.c_str());
    std::fflush(stdout);
  };

  if (selected(1)) run(1, "Table-I metric-formula reproduction", criterion_1_metric_formulas);
  if (selected(2)) run(2, "gradient verification suite", criterion_2_gradient_suite);
  if (selected(3)) run(3, "AUC concordance-oracle equivalence", criterion_3_auc_oracle);
  if (selected(4)) run(4, "GRU oracle, zero-weight and causality", criterion_4_gru);
  if (selected(5)) run(5, "Algorithm-1 freeze contract", criterion_5_freeze_contract);

  const bool need_directional = selected(6) || selected(7) || selected(8);
  DirectionalResults directional;
  if (need_directional) {
    try {
      directional = run_directional_experiment();
    } catch (const std::exception& e) {
      Outcome o;
      o.pass = false;
      o.detail = std::string("experiment failed: ") + e.what();
      if (selected(6)) rows.push_back({6, "directional ordering", o});
      if (selected(7)) rows.push_back({7, "discriminator equilibrium", o});
      if (selected(8)) rows.push_back({8, "lambda sweep", o});
      std::printf("[FAIL] criteria 6-8 -- %s\n", o.detail.c_str());
    }
  }
  if (need_directional && !directional.dir.empty()) {
    if (selected(6))
      run(6, "directional split/discriminator/direction ordering",
          [&] { return criterion_6_directional(directional); });
    if (selected(7))
      run(7, "discriminator equilibrium trace",
          [&] { return criterion_7_equilibrium(directional); });
    if (selected(8))
      run(8, "adversarial-scale sweep shape", [&] { return criterion_8_lambda_sweep(directional); });
  }
  if (selected(9)) run(9, "discriminator-variant harness", criterion_9_variants);
  if (selected(10)) run(10, "data-pipeline properties and CLI determinism",
                        criterion_10_data_pipeline);

  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.outcome.pass ? 0 : 1;
  std::printf("%zu/%zu criteria passed\n", rows.size() - failed, rows.size());
  return failed == 0 ? 0 : 1;
}
