#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "astn/adam.hpp"
#include "astn/evaluation.hpp"
#include "astn/gradsuite.hpp"
#include "astn/rng.hpp"
#include "oracles.hpp"

using namespace astn;

TEST_CASE("roc_auc: perfect separation, chance, degenerate input") {
  CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}).auc == doctest::Approx(1.0));

  Rng rng(7);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 4000; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
  }
  CHECK(std::abs(roc_auc(scores, labels).auc - 0.5) < 0.05);

  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(roc_auc({}, {}), std::invalid_argument);
}

TEST_CASE("roc_auc equals the pairwise concordance oracle, ties included") {
  Rng rng(11);
  for (int inst = 0; inst < 30; ++inst) {
    const std::size_t n = 5 + rng.uniform_index(60);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    const bool tie_heavy = inst % 2 == 0;
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = tie_heavy ? std::floor(rng.uniform() * 4.0) / 4.0 : rng.uniform();
      labels[i] = rng.uniform() < 0.4 ? 1 : 0;
      (labels[i] ? pos : neg) = true;
    }
    if (!pos) labels[0] = 1;
    if (!neg) labels[n - 1] = 0;
    const double trap = roc_auc(scores, labels).auc;
    const double conc = oracle::pairwise_auc(scores, labels);
    CHECK(std::abs(trap - conc) < 1e-9);
  }
}

TEST_CASE("roc curve endpoints and monotonicity") {
  Rng rng(13);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(std::floor(rng.uniform() * 8.0) / 8.0);
    labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  const RocCurve c = roc_auc(scores, labels);
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == doctest::Approx(1.0));
  CHECK(c.points.back().tpr == doctest::Approx(1.0));
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
    CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    CHECK(c.points[i].threshold < c.points[i - 1].threshold);
  }
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
  Rng rng(17);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 300; ++i) {
    scores.push_back(rng.uniform(-2.0, 2.0));
    labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  const double base = roc_auc(scores, labels).auc;
  auto transformed = scores;
  for (auto& s : transformed) s = std::exp(0.7 * s) + 3.0;
  CHECK(roc_auc(transformed, labels).auc == doctest::Approx(base).epsilon(1e-12));
  for (auto& s : transformed) s = std::atan(s) * 5.0 + 1.0;
  CHECK(roc_auc(transformed, labels).auc == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("metric identities reproduce the published bi-directional row") {
  const MetricReport r = MetricReport::from_rates(0.834, 0.729);
  CHECK(std::abs(r.youden_j - 0.56) < 0.005);
  CHECK(std::abs(r.lr_positive - 3.08) < 0.005);
  CHECK(std::abs(r.lr_negative - 0.23) < 0.005);
  CHECK(r.fpr == doctest::Approx(0.271));
  CHECK(r.fnr == doctest::Approx(0.166));
}

TEST_CASE("metric report internal identities hold tightly") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (int k = 0; k < 80; ++k) {
      scores.push_back(rng.uniform());
      labels.push_back(rng.uniform() < 0.35 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    const MetricReport r = youden_threshold(roc_auc(scores, labels));
    CHECK(std::abs(r.fpr - (1.0 - r.specificity)) < 1e-12);
    CHECK(std::abs(r.fnr - (1.0 - r.sensitivity)) < 1e-12);
    CHECK(std::abs(r.youden_j - (r.sensitivity + r.specificity - 1.0)) < 1e-12);
    if (r.specificity < 1.0)
      CHECK(std::abs(r.lr_positive - r.sensitivity / (1.0 - r.specificity)) < 1e-12);
    if (r.specificity > 0.0)
      CHECK(std::abs(r.lr_negative - (1.0 - r.sensitivity) / r.specificity) < 1e-12);
  }
}

TEST_CASE("youden threshold: perfect and constant classifiers") {
  const MetricReport perfect = youden_threshold(roc_auc({0.9, 0.8, 0.1}, {1, 1, 0}));
  CHECK(perfect.youden_j == doctest::Approx(1.0));
  CHECK(perfect.sensitivity == doctest::Approx(1.0));
  CHECK(perfect.specificity == doctest::Approx(1.0));

  const MetricReport flat = youden_threshold(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}));
  CHECK(flat.youden_j == doctest::Approx(0.0));
  CHECK(flat.auc == doctest::Approx(0.5));
  // tie on J resolves toward higher sensitivity
  CHECK(flat.sensitivity == doctest::Approx(1.0));
}

TEST_CASE("pca: line, rotation, isotropy, zero variance") {
  // points on a line in 3-D: first component captures everything
  {
    std::vector<std::vector<double>> pts;
    Rng rng(29);
    for (int i = 0; i < 50; ++i) {
      const double t = rng.uniform(-2.0, 2.0);
      pts.push_back({1.0 + 2.0 * t, -0.5 * t, 0.25 * t});
    }
    const auto r = pca_project(pts, 2);
    CHECK(r.explained_ratio[0] >= 0.999);
  }
  // 2-D data: projection preserves pairwise distances (rotation/reflection)
  {
    std::vector<std::vector<double>> pts;
    Rng rng(31);
    for (int i = 0; i < 40; ++i) pts.push_back({rng.normal(1.0, 2.0), rng.normal(-3.0, 0.7)});
    const auto r = pca_project(pts, 2);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const double d0 = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
        const double d1 = std::hypot(r.projections[i][0] - r.projections[j][0],
                                     r.projections[i][1] - r.projections[j][1]);
        CHECK(std::abs(d0 - d1) < 1e-9);
      }
  }
  // isotropic gaussian: each of the top-2 components explains about 1/5
  {
    std::vector<std::vector<double>> pts;
    Rng rng(37);
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> p(5);
      for (auto& v : p) v = rng.normal();
      pts.push_back(std::move(p));
    }
    const auto r = pca_project(pts, 2);
    CHECK(std::abs(r.explained_ratio[0] - 0.2) < 0.05);
    CHECK(std::abs(r.explained_ratio[1] - 0.2) < 0.05);
  }
  // zero variance: defined zero output
  {
    std::vector<std::vector<double>> pts(5, std::vector<double>{1.0, 2.0, 3.0});
    const auto r = pca_project(pts, 2);
    for (const auto& p : r.projections)
      for (double v : p) CHECK(v == 0.0);
    CHECK(r.explained_ratio[0] == 0.0);
  }
  CHECK_THROWS_AS(pca_project({{1.0}}, 2), std::invalid_argument);
}

TEST_CASE("evaluate_model: zero-weight model scores 0.5 everywhere, deterministically") {
  const AstnConfig cfg = toy_astn_config();
  AstnModel<float> model(cfg, 3);
  for (const auto& p : model.named_params()) {
    auto t = p.tensor;
    std::fill(t.value().begin(), t.value().end(), 0.0f);
  }
  const Cohort cohort = toy_cohort(51);
  const auto ids = cohort.all_trials();
  const EvalResult a = evaluate_model(model, cohort, ids);
  CHECK(a.report.auc == doctest::Approx(0.5));
  const EvalResult b = evaluate_model(model, cohort, ids);
  CHECK(a.report.auc == b.report.auc);
  CHECK(a.report.threshold == b.report.threshold);
  CHECK(a.report.accuracy == b.report.accuracy);
  CHECK_THROWS_AS(evaluate_model(model, cohort, {}), std::invalid_argument);
}

TEST_CASE("discriminator_auc: random weights sit near chance; deterministic") {
  const AstnConfig cfg = toy_astn_config();
  AstnModel<float> model(cfg, 5);
  Cohort cohort;
  {
    // enough trials for varied pairs
    Cohort base = toy_cohort(61, 3, 3, 3);
    cohort = base;
    Cohort more = toy_cohort(62, 3, 3, 3);
    for (auto& s : more.sequences) {
      s.subject_id += 2;
      cohort.sequences.push_back(s);
    }
  }
  const auto ids = cohort.all_trials();
  Rng r1(101), r2(101);
  const double a1 = discriminator_auc(model, cohort, ids, 400, r1);
  const double a2 = discriminator_auc(model, cohort, ids, 400, r2);
  CHECK(a1 == a2);
  CHECK(std::abs(a1 - 0.5) < 0.15);

  AstnModel<float> no_disc(cfg, 5, false);
  CHECK_THROWS_AS(discriminator_auc(no_disc, cohort, ids, 10, r1), std::logic_error);
  // single subject: pair construction impossible
  Cohort single = toy_cohort(63);
  single.sequences.pop_back();  // drop subject 1
  CHECK_THROWS_AS(discriminator_auc(model, single, single.all_trials(), 10, r1),
                  std::invalid_argument);
}

TEST_CASE("trained discriminator separates subject-coded representations") {
  // Representations that carry the subject id explicitly: a probe cohort with
  // an extreme per-subject style difference, G left at its random init, D
  // trained alone on second-order features.
  AstnConfig cfg = toy_astn_config();
  AstnModel<float> model(cfg, 7);

  Cohort cohort;
  Rng rng(71);
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 3; ++n) {
      PressureSequence s;
      s.subject_id = m;
      s.trial_id = n;
      s.width = cfg.input_width;
      s.height = cfg.input_height;
      s.sample_rate = cfg.frames_per_second;
      const std::size_t seconds = 3;
      s.frames.resize(seconds * cfg.frames_per_second * s.width * s.height);
      for (std::size_t i = 0; i < s.frames.size(); ++i) {
        // subject-coded mean level plus noise
        const double base = 0.15 + 0.3 * m;
        s.frames[i] = static_cast<float>(std::clamp(base + 0.05 * rng.uniform(), 0.0, 1.0));
      }
      s.frame_labels.assign(seconds * cfg.frames_per_second, 0);
      s.frame_labels[0] = 1;
      s.second_labels = label_windows(s.frame_labels, cfg.frames_per_second);
      cohort.sequences.push_back(std::move(s));
    }

  // cache representations (G fixed), then fit D with Adam on pair features
  ag::Tape<float> fwd(false);
  std::map<TrialId, Representations<float>> reps;
  for (const auto& s : cohort.sequences) reps.emplace(s.id(), model.represent(fwd, s));

  model.set_partition_requires_grad(ParamPartition::generator, false);
  model.set_partition_requires_grad(ParamPartition::classifier, false);
  ag::Adam<float> opt(model.partition(ParamPartition::discriminator), 0.01f);
  Rng draw(73);
  const auto ids = cohort.all_trials();
  for (int it = 0; it < 400; ++it) {
    TrialId a = ids[draw.uniform_index(ids.size())];
    TrialId b = ids[draw.uniform_index(ids.size())];
    if (a == b) continue;
    ag::Tape<float> tp;
    auto d = model.discriminate(tp, model.discriminator_features(tp, reps.at(a), reps.at(b)));
    const float target = a.subject == b.subject ? 0.0f : 1.0f;
    auto loss = ag::mean_all(tp, ag::bce(tp, d, std::vector<float>{target}));
    tp.backward(loss);
    opt.step();
    model.zero_partition_grads(ParamPartition::discriminator);
  }
  model.set_partition_requires_grad(ParamPartition::generator, true);
  model.set_partition_requires_grad(ParamPartition::classifier, true);

  Rng eval_rng(79);
  const double auc = discriminator_auc(model, cohort, ids, 300, eval_rng);
  CHECK(auc > 0.9);
}
