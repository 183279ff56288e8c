#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "astn/data.hpp"
#include "astn/model.hpp"
#include "astn/rng.hpp"

namespace astn {

struct RocPoint {
  double threshold;  // classify positive when score >= threshold
  double fpr;
  double tpr;
  std::size_t tp;
  std::size_t fp;
};

struct RocCurve {
  std::vector<RocPoint> points;  // descending thresholds, (0,0) .. (1,1)
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double auc = 0.0;
};

struct MetricReport {
  double auc = 0.0;
  double youden_j = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double lr_positive = 0.0;  // +inf when specificity == 1
  double lr_negative = 0.0;
  double accuracy = 0.0;
  double threshold = 0.0;

  // Fills the derived fields from sensitivity/specificity via the standard
  // identities; auc/accuracy/threshold stay as given.
  static MetricReport from_rates(double sensitivity, double specificity, double auc = 0.0,
                                 double accuracy = 0.0, double threshold = 0.0);

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

// Trapezoidal ROC/AUC over distinct score thresholds; equal scores collapse
// into one step. Throws when only one label class is present.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// argmax of J = sensitivity + specificity - 1; ties prefer higher sensitivity,
// then lower threshold. Returns all Table-style metrics at that threshold.
MetricReport youden_threshold(const RocCurve& roc);

// Per-second classifier scores for one trial (no gradients recorded).
std::vector<double> predict_scores(const AstnModel<float>& model, const PressureSequence& seq);

struct EvalResult {
  MetricReport report;
  RocCurve roc;
};

// Pools (score, label) seconds across the given trials (micro-averaging).
// When macro_average is set, AUC is instead the mean of per-trial AUCs over
// trials where both classes occur; threshold metrics stay pooled.
EvalResult evaluate_model(const AstnModel<float>& model, const Cohort& cohort,
                          const std::vector<TrialId>& trials, bool macro_average = false);

// AUC of the subject discriminator over sampled trial pairs, scored with
// "different subject" as the positive class. pair_budget pairs are drawn,
// balanced between same- and different-subject pairs.
double discriminator_auc(const AstnModel<float>& model, const Cohort& cohort,
                         const std::vector<TrialId>& trials, std::size_t pair_budget, Rng& rng);

// Per-second representation vectors pooled across trials, one list per level,
// with ground-truth labels and classifier scores aligned by row.
struct LevelVectors {
  std::vector<std::vector<double>> spatial;
  std::vector<std::vector<double>> intrinsic;
  std::vector<std::vector<double>> dynamic;
  std::vector<std::uint8_t> true_labels;
  std::vector<double> scores;
};

LevelVectors collect_representation_vectors(const AstnModel<float>& model, const Cohort& cohort,
                                            const std::vector<TrialId>& trials);

struct PcaResult {
  std::vector<std::vector<double>> projections;  // n x k
  std::vector<double> explained_ratio;           // k entries
};

// Mean-centered PCA via a cyclic Jacobi eigensolver on the covariance matrix.
// Deterministic sign convention: the first nonzero loading of each component
// is positive. Zero-variance input yields zero projections and zero ratios.
PcaResult pca_project(const std::vector<std::vector<double>>& points, std::size_t k = 2);

// CSV writers for downstream plotting.
void write_roc_csv(const RocCurve& roc, const std::string& path);
void write_pca_csv(const PcaResult& pca, const std::vector<std::uint8_t>& true_labels,
                   const std::vector<std::uint8_t>& pred_labels, const std::string& path);

}  // namespace astn
