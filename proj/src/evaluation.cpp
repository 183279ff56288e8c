#include "astn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace astn {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json num_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}
}  // namespace

MetricReport MetricReport::from_rates(double sensitivity, double specificity, double auc,
                                      double accuracy, double threshold) {
  MetricReport r;
  r.sensitivity = sensitivity;
  r.specificity = specificity;
  r.youden_j = sensitivity + specificity - 1.0;
  r.fpr = 1.0 - specificity;
  r.fnr = 1.0 - sensitivity;
  r.lr_positive = specificity < 1.0 ? sensitivity / (1.0 - specificity) : kInf;
  r.lr_negative = specificity > 0.0 ? (1.0 - sensitivity) / specificity : kInf;
  r.auc = auc;
  r.accuracy = accuracy;
  r.threshold = threshold;
  return r;
}

nlohmann::json MetricReport::to_json() const {
  return nlohmann::json{{"auc", num_or_null(auc)},
                        {"youden_j", num_or_null(youden_j)},
                        {"sensitivity", num_or_null(sensitivity)},
                        {"specificity", num_or_null(specificity)},
                        {"fpr", num_or_null(fpr)},
                        {"fnr", num_or_null(fnr)},
                        {"lr_positive", num_or_null(lr_positive)},
                        {"lr_negative", num_or_null(lr_negative)},
                        {"accuracy", num_or_null(accuracy)},
                        {"threshold", num_or_null(threshold)}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  auto get = [&](const char* k) {
    return j.contains(k) && j.at(k).is_number() ? j.at(k).get<double>() : kNaN;
  };
  MetricReport r;
  r.auc = get("auc");
  r.youden_j = get("youden_j");
  r.sensitivity = get("sensitivity");
  r.specificity = get("specificity");
  r.fpr = get("fpr");
  r.fnr = get("fnr");
  r.lr_positive = get("lr_positive");
  r.lr_negative = get("lr_negative");
  r.accuracy = get("accuracy");
  r.threshold = get("threshold");
  return r;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc_auc: score/label count mismatch");
  if (scores.empty()) throw std::invalid_argument("roc_auc: empty input");

  RocCurve curve;
  for (auto y : labels) (y ? curve.n_pos : curve.n_neg) += 1;
  if (curve.n_pos == 0 || curve.n_neg == 0)
    throw std::invalid_argument("roc_auc: both classes must be present (" +
                                std::to_string(curve.n_pos) + " positive, " +
                                std::to_string(curve.n_neg) + " negative)");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  curve.points.push_back({kInf, 0.0, 0.0, 0, 0});
  std::size_t tp = 0, fp = 0, i = 0;
  const double np = static_cast<double>(curve.n_pos), nn = static_cast<double>(curve.n_neg);
  while (i < order.size()) {
    const double s = scores[order[i]];
    // consume the whole tie group as one threshold step
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({s, static_cast<double>(fp) / nn, static_cast<double>(tp) / np, tp, fp});
  }

  double auc = 0.0;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

MetricReport youden_threshold(const RocCurve& roc) {
  if (roc.points.empty()) throw std::invalid_argument("youden_threshold: empty curve");
  std::size_t best = 0;
  double best_j = -2.0;
  for (std::size_t k = 0; k < roc.points.size(); ++k) {
    const auto& p = roc.points[k];
    const double j = p.tpr - p.fpr;
    const bool better = j > best_j + 1e-15 ||
                        (std::abs(j - best_j) <= 1e-15 &&
                         (p.tpr > roc.points[best].tpr + 1e-15 ||
                          (std::abs(p.tpr - roc.points[best].tpr) <= 1e-15 &&
                           p.threshold < roc.points[best].threshold)));
    if (better) {
      best = k;
      best_j = j;
    }
  }
  const auto& p = roc.points[best];
  const double sens = p.tpr;
  const double spec = 1.0 - p.fpr;
  const std::size_t tn = roc.n_neg - p.fp;
  const double accuracy =
      static_cast<double>(p.tp + tn) / static_cast<double>(roc.n_pos + roc.n_neg);
  return MetricReport::from_rates(sens, spec, roc.auc, accuracy, p.threshold);
}

std::vector<double> predict_scores(const AstnModel<float>& model, const PressureSequence& seq) {
  ag::Tape<float> tape(false);
  auto reps = model.represent(tape, seq);
  auto probs = model.classify(tape, reps.dynamic);
  std::vector<double> out(probs.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(probs.value()[i]);
  return out;
}

EvalResult evaluate_model(const AstnModel<float>& model, const Cohort& cohort,
                          const std::vector<TrialId>& trials, bool macro_average) {
  if (trials.empty()) throw std::invalid_argument("evaluate_model: empty trial set");
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<double> per_trial_auc;
  for (const auto& id : trials) {
    const auto& seq = cohort.find(id);
    auto s = predict_scores(model, seq);
    scores.insert(scores.end(), s.begin(), s.end());
    labels.insert(labels.end(), seq.second_labels.begin(), seq.second_labels.end());
    if (macro_average) {
      bool has_pos = false, has_neg = false;
      for (auto y : seq.second_labels) (y ? has_pos : has_neg) = true;
      if (has_pos && has_neg) per_trial_auc.push_back(roc_auc(s, seq.second_labels).auc);
    }
  }
  EvalResult result;
  result.roc = roc_auc(scores, labels);
  result.report = youden_threshold(result.roc);
  if (macro_average && !per_trial_auc.empty()) {
    double sum = 0.0;
    for (double a : per_trial_auc) sum += a;
    result.report.auc = sum / static_cast<double>(per_trial_auc.size());
  }
  return result;
}

double discriminator_auc(const AstnModel<float>& model, const Cohort& cohort,
                         const std::vector<TrialId>& trials, std::size_t pair_budget, Rng& rng) {
  if (!model.has_discriminator())
    throw std::logic_error("discriminator_auc: model has no discriminator");
  auto groups = cohort.by_subject(trials);
  std::vector<int> subjects, pair_subjects;
  for (const auto& [m, ids] : groups) {
    subjects.push_back(m);
    if (ids.size() >= 2) pair_subjects.push_back(m);
  }
  if (subjects.size() < 2 || pair_subjects.empty())
    throw std::invalid_argument(
        "discriminator_auc: need >= 2 subjects and one subject with >= 2 trials among " +
        std::to_string(trials.size()) + " trials");

  // cache representations once per trial
  std::map<TrialId, Representations<float>> reps;
  ag::Tape<float> tape(false);
  for (const auto& id : trials) reps.emplace(id, model.represent(tape, cohort.find(id)));

  const bool flip = model.config().flip_discriminator_coding;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t k = 0; k < pair_budget; ++k) {
    TrialId a, b;
    const bool same = (k % 2 == 0);
    if (same) {
      const int m = pair_subjects[rng.uniform_index(pair_subjects.size())];
      const auto& ids = groups[m];
      const std::size_t i = rng.uniform_index(ids.size());
      std::size_t j = rng.uniform_index(ids.size() - 1);
      if (j >= i) ++j;
      a = ids[i];
      b = ids[j];
    } else {
      const std::size_t mi = rng.uniform_index(subjects.size());
      std::size_t mj = rng.uniform_index(subjects.size() - 1);
      if (mj >= mi) ++mj;
      const auto& ia = groups[subjects[mi]];
      const auto& ib = groups[subjects[mj]];
      a = ia[rng.uniform_index(ia.size())];
      b = ib[rng.uniform_index(ib.size())];
    }
    auto feats = model.discriminator_features(tape, reps.at(a), reps.at(b));
    const double d = static_cast<double>(model.discriminate(tape, feats).item());
    scores.push_back(flip ? 1.0 - d : d);  // rank by P(different subject)
    labels.push_back(same ? 0 : 1);
  }
  return roc_auc(scores, labels).auc;
}

LevelVectors collect_representation_vectors(const AstnModel<float>& model, const Cohort& cohort,
                                            const std::vector<TrialId>& trials) {
  if (trials.empty()) throw std::invalid_argument("collect_representation_vectors: no trials");
  LevelVectors out;
  ag::Tape<float> tape(false);
  for (const auto& id : trials) {
    const auto& seq = cohort.find(id);
    auto reps = model.represent(tape, seq);
    auto probs = model.classify(tape, reps.dynamic);
    auto append = [](std::vector<std::vector<double>>& dst, const ag::Tensor<float>& m) {
      const std::size_t rows = m.dim(0), cols = m.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(cols);
        for (std::size_t c = 0; c < cols; ++c) row[c] = m.value()[r * cols + c];
        dst.push_back(std::move(row));
      }
    };
    append(out.spatial, reps.spatial);
    append(out.intrinsic, reps.intrinsic);
    append(out.dynamic, reps.dynamic);
    for (std::size_t t = 0; t < seq.second_labels.size(); ++t) {
      out.true_labels.push_back(seq.second_labels[t]);
      out.scores.push_back(probs.value()[t]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

namespace {

// Cyclic Jacobi on a symmetric matrix; returns eigenvalues in-place on the
// diagonal and accumulates rotations into v (columns are eigenvectors).
void jacobi_eigen(std::vector<double>& a, std::size_t d, std::vector<double>& v) {
  v.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[p * d + p], aqq = a[q * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
  }
}

}  // namespace

PcaResult pca_project(const std::vector<std::vector<double>>& points, std::size_t k) {
  const std::size_t n = points.size();
  if (n < 2) throw std::invalid_argument("pca_project: need at least 2 points");
  const std::size_t d = points[0].size();
  if (d < k) throw std::invalid_argument("pca_project: dimension smaller than k");
  for (const auto& p : points)
    if (p.size() != d) throw std::invalid_argument("pca_project: ragged input");

  std::vector<double> mean(d, 0.0);
  for (const auto& p : points)
    for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<double> cov(d * d, 0.0);
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = p[i] - mean[i];
      for (std::size_t j = i; j < d; ++j) cov[i * d + j] += xi * (p[j] - mean[j]);
    }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= static_cast<double>(n - 1);
      cov[j * d + i] = cov[i * d + j];
    }

  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) total += cov[i * d + i];

  PcaResult result;
  result.projections.assign(n, std::vector<double>(k, 0.0));
  result.explained_ratio.assign(k, 0.0);
  if (total <= 0.0) return result;  // zero-variance input: defined zero output

  std::vector<double> v;
  jacobi_eigen(cov, d, v);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cov[a * d + a] > cov[b * d + b];
  });

  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t col = order[c];
    // sign convention: first loading with magnitude above tolerance is positive
    double flip = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (std::abs(v[i * d + col]) > 1e-12) {
        flip = v[i * d + col] > 0 ? 1.0 : -1.0;
        break;
      }
    }
    const double lambda = std::max(0.0, cov[col * d + col]);
    result.explained_ratio[c] = lambda / total;
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += (points[r][i] - mean[i]) * v[i * d + col];
      result.projections[r][c] = flip * acc;
    }
  }
  return result;
}

void write_roc_csv(const RocCurve& roc, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_roc_csv: cannot open " + path);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) {
    if (std::isinf(p.threshold))
      out << "inf";
    else
      out << p.threshold;
    out << ',' << p.fpr << ',' << p.tpr << '\n';
  }
}

void write_pca_csv(const PcaResult& pca, const std::vector<std::uint8_t>& true_labels,
                   const std::vector<std::uint8_t>& pred_labels, const std::string& path) {
  if (pca.projections.size() != true_labels.size() ||
      pca.projections.size() != pred_labels.size())
    throw std::invalid_argument("write_pca_csv: label count mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_pca_csv: cannot open " + path);
  out << "pc1,pc2,true_label,pred_label\n";
  for (std::size_t i = 0; i < pca.projections.size(); ++i) {
    const auto& p = pca.projections[i];
    out << p[0] << ',' << (p.size() > 1 ? p[1] : 0.0) << ',' << int(true_labels[i]) << ','
        << int(pred_labels[i]) << '\n';
  }
}

}  // namespace astn
