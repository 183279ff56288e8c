#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "astn/data.hpp"
#include "astn/ops.hpp"
#include "astn/rng.hpp"

namespace astn {

enum class DiscVariant { second_order, first_order, abs_first_order, concatenated };
enum class DiscLevels { multi_level, dynamic_only };

const char* to_string(DiscVariant v);
const char* to_string(DiscLevels l);
DiscVariant disc_variant_from_string(const std::string& s);
DiscLevels disc_levels_from_string(const std::string& s);

struct ConvSpec {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  bool pool_after = false;
  std::size_t pool_k = 2;
  std::size_t pool_stride = 2;
};

void to_json(nlohmann::json& j, const ConvSpec& c);
void from_json(const nlohmann::json& j, ConvSpec& c);

struct AstnConfig {
  // input geometry the network is built for
  std::size_t input_width = 32;
  std::size_t input_height = 16;
  std::size_t frames_per_second = 12;

  double leaky_slope = 0.01;

  // scaled-down AlexNet-style stack: depth 5, two max-pools
  std::vector<ConvSpec> spatial_conv = {{8, 3, 1, 1, false},
                                        {16, 3, 1, 1, true},
                                        {24, 3, 1, 1, false},
                                        {24, 3, 1, 1, true},
                                        {16, 3, 1, 1, false}};
  std::size_t spatial_dim = 64;  // S

  std::vector<ConvSpec> intrinsic_conv = {{32, 3, 1, 1, true}, {32, 3, 1, 1, false}};
  std::size_t intrinsic_dim = 64;  // H1

  std::size_t dynamic_dim = 64;  // H2
  bool bidirectional = true;

  std::vector<std::size_t> classifier_hidden = {64};

  DiscVariant discriminator_variant = DiscVariant::second_order;
  DiscLevels discriminator_levels = DiscLevels::multi_level;
  // Resolves the Eq.-style vs output-coding ambiguity; default keeps
  // same-subject pairs targeting 0 and different-subject pairs targeting 1.
  bool flip_discriminator_coding = false;

  double bce_clamp = 1e-7;

  void validate() const;

  std::size_t dynamic_out_dim() const { return dynamic_dim * (bidirectional ? 2 : 1); }
  std::size_t spatial_window_dim() const { return frames_per_second * spatial_dim; }
  std::size_t spatial_flat_dim() const;    // conv-stack output size per frame
  std::size_t intrinsic_flat_dim() const;  // conv-stack output size per window
  std::size_t disc_feature_dim() const;
};

void to_json(nlohmann::json& j, const AstnConfig& c);
void from_json(const nlohmann::json& j, AstnConfig& c);

// Per-trial representation triple. spatial holds the window stacks flattened
// to rows ([T, P*S]); intrinsic is [T, H1]; dynamic is [T, H2] or [T, 2*H2].
template <typename T>
struct Representations {
  ag::Tensor<T> spatial;
  ag::Tensor<T> intrinsic;
  ag::Tensor<T> dynamic;
  std::size_t seconds() const { return spatial.dim(0); }
};

template <typename T>
struct NamedParam {
  std::string name;
  ag::Tensor<T> tensor;
};

enum class ParamPartition { generator, classifier, discriminator };

// The ASTN network. Parameters are partitioned into G (spatial + intrinsic +
// GRU), C (classifier) and D (discriminator) so training phases can freeze
// them independently.
template <typename T>
class AstnModel {
 public:
  AstnModel(AstnConfig config, std::uint64_t seed, bool with_discriminator = true);

  const AstnConfig& config() const { return cfg_; }
  bool has_discriminator() const { return with_disc_; }

  const std::vector<NamedParam<T>>& named_params() const { return params_; }
  std::vector<ag::Tensor<T>> partition(ParamPartition p) const;
  void set_partition_requires_grad(ParamPartition p, bool enabled);
  void zero_partition_grads(ParamPartition p);

  // Full generator G: the three-level representation of one trial.
  Representations<T> represent(ag::Tape<T>& tape, const PressureSequence& seq) const;

  // Classifier C over the dynamic representation: per-second probabilities [T].
  ag::Tensor<T> classify(ag::Tape<T>& tape, const ag::Tensor<T>& dynamic) const;

  // Pair features per the configured variant/levels, pooled over aligned time.
  ag::Tensor<T> discriminator_features(ag::Tape<T>& tape, const Representations<T>& a,
                                       const Representations<T>& b) const;

  // Single FC + sigmoid verdict on a pair feature vector.
  ag::Tensor<T> discriminate(ag::Tape<T>& tape, const ag::Tensor<T>& features) const;

  // Raw byte snapshot/restore of one partition (freeze audits, best-checkpoint).
  std::vector<std::vector<T>> snapshot(ParamPartition p) const;
  void load_values(const std::map<std::string, ag::Tensor<T>>& tensors);

 private:
  ag::Tensor<T> frame_tensor(const PressureSequence& seq, std::size_t frame) const;
  ag::Tensor<T> spatial_encode(ag::Tape<T>& tape, const ag::Tensor<T>& frame) const;
  ag::Tensor<T> intrinsic_encode(ag::Tape<T>& tape, const ag::Tensor<T>& window_sp) const;
  ag::Tensor<T> gru_direction(ag::Tape<T>& tape, const std::vector<ag::Tensor<T>>& inputs,
                              bool backward_dir, std::vector<ag::Tensor<T>>& outputs) const;

  ag::Tensor<T> add_param(ParamPartition part, const std::string& name, ag::Shape shape,
                          double fan_in, Rng& rng);
  ag::Tensor<T> find_param(const std::string& name) const;

  AstnConfig cfg_;
  bool with_disc_;
  std::vector<NamedParam<T>> params_;
  std::vector<std::size_t> part_of_;  // parallel to params_: partition index
};

// GRU cell exposed for direct verification: one step of Eqs-style gating.
// update = sigma(Wxz.x + Whz.h + bz), reset = sigma(Wxr.x + Whr.h + br),
// cand = tanh(Wxh.x + reset*(Whh.h) + bh), out = (1-update)*cand + update*h.
template <typename T>
ag::Tensor<T> gru_step(ag::Tape<T>& tape, const ag::Tensor<T>& x, const ag::Tensor<T>& h_prev,
                       const ag::Tensor<T>& w_xz, const ag::Tensor<T>& w_hz,
                       const ag::Tensor<T>& b_z, const ag::Tensor<T>& w_xr,
                       const ag::Tensor<T>& w_hr, const ag::Tensor<T>& b_r,
                       const ag::Tensor<T>& w_xh, const ag::Tensor<T>& w_hh,
                       const ag::Tensor<T>& b_h) {
  using namespace ag;
  auto z = sigmoid(tape, add(tape, add(tape, vecmat(tape, x, w_xz), vecmat(tape, h_prev, w_hz)),
                             b_z));
  auto r = sigmoid(tape, add(tape, add(tape, vecmat(tape, x, w_xr), vecmat(tape, h_prev, w_hr)),
                             b_r));
  auto cand = tanh_op(
      tape, add(tape, add(tape, vecmat(tape, x, w_xh), mul(tape, r, vecmat(tape, h_prev, w_hh))),
                b_h));
  auto keep = mul(tape, z, h_prev);
  auto update = mul(tape, affine(tape, z, T(-1), T(1)), cand);
  return add(tape, update, keep);
}

// Mean over trials of per-trial mean BCE (inner 1/T, outer 1/(number of trials)).
template <typename T>
ag::Tensor<T> loss_jc(ag::Tape<T>& tape, const std::vector<ag::Tensor<T>>& predictions,
                      const std::vector<std::vector<T>>& labels, T clamp = T(1e-7)) {
  if (predictions.empty()) throw std::invalid_argument("loss_jc: empty batch");
  if (predictions.size() != labels.size())
    throw std::invalid_argument("loss_jc: prediction/label trial count mismatch");
  std::vector<ag::Tensor<T>> per_trial;
  per_trial.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i)
    per_trial.push_back(ag::mean_all(tape, ag::bce(tape, predictions[i], labels[i], clamp)));
  return ag::mean_all(tape, ag::concat(tape, per_trial));
}

// Discriminator BCE over one same-subject and one different-subject pair.
// Default coding: same-subject target 0, different-subject target 1.
template <typename T>
ag::Tensor<T> loss_jd(ag::Tape<T>& tape, const ag::Tensor<T>& d_same,
                      const ag::Tensor<T>& d_diff, bool flip_coding = false,
                      T clamp = T(1e-7)) {
  const T same_target = flip_coding ? T(1) : T(0);
  const T diff_target = flip_coding ? T(0) : T(1);
  return ag::add(tape, ag::bce(tape, d_same, std::vector<T>{same_target}, clamp),
                 ag::bce(tape, d_diff, std::vector<T>{diff_target}, clamp));
}

// Adversarial objective on the same-subject pair, scaled by lambda: BCE of
// the discriminator's verdict against the WRONG (different-subject) label,
// which the generator minimizes. This is the non-saturating formulation of
// the confusion game: same fixed points as maximizing -log(1 - D), but the
// generator's gradient fades as the discriminator becomes confused instead
// of blowing past sigmoid saturation.
template <typename T>
ag::Tensor<T> loss_ja(ag::Tape<T>& tape, const ag::Tensor<T>& d_same, T lambda,
                      bool flip_coding = false, T clamp = T(1e-7)) {
  const T misclass_target = flip_coding ? T(0) : T(1);
  return ag::scale(tape, ag::bce(tape, d_same, std::vector<T>{misclass_target}, clamp), lambda);
}

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

template <typename T>
ag::Tensor<T> AstnModel<T>::add_param(ParamPartition part, const std::string& name,
                                      ag::Shape shape, double fan_in, Rng& rng) {
  auto t = ag::Tensor<T>::zeros(std::move(shape), true);
  if (fan_in > 0.0) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& v : t.value()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  params_.push_back({name, t});
  part_of_.push_back(static_cast<std::size_t>(part));
  return t;
}

template <typename T>
ag::Tensor<T> AstnModel<T>::find_param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::logic_error("model: unknown parameter " + name);
}

template <typename T>
AstnModel<T>::AstnModel(AstnConfig config, std::uint64_t seed, bool with_discriminator)
    : cfg_(std::move(config)), with_disc_(with_discriminator) {
  cfg_.validate();
  Rng rng(Rng::derive(seed, 0xA57Au));

  // G: spatial stack
  std::size_t c_in = 1;
  for (std::size_t i = 0; i < cfg_.spatial_conv.size(); ++i) {
    const auto& cs = cfg_.spatial_conv[i];
    add_param(ParamPartition::generator, "G.spatial.conv" + std::to_string(i) + ".weight",
              {cs.out_channels, c_in, cs.kernel, cs.kernel},
              static_cast<double>(c_in * cs.kernel * cs.kernel), rng);
    add_param(ParamPartition::generator, "G.spatial.conv" + std::to_string(i) + ".bias",
              {cs.out_channels}, 0.0, rng);
    c_in = cs.out_channels;
  }
  const std::size_t sflat = cfg_.spatial_flat_dim();
  add_param(ParamPartition::generator, "G.spatial.fc.weight", {sflat, cfg_.spatial_dim},
            static_cast<double>(sflat), rng);
  add_param(ParamPartition::generator, "G.spatial.fc.bias", {cfg_.spatial_dim}, 0.0, rng);

  // G: intrinsic temporal stack (1-D convolutions over the window)
  c_in = cfg_.spatial_dim;
  for (std::size_t i = 0; i < cfg_.intrinsic_conv.size(); ++i) {
    const auto& cs = cfg_.intrinsic_conv[i];
    add_param(ParamPartition::generator, "G.intrinsic.conv" + std::to_string(i) + ".weight",
              {cs.out_channels, c_in, cs.kernel}, static_cast<double>(c_in * cs.kernel), rng);
    add_param(ParamPartition::generator, "G.intrinsic.conv" + std::to_string(i) + ".bias",
              {cs.out_channels}, 0.0, rng);
    c_in = cs.out_channels;
  }
  const std::size_t iflat = cfg_.intrinsic_flat_dim();
  add_param(ParamPartition::generator, "G.intrinsic.fc.weight", {iflat, cfg_.intrinsic_dim},
            static_cast<double>(iflat), rng);
  add_param(ParamPartition::generator, "G.intrinsic.fc.bias", {cfg_.intrinsic_dim}, 0.0, rng);

  // G: GRU (one parameter set per direction)
  const std::size_t h1 = cfg_.intrinsic_dim, h2 = cfg_.dynamic_dim;
  const int dirs = cfg_.bidirectional ? 2 : 1;
  for (int d = 0; d < dirs; ++d) {
    const std::string base = d == 0 ? "G.gru.fwd." : "G.gru.bwd.";
    for (const char* gate : {"z", "r", "h"}) {
      add_param(ParamPartition::generator, base + "W_x" + gate, {h1, h2},
                static_cast<double>(h1), rng);
      add_param(ParamPartition::generator, base + "W_h" + gate, {h2, h2},
                static_cast<double>(h2), rng);
      add_param(ParamPartition::generator, base + "b_" + gate, {h2}, 0.0, rng);
    }
  }

  // C: FC stack on the dynamic representation
  std::size_t in = cfg_.dynamic_out_dim();
  for (std::size_t i = 0; i < cfg_.classifier_hidden.size(); ++i) {
    add_param(ParamPartition::classifier, "C.fc" + std::to_string(i) + ".weight",
              {in, cfg_.classifier_hidden[i]}, static_cast<double>(in), rng);
    add_param(ParamPartition::classifier, "C.fc" + std::to_string(i) + ".bias",
              {cfg_.classifier_hidden[i]}, 0.0, rng);
    in = cfg_.classifier_hidden[i];
  }
  add_param(ParamPartition::classifier, "C.out.weight", {in, 1}, static_cast<double>(in), rng);
  add_param(ParamPartition::classifier, "C.out.bias", {1}, 0.0, rng);

  // D: one FC layer + sigmoid
  if (with_disc_) {
    const std::size_t f = cfg_.disc_feature_dim();
    add_param(ParamPartition::discriminator, "D.fc.weight", {f, 1}, static_cast<double>(f), rng);
    add_param(ParamPartition::discriminator, "D.fc.bias", {1}, 0.0, rng);
  }
}

template <typename T>
std::vector<ag::Tensor<T>> AstnModel<T>::partition(ParamPartition p) const {
  std::vector<ag::Tensor<T>> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (part_of_[i] == static_cast<std::size_t>(p)) out.push_back(params_[i].tensor);
  return out;
}

template <typename T>
void AstnModel<T>::set_partition_requires_grad(ParamPartition p, bool enabled) {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (part_of_[i] == static_cast<std::size_t>(p))
      params_[i].tensor.set_requires_grad(enabled);
}

template <typename T>
void AstnModel<T>::zero_partition_grads(ParamPartition p) {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (part_of_[i] == static_cast<std::size_t>(p)) params_[i].tensor.zero_grad();
}

template <typename T>
std::vector<std::vector<T>> AstnModel<T>::snapshot(ParamPartition p) const {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (part_of_[i] == static_cast<std::size_t>(p)) out.push_back(params_[i].tensor.value());
  return out;
}

template <typename T>
void AstnModel<T>::load_values(const std::map<std::string, ag::Tensor<T>>& tensors) {
  for (auto& p : params_) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw std::runtime_error("model: checkpoint missing " + p.name);
    if (it->second.shape() != p.tensor.shape())
      throw std::runtime_error("model: checkpoint shape mismatch for " + p.name + ": " +
                               ag::shape_str(it->second.shape()) + " vs " +
                               ag::shape_str(p.tensor.shape()));
    p.tensor.value() = it->second.value();
  }
}

template <typename T>
ag::Tensor<T> AstnModel<T>::frame_tensor(const PressureSequence& seq, std::size_t frame) const {
  std::vector<T> values(seq.frame_values());
  const float* src = seq.frame(frame);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(src[i]);
  return ag::Tensor<T>::from({1, seq.width, seq.height}, std::move(values));
}

template <typename T>
ag::Tensor<T> AstnModel<T>::spatial_encode(ag::Tape<T>& tape, const ag::Tensor<T>& frame) const {
  using namespace ag;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  Tensor<T> x = frame;
  for (std::size_t i = 0; i < cfg_.spatial_conv.size(); ++i) {
    const auto& cs = cfg_.spatial_conv[i];
    x = conv2d(tape, x, find_param("G.spatial.conv" + std::to_string(i) + ".weight"), cs.stride,
               cs.pad);
    x = add_channel_bias(tape, x, find_param("G.spatial.conv" + std::to_string(i) + ".bias"));
    x = leaky_relu(tape, x, slope);
    if (cs.pool_after) x = maxpool2d(tape, x, cs.pool_k, cs.pool_stride);
  }
  x = flatten(tape, x);
  x = add(tape, vecmat(tape, x, find_param("G.spatial.fc.weight")),
          find_param("G.spatial.fc.bias"));
  return leaky_relu(tape, x, slope);
}

template <typename T>
ag::Tensor<T> AstnModel<T>::intrinsic_encode(ag::Tape<T>& tape,
                                             const ag::Tensor<T>& window_sp) const {
  using namespace ag;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  // [P,S] window stack viewed as a 1-D sequence of S channels
  Tensor<T> x = transpose(tape, window_sp);
  for (std::size_t i = 0; i < cfg_.intrinsic_conv.size(); ++i) {
    const auto& cs = cfg_.intrinsic_conv[i];
    x = conv1d(tape, x, find_param("G.intrinsic.conv" + std::to_string(i) + ".weight"), cs.stride,
               cs.pad);
    x = add_channel_bias(tape, x, find_param("G.intrinsic.conv" + std::to_string(i) + ".bias"));
    x = leaky_relu(tape, x, slope);
    if (cs.pool_after) x = maxpool1d(tape, x, cs.pool_k, cs.pool_stride);
  }
  x = flatten(tape, x);
  x = add(tape, vecmat(tape, x, find_param("G.intrinsic.fc.weight")),
          find_param("G.intrinsic.fc.bias"));
  return leaky_relu(tape, x, slope);
}

template <typename T>
ag::Tensor<T> AstnModel<T>::gru_direction(ag::Tape<T>& tape,
                                          const std::vector<ag::Tensor<T>>& inputs,
                                          bool backward_dir,
                                          std::vector<ag::Tensor<T>>& outputs) const {
  const std::string base = backward_dir ? "G.gru.bwd." : "G.gru.fwd.";
  auto w_xz = find_param(base + "W_xz"), w_hz = find_param(base + "W_hz");
  auto b_z = find_param(base + "b_z");
  auto w_xr = find_param(base + "W_xr"), w_hr = find_param(base + "W_hr");
  auto b_r = find_param(base + "b_r");
  auto w_xh = find_param(base + "W_xh"), w_hh = find_param(base + "W_hh");
  auto b_h = find_param(base + "b_h");

  ag::Tensor<T> h = ag::Tensor<T>::zeros({cfg_.dynamic_dim});
  outputs.assign(inputs.size(), {});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t t = backward_dir ? inputs.size() - 1 - i : i;
    h = gru_step(tape, inputs[t], h, w_xz, w_hz, b_z, w_xr, w_hr, b_r, w_xh, w_hh, b_h);
    outputs[t] = h;
  }
  return h;
}

template <typename T>
Representations<T> AstnModel<T>::represent(ag::Tape<T>& tape, const PressureSequence& seq) const {
  using namespace ag;
  if (seq.width != cfg_.input_width || seq.height != cfg_.input_height ||
      seq.sample_rate != cfg_.frames_per_second)
    throw std::invalid_argument(
        "represent: sequence geometry " + std::to_string(seq.width) + "x" +
        std::to_string(seq.height) + "@" + std::to_string(seq.sample_rate) +
        " does not match the model config");
  const std::size_t seconds = seq.seconds();
  if (seconds == 0) throw std::invalid_argument("represent: empty sequence");

  std::vector<Tensor<T>> spatial_rows, intrinsic_rows;
  spatial_rows.reserve(seconds);
  intrinsic_rows.reserve(seconds);
  const std::size_t P = cfg_.frames_per_second;
  for (std::size_t t = 0; t < seconds; ++t) {
    std::vector<Tensor<T>> frame_reps;
    frame_reps.reserve(P);
    for (std::size_t p = 0; p < P; ++p)
      frame_reps.push_back(spatial_encode(tape, frame_tensor(seq, t * P + p)));
    Tensor<T> window = stack_rows(tape, frame_reps);  // [P,S]
    spatial_rows.push_back(flatten(tape, window));
    intrinsic_rows.push_back(intrinsic_encode(tape, window));
  }

  std::vector<Tensor<T>> fwd;
  gru_direction(tape, intrinsic_rows, false, fwd);
  std::vector<Tensor<T>> dynamic_rows;
  dynamic_rows.reserve(seconds);
  if (cfg_.bidirectional) {
    std::vector<Tensor<T>> bwd;
    gru_direction(tape, intrinsic_rows, true, bwd);
    for (std::size_t t = 0; t < seconds; ++t)
      dynamic_rows.push_back(concat(tape, {fwd[t], bwd[t]}));
  } else {
    dynamic_rows = fwd;
  }

  Representations<T> reps;
  reps.spatial = stack_rows(tape, spatial_rows);
  reps.intrinsic = stack_rows(tape, intrinsic_rows);
  reps.dynamic = stack_rows(tape, dynamic_rows);
  return reps;
}

template <typename T>
ag::Tensor<T> AstnModel<T>::classify(ag::Tape<T>& tape, const ag::Tensor<T>& dynamic) const {
  using namespace ag;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  Tensor<T> x = dynamic;  // [T, H2d]
  for (std::size_t i = 0; i < cfg_.classifier_hidden.size(); ++i) {
    x = add_rowvec(tape, matmul(tape, x, find_param("C.fc" + std::to_string(i) + ".weight")),
                   find_param("C.fc" + std::to_string(i) + ".bias"));
    x = leaky_relu(tape, x, slope);
  }
  x = add_rowvec(tape, matmul(tape, x, find_param("C.out.weight")), find_param("C.out.bias"));
  return sigmoid(tape, flatten(tape, x));
}

template <typename T>
ag::Tensor<T> AstnModel<T>::discriminator_features(ag::Tape<T>& tape,
                                                   const Representations<T>& a,
                                                   const Representations<T>& b) const {
  using namespace ag;
  const std::size_t ta = a.seconds(), tb = b.seconds();
  const std::size_t t_star = std::min(ta, tb);

  std::vector<std::pair<Tensor<T>, Tensor<T>>> levels;
  if (cfg_.discriminator_levels == DiscLevels::multi_level) {
    levels = {{a.spatial, b.spatial}, {a.intrinsic, b.intrinsic}, {a.dynamic, b.dynamic}};
  } else {
    levels = {{a.dynamic, b.dynamic}};
  }

  std::vector<Tensor<T>> feats;
  for (auto& [la, lb] : levels) {
    if (la.dim(1) != lb.dim(1))
      throw std::invalid_argument("discriminator_features: representation dims differ");
    Tensor<T> xa = la.dim(0) == t_star ? la : slice_rows(tape, la, 0, t_star);
    Tensor<T> xb = lb.dim(0) == t_star ? lb : slice_rows(tape, lb, 0, t_star);
    switch (cfg_.discriminator_variant) {
      case DiscVariant::second_order:
        feats.push_back(mean_rows(tape, square(tape, sub(tape, xa, xb))));
        break;
      case DiscVariant::first_order:
        feats.push_back(mean_rows(tape, sub(tape, xa, xb)));
        break;
      case DiscVariant::abs_first_order:
        feats.push_back(mean_rows(tape, abs_op(tape, sub(tape, xa, xb))));
        break;
      case DiscVariant::concatenated:
        feats.push_back(mean_rows(tape, xa));
        feats.push_back(mean_rows(tape, xb));
        break;
    }
  }
  return concat(tape, feats);
}

template <typename T>
ag::Tensor<T> AstnModel<T>::discriminate(ag::Tape<T>& tape, const ag::Tensor<T>& features) const {
  using namespace ag;
  if (!with_disc_) throw std::logic_error("discriminate: model built without a discriminator");
  if (features.numel() != cfg_.disc_feature_dim())
    throw std::invalid_argument("discriminate: feature dim " + std::to_string(features.numel()) +
                                " != configured " + std::to_string(cfg_.disc_feature_dim()));
  auto out = add(tape, vecmat(tape, features, find_param("D.fc.weight")),
                 find_param("D.fc.bias"));
  return sigmoid(tape, out);
}

}  // namespace astn
