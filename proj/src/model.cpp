#include "astn/model.hpp"

namespace astn {

const char* to_string(DiscVariant v) {
  switch (v) {
    case DiscVariant::second_order: return "second_order";
    case DiscVariant::first_order: return "first_order";
    case DiscVariant::abs_first_order: return "abs_first_order";
    case DiscVariant::concatenated: return "concatenated";
  }
  return "?";
}

const char* to_string(DiscLevels l) {
  return l == DiscLevels::multi_level ? "multi_level" : "dynamic_only";
}

DiscVariant disc_variant_from_string(const std::string& s) {
  if (s == "second_order") return DiscVariant::second_order;
  if (s == "first_order") return DiscVariant::first_order;
  if (s == "abs_first_order") return DiscVariant::abs_first_order;
  if (s == "concatenated") return DiscVariant::concatenated;
  throw ConfigError("unknown discriminator variant '" + s + "'");
}

DiscLevels disc_levels_from_string(const std::string& s) {
  if (s == "multi_level") return DiscLevels::multi_level;
  if (s == "dynamic_only") return DiscLevels::dynamic_only;
  throw ConfigError("unknown discriminator levels '" + s + "'");
}

namespace {

// Walks the conv/pool stack and returns the flattened output size, checking
// that every layer still has something to convolve over.
std::size_t stack_output(const std::vector<ConvSpec>& specs, std::size_t c0,
                         std::vector<std::size_t> dims, const char* what) {
  std::size_t c = c0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0)
      throw ConfigError(std::string(what) + " conv layer " + std::to_string(i) +
                        ": zero channel/kernel/stride");
    for (auto& d : dims) {
      if (s.kernel > d + 2 * s.pad)
        throw ConfigError(std::string(what) + " conv layer " + std::to_string(i) +
                          ": kernel exceeds padded input (" + std::to_string(d) + ")");
      d = (d + 2 * s.pad - s.kernel) / s.stride + 1;
    }
    if (s.pool_after)
      for (auto& d : dims) {
        if (s.pool_k > d)
          throw ConfigError(std::string(what) + " pool after layer " + std::to_string(i) +
                            ": window exceeds input (" + std::to_string(d) + ")");
        d = (d - s.pool_k) / s.pool_stride + 1;
      }
    c = s.out_channels;
  }
  std::size_t n = c;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::size_t AstnConfig::spatial_flat_dim() const {
  return stack_output(spatial_conv, 1, {input_width, input_height}, "spatial");
}

std::size_t AstnConfig::intrinsic_flat_dim() const {
  return stack_output(intrinsic_conv, spatial_dim, {frames_per_second}, "intrinsic");
}

std::size_t AstnConfig::disc_feature_dim() const {
  std::size_t base = discriminator_levels == DiscLevels::multi_level
                         ? spatial_window_dim() + intrinsic_dim + dynamic_out_dim()
                         : dynamic_out_dim();
  return discriminator_variant == DiscVariant::concatenated ? 2 * base : base;
}

void AstnConfig::validate() const {
  if (input_width == 0 || input_height == 0 || frames_per_second == 0)
    throw ConfigError("astn: zero input geometry");
  if (spatial_dim == 0 || intrinsic_dim == 0 || dynamic_dim == 0)
    throw ConfigError("astn: representation dims must be > 0");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("astn: leaky_slope must be in (0,1)");
  if (!(bce_clamp > 0.0 && bce_clamp < 0.5)) throw ConfigError("astn: bad bce_clamp");
  spatial_flat_dim();    // throws on inconsistent stacks
  intrinsic_flat_dim();  // throws when P is smaller than the receptive field
}

void to_json(nlohmann::json& j, const ConvSpec& c) {
  j = nlohmann::json{{"out_channels", c.out_channels}, {"kernel", c.kernel},
                     {"stride", c.stride},             {"pad", c.pad},
                     {"pool_after", c.pool_after},     {"pool_k", c.pool_k},
                     {"pool_stride", c.pool_stride}};
}

void from_json(const nlohmann::json& j, ConvSpec& c) {
  ConvSpec d;
  c.out_channels = j.value("out_channels", d.out_channels);
  c.kernel = j.value("kernel", d.kernel);
  c.stride = j.value("stride", d.stride);
  c.pad = j.value("pad", d.pad);
  c.pool_after = j.value("pool_after", d.pool_after);
  c.pool_k = j.value("pool_k", d.pool_k);
  c.pool_stride = j.value("pool_stride", d.pool_stride);
}

void to_json(nlohmann::json& j, const AstnConfig& c) {
  j = nlohmann::json{{"input_width", c.input_width},
                     {"input_height", c.input_height},
                     {"frames_per_second", c.frames_per_second},
                     {"leaky_slope", c.leaky_slope},
                     {"spatial_conv", c.spatial_conv},
                     {"spatial_dim", c.spatial_dim},
                     {"intrinsic_conv", c.intrinsic_conv},
                     {"intrinsic_dim", c.intrinsic_dim},
                     {"dynamic_dim", c.dynamic_dim},
                     {"bidirectional", c.bidirectional},
                     {"classifier_hidden", c.classifier_hidden},
                     {"discriminator_variant", to_string(c.discriminator_variant)},
                     {"discriminator_levels", to_string(c.discriminator_levels)},
                     {"flip_discriminator_coding", c.flip_discriminator_coding},
                     {"bce_clamp", c.bce_clamp}};
}

void from_json(const nlohmann::json& j, AstnConfig& c) {
  AstnConfig d;
  c.input_width = j.value("input_width", d.input_width);
  c.input_height = j.value("input_height", d.input_height);
  c.frames_per_second = j.value("frames_per_second", d.frames_per_second);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  if (j.contains("spatial_conv")) c.spatial_conv = j.at("spatial_conv").get<std::vector<ConvSpec>>();
  c.spatial_dim = j.value("spatial_dim", d.spatial_dim);
  if (j.contains("intrinsic_conv"))
    c.intrinsic_conv = j.at("intrinsic_conv").get<std::vector<ConvSpec>>();
  c.intrinsic_dim = j.value("intrinsic_dim", d.intrinsic_dim);
  c.dynamic_dim = j.value("dynamic_dim", d.dynamic_dim);
  c.bidirectional = j.value("bidirectional", d.bidirectional);
  if (j.contains("classifier_hidden"))
    c.classifier_hidden = j.at("classifier_hidden").get<std::vector<std::size_t>>();
  c.discriminator_variant =
      disc_variant_from_string(j.value("discriminator_variant", "second_order"));
  c.discriminator_levels = disc_levels_from_string(j.value("discriminator_levels", "multi_level"));
  c.flip_discriminator_coding = j.value("flip_discriminator_coding", d.flip_discriminator_coding);
  c.bce_clamp = j.value("bce_clamp", d.bce_clamp);
}

}  // namespace astn
