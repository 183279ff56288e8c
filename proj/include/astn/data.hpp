#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "astn/rng.hpp"

namespace astn {

// Thrown for anything a user can fix in a config or input file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrialId {
  int subject = 0;
  int trial = 0;
  friend bool operator==(const TrialId& a, const TrialId& b) {
    return a.subject == b.subject && a.trial == b.trial;
  }
  friend auto operator<=>(const TrialId& a, const TrialId& b) = default;
};

// One trial: T*P frames of a W x H pressure grid, values normalized to [0,1],
// one binary label per second plus the frame-level ground truth it came from.
struct PressureSequence {
  int subject_id = 0;
  int trial_id = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t sample_rate = 0;               // frames per second (P)
  std::vector<float> frames;                 // [frame][w][h], row-major
  std::vector<std::uint8_t> second_labels;   // length T
  std::vector<std::uint8_t> frame_labels;    // length T*P

  std::size_t frame_values() const { return width * height; }
  std::size_t frame_count() const { return frame_values() ? frames.size() / frame_values() : 0; }
  std::size_t seconds() const { return second_labels.size(); }
  const float* frame(std::size_t f) const { return frames.data() + f * frame_values(); }
  TrialId id() const { return {subject_id, trial_id}; }
};

struct Cohort {
  std::vector<PressureSequence> sequences;

  const PressureSequence& find(TrialId id) const;
  std::vector<int> subject_ids() const;
  std::map<int, std::vector<TrialId>> by_subject(const std::vector<TrialId>& ids) const;
  std::vector<TrialId> all_trials() const;
  double positive_second_rate() const;
  void validate() const;  // unique (m,n), labels sized, values in [0,1]
};

enum class SplitMode { subject_level, trial_level };

const char* to_string(SplitMode m);
SplitMode split_mode_from_string(const std::string& s);

struct SplitRatios {
  double train = 0.4;
  double val = 0.1;
  double test = 0.5;
};

struct SplitPlan {
  SplitMode mode = SplitMode::subject_level;
  std::vector<TrialId> train, val, test;
  std::uint64_t seed = 0;
};

struct SynthConfig {
  int n_subjects = 12;
  int trials_per_subject = 6;
  std::size_t width = 32;
  std::size_t height = 16;
  std::size_t sample_rate = 12;  // P
  std::size_t min_seconds = 20;
  std::size_t max_seconds = 60;
  double subject_nuisance_amplitude = 1.0;
  double fog_episode_rate = 0.228;
  double fog_signal_strength = 1.0;
  double noise_sigma = 0.02;
  int pressure_levels = 10;  // quantization before [0,1] normalization
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

// y_t = 1 iff any of the P frames in window t is labelled. Length must be an
// exact multiple of P; callers truncate trailing partial seconds first.
std::vector<std::uint8_t> label_windows(const std::vector<std::uint8_t>& frame_labels,
                                        std::size_t frames_per_second);

// Subject-level: subjects are shuffled by seed and assigned whole; no subject
// crosses the train/test boundary. Trial-level: trials shuffled regardless of
// subject. Validation is carved from the training side, preferring two trials
// per subject so same-subject pairs exist for the discriminator.
SplitPlan make_split(const Cohort& cohort, SplitMode mode, const SplitRatios& ratios,
                     std::uint64_t seed);

Cohort generate_cohort(const SynthConfig& config);

// Container: magic "FPSQ1", u64 manifest length, JSON manifest, then float32
// frame payload in (trial, t, p, w, h) order.
void save_cohort(const Cohort& cohort, const std::string& path);
Cohort load_cohort(const std::string& path);

// Directory of per-trial CSV grids: trial_<m>_<n>/frame_<k>.csv (one W x H
// grid each, k counted from 0) plus trial_<m>_<n>/labels.csv with one 0/1
// frame label per line. Values are divided by (levels-1) when levels > 0,
// otherwise taken as already normalized. Trailing partial seconds are
// truncated.
Cohort ingest_csv_dir(const std::string& dir, std::size_t frames_per_second, int levels = 0);

}  // namespace astn
