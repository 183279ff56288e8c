#include "astn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace astn {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "cohort container assumes a little-endian host");

// ---------------------------------------------------------------------------
// Cohort
// ---------------------------------------------------------------------------

const PressureSequence& Cohort::find(TrialId id) const {
  for (const auto& s : sequences)
    if (s.id() == id) return s;
  throw std::invalid_argument("cohort: no trial (" + std::to_string(id.subject) + "," +
                              std::to_string(id.trial) + ")");
}

std::vector<int> Cohort::subject_ids() const {
  std::set<int> ids;
  for (const auto& s : sequences) ids.insert(s.subject_id);
  return {ids.begin(), ids.end()};
}

std::map<int, std::vector<TrialId>> Cohort::by_subject(const std::vector<TrialId>& ids) const {
  std::map<int, std::vector<TrialId>> out;
  for (const auto& id : ids) out[id.subject].push_back(id);
  return out;
}

std::vector<TrialId> Cohort::all_trials() const {
  std::vector<TrialId> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(s.id());
  return out;
}

double Cohort::positive_second_rate() const {
  std::size_t pos = 0, total = 0;
  for (const auto& s : sequences) {
    total += s.second_labels.size();
    for (auto y : s.second_labels) pos += y;
  }
  return total ? static_cast<double>(pos) / static_cast<double>(total) : 0.0;
}

void Cohort::validate() const {
  std::set<std::pair<int, int>> seen;
  for (const auto& s : sequences) {
    if (!seen.insert({s.subject_id, s.trial_id}).second)
      throw ConfigError("cohort: duplicate trial (" + std::to_string(s.subject_id) + "," +
                        std::to_string(s.trial_id) + ")");
    if (s.sample_rate == 0 || s.width == 0 || s.height == 0)
      throw ConfigError("cohort: zero dimension in a sequence");
    if (s.frame_count() % s.sample_rate != 0)
      throw ConfigError("cohort: frame count not a multiple of the sample rate");
    if (s.second_labels.size() != s.frame_count() / s.sample_rate)
      throw ConfigError("cohort: second-label count mismatch");
    if (s.frame_labels.size() != s.frame_count())
      throw ConfigError("cohort: frame-label count mismatch");
    for (float v : s.frames)
      if (!(v >= 0.0f && v <= 1.0f))
        throw ConfigError("cohort: pressure value outside [0,1]");
  }
}

// ---------------------------------------------------------------------------
// windowing / splits
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> label_windows(const std::vector<std::uint8_t>& frame_labels,
                                        std::size_t frames_per_second) {
  if (frames_per_second == 0) throw std::invalid_argument("label_windows: P must be > 0");
  if (frame_labels.size() % frames_per_second != 0)
    throw std::invalid_argument("label_windows: " + std::to_string(frame_labels.size()) +
                                " frame labels is not a multiple of P=" +
                                std::to_string(frames_per_second));
  std::vector<std::uint8_t> out(frame_labels.size() / frames_per_second, 0);
  for (std::size_t t = 0; t < out.size(); ++t)
    for (std::size_t p = 0; p < frames_per_second; ++p)
      if (frame_labels[t * frames_per_second + p]) {
        out[t] = 1;
        break;
      }
  return out;
}

const char* to_string(SplitMode m) {
  return m == SplitMode::subject_level ? "subject" : "trial";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "subject" || s == "subject-level" || s == "subject_level")
    return SplitMode::subject_level;
  if (s == "trial" || s == "trial-level" || s == "trial_level") return SplitMode::trial_level;
  throw ConfigError("unknown split mode '" + s + "' (expected subject|trial)");
}

namespace {

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

// Carve the validation set out of the training side. Subjects are visited in
// shuffled order and give up two trials while the quota allows, so that
// same-subject validation pairs exist whenever trial counts permit.
void carve_validation(std::vector<TrialId>& train, std::vector<TrialId>& val, double val_frac,
                      Rng& rng) {
  if (train.empty() || val_frac <= 0.0) return;
  std::size_t quota = static_cast<std::size_t>(std::llround(val_frac * train.size()));
  if (quota == 0) quota = 1;
  if (quota >= train.size()) quota = train.size() - 1;

  std::map<int, std::vector<TrialId>> per_subject;
  for (const auto& id : train) per_subject[id.subject].push_back(id);
  std::vector<int> order;
  for (const auto& [m, _] : per_subject) order.push_back(m);
  shuffle(order, rng);

  std::set<TrialId> chosen;
  for (int pass = 0; pass < 2 && quota > 0; ++pass) {
    const std::size_t take = pass == 0 ? 2 : 1;
    for (int m : order) {
      if (quota < take) break;
      auto& trials = per_subject[m];
      // keep at least one trial of each subject on the training side
      std::size_t available = 0;
      for (const auto& id : trials) available += chosen.count(id) ? 0 : 1;
      if (available < take + 1) continue;
      for (std::size_t k = 0; k < take;) {
        TrialId pick = trials[rng.uniform_index(trials.size())];
        if (chosen.insert(pick).second) ++k;
      }
      quota -= take;
    }
  }

  std::vector<TrialId> kept;
  for (const auto& id : train)
    (chosen.count(id) ? val : kept).push_back(id);
  train = std::move(kept);
}

}  // namespace

SplitPlan make_split(const Cohort& cohort, SplitMode mode, const SplitRatios& ratios,
                     std::uint64_t seed) {
  if (cohort.sequences.empty()) throw ConfigError("make_split: empty cohort");
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("make_split: ratios must sum to 1, got " + std::to_string(sum));
  if (ratios.test <= 0.0 || ratios.train <= 0.0)
    throw ConfigError("make_split: train and test ratios must be positive");

  Rng rng(Rng::derive(seed, 0x5EED5u));
  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  const double val_frac = ratios.val / (ratios.train + ratios.val);

  if (mode == SplitMode::subject_level) {
    std::vector<int> subjects = cohort.subject_ids();
    if (subjects.size() < 3)
      throw ConfigError("make_split: subject-level split needs >= 3 subjects, have " +
                        std::to_string(subjects.size()));
    shuffle(subjects, rng);
    std::size_t n_test =
        static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(subjects.size())));
    n_test = std::min(std::max<std::size_t>(n_test, 1), subjects.size() - 2);
    std::set<int> test_subjects(subjects.begin(), subjects.begin() + n_test);
    for (const auto& s : cohort.sequences)
      (test_subjects.count(s.subject_id) ? plan.test : plan.train).push_back(s.id());
  } else {
    std::vector<TrialId> trials = cohort.all_trials();
    if (trials.size() < 3)
      throw ConfigError("make_split: trial-level split needs >= 3 trials, have " +
                        std::to_string(trials.size()));
    shuffle(trials, rng);
    std::size_t n_test =
        static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(trials.size())));
    n_test = std::min(std::max<std::size_t>(n_test, 1), trials.size() - 2);
    plan.test.assign(trials.begin(), trials.begin() + n_test);
    plan.train.assign(trials.begin() + n_test, trials.end());
  }

  carve_validation(plan.train, plan.val, val_frac, rng);
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

// ---------------------------------------------------------------------------
// SynthConfig json
// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (n_subjects < 1 || trials_per_subject < 1)
    throw ConfigError("synth: need at least one subject and one trial");
  if (width == 0 || height == 0 || sample_rate == 0) throw ConfigError("synth: zero dimension");
  if (min_seconds == 0 || max_seconds < min_seconds)
    throw ConfigError("synth: bad trial length range");
  if (!(fog_episode_rate > 0.0 && fog_episode_rate < 1.0))
    throw ConfigError("synth: fog_episode_rate must be in (0,1)");
  if (fog_signal_strength < 0.0 || subject_nuisance_amplitude < 0.0 || noise_sigma < 0.0)
    throw ConfigError("synth: amplitudes must be >= 0");
  if (pressure_levels < 2) throw ConfigError("synth: pressure_levels must be >= 2");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"n_subjects", c.n_subjects},
                     {"trials_per_subject", c.trials_per_subject},
                     {"width", c.width},
                     {"height", c.height},
                     {"sample_rate", c.sample_rate},
                     {"min_seconds", c.min_seconds},
                     {"max_seconds", c.max_seconds},
                     {"subject_nuisance_amplitude", c.subject_nuisance_amplitude},
                     {"fog_episode_rate", c.fog_episode_rate},
                     {"fog_signal_strength", c.fog_signal_strength},
                     {"noise_sigma", c.noise_sigma},
                     {"pressure_levels", c.pressure_levels},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.n_subjects = j.value("n_subjects", d.n_subjects);
  c.trials_per_subject = j.value("trials_per_subject", d.trials_per_subject);
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.sample_rate = j.value("sample_rate", d.sample_rate);
  c.min_seconds = j.value("min_seconds", d.min_seconds);
  c.max_seconds = j.value("max_seconds", d.max_seconds);
  c.subject_nuisance_amplitude = j.value("subject_nuisance_amplitude", d.subject_nuisance_amplitude);
  c.fog_episode_rate = j.value("fog_episode_rate", d.fog_episode_rate);
  c.fog_signal_strength = j.value("fog_signal_strength", d.fog_signal_strength);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.pressure_levels = j.value("pressure_levels", d.pressure_levels);
  c.seed = j.value("seed", d.seed);
}

// ---------------------------------------------------------------------------
// cohort container
// ---------------------------------------------------------------------------

static constexpr char kCohortMagic[5] = {'F', 'P', 'S', 'Q', '1'};

void save_cohort(const Cohort& cohort, const std::string& path) {
  nlohmann::json manifest;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : cohort.sequences) {
    nlohmann::json e;
    e["subject"] = s.subject_id;
    e["trial"] = s.trial_id;
    e["w"] = s.width;
    e["h"] = s.height;
    e["p"] = s.sample_rate;
    e["seconds"] = s.seconds();
    e["second_labels"] = s.second_labels;
    e["frame_labels"] = s.frame_labels;
    list.push_back(e);
  }
  manifest["sequences"] = list;
  const std::string ms = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_cohort: cannot open for writing: " + path);
  out.write(kCohortMagic, 5);
  const std::uint64_t mlen = ms.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(ms.data(), static_cast<std::streamsize>(ms.size()));
  for (const auto& s : cohort.sequences)
    out.write(reinterpret_cast<const char*>(s.frames.data()),
              static_cast<std::streamsize>(s.frames.size() * sizeof(float)));
  if (!out) throw std::runtime_error("save_cohort: write failed: " + path);
}

Cohort load_cohort(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cohort: cannot open: " + path);
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kCohortMagic, 5) != 0)
    throw std::runtime_error("load_cohort: bad magic in " + path + " (expected FPSQ1)");
  std::uint64_t mlen = 0;
  if (!in.read(reinterpret_cast<char*>(&mlen), 8))
    throw std::runtime_error("load_cohort: truncated manifest length in " + path);
  std::string ms(mlen, '\0');
  if (!in.read(ms.data(), static_cast<std::streamsize>(mlen)))
    throw std::runtime_error("load_cohort: truncated manifest in " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ms);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("load_cohort: unparseable manifest: ") + e.what());
  }

  Cohort cohort;
  for (const auto& e : manifest.at("sequences")) {
    PressureSequence s;
    s.subject_id = e.at("subject").get<int>();
    s.trial_id = e.at("trial").get<int>();
    s.width = e.at("w").get<std::size_t>();
    s.height = e.at("h").get<std::size_t>();
    s.sample_rate = e.at("p").get<std::size_t>();
    const std::size_t seconds = e.at("seconds").get<std::size_t>();
    s.second_labels = e.at("second_labels").get<std::vector<std::uint8_t>>();
    s.frame_labels = e.at("frame_labels").get<std::vector<std::uint8_t>>();
    if (s.second_labels.size() != seconds)
      throw std::runtime_error("load_cohort: label count disagrees with manifest seconds");
    const std::size_t n = seconds * s.sample_rate * s.width * s.height;
    s.frames.resize(n);
    if (!in.read(reinterpret_cast<char*>(s.frames.data()),
                 static_cast<std::streamsize>(n * sizeof(float))))
      throw std::runtime_error("load_cohort: truncated frame payload for trial (" +
                               std::to_string(s.subject_id) + "," + std::to_string(s.trial_id) +
                               ")");
    cohort.sequences.push_back(std::move(s));
  }
  cohort.validate();
  return cohort;
}

// ---------------------------------------------------------------------------
// CSV ingest
// ---------------------------------------------------------------------------

namespace {

std::vector<float> read_frame_csv(const fs::path& p, std::size_t w, std::size_t h, int levels) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("ingest: cannot open " + p.string());
  std::vector<float> out;
  out.reserve(w * h);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      float v = std::stof(cell);
      if (levels > 0) v /= static_cast<float>(levels - 1);
      out.push_back(v);
      ++cols;
    }
    if (cols != h)
      throw std::runtime_error("ingest: " + p.string() + " row has " + std::to_string(cols) +
                               " columns, expected " + std::to_string(h));
    ++rows;
  }
  if (rows != w)
    throw std::runtime_error("ingest: " + p.string() + " has " + std::to_string(rows) +
                             " rows, expected " + std::to_string(w));
  for (float v : out)
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::runtime_error("ingest: value outside [0,1] in " + p.string() +
                               " (pass the raw level count via levels)");
  return out;
}

}  // namespace

Cohort ingest_csv_dir(const std::string& dir, std::size_t frames_per_second, int levels) {
  if (frames_per_second == 0) throw ConfigError("ingest: frames_per_second must be > 0");
  Cohort cohort;
  std::vector<fs::path> trial_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind("trial_", 0) == 0)
      trial_dirs.push_back(e.path());
  std::sort(trial_dirs.begin(), trial_dirs.end());
  if (trial_dirs.empty()) throw ConfigError("ingest: no trial_<m>_<n> directories under " + dir);

  for (const auto& td : trial_dirs) {
    const std::string name = td.filename().string();
    int m = 0, n = 0;
    if (std::sscanf(name.c_str(), "trial_%d_%d", &m, &n) != 2)
      throw ConfigError("ingest: directory name '" + name + "' is not trial_<m>_<n>");

    std::size_t frame_count = 0;
    while (fs::exists(td / ("frame_" + std::to_string(frame_count) + ".csv"))) ++frame_count;
    if (frame_count == 0) throw ConfigError("ingest: no frame_<k>.csv files in " + name);

    // probe dimensions from the first frame
    std::size_t w = 0, h = 0;
    {
      std::ifstream probe(td / "frame_0.csv");
      std::string line;
      while (std::getline(probe, line)) {
        if (line.empty()) continue;
        if (h == 0) h = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
        ++w;
      }
    }

    PressureSequence s;
    s.subject_id = m;
    s.trial_id = n;
    s.width = w;
    s.height = h;
    s.sample_rate = frames_per_second;
    const std::size_t whole = (frame_count / frames_per_second) * frames_per_second;
    for (std::size_t k = 0; k < whole; ++k) {
      auto frame = read_frame_csv(td / ("frame_" + std::to_string(k) + ".csv"), w, h, levels);
      s.frames.insert(s.frames.end(), frame.begin(), frame.end());
    }

    std::ifstream lab(td / "labels.csv");
    if (!lab) throw ConfigError("ingest: missing labels.csv in " + name);
    std::string line;
    while (std::getline(lab, line)) {
      if (line.empty()) continue;
      s.frame_labels.push_back(line[0] == '1' ? 1 : 0);
    }
    if (s.frame_labels.size() < whole)
      throw ConfigError("ingest: labels.csv in " + name + " has fewer lines than frames");
    s.frame_labels.resize(whole);
    s.second_labels = label_windows(s.frame_labels, frames_per_second);
    cohort.sequences.push_back(std::move(s));
  }
  cohort.validate();
  return cohort;
}

}  // namespace astn
