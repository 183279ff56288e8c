#include <algorithm>
#include <cmath>

#include "astn/data.hpp"

// Synthetic footstep-pressure cohorts. Each subject carries a persistent gait
// signature (stride geometry, speed, pressure amplitude, a smooth per-subject
// pressure-style field) whose spread is governed by subject_nuisance_amplitude.
// Trials render alternating left/right footprint blobs that plant at advancing
// positions along the mat; freezing episodes blend the walk toward a
// near-stationary rendering with a tremor oscillation. fog_signal_strength = 0
// makes episode frames pixel-identical in distribution to walking frames.

namespace astn {

namespace {

struct SubjectSig {
  double step_period;   // seconds between plants
  double stride;        // sensors advanced per plant
  double amp;           // peak footprint pressure
  double foot_sx;       // footprint radius along the mat
  double foot_sy;       // footprint radius across the mat
  double lateral;       // foot offset from the center line
  double tremor_freq;   // Hz
  double tremor_amp;    // positional tremble, sensors
  double load_osc;      // tremor-locked load oscillation depth
  double freeze_depth;  // per-subject scaling of the freeze expression
  std::vector<float> style;  // W*H multiplicative pressure-style field
};

double jitter(Rng& rng, double amount) { return 1.0 + amount * rng.uniform(-1.0, 1.0); }

SubjectSig make_signature(const SynthConfig& c, int subject) {
  Rng rng(Rng::derive(c.seed, 0x5AB17Cu, static_cast<std::uint64_t>(subject)));
  const double a = c.subject_nuisance_amplitude;
  SubjectSig s;
  s.step_period = 0.55 * jitter(rng, 0.35 * a);
  s.stride = 0.20 * static_cast<double>(c.width) * jitter(rng, 0.35 * a);
  s.amp = std::clamp(0.62 * jitter(rng, 0.45 * a), 0.15, 0.95);
  s.foot_sx = 0.055 * static_cast<double>(c.width) * jitter(rng, 0.30 * a);
  s.foot_sy = 0.10 * static_cast<double>(c.height) * jitter(rng, 0.30 * a);
  s.lateral = 0.16 * static_cast<double>(c.height) * jitter(rng, 0.30 * a);
  // The freeze expression itself varies by subject: tremor frequency and
  // amplitude, and how deeply locomotion collapses. This is what a
  // trial-level split leaks and a subject-level split must generalize over.
  s.tremor_freq = 3.0 * jitter(rng, 0.25 * a);
  s.tremor_amp = 0.35 * jitter(rng, 0.6 * a);
  s.load_osc = 0.45 * jitter(rng, 0.6 * a);
  s.freeze_depth = std::clamp(jitter(rng, 0.35 * a), 0.2, 1.0);

  // low-frequency cosine mixture, flat when the nuisance amplitude is zero
  s.style.assign(c.width * c.height, 1.0f);
  if (a > 0.0) {
    const double kx = rng.uniform(0.5, 1.5), ky = rng.uniform(0.5, 1.5);
    const double phx = rng.uniform(0.0, 6.28), phy = rng.uniform(0.0, 6.28);
    const double depth = 0.22 * a;
    for (std::size_t x = 0; x < c.width; ++x)
      for (std::size_t y = 0; y < c.height; ++y) {
        const double u = 6.28318530718 * kx * static_cast<double>(x) / c.width + phx;
        const double v = 6.28318530718 * ky * static_cast<double>(y) / c.height + phy;
        s.style[x * c.height + y] =
            static_cast<float>(std::clamp(1.0 + depth * 0.5 * (std::cos(u) + std::cos(v)), 0.3, 1.7));
      }
  }
  return s;
}

// Second-level two-state Markov chain with mean episode length ~3 s, entered
// at the rate that makes the stationary FoG fraction equal the target.
std::vector<std::uint8_t> episode_frames(const SynthConfig& c, std::size_t seconds, Rng& rng) {
  const double mean_len = 3.0;
  const double p_exit = 1.0 / mean_len;
  const double r = c.fog_episode_rate;
  const double p_enter = r * p_exit / (1.0 - r);
  std::vector<std::uint8_t> per_second(seconds, 0);
  bool fog = rng.uniform() < r;
  for (std::size_t t = 0; t < seconds; ++t) {
    per_second[t] = fog ? 1 : 0;
    fog = fog ? (rng.uniform() >= p_exit) : (rng.uniform() < p_enter);
  }
  // expand to frames, jittering both boundaries of each span so the
  // any-frame labeling rule does real work
  const std::size_t P = c.sample_rate;
  std::vector<std::uint8_t> frames(seconds * P, 0);
  std::size_t t = 0;
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(frames.size());
  while (t < seconds) {
    if (!per_second[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < seconds && per_second[end]) ++end;
    const std::ptrdiff_t jit = static_cast<std::ptrdiff_t>(P / 3 + 1);
    std::ptrdiff_t f0 = static_cast<std::ptrdiff_t>(t * P) +
                        static_cast<std::ptrdiff_t>(rng.uniform_index(2 * jit + 1)) - jit;
    std::ptrdiff_t f1 = static_cast<std::ptrdiff_t>(end * P) +
                        static_cast<std::ptrdiff_t>(rng.uniform_index(2 * jit + 1)) - jit;
    f0 = std::clamp<std::ptrdiff_t>(f0, 0, total);
    f1 = std::clamp<std::ptrdiff_t>(f1, f0, total);
    for (std::ptrdiff_t f = f0; f < f1; ++f) frames[f] = 1;
    t = end;
  }
  return frames;
}

struct Foot {
  double x = 0, y = 0;
  double planted_at = -10.0;  // seconds
};

PressureSequence render_trial(const SynthConfig& c, const SubjectSig& sig, int subject,
                              int trial) {
  Rng rng(Rng::derive(c.seed, static_cast<std::uint64_t>(subject) * 977 + 13,
                      static_cast<std::uint64_t>(trial) + 1));
  PressureSequence seq;
  seq.subject_id = subject;
  seq.trial_id = trial;
  seq.width = c.width;
  seq.height = c.height;
  seq.sample_rate = c.sample_rate;

  const std::size_t seconds =
      c.min_seconds + rng.uniform_index(c.max_seconds - c.min_seconds + 1);
  seq.frame_labels = episode_frames(c, seconds, rng);
  seq.second_labels = label_windows(seq.frame_labels, c.sample_rate);

  const double blend = 1.0 - std::exp(-c.fog_signal_strength);
  const double dt = 1.0 / static_cast<double>(c.sample_rate);
  const double x_min = 0.12 * c.width, x_max = 0.88 * c.width;
  const double cy = 0.5 * c.height;
  const double stance = 1.25 * sig.step_period;

  double pos = rng.uniform(x_min, x_max);
  double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
  double step_clock = rng.uniform(0.0, sig.step_period);
  int swing = 0;  // which foot plants next
  Foot feet[2];
  feet[0] = {pos - 0.3 * sig.stride, cy - sig.lateral, -0.2};
  feet[1] = {pos + 0.3 * sig.stride, cy + sig.lateral, -0.2 - 0.5 * sig.step_period};
  const double tremor_phase[2] = {rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28)};

  const std::size_t total_frames = seconds * c.sample_rate;
  seq.frames.assign(total_frames * c.width * c.height, 0.0f);
  const float qdiv = static_cast<float>(c.pressure_levels - 1);

  for (std::size_t f = 0; f < total_frames; ++f) {
    const double t_now = static_cast<double>(f) * dt;
    const double freeze = blend * sig.freeze_depth * (seq.frame_labels[f] ? 1.0 : 0.0);
    const double speed = (sig.stride / sig.step_period) * (1.0 - freeze);

    pos += dir * speed * dt;
    if (pos > x_max) { pos = x_max; dir = -1.0; }
    if (pos < x_min) { pos = x_min; dir = 1.0; }

    step_clock += dt;
    if (step_clock >= sig.step_period) {
      step_clock -= sig.step_period;
      feet[swing].x = pos + dir * 0.5 * sig.stride * (1.0 - freeze);
      feet[swing].y = cy + (swing == 0 ? -1.0 : 1.0) * sig.lateral;
      feet[swing].planted_at = t_now;
      swing = 1 - swing;
    }

    float* frame = seq.frames.data() + f * c.width * c.height;
    for (int k = 0; k < 2; ++k) {
      const double since = t_now - feet[k].planted_at;
      double u = since / stance;
      // frozen gait keeps both feet loaded instead of swinging
      if (freeze > 0.0) u = std::min(u, 0.45 + 0.1 * std::sin(t_now));
      if (u < 0.0 || u > 1.0) continue;
      double load = sig.amp * std::sin(3.14159265359 * u);
      double fx = feet[k].x, fy = feet[k].y;
      if (freeze > 0.0) {
        const double osc = std::sin(6.28318530718 * sig.tremor_freq * t_now + tremor_phase[k]);
        fx += freeze * sig.tremor_amp * osc;
        load *= 1.0 + freeze * (sig.load_osc * osc - 0.15);
        if (load < 0.0) load = 0.0;
      }
      const double sx2 = 2.0 * sig.foot_sx * sig.foot_sx;
      const double sy2 = 2.0 * sig.foot_sy * sig.foot_sy;
      const int x0 = std::max(0, static_cast<int>(fx - 4 * sig.foot_sx));
      const int x1 = std::min(static_cast<int>(c.width) - 1, static_cast<int>(fx + 4 * sig.foot_sx));
      const int y0 = std::max(0, static_cast<int>(fy - 4 * sig.foot_sy));
      const int y1 = std::min(static_cast<int>(c.height) - 1, static_cast<int>(fy + 4 * sig.foot_sy));
      for (int x = x0; x <= x1; ++x)
        for (int y = y0; y <= y1; ++y) {
          const double dx = x - fx, dy = y - fy;
          frame[x * static_cast<int>(c.height) + y] +=
              static_cast<float>(load * std::exp(-(dx * dx / sx2 + dy * dy / sy2)));
        }
    }

    for (std::size_t i = 0; i < c.width * c.height; ++i) {
      double v = static_cast<double>(frame[i]) * sig.style[i];
      if (c.noise_sigma > 0.0) v += rng.normal(0.0, c.noise_sigma);
      v = std::clamp(v, 0.0, 1.0);
      // quantize to the discrete force levels, then back to [0,1]
      frame[i] = static_cast<float>(std::nearbyint(v * qdiv)) / qdiv;
    }
  }
  return seq;
}

}  // namespace

Cohort generate_cohort(const SynthConfig& config) {
  config.validate();
  Cohort cohort;
  for (int m = 0; m < config.n_subjects; ++m) {
    const SubjectSig sig = make_signature(config, m);
    for (int n = 0; n < config.trials_per_subject; ++n)
      cohort.sequences.push_back(render_trial(config, sig, m, n));
  }
  cohort.validate();
  return cohort;
}

}  // namespace astn
