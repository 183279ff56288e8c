#include "astn/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "astn/grad_check.hpp"

namespace astn {

using ag::Tape;
using ag::Tensor;

namespace {

constexpr std::uint64_t kSeeds[10] = {11, 23, 37, 41, 59, 67, 73, 89, 97, 103};

// Identity forward with a deliberately wrong backward; the fault-injection
// hook used to prove the harness reports failures by op name.
Tensor<double> ghost_gradient(Tape<double>& tp, const Tensor<double>& a) {
  Tensor<double> out = Tensor<double>::from(a.shape(), a.value());
  if (tp.recording() && a.needs_grad()) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] + 0.01;
    });
  }
  return out;
}

Tensor<double> rand_tensor(ag::Shape shape, Rng& rng, bool requires_grad, double lo = -1.0,
                           double hi = 1.0, double kink_margin = 0.0) {
  auto t = Tensor<double>::zeros(std::move(shape), requires_grad);
  for (auto& v : t.value()) {
    do {
      v = rng.uniform(lo, hi);
    } while (kink_margin > 0.0 && std::abs(v) < kink_margin);
  }
  return t;
}

// Reduce an op output to a scalar through a fixed random weighting so output
// gradients are non-uniform.
Tensor<double> weighted_sum(Tape<double>& tp, const Tensor<double>& x, Rng& rng) {
  auto w = rand_tensor(x.shape(), rng, false, -1.0, 1.0);
  return ag::sum_all(tp, ag::mul(tp, x, w));
}

struct Case {
  std::vector<Tensor<double>> params;
  std::function<Tensor<double>(Tape<double>&)> f;
};

using CaseBuilder = std::function<Case(Rng&, bool corrupted)>;

GradCheck run_case(const std::string& name, const CaseBuilder& build, double eps, double tol,
                   bool corrupted) {
  GradCheck check{name, 0.0, tol, false};
  for (std::uint64_t seed : kSeeds) {
    Rng rng(Rng::derive(seed, std::hash<std::string>{}(name)));
    Case c = build(rng, corrupted);
    auto rep = ag::finite_difference_check<double>(c.f, c.params, eps);
    check.max_error = std::max(check.max_error, rep.max_relative_error);
  }
  check.pass = check.max_error < tol;
  return check;
}

// ---------------------------------------------------------------------------
// composite fixtures
// ---------------------------------------------------------------------------

PressureSequence random_sequence(int subject, int trial, const AstnConfig& cfg,
                                 std::size_t seconds, Rng& rng) {
  PressureSequence s;
  s.subject_id = subject;
  s.trial_id = trial;
  s.width = cfg.input_width;
  s.height = cfg.input_height;
  s.sample_rate = cfg.frames_per_second;
  const std::size_t n = seconds * cfg.frames_per_second * cfg.input_width * cfg.input_height;
  s.frames.resize(n);
  for (auto& v : s.frames) v = static_cast<float>(rng.uniform());
  s.frame_labels.resize(seconds * cfg.frames_per_second);
  for (auto& y : s.frame_labels) y = rng.uniform() < 0.3 ? 1 : 0;
  if (s.frame_labels[0] == 0) s.frame_labels[0] = 1;  // both classes present
  s.second_labels = label_windows(s.frame_labels, cfg.frames_per_second);
  return s;
}

std::vector<std::vector<double>> label_targets(const PressureSequence& s) {
  std::vector<double> t(s.second_labels.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = s.second_labels[i];
  return {t};
}

}  // namespace

AstnConfig toy_astn_config() {
  AstnConfig cfg;
  cfg.input_width = 8;
  cfg.input_height = 4;
  cfg.frames_per_second = 4;
  cfg.spatial_conv = {{3, 3, 1, 1, true}, {4, 3, 1, 1, false}};
  cfg.spatial_dim = 6;
  cfg.intrinsic_conv = {{6, 3, 1, 1, false}};
  cfg.intrinsic_dim = 6;
  cfg.dynamic_dim = 6;
  cfg.bidirectional = true;
  cfg.classifier_hidden = {6};
  return cfg;
}

Cohort toy_cohort(std::uint64_t seed, std::size_t t0, std::size_t t1, std::size_t t2) {
  const AstnConfig cfg = toy_astn_config();
  Rng rng(Rng::derive(seed, 0x70Cu));
  Cohort c;
  c.sequences.push_back(random_sequence(0, 0, cfg, t0, rng));
  c.sequences.push_back(random_sequence(0, 1, cfg, t1, rng));
  c.sequences.push_back(random_sequence(1, 0, cfg, t2, rng));
  return c;
}

double eps_sweep_error(double eps) {
  // High function magnitude makes cancellation visible: truncation dominates
  // at 1e-3, round-off at 1e-5, with the sweet spot near 1e-4.
  Rng rng(424242);
  auto x = rand_tensor({50}, rng, true, -1.0, 1.0);
  auto f = [&x](Tape<double>& tp) {
    auto t = ag::tanh_op(tp, ag::scale(tp, x, 2.0));
    auto shifted = ag::affine(tp, t, 100.0, 20000.0 + 1.0 / 50.0);
    return ag::sum_all(tp, shifted);
  };
  return ag::finite_difference_check<double>(f, {x}, eps).max_relative_error;
}

std::vector<GradCheck> run_gradient_suite(const std::string& corrupt_op) {
  std::vector<GradCheck> checks;
  const double kTol = 1e-6;

  auto wrap = [&](const Tensor<double>& out, Tape<double>& tp, bool corrupted) {
    return corrupted ? ghost_gradient(tp, out) : out;
  };

  struct Named {
    const char* name;
    CaseBuilder build;
    double eps;
  };

  std::vector<Named> primitives;
  primitives.push_back({"leaky_relu", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({4, 5}, rng, true, -1.0, 1.0, 0.05);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({4, 5}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::leaky_relu(tp, x, 0.01), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"sigmoid", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({7}, rng, true, -2.0, 2.0);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({7}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::sigmoid(tp, x), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"tanh", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({7}, rng, true, -2.0, 2.0);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({7}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::tanh_op(tp, x), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"add", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({3, 4}, rng, true);
    auto b = rand_tensor({3, 4}, rng, true);
    Case c;
    c.params = {a, b};
    c.f = [a, b, &wrap, cor, w = rand_tensor({3, 4}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::add(tp, a, b), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"sub", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({3, 4}, rng, true);
    auto b = rand_tensor({3, 4}, rng, true);
    Case c;
    c.params = {a, b};
    c.f = [a, b, &wrap, cor, w = rand_tensor({3, 4}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::sub(tp, a, b), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"mul", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({6}, rng, true);
    auto b = rand_tensor({6}, rng, true);
    Case c;
    c.params = {a, b};
    c.f = [a, b, &wrap, cor, w = rand_tensor({6}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::mul(tp, a, b), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"square", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({6}, rng, true);
    Case c;
    c.params = {a};
    c.f = [a, &wrap, cor, w = rand_tensor({6}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::square(tp, a), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"abs", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({6}, rng, true, -1.0, 1.0, 0.05);
    Case c;
    c.params = {a};
    c.f = [a, &wrap, cor, w = rand_tensor({6}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::abs_op(tp, a), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"matmul", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({3, 4}, rng, true);
    auto b = rand_tensor({4, 5}, rng, true);
    Case c;
    c.params = {a, b};
    c.f = [a, b, &wrap, cor, w = rand_tensor({3, 5}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::matmul(tp, a, b), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"vecmat", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({4}, rng, true);
    auto w = rand_tensor({4, 5}, rng, true);
    Case c;
    c.params = {x, w};
    c.f = [x, w, &wrap, cor, ww = rand_tensor({5}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::vecmat(tp, x, w), tp, cor), ww));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"conv1d", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({3, 12}, rng, true);
    auto k = rand_tensor({5, 3, 3}, rng, true);
    Case c;
    c.params = {x, k};
    c.f = [x, k, &wrap, cor, w = rand_tensor({5, 12}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::conv1d(tp, x, k, 1, 1), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"conv2d", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({2, 8, 8}, rng, true);
    auto k = rand_tensor({4, 2, 3, 3}, rng, true);
    Case c;
    c.params = {x, k};
    c.f = [x, k, &wrap, cor, w = rand_tensor({4, 4, 4}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::conv2d(tp, x, k, 2, 1), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"maxpool1d", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({2, 8}, rng, true);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({2, 4}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::maxpool1d(tp, x, 2, 2), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"maxpool2d", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({2, 6, 6}, rng, true);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({2, 3, 3}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::maxpool2d(tp, x, 2, 2), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"mean", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({9}, rng, true);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor](Tape<double>& tp) { return wrap(ag::mean_all(tp, x), tp, cor); };
    return c;
  }, 1e-5});
  primitives.push_back({"mean_rows", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({5, 3}, rng, true);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({3}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::mean_rows(tp, x), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"concat", [&wrap](Rng& rng, bool cor) {
    auto a = rand_tensor({3}, rng, true);
    auto b = rand_tensor({4}, rng, true);
    Case c;
    c.params = {a, b};
    c.f = [a, b, &wrap, cor, w = rand_tensor({7}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::concat(tp, {a, b}), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"bce", [&wrap](Rng& rng, bool cor) {
    auto p = rand_tensor({6}, rng, true, 0.05, 0.95);
    std::vector<double> targets(6);
    for (auto& t : targets) t = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Case c;
    c.params = {p};
    c.f = [p, targets, &wrap, cor](Tape<double>& tp) {
      return ag::mean_all(tp, wrap(ag::bce(tp, p, targets), tp, cor));
    };
    return c;
  }, 1e-6});
  primitives.push_back({"add_rowvec", [&wrap](Rng& rng, bool cor) {
    auto m = rand_tensor({4, 3}, rng, true);
    auto b = rand_tensor({3}, rng, true);
    Case c;
    c.params = {m, b};
    c.f = [m, b, &wrap, cor, w = rand_tensor({4, 3}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::add_rowvec(tp, m, b), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"add_channel_bias", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({3, 4, 2}, rng, true);
    auto b = rand_tensor({3}, rng, true);
    Case c;
    c.params = {x, b};
    c.f = [x, b, &wrap, cor, w = rand_tensor({3, 4, 2}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::add_channel_bias(tp, x, b), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"transpose", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({3, 5}, rng, true);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({5, 3}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::transpose(tp, x), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"slice_rows", [&wrap](Rng& rng, bool cor) {
    auto x = rand_tensor({5, 3}, rng, true);
    Case c;
    c.params = {x};
    c.f = [x, &wrap, cor, w = rand_tensor({2, 3}, rng, false)](Tape<double>& tp) {
      return ag::sum_all(tp, ag::mul(tp, wrap(ag::slice_rows(tp, x, 1, 3), tp, cor), w));
    };
    return c;
  }, 1e-5});
  primitives.push_back({"gru_step", [&wrap](Rng& rng, bool cor) {
    const std::size_t h1 = 5, h2 = 4;
    auto x = rand_tensor({h1}, rng, true);
    auto h = rand_tensor({h2}, rng, true);
    std::vector<Tensor<double>> ws;
    for (int i = 0; i < 3; ++i) {
      ws.push_back(rand_tensor({h1, h2}, rng, true, -0.5, 0.5));
      ws.push_back(rand_tensor({h2, h2}, rng, true, -0.5, 0.5));
      ws.push_back(rand_tensor({h2}, rng, true, -0.5, 0.5));
    }
    Case c;
    c.params = {x, h};
    c.params.insert(c.params.end(), ws.begin(), ws.end());
    c.f = [x, h, ws, &wrap, cor, w = rand_tensor({h2}, rng, false)](Tape<double>& tp) {
      auto out = gru_step(tp, x, h, ws[0], ws[1], ws[2], ws[3], ws[4], ws[5], ws[6], ws[7], ws[8]);
      return ag::sum_all(tp, ag::mul(tp, wrap(out, tp, cor), w));
    };
    return c;
  }, 1e-5});

  for (const auto& prim : primitives)
    checks.push_back(run_case(prim.name, prim.build, prim.eps, kTol, corrupt_op == prim.name));

  // composite losses on the toy model
  const AstnConfig cfg = toy_astn_config();
  struct CompositeSpec {
    const char* name;
    int which;  // 0: J_C, 1: J_D, 2: lambda*J_A
  };
  for (const auto& comp : {CompositeSpec{"composite_J_C", 0}, CompositeSpec{"composite_J_D", 1},
                           CompositeSpec{"composite_lambda_J_A", 2}}) {
    GradCheck check{comp.name, 0.0, kTol, false};
    for (std::uint64_t seed : kSeeds) {
      Cohort cohort = toy_cohort(seed);
      AstnModel<double> model(cfg, seed);
      std::vector<Tensor<double>> params;
      for (const auto& p : model.named_params()) params.push_back(p.tensor);
      const auto& a0 = cohort.sequences[0];
      const auto& a1 = cohort.sequences[1];
      const auto& b0 = cohort.sequences[2];
      std::function<Tensor<double>(Tape<double>&)> f;
      if (comp.which == 0) {
        f = [&model, &a0, &b0](Tape<double>& tp) {
          auto ra = model.represent(tp, a0);
          auto rb = model.represent(tp, b0);
          std::vector<Tensor<double>> preds{model.classify(tp, ra.dynamic),
                                            model.classify(tp, rb.dynamic)};
          std::vector<std::vector<double>> labels{label_targets(a0)[0], label_targets(b0)[0]};
          return loss_jc(tp, preds, labels);
        };
      } else if (comp.which == 1) {
        f = [&model, &a0, &a1, &b0](Tape<double>& tp) {
          auto ra = model.represent(tp, a0);
          auto rb = model.represent(tp, b0);
          auto rc = model.represent(tp, a1);
          auto d_diff = model.discriminate(tp, model.discriminator_features(tp, ra, rb));
          auto d_same = model.discriminate(tp, model.discriminator_features(tp, ra, rc));
          return loss_jd(tp, d_same, d_diff);
        };
      } else {
        f = [&model, &a0, &a1](Tape<double>& tp) {
          auto ra = model.represent(tp, a0);
          auto rc = model.represent(tp, a1);
          auto d_same = model.discriminate(tp, model.discriminator_features(tp, ra, rc));
          return loss_ja(tp, d_same, 0.7);
        };
      }
      auto rep = ag::finite_difference_check<double>(f, params, 1e-6);
      check.max_error = std::max(check.max_error, rep.max_relative_error);
    }
    check.pass = check.max_error < kTol;
    checks.push_back(check);
  }
  return checks;
}

}  // namespace astn
