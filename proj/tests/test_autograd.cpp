#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "astn/adam.hpp"
#include "astn/checkpoint.hpp"
#include "astn/grad_check.hpp"
#include "astn/model.hpp"
#include "astn/ops.hpp"
#include "astn/rng.hpp"
#include "oracles.hpp"

using namespace astn;
using ag::Tape;
using ag::Tensor;

namespace {

Tensor<double> randd(ag::Shape shape, Rng& rng, bool grad = false, double lo = -1.0,
                     double hi = 1.0) {
  auto t = Tensor<double>::zeros(std::move(shape), grad);
  for (auto& v : t.value()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("leaky_relu forward branches") {
  Tape<double> tp(false);
  auto x = Tensor<double>::from({3}, {2.0, -1.0, 0.0});
  auto y1 = ag::leaky_relu(tp, x, 0.01);
  CHECK(y1.value()[0] == doctest::Approx(2.0));
  CHECK(y1.value()[1] == doctest::Approx(-0.01));
  auto y2 = ag::leaky_relu(tp, x, 0.3);
  CHECK(y2.value()[2] == 0.0);
  CHECK_THROWS_AS(ag::leaky_relu(tp, x, 1.5), std::invalid_argument);
}

TEST_CASE("conv2d hand examples") {
  Tape<double> tp(false);
  auto ones = Tensor<double>::from({1, 3, 3}, std::vector<double>(9, 1.0));
  auto kones = Tensor<double>::from({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto out = ag::conv2d(tp, ones, kones, 1, 0);
  REQUIRE(out.shape() == ag::Shape{1, 1, 1});
  CHECK(out.value()[0] == doctest::Approx(9.0));

  Rng rng(7);
  auto x = randd({1, 5, 5}, rng);
  auto ident = Tensor<double>::from({1, 1, 1, 1}, {1.0});
  auto same = ag::conv2d(tp, x, ident, 1, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(same.value()[i] == x.value()[i]);

  auto bad_kernel = Tensor<double>::from({1, 2, 3, 3}, std::vector<double>(18, 0.0));
  CHECK_THROWS_AS(ag::conv2d(tp, x, bad_kernel), std::invalid_argument);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    auto x = randd({2, 8, 8}, rng);
    auto k = randd({4, 2, 3, 3}, rng);
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
      Tape<double> tp(false);
      auto out = ag::conv2d(tp, x, k, stride, pad);
      std::size_t ow, oh;
      auto ref = oracle::conv2d(x.value(), 2, 8, 8, k.value(), 4, 3, 3, stride, pad, ow, oh);
      REQUIRE(out.shape() == ag::Shape{4, ow, oh});
      for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(std::abs(out.value()[i] - ref[i]) < 1e-6);
    }
  }
}

TEST_CASE("conv1d hand examples and oracle") {
  Tape<double> tp(false);
  auto x = Tensor<double>::from({1, 3}, {1.0, 2.0, 3.0});
  auto k = Tensor<double>::from({1, 1, 2}, {1.0, 1.0});
  auto out = ag::conv1d(tp, x, k, 1, 0);
  REQUIRE(out.shape() == ag::Shape{1, 2});
  CHECK(out.value()[0] == doctest::Approx(3.0));
  CHECK(out.value()[1] == doctest::Approx(5.0));

  auto ident = Tensor<double>::from({1, 1, 1}, {1.0});
  auto same = ag::conv1d(tp, x, ident, 1, 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same.value()[i] == x.value()[i]);

  Rng rng(5);
  auto xr = randd({3, 12}, rng);
  auto kr = randd({5, 3, 3}, rng);
  auto o = ag::conv1d(tp, xr, kr, 1, 0);
  std::size_t ol;
  auto ref = oracle::conv1d(xr.value(), 3, 12, kr.value(), 5, 3, 1, 0, ol);
  REQUIRE(o.shape() == ag::Shape{5, ol});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(o.value()[i] - ref[i]) < 1e-6);
}

TEST_CASE("backward basics") {
  // grad of sum(x) is ones
  {
    Tape<double> tp;
    auto x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    tp.backward(ag::sum_all(tp, x));
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
  }
  // grad of sum(x*x) is 2x
  {
    Tape<double> tp;
    auto x = Tensor<double>::from({2}, {1.0, -2.0}, true);
    tp.backward(ag::sum_all(tp, ag::mul(tp, x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
  }
}

TEST_CASE("fan-out accumulates both contributions") {
  Tape<double> tp;
  auto x = Tensor<double>::from({3}, {0.5, -1.5, 2.0}, true);
  auto loss = ag::add(tp, ag::sum_all(tp, x), ag::sum_all(tp, ag::mul(tp, x, x)));
  tp.backward(loss);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(1.0 + 2.0 * x.value()[i]));
}

TEST_CASE("backward rejects non-scalar loss and double invocation") {
  Tape<double> tp;
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto y = ag::mul(tp, x, x);
  CHECK_THROWS_AS(tp.backward(y), std::invalid_argument);
  auto s = ag::sum_all(tp, y);
  tp.backward(s);
  CHECK_THROWS_AS(tp.backward(s), std::logic_error);
}

TEST_CASE("ops do not mutate input value buffers") {
  Rng rng(11);
  auto x = randd({2, 4, 4}, rng, true);
  auto k = randd({3, 2, 3, 3}, rng, true);
  const auto xv = x.value();
  const auto kv = k.value();
  Tape<double> tp;
  auto out = ag::leaky_relu(tp, ag::conv2d(tp, x, k, 1, 1), 0.01);
  auto pooled = ag::maxpool2d(tp, out, 2, 2);
  tp.backward(ag::sum_all(tp, pooled));
  CHECK(x.value() == xv);
  CHECK(k.value() == kv);
}

TEST_CASE("maxpool tie-breaking routes gradient to first index in row-major order") {
  Tape<double> tp;
  auto x = Tensor<double>::from({1, 2, 2}, {0.7, 0.7, 0.7, 0.7}, true);
  auto out = ag::maxpool2d(tp, x, 2, 2);
  tp.backward(ag::sum_all(tp, out));
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 0.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("finite differences: sum of squares at p=[3]") {
  auto p = Tensor<double>::from({1}, {3.0}, true);
  auto f = [&p](Tape<double>& tp) { return ag::sum_all(tp, ag::mul(tp, p, p)); };
  auto rep = ag::finite_difference_check<double>(f, {p}, 1e-4);
  CHECK(rep.max_relative_error < 1e-9);
}

TEST_CASE("finite differences: leaky_relu away from the kink") {
  Rng rng(3);
  auto x = Tensor<double>::zeros({10}, true);
  for (auto& v : x.value()) {
    v = rng.uniform(-1.0, 1.0);
    if (std::abs(v) < 0.1) v += v >= 0 ? 0.2 : -0.2;
  }
  auto f = [&x](Tape<double>& tp) { return ag::sum_all(tp, ag::leaky_relu(tp, x, 0.01)); };
  auto rep = ag::finite_difference_check<double>(f, {x}, 1e-4);
  CHECK(rep.max_relative_error < 1e-8);
}

TEST_CASE("gru step matches the scalar-loop oracle") {
  const std::size_t h1 = 5, h2 = 4;
  Rng rng(17);
  auto x = randd({h1}, rng);
  auto h = randd({h2}, rng);
  auto w_xz = randd({h1, h2}, rng), w_hz = randd({h2, h2}, rng), b_z = randd({h2}, rng);
  auto w_xr = randd({h1, h2}, rng), w_hr = randd({h2, h2}, rng), b_r = randd({h2}, rng);
  auto w_xh = randd({h1, h2}, rng), w_hh = randd({h2, h2}, rng), b_h = randd({h2}, rng);
  Tape<double> tp(false);
  auto out = astn::gru_step(tp, x, h, w_xz, w_hz, b_z, w_xr, w_hr, b_r, w_xh, w_hh, b_h);
  auto ref = oracle::gru_step(x.value(), h.value(), h1, h2, w_xz.value(), w_hz.value(),
                              b_z.value(), w_xr.value(), w_hr.value(), b_r.value(), w_xh.value(),
                              w_hh.value(), b_h.value());
  for (std::size_t i = 0; i < h2; ++i) CHECK(std::abs(out.value()[i] - ref[i]) < 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
  auto p = Tensor<double>::from({3}, {1.0, -2.0, 0.5}, true);
  ag::Adam<double> opt({p});
  const auto before = p.value();
  opt.step();
  CHECK(p.value() == before);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: first-step magnitude matches the closed form") {
  auto p = Tensor<double>::from({2}, {0.3, -0.7}, true);
  const std::vector<double> g = {0.25, -3.0};
  p.grad() = g;
  const double lr = 0.001, eps = 1e-8;
  ag::Adam<double> opt({p}, lr);
  const auto before = p.value();
  opt.step();
  for (std::size_t i = 0; i < 2; ++i) {
    // step 1 with bias correction: delta = lr * g / (|g| + eps)
    const double expected = lr * g[i] / (std::abs(g[i]) + eps);
    CHECK(std::abs((before[i] - p.value()[i]) - expected) < 1e-12);
    CHECK(std::abs(std::abs(before[i] - p.value()[i]) - lr) < 1e-6);
  }
}

TEST_CASE("adam: identical runs are bit-identical") {
  auto run = [] {
    Rng rng(99);
    auto p = Tensor<double>::zeros({8}, true);
    for (auto& v : p.value()) v = rng.uniform(-1, 1);
    ag::Adam<double> opt({p}, 0.01);
    for (int i = 0; i < 20; ++i) {
      Tape<double> tp;
      tp.backward(ag::sum_all(tp, ag::mul(tp, p, p)));
      opt.step();
      p.zero_grad();
    }
    return p.value();
  };
  CHECK(run() == run());
}

TEST_CASE("frozen parameters receive exactly zero gradient") {
  Rng rng(21);
  auto w = randd({3, 3}, rng, true);
  auto x = randd({3}, rng, true);
  w.set_requires_grad(false);  // freeze
  Tape<double> tp;
  tp.backward(ag::sum_all(tp, ag::vecmat(tp, x, w)));
  for (double gv : w.grad()) CHECK(gv == 0.0);
  bool any = false;
  for (double gv : x.grad()) any = any || gv != 0.0;
  CHECK(any);
}

TEST_CASE("checkpoint container round-trips and rejects corruption") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "astn_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "t.ckpt").string();

  Rng rng(31);
  auto a = randd({3, 4}, rng);
  auto b = randd({7}, rng);
  nlohmann::json extra{{"note", 42}};
  ag::save_checkpoint<double>(path, {{"a", a}, {"b", b}}, extra);
  auto loaded = ag::load_checkpoint<double>(path);
  CHECK(loaded.tensors.at("a").value() == a.value());
  CHECK(loaded.tensors.at("b").value() == b.value());
  CHECK(loaded.extra.at("note") == 42);
  CHECK_THROWS(ag::load_checkpoint<float>(path));  // dtype mismatch

  // flip the magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_WITH_AS(ag::load_checkpoint<double>(path),
                       doctest::Contains("bad magic"), std::runtime_error);
  fs::remove_all(dir);
}
