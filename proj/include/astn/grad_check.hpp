#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "astn/tape.hpp"
#include "astn/tensor.hpp"

namespace astn::ag {

template <typename T>
struct GradCheckReport {
  T max_relative_error = 0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  T worst_analytic = 0;
  T worst_numeric = 0;
};

// Central finite differences against the tape's analytic gradients.
// f must be a pure function of the given parameters: it is re-evaluated many
// times with perturbed values. Relative error is |a-n| / max(1, |a|).
template <typename T>
GradCheckReport<T> finite_difference_check(const std::function<Tensor<T>(Tape<T>&)>& f,
                                           const std::vector<Tensor<T>>& params,
                                           T eps = T(1e-4)) {
  if (!(eps > T(0))) throw std::invalid_argument("finite_difference_check: eps must be > 0");
  for (const auto& p : params) p.data()->grad.assign(p.numel(), T(0));

  Tape<T> tape;
  Tensor<T> loss = f(tape);
  tape.backward(loss);
  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckReport<T> rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].data()->value;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T saved = vals[i];
      vals[i] = saved + eps;
      Tape<T> t1(false);
      const T fp = f(t1).item();
      vals[i] = saved - eps;
      Tape<T> t2(false);
      const T fm = f(t2).item();
      vals[i] = saved;
      const T numeric = (fp - fm) / (T(2) * eps);
      const T a = analytic[pi][i];
      const T err = std::abs(a - numeric) / std::max(T(1), std::abs(a));
      if (err > rep.max_relative_error) {
        rep.max_relative_error = err;
        rep.worst_param = pi;
        rep.worst_coord = i;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  for (const auto& p : params) p.data()->grad.assign(p.numel(), T(0));
  return rep;
}

}  // namespace astn::ag
