#pragma once

#include <string>
#include <vector>

#include "astn/data.hpp"
#include "astn/model.hpp"

namespace astn {

struct GradCheck {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// 64-bit central finite-difference verification of every differentiable
// primitive and of the composite losses J_C, J_D and lambda*J_A on a toy
// configuration, each over a fixed set of seeds. corrupt_op, when non-empty,
// injects a deliberately wrong backward into that primitive's check (fault
// injection hook); the corresponding entry must then fail.
std::vector<GradCheck> run_gradient_suite(const std::string& corrupt_op = "");

// Max relative FD error of a smooth high-magnitude composite at the given
// step size; exposes the truncation vs round-off tradeoff around 1e-4.
double eps_sweep_error(double eps);

// Small double-precision fixtures shared with tests: a toy config and a toy
// cohort of three short trials (two subjects).
AstnConfig toy_astn_config();
Cohort toy_cohort(std::uint64_t seed, std::size_t t0 = 3, std::size_t t1 = 2,
                  std::size_t t2 = 3);

}  // namespace astn
