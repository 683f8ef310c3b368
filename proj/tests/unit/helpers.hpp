#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "percnn/grid.hpp"
#include "percnn/rng.hpp"
#include "percnn/tape.hpp"

namespace testutil {

using namespace percnn;

inline Field random_field(Rng& rng, std::size_t channels, Extents extents, double lo = -1.0,
                          double hi = 1.0) {
  Field f(channels, std::move(extents));
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

inline double max_abs_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Builds a scalar from leaves; `leaves` are parameters or constants.
using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_scalar(const Build& build, const std::vector<Field>& inputs) {
  Tape t;
  std::vector<Var> leaves;
  for (const auto& f : inputs) leaves.push_back(t.constant(f));
  return build(t, leaves).value()[0];
}

/// Largest relative error between tape gradients and central differences.
inline double gradcheck(const Build& build, std::vector<Field> inputs, double h = 1e-6,
                        double floor = 1e-8) {
  Tape t;
  std::vector<Var> leaves;
  for (const auto& f : inputs) leaves.push_back(t.parameter(f));
  t.backward(build(t, leaves));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Field g = t.grad(leaves[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x = inputs[i][j];
      inputs[i][j] = x + h;
      const double fp = eval_scalar(build, inputs);
      inputs[i][j] = x - h;
      const double fm = eval_scalar(build, inputs);
      inputs[i][j] = x;
      const double num = (fp - fm) / (2 * h);
      const double rel = std::abs(num - g[j]) / std::max({std::abs(num), std::abs(g[j]), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace testutil
