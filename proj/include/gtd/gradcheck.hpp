#ifndef GTD_GRADCHECK_HPP
#define GTD_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "gtd/autodiff.hpp"

namespace gtd {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

using ScalarValueFn = std::function<double(const std::vector<Tensor>&)>;
using ScalarGradFn = std::function<std::vector<Tensor>(const std::vector<Tensor>&)>;

/// Compares an analytic gradient with central finite differences, coordinate by coordinate.
/// Relative error per coordinate is |a - fd| / max(|a|, |fd|, 1e-8). The value function may
/// return a wider floating type; differences are then formed in that type.
template <class ValueFn, class GradFn>
GradCheckResult grad_check(const ValueFn& value, const GradFn& gradient, std::vector<Tensor> inputs, double eps) {
  using Real = decltype(value(inputs));
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
  const Real f0 = value(inputs);
  if (!std::isfinite(f0)) throw NumericError("grad_check: non-finite function value");
  const std::vector<Tensor> analytic = gradient(inputs);
  if (analytic.size() != inputs.size()) throw ShapeError("grad_check: gradient count mismatch");

  GradCheckResult result;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    require_same_shape(analytic[a], inputs[a], "grad_check");
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double saved = inputs[a][i];
      inputs[a][i] = saved + eps;
      const double step_up = inputs[a][i] - saved;
      const Real fp = value(inputs);
      inputs[a][i] = saved - eps;
      const double step_down = saved - inputs[a][i];
      const Real fm = value(inputs);
      inputs[a][i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: non-finite function value");
      // Divide by the steps actually taken after rounding x +- eps.
      const double fd = static_cast<double>((fp - fm) / (static_cast<Real>(step_up) + static_cast<Real>(step_down)));
      const double an = analytic[a][i];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      const double err = std::abs(an - fd) / denom;
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = a;
        result.worst_index = i;
        result.analytic = an;
        result.numeric = fd;
      }
    }
  }
  return result;
}

/// A scalar map written against the tape: receives one leaf per input, returns a scalar Var.
using TapeFn = std::function<Var(Graph&, const std::vector<Var>&)>;

inline GradCheckResult grad_check(const TapeFn& fn, std::vector<Tensor> inputs, double eps) {
  auto value = [&fn](const std::vector<Tensor>& xs) {
    Graph g(false);
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(g.leaf(x));
    return g.value(fn(g, leaves))[0];
  };
  auto gradient = [&fn](const std::vector<Tensor>& xs) {
    Graph g(true);
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(g.leaf(x, true));
    Var out = fn(g, leaves);
    g.backward(out);
    std::vector<Tensor> grads;
    for (Var v : leaves) grads.push_back(g.grad(v));
    return grads;
  };
  return grad_check<decltype(value), decltype(gradient)>(value, gradient, std::move(inputs), eps);
}

}  // namespace gtd

#endif  // GTD_GRADCHECK_HPP
