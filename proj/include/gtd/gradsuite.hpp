#ifndef GTD_GRADSUITE_HPP
#define GTD_GRADSUITE_HPP

#include <string>
#include <vector>

#include "gtd/gradcheck.hpp"
#include "gtd/reference.hpp"
#include "gtd/trainer.hpp"

namespace gtd {

struct GradSuiteEntry {
  std::string name;
  GradCheckResult result;
};

namespace detail {

inline Tensor uniform_tensor(Dims dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace detail

/// Tiny-network configuration used by the gradient suite.
inline GtdConfig tiny_gradcheck_config() {
  GtdConfig c;
  c.model.stages = 2;
  c.model.layers_per_stage = 3;
  c.model.channels = 8;
  c.model.num_classes = 4;
  c.model.feature_dim = 6;
  c.model.dropout_rate = 0.5;
  c.diffusion.steps = 100;
  return c;
}

/// Random window of length `frames` with a valid observed/future split.
inline TrainItem random_item(const GtdConfig& cfg, std::size_t frames, std::size_t observed, Rng& rng) {
  TrainItem item;
  item.id = "gradcheck";
  std::uniform_int_distribution<int> cls(0, static_cast<int>(cfg.model.num_classes) - 1);
  for (std::size_t n = 0; n < frames; ++n) item.labels.push_back(cls(rng));
  item.y0 = encode_labels(item.labels, cfg.model.num_classes, cfg.diffusion.label_scaling);
  item.cond = Tensor({frames, cfg.model.feature_dim});
  std::normal_distribution<double> z;
  for (std::size_t n = 0; n < observed; ++n) {
    for (auto& v : item.cond.row(n)) v = z(rng);
  }
  item.observed = observed;
  return item;
}

/// Full training loss over every parameter: tape gradients against finite differences of the
/// extended-precision reference loss. `step` empty means deterministic mode. Dropout masks are
/// redrawn from the same seed on every evaluation so the function is fixed.
inline GradCheckResult check_network_loss(const GtdConfig& cfg, const TrainItem& item, const Tensor& y_t,
                                          const Tensor& self_cond, std::optional<double> step,
                                          std::uint64_t seed, double eps) {
  Rng init(seed);
  const std::vector<Tensor> flat = flatten(init_params(cfg.model, init));
  auto value = [&](const std::vector<Tensor>& xs) {
    Rng mask_rng(seed + 1);
    return reference::training_loss(unflatten(cfg.model, xs), item, y_t, self_cond, step, cfg, true, mask_rng);
  };
  auto gradient = [&](const std::vector<Tensor>& xs) {
    Rng mask_rng(seed + 1);
    Graph g(true);
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(g.leaf(x, true));
    SampleLoss loss = sample_loss(g, bind_leaves(cfg.model, leaves), item, y_t, self_cond, step, cfg, true, mask_rng);
    const double ref = static_cast<double>(value(xs));
    const double tape = g.value(loss.total)[0];
    if (std::abs(ref - tape) > 1e-10 * std::max(1.0, std::abs(ref))) {
      throw NumericError("tape loss " + std::to_string(tape) + " disagrees with reference " + std::to_string(ref));
    }
    g.backward(loss.total);
    std::vector<Tensor> grads;
    for (Var v : leaves) grads.push_back(g.grad(v));
    return grads;
  };
  return grad_check(value, gradient, flat, eps);
}

/// Finite-difference checks for every tape operator (step `eps`) and the full training losses
/// (step `network_eps`; smaller, since the reference oracle leaves room and ReLU kinks get rarer).
inline std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 0, double eps = 1e-5,
                                                      double network_eps = 1e-6) {
  using detail::uniform_tensor;
  Rng rng(seed);
  std::vector<GradSuiteEntry> out;
  auto add = [&](std::string name, const TapeFn& fn, std::vector<Tensor> inputs, double e) {
    out.push_back({std::move(name), grad_check(fn, std::move(inputs), e)});
  };
  // Scalarise an op output with a fixed random projection so every output coordinate matters.
  auto project = [](Graph& g, Var y, const Tensor& r) { return ops::weighted_mse(g, y, r, std::vector<double>(r.dim(1), 1.0)); };

  const std::size_t n = 9;
  const Tensor r3 = uniform_tensor({3, n}, rng);
  for (int d : {1, 2, 4}) {
    add("conv1d_d" + std::to_string(d),
        [&, d](Graph& g, const std::vector<Var>& v) { return project(g, ops::conv1d(g, v[0], v[1], v[2], d), r3); },
        {uniform_tensor({2, n}, rng), uniform_tensor({3, 2, 3}, rng), uniform_tensor({3}, rng)}, eps);
  }
  add("sigmoid", [&](Graph& g, const std::vector<Var>& v) { return project(g, ops::sigmoid(g, v[0]), r3); },
      {uniform_tensor({3, n}, rng)}, eps);
  add("relu", [&](Graph& g, const std::vector<Var>& v) { return project(g, ops::relu(g, v[0]), r3); },
      {uniform_tensor({3, n}, rng)}, eps);
  add("add", [&](Graph& g, const std::vector<Var>& v) { return project(g, ops::add(g, v[0], v[1]), r3); },
      {uniform_tensor({3, n}, rng), uniform_tensor({3, n}, rng)}, eps);
  add("mul", [&](Graph& g, const std::vector<Var>& v) { return project(g, ops::mul(g, v[0], v[1]), r3); },
      {uniform_tensor({3, n}, rng), uniform_tensor({3, n}, rng)}, eps);
  add("dropout",
      [&](Graph& g, const std::vector<Var>& v) {
        Rng mask(seed + 7);
        return project(g, ops::dropout(g, v[0], 0.4, mask, true), r3);
      },
      {uniform_tensor({3, n}, rng)}, eps);
  const Tensor r5 = uniform_tensor({5, n}, rng);
  add("concat_rows",
      [&](Graph& g, const std::vector<Var>& v) { return project(g, ops::concat_rows(g, {v[0], v[1]}), r5); },
      {uniform_tensor({2, n}, rng), uniform_tensor({3, n}, rng)}, eps);
  add("add_broadcast",
      [&](Graph& g, const std::vector<Var>& v) { return project(g, ops::add_broadcast(g, v[0], v[1]), r3); },
      {uniform_tensor({3, n}, rng), uniform_tensor({3, 1}, rng)}, eps);

  std::vector<double> w(n);
  for (auto& x : w) x = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  std::vector<int> classes(n);
  for (auto& c : classes) c = std::uniform_int_distribution<int>(0, 2)(rng);
  const Tensor probs = uniform_tensor({3, n}, rng, 0.0, 1.0);
  add("weighted_mse", [&](Graph& g, const std::vector<Var>& v) { return ops::weighted_mse(g, v[0], r3, w); },
      {uniform_tensor({3, n}, rng)}, eps);
  add("weighted_softmax_ce",
      [&](Graph& g, const std::vector<Var>& v) { return ops::weighted_softmax_ce(g, v[0], classes, w); },
      {uniform_tensor({3, n}, rng)}, eps);
  add("weighted_bce", [&](Graph& g, const std::vector<Var>& v) { return ops::weighted_bce(g, v[0], probs, w); },
      {uniform_tensor({3, n}, rng)}, eps);
  add("sum", [&](Graph& g, const std::vector<Var>& v) { return ops::sum(g, {v[0], v[1]}); },
      {uniform_tensor({1}, rng), uniform_tensor({1}, rng)}, eps);

  // Whole network at the tiny configuration, fixed t and epsilon.
  const std::size_t frames = 16, observed = 5;
  struct Variant {
    std::string name;
    LossKind loss;
    GatingMode gating;
    double obs_weight;
  };
  const std::vector<Variant> variants = {
      {"stochastic_mse", LossKind::mse, GatingMode::gated, 1.0},
      {"stochastic_ce", LossKind::ce, GatingMode::gated, 1.0},
      {"stochastic_bce", LossKind::bce, GatingMode::gated, 0.5},
      {"stochastic_mse_feature_only", LossKind::mse, GatingMode::feature_only, 1.0},
      {"stochastic_mse_undilated_gate", LossKind::mse, GatingMode::gated_undilated_gate, 0.0},
  };
  for (const auto& v : variants) {
    GtdConfig cfg = tiny_gradcheck_config();
    cfg.train.loss = v.loss;
    cfg.model.gating_mode = v.gating;
    cfg.train.obs_loss_weight = v.obs_weight;
    const NoiseSchedule schedule = make_schedule(cfg.diffusion.schedule, cfg.diffusion.steps);
    TrainItem item = random_item(cfg, frames, observed, rng);
    const int t = std::uniform_int_distribution<int>(1, cfg.diffusion.steps)(rng);
    Tensor eps_noise(item.y0.dims());
    fill_normal(eps_noise, rng);
    const Tensor y_t = q_sample(item.y0, t, eps_noise, schedule);
    // The self-conditioning estimate is gradient-stopped, i.e. a constant input here.
    const Tensor self_cond = uniform_tensor(item.y0.dims(), rng);
    out.push_back({v.name, check_network_loss(cfg, item, y_t, self_cond, static_cast<double>(t), seed + 11, network_eps)});
  }
  {
    GtdConfig cfg = tiny_gradcheck_config();
    cfg.train.mode = TrainMode::deterministic;
    cfg.train.loss = LossKind::ce;
    TrainItem item = random_item(cfg, frames, observed, rng);
    Tensor zeros(item.y0.dims());
    out.push_back({"deterministic_ce", check_network_loss(cfg, item, zeros, zeros, std::nullopt, seed + 13, network_eps)});
  }
  return out;
}

}  // namespace gtd

#endif  // GTD_GRADSUITE_HPP
