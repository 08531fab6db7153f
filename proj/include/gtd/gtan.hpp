#ifndef GTD_GTAN_HPP
#define GTD_GTAN_HPP

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gtd/autodiff.hpp"

namespace gtd {

enum class GatingMode {
  gated,                 ///< sigma(W_g * H + b_g) (.) (W_f * H + b_f), both at dilation 2^l
  feature_only,          ///< no gate branch: W_f * H + b_f
  gated_undilated_gate,  ///< as gated, but the gate convolution uses dilation 1
};

inline std::string to_string(GatingMode m) {
  switch (m) {
    case GatingMode::gated: return "gated";
    case GatingMode::feature_only: return "feature_only";
    case GatingMode::gated_undilated_gate: return "gated_undilated_gate";
  }
  return "?";
}

inline GatingMode parse_gating_mode(std::string_view s) {
  if (s == "gated") return GatingMode::gated;
  if (s == "feature_only") return GatingMode::feature_only;
  if (s == "gated_undilated_gate") return GatingMode::gated_undilated_gate;
  throw ConfigError("unknown gating mode '" + std::string(s) + "'");
}

struct GtanConfig {
  std::size_t stages = 5;
  std::size_t layers_per_stage = 9;
  std::size_t channels = 64;
  std::size_t kernel_size = 3;
  std::size_t num_classes = 8;
  std::size_t feature_dim = 16;
  double dropout_rate = 0.5;
  GatingMode gating_mode = GatingMode::gated;
  std::size_t embed_dim = 0;  ///< 0 means "same as channels"

  std::size_t step_embed_dim() const { return embed_dim == 0 ? channels : embed_dim; }
  std::size_t input_width() const { return 2 * num_classes + feature_dim; }

  void validate() const {
    if (stages < 1) throw ConfigError("model.stages must be >= 1");
    if (layers_per_stage < 1 || layers_per_stage > 30) throw ConfigError("model.layers must be in [1,30]");
    if (channels < 1) throw ConfigError("model.channels must be >= 1");
    if (kernel_size % 2 == 0) throw ConfigError("model.kernel_size must be odd");
    if (num_classes < 2) throw ConfigError("model.classes must be >= 2");
    if (feature_dim < 1) throw ConfigError("model.feature_dim must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model.dropout must be in [0,1)");
    if (step_embed_dim() % 2 != 0) throw ConfigError("model.embed_dim must be even");
  }

  bool has_gate() const { return gating_mode != GatingMode::feature_only; }

  friend bool operator==(const GtanConfig&, const GtanConfig&) = default;
};

// ---------------------------------------------------------------------------
// Parameter layout. The same tree shape holds tensors (ModelParams) or tape
// variables bound to them (ParamVars); `visit` walks it in a fixed order.
// ---------------------------------------------------------------------------

template <class T>
struct ConvSlot {
  T weight{};
  T bias{};
};

template <class T>
struct LayerSlots {
  ConvSlot<T> gate;
  ConvSlot<T> feature;
  ConvSlot<T> pointwise;
};

template <class T>
struct StageSlots {
  ConvSlot<T> input;
  std::vector<LayerSlots<T>> layers;
  ConvSlot<T> head;
};

template <class T>
struct ParamTree {
  GtanConfig config;
  ConvSlot<T> step;
  std::vector<StageSlots<T>> stages;

  /// Calls f(name, dims, slot) for every parameter in layout order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    const GtanConfig& c = self.config;
    const std::size_t ch = c.channels, k = c.kernel_size;
    auto conv = [&f](const std::string& name, auto& slot, std::size_t out, std::size_t in, std::size_t taps) {
      f(name + ".w", Dims{out, in, taps}, slot.weight);
      f(name + ".b", Dims{out}, slot.bias);
    };
    conv("step", self.step, ch, c.step_embed_dim(), 1);
    for (std::size_t s = 0; s < self.stages.size(); ++s) {
      auto& stage = self.stages[s];
      const std::string sp = "stage" + std::to_string(s);
      const std::size_t in_width = c.input_width() + (s == 0 ? 0 : c.num_classes);
      conv(sp + ".in", stage.input, ch, in_width, 1);
      for (std::size_t l = 0; l < stage.layers.size(); ++l) {
        auto& layer = stage.layers[l];
        const std::string lp = sp + ".layer" + std::to_string(l);
        if (c.has_gate()) conv(lp + ".gate", layer.gate, ch, ch, k);
        conv(lp + ".feature", layer.feature, ch, ch, k);
        conv(lp + ".pointwise", layer.pointwise, ch, ch, 1);
      }
      conv(sp + ".head", stage.head, c.num_classes, ch, 1);
    }
  }
};

template <class T>
ParamTree<T> make_param_tree(const GtanConfig& config) {
  config.validate();
  ParamTree<T> tree;
  tree.config = config;
  tree.stages.resize(config.stages);
  for (auto& s : tree.stages) s.layers.resize(config.layers_per_stage);
  return tree;
}

using ModelParams = ParamTree<Tensor>;
using ParamVars = ParamTree<Var>;

/// Zero-filled parameters with the layout implied by `config`.
inline ModelParams zero_params(const GtanConfig& config) {
  ModelParams p = make_param_tree<Tensor>(config);
  p.visit([](const std::string&, const Dims& dims, Tensor& t) { t = Tensor(dims); });
  return p;
}

/// Uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline ModelParams init_params(const GtanConfig& config, Rng& rng) {
  ModelParams p = make_param_tree<Tensor>(config);
  Dims last_weight_dims;
  p.visit([&](const std::string&, const Dims& dims, Tensor& t) {
    t = Tensor(dims);
    if (dims.size() == 3) last_weight_dims = dims;
    const double fan_in = static_cast<double>(last_weight_dims[1] * last_weight_dims[2]);
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (auto& v : t.data()) v = u(rng);
  });
  return p;
}

inline std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  params.visit([&n](const std::string&, const Dims&, const Tensor& t) { n += t.size(); });
  return n;
}

/// Flat list of parameter tensors in layout order.
inline std::vector<Tensor> flatten(const ModelParams& params) {
  std::vector<Tensor> out;
  params.visit([&out](const std::string&, const Dims&, const Tensor& t) { out.push_back(t); });
  return out;
}

inline ModelParams unflatten(const GtanConfig& config, const std::vector<Tensor>& flat) {
  ModelParams p = make_param_tree<Tensor>(config);
  std::size_t i = 0;
  p.visit([&](const std::string& name, const Dims& dims, Tensor& t) {
    if (i >= flat.size()) throw ShapeError("too few parameter tensors");
    if (flat[i].dims() != dims) throw ShapeError("parameter " + name + " has wrong extents");
    t = flat[i++];
  });
  if (i != flat.size()) throw ShapeError("too many parameter tensors");
  return p;
}

inline std::vector<std::string> parameter_names(const GtanConfig& config) {
  std::vector<std::string> names;
  make_param_tree<Tensor>(config).visit(
      [&names](const std::string& name, const Dims&, const Tensor&) { names.push_back(name); });
  return names;
}

/// Binds every parameter as a tape leaf.
inline ParamVars bind(Graph& g, const ModelParams& params, bool requires_grad) {
  std::vector<Var> leaves;
  params.visit([&](const std::string&, const Dims&, const Tensor& t) { leaves.push_back(g.leaf(t, requires_grad)); });
  ParamVars vars = make_param_tree<Var>(params.config);
  std::size_t i = 0;
  vars.visit([&](const std::string&, const Dims&, Var& v) { v = leaves[i++]; });
  return vars;
}

/// Gradients of every bound parameter, in layout order, after Graph::backward.
inline std::vector<Tensor> collect_grads(const Graph& g, const ParamVars& vars) {
  std::vector<Tensor> grads;
  vars.visit([&](const std::string&, const Dims&, const Var& v) { grads.push_back(g.grad(v)); });
  return grads;
}

// ---------------------------------------------------------------------------
// Forward pieces.
// ---------------------------------------------------------------------------

/// Half sines then half cosines of t at frequencies 10000^(-2i/dim).
inline std::vector<double> sinusoidal_step_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("step embedding dimension must be even and positive");
  if (t < 0) throw ConfigError("diffusion step must be >= 0");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

/// Per-frame concatenation [Y_t | self_cond | condition] -> N x (2C + D).
inline Tensor assemble_input(const Tensor& y_t, const Tensor& self_cond, const Tensor& cond) {
  if (y_t.rank() != 2 || self_cond.rank() != 2 || cond.rank() != 2) {
    throw ShapeError("assemble_input: expected rank-2 tensors");
  }
  const std::size_t n = y_t.dim(0);
  if (self_cond.dim(0) != n || cond.dim(0) != n) throw ShapeError("assemble_input: frame count mismatch");
  if (self_cond.dim(1) != y_t.dim(1)) throw ShapeError("assemble_input: self-conditioning width mismatch");
  const std::size_t c = y_t.dim(1), d = cond.dim(1);
  Tensor out({n, 2 * c + d});
  for (std::size_t t = 0; t < n; ++t) {
    auto row = out.row(t);
    std::copy(y_t.row(t).begin(), y_t.row(t).end(), row.begin());
    std::copy(self_cond.row(t).begin(), self_cond.row(t).end(), row.begin() + static_cast<long>(c));
    std::copy(cond.row(t).begin(), cond.row(t).end(), row.begin() + static_cast<long>(2 * c));
  }
  return out;
}

/// Sigmoid gate activations per stage and layer, each channels x N.
struct GateTrace {
  std::vector<std::vector<Tensor>> gates;
};

inline int layer_dilation(std::size_t layer) { return 1 << layer; }

/// One residual GTA block on a channels x N activation.
inline Var gta_block(Graph& g, Var h, const LayerSlots<Var>& p, std::size_t layer, const GtanConfig& config,
                     bool train, Rng& rng, Tensor* gate_out = nullptr) {
  const int dil = layer_dilation(layer);
  Var feature = ops::conv1d(g, h, p.feature.weight, p.feature.bias, dil);
  Var mixed = feature;
  if (config.has_gate()) {
    const int gate_dil = config.gating_mode == GatingMode::gated_undilated_gate ? 1 : dil;
    Var gate = ops::sigmoid(g, ops::conv1d(g, h, p.gate.weight, p.gate.bias, gate_dil));
    if (gate_out) *gate_out = g.value(gate);
    mixed = ops::mul(g, gate, feature);
  }
  Var dropped = ops::dropout(g, mixed, config.dropout_rate, rng, train);
  Var activated = ops::relu(g, ops::conv1d(g, dropped, p.pointwise.weight, p.pointwise.bias, 1));
  return ops::add(g, h, activated);
}

/// Stage outputs as tape variables, each C x N (raw scores).
struct TapeOutputs {
  std::vector<Var> stages;
};

/// Runs the generator on the tape. `step` is empty in deterministic mode (no step embedding).
inline TapeOutputs gtan_forward_tape(Graph& g, const ParamVars& p, const Tensor& y_t, const Tensor& self_cond,
                                     const Tensor& cond, std::optional<double> step, bool train, Rng& rng,
                                     GateTrace* trace = nullptr) {
  const GtanConfig& c = p.config;
  if (y_t.rank() != 2 || y_t.dim(1) != c.num_classes) throw ShapeError("gtan: Y_t must be N x C");
  if (cond.rank() != 2 || cond.dim(1) != c.feature_dim) throw ShapeError("gtan: condition must be N x D");
  Var assembled = g.leaf(assemble_input(y_t, self_cond, cond).transposed());

  std::optional<Var> step_proj;
  if (step) {
    auto emb = sinusoidal_step_embedding(*step, c.step_embed_dim());
    const std::size_t width = emb.size();
    Var e = g.leaf(Tensor({width, 1}, std::move(emb)));
    step_proj = ops::conv1d(g, e, p.step.weight, p.step.bias, 1);
  }
  if (trace) trace->gates.assign(c.stages, std::vector<Tensor>(c.layers_per_stage));

  TapeOutputs out;
  for (std::size_t s = 0; s < c.stages; ++s) {
    const auto& stage = p.stages[s];
    Var in = s == 0 ? assembled : ops::concat_rows(g, {out.stages.back(), assembled});
    Var h = ops::conv1d(g, in, stage.input.weight, stage.input.bias, 1);
    if (step_proj) h = ops::add_broadcast(g, h, *step_proj);
    for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
      Tensor* gate_out = trace && c.has_gate() ? &trace->gates[s][l] : nullptr;
      h = gta_block(g, h, stage.layers[l], l, c, train, rng, gate_out);
    }
    out.stages.push_back(ops::conv1d(g, h, stage.head.weight, stage.head.bias, 1));
  }
  return out;
}

struct GtanOutput {
  std::vector<Tensor> stages;  ///< each N x C
  GateTrace gates;
};

/// Value-only forward pass returning N x C stage outputs and gate activations.
inline GtanOutput gtan_forward(const ModelParams& params, const Tensor& y_t, const Tensor& self_cond,
                               const Tensor& cond, std::optional<double> step, bool train, Rng& rng) {
  Graph g(false);
  ParamVars vars = bind(g, params, false);
  GtanOutput out;
  TapeOutputs t = gtan_forward_tape(g, vars, y_t, self_cond, cond, step, train, rng, &out.gates);
  for (Var v : t.stages) out.stages.push_back(g.value(v).transposed());
  return out;
}

/// Half-width of the temporal window a single stage can see: sum_l 2^l * (K-1)/2.
inline std::size_t receptive_radius(const GtanConfig& c) {
  std::size_t r = 0;
  for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
    r += static_cast<std::size_t>(layer_dilation(l)) * (c.kernel_size - 1) / 2;
  }
  return r;
}

}  // namespace gtd

#endif  // GTD_GTAN_HPP
