#ifndef GTD_AUTODIFF_HPP
#define GTD_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gtd/tensor.hpp"

namespace gtd {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Pure kernels. Activations are channel-major: rows are channels, columns frames.
// ---------------------------------------------------------------------------

namespace kernels {

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b, int dilation) {
  if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1, got " + std::to_string(dilation));
  if (x.rank() != 2 || w.rank() != 3 || b.rank() != 1) {
    throw ShapeError("conv1d: expected input C_in x N, weights C_out x C_in x K, bias C_out; got " +
                     dims_to_string(x.dims()) + ", " + dims_to_string(w.dims()) + ", " +
                     dims_to_string(b.dims()));
  }
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError("conv1d: weights expect " + std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(0)));
  }
  if (b.dim(0) != w.dim(0)) throw ShapeError("conv1d: bias length does not match output channels");
  if (w.dim(2) % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
}

/// Same-length, zero-padded, centered dilated convolution.
/// out[c,n] = b[c] + sum_{i,k} w[c,i,k] * x[i, n + (k - (K-1)/2) * dilation]
inline Tensor conv1d_dilated(const Tensor& x, const Tensor& w, const Tensor& b, int dilation) {
  check_conv_args(x, w, b, dilation);
  const std::size_t c_out = w.dim(0), c_in = w.dim(1), taps = w.dim(2), n = x.dim(1);
  const long half = static_cast<long>(taps - 1) / 2;
  const long len = static_cast<long>(n);
  Tensor out({c_out, n});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  double* od = out.data().data();
  for (std::size_t c = 0; c < c_out; ++c) {
    double* orow = od + c * n;
    std::fill(orow, orow + n, b[c]);
    for (std::size_t i = 0; i < c_in; ++i) {
      const double* xrow = xd + i * n;
      for (std::size_t k = 0; k < taps; ++k) {
        const double wv = wd[(c * c_in + i) * taps + k];
        if (wv == 0.0) continue;
        const long off = (static_cast<long>(k) - half) * dilation;
        const long lo = std::max(0L, -off);
        const long hi = std::min(len, len - off);
        for (long t = lo; t < hi; ++t) orow[t] += wv * xrow[t + off];
      }
    }
  }
  return out;
}

/// Vector-Jacobian product of conv1d_dilated for upstream gradient `gout` (C_out x N).
inline ConvGrads conv1d_dilated_vjp(const Tensor& x, const Tensor& w, const Tensor& gout, int dilation) {
  const std::size_t c_out = w.dim(0), c_in = w.dim(1), taps = w.dim(2), n = x.dim(1);
  const long half = static_cast<long>(taps - 1) / 2;
  const long len = static_cast<long>(n);
  ConvGrads g{Tensor(x.dims()), Tensor(w.dims()), Tensor({c_out})};
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* gd = gout.data().data();
  double* gx = g.input.data().data();
  double* gw = g.weights.data().data();
  for (std::size_t c = 0; c < c_out; ++c) {
    const double* grow = gd + c * n;
    double bias_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) bias_sum += grow[t];
    g.bias[c] = bias_sum;
    for (std::size_t i = 0; i < c_in; ++i) {
      const double* xrow = xd + i * n;
      double* gxrow = gx + i * n;
      for (std::size_t k = 0; k < taps; ++k) {
        const long off = (static_cast<long>(k) - half) * dilation;
        const long lo = std::max(0L, -off);
        const long hi = std::min(len, len - off);
        const double wv = wd[(c * c_in + i) * taps + k];
        double acc = 0.0;
        for (long t = lo; t < hi; ++t) {
          acc += grow[t] * xrow[t + off];
          gxrow[t + off] += wv * grow[t];
        }
        gw[(c * c_in + i) * taps + k] = acc;
      }
    }
  }
  return g;
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

/// Softmax over channels (rows) for every frame (column) of a C x N tensor.
inline Tensor softmax_channels(const Tensor& logits) {
  const std::size_t c = logits.dim(0), n = logits.dim(1);
  Tensor out(logits.dims());
  for (std::size_t t = 0; t < n; ++t) {
    double mx = logits.at(0, t);
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, logits.at(k, t));
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      out.at(k, t) = std::exp(logits.at(k, t) - mx);
      z += out.at(k, t);
    }
    for (std::size_t k = 0; k < c; ++k) out.at(k, t) /= z;
  }
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Reverse-mode tape.
// ---------------------------------------------------------------------------

enum class OpKind : std::uint8_t {
  Leaf,
  Conv1d,
  Sigmoid,
  Relu,
  Add,
  Mul,
  Dropout,
  Concat,
  AddBroadcast,
  MseLoss,
  SoftmaxCeLoss,
  BceLoss,
  Sum,
};

struct Var {
  std::size_t id = 0;
};

/// Records operations as they are evaluated and replays their vector-Jacobian
/// products in reverse. A graph built with `recording == false` only computes values.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const noexcept { return recording_; }

  Var leaf(Tensor value, bool requires_grad = false) {
    return push(OpKind::Leaf, {}, std::move(value), requires_grad && recording_, nullptr);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  /// Gradient accumulated at `v` by the last backward(); zeros if none reached it.
  Tensor grad(Var v) const {
    const Node& node = nodes_.at(v.id);
    if (!backward_done_) throw Error("grad requested before backward");
    if (node.grad.empty()) return Tensor(node.value.dims());
    return node.grad;
  }

  bool contains(OpKind kind) const {
    return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.kind == kind; });
  }

  /// Seeds d(out)/d(out) = 1 for a scalar output and propagates to every node.
  void backward(Var out) {
    if (!recording_) throw Error("backward on a non-recording graph");
    Node& root = nodes_.at(out.id);
    if (root.value.size() != 1) throw ShapeError("backward needs a scalar output");
    root.grad = Tensor(root.value.dims(), 1.0);
    for (std::size_t id = out.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.backward || node.grad.empty()) continue;
      node.backward(*this, node.grad);
    }
    backward_done_ = true;
  }

  // Used by op implementations.
  using Backward = std::function<void(Graph&, const Tensor&)>;

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, bool needs_grad, Backward bw) {
    if (!value.all_finite()) {
      throw NumericError("non-finite value produced by op #" + std::to_string(static_cast<int>(kind)));
    }
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), Tensor{}, needs_grad,
                          needs_grad ? std::move(bw) : Backward{}});
    return Var{nodes_.size() - 1};
  }

  bool any_needs_grad(std::initializer_list<Var> vars) const {
    if (!recording_) return false;
    for (Var v : vars) {
      if (nodes_.at(v.id).needs_grad) return true;
    }
    return false;
  }

  /// Adds `g` into the gradient buffer of `v` when `v` participates in differentiation.
  void accumulate(Var v, const Tensor& g) {
    Node& node = nodes_[v.id];
    if (!node.needs_grad) return;
    if (node.grad.empty()) {
      node.grad = g;
      return;
    }
    auto dst = node.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool needs_grad;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

namespace ops {

inline Var conv1d(Graph& g, Var x, Var w, Var b, int dilation) {
  Tensor out = kernels::conv1d_dilated(g.value(x), g.value(w), g.value(b), dilation);
  const bool ng = g.any_needs_grad({x, w, b});
  return g.push(OpKind::Conv1d, {x.id, w.id, b.id}, std::move(out), ng,
                [x, w, b, dilation](Graph& gr, const Tensor& gout) {
                  auto grads = kernels::conv1d_dilated_vjp(gr.value(x), gr.value(w), gout, dilation);
                  gr.accumulate(x, grads.input);
                  gr.accumulate(w, grads.weights);
                  gr.accumulate(b, grads.bias);
                });
}

inline Var sigmoid(Graph& g, Var x) {
  Tensor out(g.value(x).dims());
  const Tensor& in = g.value(x);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = kernels::sigmoid(in[i]);
  const bool ng = g.any_needs_grad({x});
  const std::size_t self = g.size();
  return g.push(OpKind::Sigmoid, {x.id}, std::move(out), ng, [x, self](Graph& gr, const Tensor& gout) {
    const Tensor& s = gr.value(Var{self});
    Tensor gx(s.dims());
    for (std::size_t i = 0; i < s.size(); ++i) gx[i] = gout[i] * s[i] * (1.0 - s[i]);
    gr.accumulate(x, gx);
  });
}

inline Var relu(Graph& g, Var x) {
  const Tensor& in = g.value(x);
  Tensor out(in.dims());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  const bool ng = g.any_needs_grad({x});
  return g.push(OpKind::Relu, {x.id}, std::move(out), ng, [x](Graph& gr, const Tensor& gout) {
    const Tensor& in = gr.value(x);
    Tensor gx(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] = in[i] > 0.0 ? gout[i] : 0.0;
    gr.accumulate(x, gx);
  });
}

inline Var add(Graph& g, Var x, Var y) {
  require_same_shape(g.value(x), g.value(y), "add");
  Tensor out = g.value(x);
  const Tensor& b = g.value(y);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  const bool ng = g.any_needs_grad({x, y});
  return g.push(OpKind::Add, {x.id, y.id}, std::move(out), ng, [x, y](Graph& gr, const Tensor& gout) {
    gr.accumulate(x, gout);
    gr.accumulate(y, gout);
  });
}

inline Var mul(Graph& g, Var x, Var y) {
  require_same_shape(g.value(x), g.value(y), "mul");
  Tensor out = g.value(x);
  const Tensor& b = g.value(y);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  const bool ng = g.any_needs_grad({x, y});
  return g.push(OpKind::Mul, {x.id, y.id}, std::move(out), ng, [x, y](Graph& gr, const Tensor& gout) {
    const Tensor& a = gr.value(x);
    const Tensor& b = gr.value(y);
    Tensor ga(a.dims()), gb(b.dims());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ga[i] = gout[i] * b[i];
      gb[i] = gout[i] * a[i];
    }
    gr.accumulate(x, ga);
    gr.accumulate(y, gb);
  });
}

/// Inverted dropout. In training mode each entry is zeroed with probability `rate` and
/// survivors are scaled by 1/(1-rate); otherwise the input passes through unchanged.
inline Var dropout(Graph& g, Var x, double rate, Rng& rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
  if (!train || rate == 0.0) return x;
  const Tensor& in = g.value(x);
  Tensor mask(in.dims());
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale : 0.0;
  Tensor out = in;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const bool ng = g.any_needs_grad({x});
  return g.push(OpKind::Dropout, {x.id}, std::move(out), ng,
                [x, mask = std::move(mask)](Graph& gr, const Tensor& gout) {
                  Tensor gx(gout.dims());
                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gout[i] * mask[i];
                  gr.accumulate(x, gx);
                });
}

/// Stacks rank-2 tensors along rows (channels). All parts share the column count.
inline Var concat_rows(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t cols = g.value(parts.front()).dim(1);
  std::size_t rows = 0;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    if (t.rank() != 2 || t.dim(1) != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += t.dim(0);
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  bool ng = false;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<long>(offset));
    offset += t.size();
    ids.push_back(p.id);
    ng = ng || g.any_needs_grad({p});
  }
  return g.push(OpKind::Concat, std::move(ids), std::move(out), ng, [parts](Graph& gr, const Tensor& gout) {
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& t = gr.value(p);
      if (gr.needs_grad(p)) {
        Tensor gp(t.dims());
        std::copy(gout.data().begin() + static_cast<long>(off),
                  gout.data().begin() + static_cast<long>(off + t.size()), gp.data().begin());
        gr.accumulate(p, gp);
      }
      off += t.size();
    }
  });
}

/// x (C x N) plus column vector v (C x 1) added to every frame.
inline Var add_broadcast(Graph& g, Var x, Var v) {
  const Tensor& a = g.value(x);
  const Tensor& col = g.value(v);
  if (col.rank() != 2 || col.dim(1) != 1 || col.dim(0) != a.dim(0)) {
    throw ShapeError("add_broadcast: expected " + std::to_string(a.dim(0)) + "x1 column, got " +
                     dims_to_string(col.dims()));
  }
  Tensor out = a;
  const std::size_t n = a.dim(1);
  for (std::size_t c = 0; c < a.dim(0); ++c) {
    for (std::size_t t = 0; t < n; ++t) out.at(c, t) += col[c];
  }
  const bool ng = g.any_needs_grad({x, v});
  return g.push(OpKind::AddBroadcast, {x.id, v.id}, std::move(out), ng, [x, v](Graph& gr, const Tensor& gout) {
    gr.accumulate(x, gout);
    const std::size_t rows = gout.dim(0), cols = gout.dim(1);
    Tensor gv({rows, 1});
    for (std::size_t c = 0; c < rows; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < cols; ++t) s += gout.at(c, t);
      gv[c] = s;
    }
    gr.accumulate(v, gv);
  });
}

inline void check_frame_weights(const Tensor& pred, std::span<const double> frame_weights, const char* what) {
  if (pred.rank() != 2 || frame_weights.size() != pred.dim(1)) {
    throw ShapeError(std::string(what) + ": frame weight count does not match frame count");
  }
}

/// sum_n w_n * mean_c (pred[c,n] - target[c,n])^2
inline Var weighted_mse(Graph& g, Var pred, const Tensor& target, std::vector<double> frame_weights) {
  const Tensor& p = g.value(pred);
  require_same_shape(p, target, "weighted_mse");
  check_frame_weights(p, frame_weights, "weighted_mse");
  const std::size_t c = p.dim(0), n = p.dim(1);
  double loss = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      const double d = p.at(k, t) - target.at(k, t);
      loss += frame_weights[t] * d * d / static_cast<double>(c);
    }
  }
  const bool ng = g.any_needs_grad({pred});
  return g.push(OpKind::MseLoss, {pred.id}, Tensor({1}, loss), ng,
                [pred, target, w = std::move(frame_weights)](Graph& gr, const Tensor& gout) {
                  const Tensor& p = gr.value(pred);
                  const std::size_t c = p.dim(0), n = p.dim(1);
                  Tensor gp(p.dims());
                  for (std::size_t k = 0; k < c; ++k) {
                    for (std::size_t t = 0; t < n; ++t) {
                      gp.at(k, t) = gout[0] * 2.0 * w[t] * (p.at(k, t) - target.at(k, t)) / static_cast<double>(c);
                    }
                  }
                  gr.accumulate(pred, gp);
                });
}

/// sum_n w_n * -log softmax(logits[:,n])[class_n]
inline Var weighted_softmax_ce(Graph& g, Var logits, std::vector<int> classes, std::vector<double> frame_weights) {
  const Tensor& z = g.value(logits);
  check_frame_weights(z, frame_weights, "weighted_softmax_ce");
  if (classes.size() != z.dim(1)) throw ShapeError("weighted_softmax_ce: class count does not match frames");
  const std::size_t c = z.dim(0), n = z.dim(1);
  Tensor probs = kernels::softmax_channels(z);
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto k = static_cast<std::size_t>(classes[t]);
    if (k >= c) throw ShapeError("weighted_softmax_ce: class id out of range");
    double mx = z.at(0, t);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at(j, t));
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(z.at(j, t) - mx);
    loss += frame_weights[t] * (std::log(lse) + mx - z.at(k, t));
  }
  const bool ng = g.any_needs_grad({logits});
  return g.push(OpKind::SoftmaxCeLoss, {logits.id}, Tensor({1}, loss), ng,
                [logits, probs = std::move(probs), cls = std::move(classes), w = std::move(frame_weights)](
                    Graph& gr, const Tensor& gout) {
                  const std::size_t c = probs.dim(0), n = probs.dim(1);
                  Tensor gz(probs.dims());
                  for (std::size_t t = 0; t < n; ++t) {
                    for (std::size_t j = 0; j < c; ++j) {
                      const double onehot = static_cast<int>(j) == cls[t] ? 1.0 : 0.0;
                      gz.at(j, t) = gout[0] * w[t] * (probs.at(j, t) - onehot);
                    }
                  }
                  gr.accumulate(logits, gz);
                });
}

/// sum_n w_n * mean_c BCE(sigmoid(logits[c,n]), target[c,n]), target in [0,1].
inline Var weighted_bce(Graph& g, Var logits, const Tensor& target, std::vector<double> frame_weights) {
  const Tensor& z = g.value(logits);
  require_same_shape(z, target, "weighted_bce");
  check_frame_weights(z, frame_weights, "weighted_bce");
  const std::size_t c = z.dim(0), n = z.dim(1);
  double loss = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      const double x = z.at(k, t), y = target.at(k, t);
      // log(1+exp(-|x|)) + max(x,0) - x*y
      const double l = std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0) - x * y;
      loss += frame_weights[t] * l / static_cast<double>(c);
    }
  }
  const bool ng = g.any_needs_grad({logits});
  return g.push(OpKind::BceLoss, {logits.id}, Tensor({1}, loss), ng,
                [logits, target, w = std::move(frame_weights)](Graph& gr, const Tensor& gout) {
                  const Tensor& z = gr.value(logits);
                  const std::size_t c = z.dim(0), n = z.dim(1);
                  Tensor gz(z.dims());
                  for (std::size_t k = 0; k < c; ++k) {
                    for (std::size_t t = 0; t < n; ++t) {
                      gz.at(k, t) = gout[0] * w[t] * (kernels::sigmoid(z.at(k, t)) - target.at(k, t)) /
                                    static_cast<double>(c);
                    }
                  }
                  gr.accumulate(logits, gz);
                });
}

inline Var sum(Graph& g, const std::vector<Var>& scalars) {
  double total = 0.0;
  std::vector<std::size_t> ids;
  bool ng = false;
  for (Var s : scalars) {
    if (g.value(s).size() != 1) throw ShapeError("sum: expected scalars");
    total += g.value(s)[0];
    ids.push_back(s.id);
    ng = ng || g.any_needs_grad({s});
  }
  return g.push(OpKind::Sum, std::move(ids), Tensor({1}, total), ng, [scalars](Graph& gr, const Tensor& gout) {
    for (Var s : scalars) gr.accumulate(s, gout);
  });
}

}  // namespace ops
}  // namespace gtd

#endif  // GTD_AUTODIFF_HPP
