#ifndef GTD_REFERENCE_HPP
#define GTD_REFERENCE_HPP

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "gtd/trainer.hpp"

// Plain-loop re-implementation of the generator and training losses in extended precision.
// It shares no code with the tape and serves as the value oracle for finite differences and
// forward-pass cross-checks. Dropout masks are drawn in the same order as the tape so both
// describe the same function for a given RNG seed.

namespace gtd::reference {

using Real = long double;

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<Real> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0L) {}
  Real& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  Real at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline Mat conv(const Mat& x, const Tensor& w, const Tensor& b, int dilation) {
  const std::size_t c_out = w.dim(0), c_in = w.dim(1), taps = w.dim(2);
  const long half = static_cast<long>(taps / 2);
  Mat y(c_out, x.cols);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t n = 0; n < x.cols; ++n) {
      Real acc = b[o];
      for (std::size_t i = 0; i < c_in; ++i) {
        for (std::size_t k = 0; k < taps; ++k) {
          const long src = static_cast<long>(n) + (static_cast<long>(k) - half) * dilation;
          if (src < 0 || src >= static_cast<long>(x.cols)) continue;
          acc += static_cast<Real>(w.at(o, i, k)) * x.at(i, static_cast<std::size_t>(src));
        }
      }
      y.at(o, n) = acc;
    }
  }
  return y;
}

/// Channel-major assembled input [Y_t | self_cond | F~] as rows.
inline Mat assembled(const Tensor& y_t, const Tensor& self_cond, const Tensor& cond) {
  const std::size_t n = y_t.dim(0), c = y_t.dim(1), d = cond.dim(1);
  Mat m(2 * c + d, n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < c; ++k) {
      m.at(k, t) = y_t.at(t, k);
      m.at(c + k, t) = self_cond.at(t, k);
    }
    for (std::size_t k = 0; k < d; ++k) m.at(2 * c + k, t) = cond.at(t, k);
  }
  return m;
}

/// Stage outputs (C x N each) of the generator.
inline std::vector<Mat> forward(const ModelParams& p, const Tensor& y_t, const Tensor& self_cond, const Tensor& cond,
                                std::optional<double> step, bool train, Rng& rng) {
  const GtanConfig& c = p.config;
  const Mat input = assembled(y_t, self_cond, cond);
  const std::size_t n = input.cols;

  std::vector<Real> step_bias;
  if (step) {
    const std::size_t dim = c.step_embed_dim(), half = dim / 2;
    Mat e(dim, 1);
    for (std::size_t i = 0; i < half; ++i) {
      const Real freq = std::pow(10000.0L, -2.0L * static_cast<Real>(i) / static_cast<Real>(dim));
      e.at(i, 0) = std::sin(static_cast<Real>(*step) * freq);
      e.at(half + i, 0) = std::cos(static_cast<Real>(*step) * freq);
    }
    const Mat proj = conv(e, p.step.weight, p.step.bias, 1);
    step_bias = proj.v;
  }

  std::vector<Mat> outs;
  for (std::size_t s = 0; s < c.stages; ++s) {
    const auto& st = p.stages[s];
    Mat in = input;
    if (s > 0) {
      const Mat& prev = outs.back();
      in = Mat(prev.rows + input.rows, n);
      std::copy(prev.v.begin(), prev.v.end(), in.v.begin());
      std::copy(input.v.begin(), input.v.end(), in.v.begin() + static_cast<long>(prev.v.size()));
    }
    Mat h = conv(in, st.input.weight, st.input.bias, 1);
    if (step) {
      for (std::size_t r = 0; r < h.rows; ++r) {
        for (std::size_t t = 0; t < n; ++t) h.at(r, t) += step_bias[r];
      }
    }
    for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
      const auto& lp = st.layers[l];
      const int dil = 1 << l;
      Mat mixed = conv(h, lp.feature.weight, lp.feature.bias, dil);
      if (c.gating_mode != GatingMode::feature_only) {
        const int gdil = c.gating_mode == GatingMode::gated_undilated_gate ? 1 : dil;
        const Mat gate = conv(h, lp.gate.weight, lp.gate.bias, gdil);
        for (std::size_t i = 0; i < mixed.v.size(); ++i) mixed.v[i] *= 1.0L / (1.0L + std::exp(-gate.v[i]));
      }
      if (train && c.dropout_rate > 0.0) {
        std::bernoulli_distribution keep(1.0 - c.dropout_rate);
        const Real scale = 1.0L / (1.0L - static_cast<Real>(c.dropout_rate));
        for (auto& x : mixed.v) x = keep(rng) ? x * scale : 0.0L;
      }
      const Mat pw = conv(mixed, lp.pointwise.weight, lp.pointwise.bias, 1);
      for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += std::max(pw.v[i], 0.0L);
    }
    outs.push_back(conv(h, st.head.weight, st.head.bias, 1));
  }
  return outs;
}

inline Real stage_loss(const Mat& z, const TrainItem& item, LossKind loss, LabelScaling scaling,
                       const std::vector<double>& w) {
  const std::size_t c = z.rows, n = z.cols;
  Real total = 0.0L;
  for (std::size_t t = 0; t < n; ++t) {
    Real frame = 0.0L;
    if (loss == LossKind::ce) {
      Real mx = z.at(0, t);
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, z.at(k, t));
      Real s = 0.0L;
      for (std::size_t k = 0; k < c; ++k) s += std::exp(z.at(k, t) - mx);
      frame = std::log(s) + mx - z.at(static_cast<std::size_t>(item.labels[t]), t);
    } else {
      for (std::size_t k = 0; k < c; ++k) {
        Real y = item.y0.at(t, k);
        const Real x = z.at(k, t);
        if (loss == LossKind::mse) {
          frame += (x - y) * (x - y);
        } else {
          if (scaling == LabelScaling::signed_unit) y = (y + 1.0L) / 2.0L;
          frame += std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0L) - x * y;
        }
      }
      frame /= static_cast<Real>(c);
    }
    total += static_cast<Real>(w[t]) * frame;
  }
  return total;
}

/// Sum over stages of the training loss for one window.
inline Real training_loss(const ModelParams& p, const TrainItem& item, const Tensor& y_t, const Tensor& self_cond,
                          std::optional<double> step, const GtdConfig& cfg, bool train, Rng& rng) {
  const auto w = frame_weights(item.labels.size(), item.observed, cfg.train.obs_loss_weight);
  Real total = 0.0L;
  for (const Mat& z : forward(p, y_t, self_cond, item.cond, step, train, rng)) {
    total += stage_loss(z, item, cfg.train.loss, cfg.diffusion.label_scaling, w);
  }
  return total;
}

}  // namespace gtd::reference

#endif  // GTD_REFERENCE_HPP
