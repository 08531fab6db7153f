#ifndef GTD_DIFFUSION_HPP
#define GTD_DIFFUSION_HPP

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gtd/autodiff.hpp"

namespace gtd {

using LabelSequence = std::vector<int>;

enum class ScheduleKind { linear, cosine };
enum class SamplerKind { ddpm, ddim };
enum class LabelScaling { zero_one, signed_unit };

inline ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + std::string(s) + "'");
}
inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

inline SamplerKind parse_sampler_kind(std::string_view s) {
  if (s == "ddpm") return SamplerKind::ddpm;
  if (s == "ddim") return SamplerKind::ddim;
  throw ConfigError("unknown sampler '" + std::string(s) + "'");
}
inline std::string to_string(SamplerKind k) { return k == SamplerKind::ddpm ? "ddpm" : "ddim"; }

inline LabelScaling parse_label_scaling(std::string_view s) {
  if (s == "zero_one") return LabelScaling::zero_one;
  if (s == "signed") return LabelScaling::signed_unit;
  throw ConfigError("unknown label scaling '" + std::string(s) + "'");
}
inline std::string to_string(LabelScaling k) { return k == LabelScaling::zero_one ? "zero_one" : "signed"; }

struct DiffusionConfig {
  int steps = 1000;           ///< T
  int inference_steps = 50;   ///< D
  SamplerKind sampler = SamplerKind::ddim;
  double self_cond_prob = 0.5;
  ScheduleKind schedule = ScheduleKind::linear;
  LabelScaling label_scaling = LabelScaling::zero_one;

  void validate() const {
    if (steps < 1) throw ConfigError("diffusion.steps must be >= 1");
    if (inference_steps < 1 || inference_steps > steps) throw ConfigError("diffusion.inference_steps must be in [1, T]");
    if (!(self_cond_prob >= 0.0 && self_cond_prob <= 1.0)) throw ConfigError("diffusion.self_cond_prob must be in [0,1]");
  }
};

/// Variance tables indexed by diffusion step. Index 0 of `beta` and `beta_tilde` is unused (0).
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;        ///< beta[1..T]
  std::vector<double> gamma;       ///< gamma[0..T], gamma[0] = 1
  std::vector<double> beta_tilde;  ///< (1 - gamma[t-1]) / (1 - gamma[t]) * beta[t]

  static NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("schedule needs at least one step");
    NoiseSchedule s;
    s.steps = static_cast<int>(betas.size());
    s.beta.assign(1, 0.0);
    s.beta.insert(s.beta.end(), betas.begin(), betas.end());
    s.gamma.assign(s.beta.size(), 1.0);
    s.beta_tilde.assign(s.beta.size(), 0.0);
    for (int t = 1; t <= s.steps; ++t) {
      const double b = s.beta[t];
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta values must lie in (0,1)");
      s.gamma[t] = s.gamma[t - 1] * (1.0 - b);
      s.beta_tilde[t] = (1.0 - s.gamma[t - 1]) / (1.0 - s.gamma[t]) * b;
    }
    return s;
  }
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int steps) {
  if (steps < 1) throw ConfigError("schedule needs T >= 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (kind == ScheduleKind::linear) {
    constexpr double lo = 1e-4, hi = 0.02;
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
      betas[static_cast<std::size_t>(t - 1)] = lo + (hi - lo) * frac;
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [steps](double t) {
      const double x = (t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
      return std::cos(x) * std::cos(x);
    };
    const double f0 = f(0.0);
    for (int t = 1; t <= steps; ++t) {
      const double ratio = (f(t) / f0) / (f(t - 1) / f0);
      betas[static_cast<std::size_t>(t - 1)] = std::clamp(1.0 - ratio, 1e-12, 0.999);
    }
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

inline void check_step(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.steps) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(s.steps) + "]");
  }
}

/// Y_t = sqrt(gamma_t) Y_0 + sqrt(1 - gamma_t) eps
inline Tensor q_sample(const Tensor& y0, int t, const Tensor& eps, const NoiseSchedule& s) {
  check_step(s, t);
  require_same_shape(y0, eps, "q_sample");
  const double a = std::sqrt(s.gamma[t]), b = std::sqrt(1.0 - s.gamma[t]);
  Tensor out(y0.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * y0[i] + b * eps[i];
  return out;
}

/// eps_hat = (Y_t - sqrt(gamma_t) Y0_hat) / sqrt(1 - gamma_t)
inline Tensor estimate_epsilon(const Tensor& y_t, const Tensor& y0_hat, int t, const NoiseSchedule& s) {
  check_step(s, t);
  require_same_shape(y_t, y0_hat, "estimate_epsilon");
  if (!(s.gamma[t] < 1.0)) throw NumericError("estimate_epsilon: gamma_t == 1, noise is not identifiable");
  const double a = std::sqrt(s.gamma[t]), inv = 1.0 / std::sqrt(1.0 - s.gamma[t]);
  Tensor out(y_t.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (y_t[i] - a * y0_hat[i]) * inv;
  return out;
}

inline void fill_normal(Tensor& t, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : t.data()) v = n(rng);
}

/// One reverse transition from step `t` to step `prev` (< t; prev == t - 1 unless steps are skipped).
/// DDIM drops the variance term; DDPM samples around the posterior mean with variance beta_tilde.
/// A negative radicand 1 - gamma_prev - beta_tilde (round-off only) is clamped at 0 and counted.
inline Tensor denoise_step(const Tensor& y_t, const Tensor& y0_hat, int t, int prev, const NoiseSchedule& s,
                           SamplerKind sampler, Rng& rng, std::size_t* clamp_count = nullptr) {
  check_step(s, t);
  if (prev < 0 || prev >= t) throw ConfigError("denoise_step: target step must be in [0, t)");
  const double g_t = s.gamma[t], g_prev = s.gamma[prev];
  const Tensor eps_hat = estimate_epsilon(y_t, y0_hat, t, s);
  double var = 0.0;
  if (sampler == SamplerKind::ddpm) {
    var = prev == t - 1 ? s.beta_tilde[t] : (1.0 - g_prev) / (1.0 - g_t) * (1.0 - g_t / g_prev);
  }
  double radicand = 1.0 - g_prev - var;
  if (radicand < 0.0) {
    radicand = 0.0;
    if (clamp_count) ++*clamp_count;
  }
  const double a = std::sqrt(g_prev), b = std::sqrt(radicand);
  Tensor out(y_t.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * y0_hat[i] + b * eps_hat[i];
  if (sampler == SamplerKind::ddpm) {
    Tensor z(y_t.dims());
    fill_normal(z, rng);
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sd * z[i];
  }
  return out;
}

inline Tensor denoise_step(const Tensor& y_t, const Tensor& y0_hat, int t, const NoiseSchedule& s, SamplerKind sampler,
                           Rng& rng, std::size_t* clamp_count = nullptr) {
  return denoise_step(y_t, y0_hat, t, t - 1, s, sampler, rng, clamp_count);
}

/// D evenly spaced steps from T down to 1 (both included when D >= 2).
inline std::vector<int> step_subsequence(int steps, int count) {
  if (count < 1 || count > steps) throw ConfigError("inference step count must be in [1, T]");
  if (count == 1) return {steps};
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const double v = 1.0 + static_cast<double>(steps - 1) * static_cast<double>(count - 1 - i) / (count - 1);
    out.push_back(static_cast<int>(std::lround(v)));
  }
  return out;
}

/// Generator contract: (Y_t, self-conditioning, condition, t) -> reconstruction of Y_0, all N x C
/// except the condition (N x D).
using Generator = std::function<Tensor(const Tensor&, const Tensor&, const Tensor&, int)>;

struct DenoiseTrace {
  int step = 0;
  Tensor reconstruction;
};

struct DenoiseResult {
  Tensor reconstruction;  ///< final last-stage reconstruction, N x C
  std::vector<DenoiseTrace> trace;
  std::size_t clamp_count = 0;
};

/// Full reverse chain from Y_T ~ N(0, I) with self-conditioning on the previous reconstruction.
inline DenoiseResult denoise_loop(const Generator& generator, const Tensor& cond, std::size_t classes,
                                  const DiffusionConfig& config, const NoiseSchedule& schedule, Rng& rng,
                                  bool keep_trace = false) {
  config.validate();
  if (schedule.steps != config.steps) throw ConfigError("schedule length does not match diffusion.steps");
  const std::vector<int> steps = step_subsequence(config.steps, config.inference_steps);
  Tensor y({cond.dim(0), classes});
  fill_normal(y, rng);
  Tensor self_cond({cond.dim(0), classes});
  DenoiseResult result;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    Tensor y0_hat = generator(y, self_cond, cond, t);
    require_same_shape(y0_hat, y, "generator output");
    require_finite(y0_hat, "generator output");
    if (keep_trace) result.trace.push_back({t, y0_hat});
    const bool last = i + 1 == steps.size();
    if (!last) {
      y = denoise_step(y, y0_hat, t, steps[i + 1], schedule, config.sampler, rng, &result.clamp_count);
      self_cond = y0_hat;
    } else {
      result.reconstruction = std::move(y0_hat);
    }
  }
  return result;
}

/// Rows are one-hot: {0,1} for zero_one, {-1,+1} for signed.
inline Tensor encode_labels(const LabelSequence& labels, std::size_t classes, LabelScaling scaling) {
  if (labels.empty()) throw ShapeError("encode_labels: empty sequence");
  const double off = scaling == LabelScaling::zero_one ? 0.0 : -1.0;
  Tensor out({labels.size(), classes}, off);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw ConfigError("label " + std::to_string(labels[n]) + " outside [0, " + std::to_string(classes) + ")");
    }
    out.at(n, static_cast<std::size_t>(labels[n])) = 1.0;
  }
  return out;
}

/// Per-frame argmax; ties go to the lowest class index.
inline LabelSequence decode_labels(const Tensor& y) {
  LabelSequence out(y.dim(0));
  for (std::size_t n = 0; n < y.dim(0); ++n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < y.dim(1); ++c) {
      if (y.at(n, c) > y.at(n, best)) best = c;
    }
    out[n] = static_cast<int>(best);
  }
  return out;
}

/// Runs `count` jobs over `threads` workers; job i writes only its own output slot.
template <class Job>
void parallel_for(std::size_t count, std::size_t threads, Job&& job) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// M independent reverse chains; chain m draws from its own stream seeded with seed + m.
inline std::vector<LabelSequence> sample_many(const Generator& generator, const Tensor& cond, std::size_t classes,
                                              std::size_t samples, const DiffusionConfig& config,
                                              const NoiseSchedule& schedule, std::uint64_t seed,
                                              std::size_t threads = 1) {
  if (samples < 1) throw ConfigError("need at least one sample");
  std::vector<LabelSequence> out(samples);
  parallel_for(samples, threads, [&](std::size_t m) {
    Rng rng(seed + m);
    out[m] = decode_labels(denoise_loop(generator, cond, classes, config, schedule, rng).reconstruction);
  });
  return out;
}

}  // namespace gtd

#endif  // GTD_DIFFUSION_HPP
