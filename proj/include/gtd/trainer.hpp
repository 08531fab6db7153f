#ifndef GTD_TRAINER_HPP
#define GTD_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gtd/container.hpp"
#include "gtd/data.hpp"
#include "gtd/diffusion.hpp"
#include "gtd/gtan.hpp"
#include "json.hpp"

namespace gtd {

enum class TrainMode { stochastic, deterministic };
enum class LossKind { mse, ce, bce };

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "stochastic") return TrainMode::stochastic;
  if (s == "deterministic") return TrainMode::deterministic;
  throw ConfigError("unknown training mode '" + std::string(s) + "'");
}
inline std::string to_string(TrainMode m) { return m == TrainMode::stochastic ? "stochastic" : "deterministic"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::mse;
  if (s == "ce") return LossKind::ce;
  if (s == "bce") return LossKind::bce;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}
inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::ce: return "ce";
    case LossKind::bce: return "bce";
  }
  return "?";
}

struct TrainConfig {
  TrainMode mode = TrainMode::stochastic;
  LossKind loss = LossKind::mse;
  double obs_loss_weight = 1.0;
  double learning_rate = 5e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::vector<double> alphas{0.2, 0.3};
  std::vector<double> betas{0.1, 0.2, 0.3, 0.5};

  void validate() const {
    if (!(obs_loss_weight >= 0.0)) throw ConfigError("train.obs_loss_weight must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("train.lr must be > 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (alphas.empty() || betas.empty()) throw ConfigError("train.alphas and train.betas must be non-empty");
    if (mode == TrainMode::deterministic && loss != LossKind::ce) {
      throw ConfigError("deterministic training uses the cross-entropy loss");
    }
  }
};

/// Everything needed to rebuild a model and its training run.
struct GtdConfig {
  GtanConfig model;
  DiffusionConfig diffusion;
  TrainConfig train;

  void validate() const {
    model.validate();
    diffusion.validate();
    train.validate();
  }
};

inline nlohmann::json to_json(const GtdConfig& c) {
  return {
      {"model",
       {{"stages", c.model.stages},
        {"layers", c.model.layers_per_stage},
        {"channels", c.model.channels},
        {"kernel_size", c.model.kernel_size},
        {"classes", c.model.num_classes},
        {"feature_dim", c.model.feature_dim},
        {"dropout", c.model.dropout_rate},
        {"gating", to_string(c.model.gating_mode)},
        {"embed_dim", c.model.embed_dim}}},
      {"diffusion",
       {{"steps", c.diffusion.steps},
        {"inference_steps", c.diffusion.inference_steps},
        {"sampler", to_string(c.diffusion.sampler)},
        {"self_cond_prob", c.diffusion.self_cond_prob},
        {"schedule", to_string(c.diffusion.schedule)},
        {"label_scaling", to_string(c.diffusion.label_scaling)}}},
      {"train",
       {{"mode", to_string(c.train.mode)},
        {"loss", to_string(c.train.loss)},
        {"obs_loss_weight", c.train.obs_loss_weight},
        {"lr", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"seed", c.train.seed},
        {"alphas", c.train.alphas},
        {"betas", c.train.betas}}},
  };
}

inline GtdConfig gtd_config_from_json(const nlohmann::json& j) {
  GtdConfig c;
  try {
    const auto& m = j.at("model");
    c.model.stages = m.at("stages");
    c.model.layers_per_stage = m.at("layers");
    c.model.channels = m.at("channels");
    c.model.kernel_size = m.at("kernel_size");
    c.model.num_classes = m.at("classes");
    c.model.feature_dim = m.at("feature_dim");
    c.model.dropout_rate = m.at("dropout");
    c.model.gating_mode = parse_gating_mode(m.at("gating").get<std::string>());
    c.model.embed_dim = m.at("embed_dim");
    const auto& d = j.at("diffusion");
    c.diffusion.steps = d.at("steps");
    c.diffusion.inference_steps = d.at("inference_steps");
    c.diffusion.sampler = parse_sampler_kind(d.at("sampler").get<std::string>());
    c.diffusion.self_cond_prob = d.at("self_cond_prob");
    c.diffusion.schedule = parse_schedule_kind(d.at("schedule").get<std::string>());
    c.diffusion.label_scaling = parse_label_scaling(d.at("label_scaling").get<std::string>());
    const auto& t = j.at("train");
    c.train.mode = parse_train_mode(t.at("mode").get<std::string>());
    c.train.loss = parse_loss_kind(t.at("loss").get<std::string>());
    c.train.obs_loss_weight = t.at("obs_loss_weight");
    c.train.learning_rate = t.at("lr");
    c.train.batch_size = t.at("batch_size");
    c.train.epochs = t.at("epochs");
    c.train.seed = t.at("seed");
    c.train.alphas = t.at("alphas").get<std::vector<double>>();
    c.train.betas = t.at("betas").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config snapshot: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Training examples and losses
// ---------------------------------------------------------------------------

/// One observed/future window ready for the generator.
struct TrainItem {
  std::string id;
  LabelSequence labels;  ///< window ground truth, length N
  Tensor y0;             ///< N x C analog bits
  Tensor cond;           ///< N x D, future rows zero
  std::size_t observed = 0;
};

inline TrainItem make_item(const SequenceRecord& rec, const ProtocolSplit& split, std::size_t classes,
                           LabelScaling scaling) {
  TrainItem item;
  item.id = rec.id;
  item.labels = window_labels(rec, split);
  item.y0 = encode_labels(item.labels, classes, scaling);
  item.cond = build_condition(rec, split);
  item.observed = split.observed;
  return item;
}

/// Per-frame loss weights. Weight 1 gives a plain mean over all frames; any other weight w gives
/// w * mean(observed) + mean(future).
inline std::vector<double> frame_weights(std::size_t frames, std::size_t observed, double obs_weight) {
  if (observed >= frames) throw ConfigError("window has no future frames");
  std::vector<double> w(frames);
  if (obs_weight == 1.0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(frames));
    return w;
  }
  for (std::size_t n = 0; n < frames; ++n) {
    w[n] = n < observed ? obs_weight / static_cast<double>(observed)
                        : 1.0 / static_cast<double>(frames - observed);
  }
  return w;
}

/// Maps raw generator scores (C x N) to the analog-bit reconstruction used by the sampler.
inline Tensor reconstruct(const Tensor& raw, LossKind loss, LabelScaling scaling) {
  Tensor out;
  switch (loss) {
    case LossKind::mse: return raw;
    case LossKind::ce: out = kernels::softmax_channels(raw); break;
    case LossKind::bce:
      out = raw;
      for (auto& v : out.data()) v = kernels::sigmoid(v);
      break;
  }
  if (scaling == LabelScaling::signed_unit) {
    for (auto& v : out.data()) v = 2.0 * v - 1.0;
  }
  return out;
}

/// Loss of one stage output (C x N raw scores) against the window ground truth.
inline Var stage_loss(Graph& g, Var scores, const TrainItem& item, LossKind loss, LabelScaling scaling,
                      const std::vector<double>& weights) {
  switch (loss) {
    case LossKind::mse: return ops::weighted_mse(g, scores, item.y0.transposed(), weights);
    case LossKind::ce: return ops::weighted_softmax_ce(g, scores, item.labels, weights);
    case LossKind::bce: {
      Tensor target = item.y0.transposed();
      if (scaling == LabelScaling::signed_unit) {
        for (auto& v : target.data()) v = (v + 1.0) / 2.0;
      }
      return ops::weighted_bce(g, scores, target, weights);
    }
  }
  throw ConfigError("unknown loss");
}

struct SampleLoss {
  Var total;
  std::vector<Var> stages;
};

/// Sum over stages of the per-stage loss for one window, built on the tape.
/// `y_t` and `self_cond` are N x C; `step` is empty in deterministic mode.
inline SampleLoss sample_loss(Graph& g, const ParamVars& p, const TrainItem& item, const Tensor& y_t,
                              const Tensor& self_cond, std::optional<double> step, const GtdConfig& cfg, bool train,
                              Rng& rng) {
  const auto weights = frame_weights(item.labels.size(), item.observed, cfg.train.obs_loss_weight);
  TapeOutputs out = gtan_forward_tape(g, p, y_t, self_cond, item.cond, step, train, rng);
  SampleLoss loss;
  for (Var s : out.stages) {
    loss.stages.push_back(stage_loss(g, s, item, cfg.train.loss, cfg.diffusion.label_scaling, weights));
  }
  loss.total = ops::sum(g, loss.stages);
  return loss;
}

/// Rebuilds a tape parameter tree from leaves given in layout order.
inline ParamVars bind_leaves(const GtanConfig& config, const std::vector<Var>& leaves) {
  ParamVars vars = make_param_tree<Var>(config);
  std::size_t i = 0;
  vars.visit([&](const std::string&, const Dims&, Var& v) { v = leaves.at(i++); });
  if (i != leaves.size()) throw ShapeError("leaf count does not match parameter layout");
  return vars;
}

struct StepResult {
  double loss = 0.0;
  std::vector<double> stage_losses;
  std::vector<Tensor> grads;  ///< layout order, averaged over the batch
};

/// Gradient-stopped reconstruction used as self-conditioning input.
inline Tensor self_condition_estimate(const ModelParams& params, const TrainItem& item, const Tensor& y_t, int t,
                                      const GtdConfig& cfg, Rng& rng) {
  Graph g(false);
  ParamVars vars = bind(g, params, false);
  Tensor zeros(y_t.dims());
  TapeOutputs out = gtan_forward_tape(g, vars, y_t, zeros, item.cond, static_cast<double>(t), true, rng);
  return reconstruct(g.value(out.stages.back()), cfg.train.loss, cfg.diffusion.label_scaling).transposed();
}

namespace detail {

inline void accumulate_sample(StepResult& r, Graph& g, const ParamVars& vars, const SampleLoss& loss) {
  g.backward(loss.total);
  std::vector<Tensor> grads = collect_grads(g, vars);
  if (r.grads.empty()) {
    r.grads = std::move(grads);
    r.stage_losses.assign(loss.stages.size(), 0.0);
  } else {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto dst = r.grads[i].data();
      auto src = grads[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  r.loss += g.value(loss.total)[0];
  for (std::size_t s = 0; s < loss.stages.size(); ++s) r.stage_losses[s] += g.value(loss.stages[s])[0];
}

inline void finish_batch(StepResult& r, std::size_t count) {
  const double inv = 1.0 / static_cast<double>(count);
  r.loss *= inv;
  for (auto& s : r.stage_losses) s *= inv;
  for (auto& t : r.grads) {
    for (auto& v : t.data()) v *= inv;
  }
}

template <class Body>
void per_sample(const std::vector<TrainItem>& batch, Body&& body) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      body(batch[i]);
    } catch (const NumericError& e) {
      throw NumericError("non-finite loss at batch sample " + std::to_string(i) + " (" + batch[i].id + "): " +
                         e.what());
    }
  }
}

}  // namespace detail

/// Diffusion training step: per sample draw t ~ U{1..T} and eps, corrupt Y_0, optionally feed a
/// gradient-stopped self-conditioning estimate (dropped with probability p), sum stage losses.
inline StepResult stochastic_training_step(const std::vector<TrainItem>& batch, const ModelParams& params,
                                           const NoiseSchedule& schedule, const GtdConfig& cfg, Rng& rng) {
  if (batch.empty()) throw ConfigError("empty batch");
  StepResult r;
  detail::per_sample(batch, [&](const TrainItem& item) {
    std::uniform_int_distribution<int> pick_t(1, schedule.steps);
    const int t = pick_t(rng);
    Tensor eps(item.y0.dims());
    fill_normal(eps, rng);
    const Tensor y_t = q_sample(item.y0, t, eps, schedule);
    std::bernoulli_distribution drop(cfg.diffusion.self_cond_prob);
    Tensor self_cond(item.y0.dims());
    if (!drop(rng)) self_cond = self_condition_estimate(params, item, y_t, t, cfg, rng);
    Graph g(true);
    ParamVars vars = bind(g, params, true);
    SampleLoss loss = sample_loss(g, vars, item, y_t, self_cond, static_cast<double>(t), cfg, true, rng);
    detail::accumulate_sample(r, g, vars, loss);
  });
  detail::finish_batch(r, batch.size());
  return r;
}

/// Non-diffusion step: the generator sees only the condition (label slots zero, no step embedding)
/// and every stage is trained with softmax cross-entropy.
inline StepResult deterministic_training_step(const std::vector<TrainItem>& batch, const ModelParams& params,
                                              const GtdConfig& cfg, Rng& rng) {
  if (batch.empty()) throw ConfigError("empty batch");
  GtdConfig ce_cfg = cfg;
  ce_cfg.train.loss = LossKind::ce;
  StepResult r;
  detail::per_sample(batch, [&](const TrainItem& item) {
    Tensor zeros(item.y0.dims());
    Graph g(true);
    ParamVars vars = bind(g, params, true);
    SampleLoss loss = sample_loss(g, vars, item, zeros, zeros, std::nullopt, ce_cfg, true, rng);
    detail::accumulate_sample(r, g, vars, loss);
  });
  detail::finish_batch(r, batch.size());
  return r;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

inline AdamState make_adam_state(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.dims());
    s.v.emplace_back(p.dims());
  }
  return s;
}

/// Bias-corrected Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
inline void adam_update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam: parameter, gradient and moment lists differ in length");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam");
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Inference helpers
// ---------------------------------------------------------------------------

/// Wraps trained parameters as a diffusion generator returning the last-stage reconstruction.
inline Generator make_generator(const ModelParams& params, LossKind loss, LabelScaling scaling) {
  return [&params, loss, scaling](const Tensor& y_t, const Tensor& self_cond, const Tensor& cond, int t) {
    Rng unused(0);
    Graph g(false);
    ParamVars vars = bind(g, params, false);
    TapeOutputs out = gtan_forward_tape(g, vars, y_t, self_cond, cond, static_cast<double>(t), false, unused);
    return reconstruct(g.value(out.stages.back()), loss, scaling).transposed();
  };
}

/// Deterministic-mode prediction for a condition window.
inline LabelSequence predict_deterministic(const ModelParams& params, const Tensor& cond) {
  Rng unused(0);
  Tensor zeros({cond.dim(0), params.config.num_classes});
  GtanOutput out = gtan_forward(params, zeros, zeros, cond, std::nullopt, false, unused);
  return decode_labels(out.stages.back());
}

// ---------------------------------------------------------------------------
// Training driver and checkpoints
// ---------------------------------------------------------------------------

struct LogRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::vector<double> stage_losses;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"step", step}, {"loss", loss}, {"stage_losses", stage_losses}, {"wall_time", wall_seconds}};
  }
};

inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream in(s);
  in >> rng;
  if (!in) throw FormatError("bad RNG state in checkpoint");
  return rng;
}

namespace detail {

/// Parses and shape-checks the checkpoint text blob.
inline nlohmann::json checkpoint_meta(const ArrayContainer& c) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(c.text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!meta.is_object() || !meta.contains("config") || !meta.contains("step") || !meta.contains("rng")) {
    throw FormatError("container is not a checkpoint (missing config, step or rng state)");
  }
  return meta;
}

}  // namespace detail

/// Owns parameters, optimizer state and the training RNG. Batches follow a per-epoch permutation
/// derived from (seed, epoch), so a run resumed from a checkpoint replays the remaining steps exactly.
class Trainer {
 public:
  Trainer(GtdConfig config, const Dataset& data) : config_(std::move(config)), data_(&data) {
    config_.validate();
    check_data();
    Rng init_rng(config_.train.seed);
    params_ = flatten(init_params(config_.model, init_rng));
    adam_ = make_adam_state(params_);
    rng_ = Rng(config_.train.seed ^ 0x9E3779B97F4A7C15ULL);
    schedule_ = make_schedule(config_.diffusion.schedule, config_.diffusion.steps);
  }

  const GtdConfig& config() const { return config_; }
  std::uint64_t step_count() const { return adam_.step; }
  ModelParams params() const { return unflatten(config_.model, params_); }

  std::size_t batches_per_epoch() const {
    return (data_->records.size() + config_.train.batch_size - 1) / config_.train.batch_size;
  }
  std::uint64_t total_steps() const { return config_.train.epochs * batches_per_epoch(); }

  /// Changes the training horizon, e.g. to continue a resumed run past its original end.
  void set_epochs(std::size_t epochs) {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    config_.train.epochs = epochs;
  }

  /// Runs one optimisation step on the next batch and returns its log record.
  LogRecord step() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<TrainItem> batch = next_batch();
    const ModelParams current = params();
    StepResult r = config_.train.mode == TrainMode::stochastic
                       ? stochastic_training_step(batch, current, schedule_, config_, rng_)
                       : deterministic_training_step(batch, current, config_, rng_);
    adam_update(params_, r.grads, adam_, config_.train.learning_rate);
    elapsed_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {adam_.step, r.loss, r.stage_losses, elapsed_};
  }

  /// Steps until `total_steps()` or `max_steps` more steps, whichever comes first.
  void run(const std::function<void(const LogRecord&)>& on_step = {},
           std::uint64_t max_steps = std::numeric_limits<std::uint64_t>::max()) {
    for (std::uint64_t k = 0; k < max_steps && adam_.step < total_steps(); ++k) {
      LogRecord rec = step();
      if (on_step) on_step(rec);
    }
  }

  ArrayContainer to_container() const {
    ArrayContainer c;
    const auto names = parameter_names(config_.model);
    for (std::size_t i = 0; i < names.size(); ++i) c.arrays.push_back({"param/" + names[i], params_[i]});
    for (std::size_t i = 0; i < names.size(); ++i) c.arrays.push_back({"adam.m/" + names[i], adam_.m[i]});
    for (std::size_t i = 0; i < names.size(); ++i) c.arrays.push_back({"adam.v/" + names[i], adam_.v[i]});
    nlohmann::json meta = {{"config", to_json(config_)},
                           {"rng", rng_state_string(rng_)},
                           {"step", adam_.step},
                           {"wall_time", elapsed_}};
    c.text = meta.dump();
    return c;
  }

  void save(const std::filesystem::path& path) const { write_container(path, to_container()); }

  static Trainer from_container(const ArrayContainer& c, const Dataset& data) {
    const nlohmann::json meta = detail::checkpoint_meta(c);
    Trainer t(gtd_config_from_json(meta.at("config")), data);
    const auto names = parameter_names(t.config_.model);
    for (std::size_t i = 0; i < names.size(); ++i) {
      t.params_[i] = checked(c, "param/" + names[i], t.params_[i].dims());
      t.adam_.m[i] = checked(c, "adam.m/" + names[i], t.params_[i].dims());
      t.adam_.v[i] = checked(c, "adam.v/" + names[i], t.params_[i].dims());
    }
    t.adam_.step = meta.at("step").get<std::uint64_t>();
    t.rng_ = rng_from_string(meta.at("rng").get<std::string>());
    t.elapsed_ = meta.value("wall_time", 0.0);
    return t;
  }

  static Trainer load(const std::filesystem::path& path, const Dataset& data) {
    return from_container(read_container(path), data);
  }

 private:
  static Tensor checked(const ArrayContainer& c, const std::string& name, const Dims& dims) {
    const Tensor& t = c.get(name);
    if (t.dims() != dims) throw FormatError("checkpoint array " + name + " has wrong extents");
    return t;
  }

  void check_data() const {
    if (data_->records.empty()) throw ConfigError("training set is empty");
    if (data_->feature_dim != config_.model.feature_dim) {
      throw ConfigError("dataset feature_dim " + std::to_string(data_->feature_dim) + " != model.feature_dim " +
                        std::to_string(config_.model.feature_dim));
    }
    if (data_->classes > config_.model.num_classes) throw ConfigError("dataset has more classes than the model");
  }

  std::vector<TrainItem> next_batch() {
    const std::size_t n = data_->records.size(), bsz = config_.train.batch_size;
    const std::uint64_t epoch = adam_.step / batches_per_epoch();
    const std::uint64_t pos = adam_.step % batches_per_epoch();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::seed_seq seq{config_.train.seed, epoch, std::uint64_t{0xE90C}};
    Rng shuffle_rng(seq);
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    std::vector<TrainItem> batch;
    std::uniform_int_distribution<std::size_t> pick_a(0, config_.train.alphas.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_b(0, config_.train.betas.size() - 1);
    for (std::size_t k = pos * bsz; k < std::min(n, (pos + 1) * bsz); ++k) {
      const SequenceRecord& rec = data_->records[perm[k]];
      const double alpha = config_.train.alphas[pick_a(rng_)];
      const double beta = config_.train.betas[pick_b(rng_)];
      const ProtocolSplit split = split_protocol(rec.length(), alpha, beta);
      batch.push_back(make_item(rec, split, config_.model.num_classes, config_.diffusion.label_scaling));
    }
    return batch;
  }

  GtdConfig config_;
  const Dataset* data_;
  std::vector<Tensor> params_;
  AdamState adam_;
  Rng rng_;
  NoiseSchedule schedule_;
  double elapsed_ = 0.0;
};

/// Parameters and configuration from a checkpoint, without needing the training data.
struct LoadedModel {
  GtdConfig config;
  ModelParams params;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
  const ArrayContainer c = read_container(path);
  const nlohmann::json meta = detail::checkpoint_meta(c);
  LoadedModel m;
  m.config = gtd_config_from_json(meta.at("config"));
  m.config.validate();
  std::vector<Tensor> flat;
  for (const auto& name : parameter_names(m.config.model)) flat.push_back(c.get("param/" + name));
  m.params = unflatten(m.config.model, flat);
  return m;
}

}  // namespace gtd

#endif  // GTD_TRAINER_HPP
