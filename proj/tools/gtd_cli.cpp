// gtd command-line front end: gen-data, train, sample, eval, gradcheck, inspect-gates.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gtd/gradsuite.hpp"
#include "gtd/metrics.hpp"
#include "gtd/run_config.hpp"
#include "gtd/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gtd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitGradcheck = 5;

struct ConfigArgs {
  std::optional<std::string> config;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "INI run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override, section.key=value (repeatable)");
  }

  RunConfig load() const {
    std::optional<fs::path> path;
    if (config) path = *config;
    return load_run_config(path, overrides);
  }
};

void log_config(const RunConfig& c) { std::cerr << "# resolved config\n" << to_ini(c); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const ConfigArgs& cfg_args, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = cfg_args.load();
  if (seed) cfg.data.seed = *seed;
  log_config(cfg);
  const GeneratedData data = generate_data(cfg.data);
  fs::create_directories(out);
  write_dataset(fs::path(out) / "train", data.train);
  write_dataset(fs::path(out) / "test", data.test);
  write_text(fs::path(out) / "config.ini", to_ini(cfg));
  std::cout << "wrote " << data.train.records.size() << " train and " << data.test.records.size()
            << " test sequences to " << out << "\n";
  return kExitOk;
}

int cmd_train(const ConfigArgs& cfg_args, const std::string& data_dir, const std::string& out, std::uint64_t seed,
              std::optional<std::string> resume) {
  RunConfig cfg = cfg_args.load();
  const Dataset data = read_dataset(data_dir);
  cfg.gtd.train.seed = seed;
  cfg.gtd.model.num_classes = data.classes;
  cfg.gtd.model.feature_dim = data.feature_dim;
  cfg.validate();
  fs::create_directories(out);

  Trainer trainer = resume ? Trainer::load(*resume, data) : Trainer(cfg.gtd, data);
  if (resume) {
    trainer.set_epochs(cfg.gtd.train.epochs);
    cfg.gtd = trainer.config();
    std::cerr << "# resuming at step " << trainer.step_count() << " (config from checkpoint, train.epochs from this run)\n";
  }
  log_config(cfg);
  write_text(fs::path(out) / "config.ini", to_ini(cfg));

  const fs::path ckpt = fs::path(out) / "checkpoint.gtd";
  std::ofstream log(fs::path(out) / "log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError("cannot write training log in " + out);
  trainer.run([&](const LogRecord& rec) {
    log << rec.to_json().dump() << "\n";
    if (cfg.checkpoint_every > 0 && rec.step % cfg.checkpoint_every == 0) trainer.save(ckpt);
  });
  trainer.save(ckpt);
  std::cout << "trained " << trainer.step_count() << " steps; checkpoint " << ckpt.string() << "\n";
  return kExitOk;
}

struct SampleArgs {
  std::string checkpoint, data_dir, out;
  std::uint64_t seed = 0;
  std::vector<double> alphas, betas;
  std::optional<std::size_t> samples;
  std::size_t threads = 1;
  std::optional<std::string> sampler;
  std::optional<int> inference_steps;
};

std::uint64_t derive_seed(std::uint64_t seed, std::size_t record, std::size_t combo) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(record), static_cast<std::uint64_t>(combo)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

int cmd_sample(SampleArgs a) {
  LoadedModel model = load_model(a.checkpoint);
  Dataset data = read_dataset(a.data_dir);
  DiffusionConfig diff = model.config.diffusion;
  if (a.sampler) diff.sampler = parse_sampler_kind(*a.sampler);
  if (a.inference_steps) diff.inference_steps = *a.inference_steps;
  diff.validate();
  const EvalConfig defaults;
  if (a.alphas.empty()) a.alphas = defaults.alphas;
  if (a.betas.empty()) a.betas = defaults.betas;
  const std::size_t m_count = a.samples.value_or(defaults.samples);
  if (m_count < 1) throw ConfigError("--samples must be >= 1");
  if (a.threads < 1) throw ConfigError("--threads must be >= 1");
  if (data.feature_dim != model.config.model.feature_dim) throw ConfigError("dataset feature_dim does not match model");

  json resolved = to_json(model.config);
  resolved["diffusion"]["sampler"] = to_string(diff.sampler);
  resolved["diffusion"]["inference_steps"] = diff.inference_steps;
  resolved["sample"] = {{"seed", a.seed}, {"alphas", a.alphas}, {"betas", a.betas}, {"samples", m_count},
                        {"threads", a.threads}};
  std::cerr << "# resolved config\n" << resolved.dump(2) << "\n";

  std::sort(data.records.begin(), data.records.end(),
            [](const SequenceRecord& x, const SequenceRecord& y) { return x.id < y.id; });
  std::vector<std::pair<double, double>> combos;
  for (double al : a.alphas) {
    for (double be : a.betas) combos.emplace_back(al, be);
  }
  const NoiseSchedule schedule = make_schedule(diff.schedule, diff.steps);
  const bool deterministic = model.config.train.mode == TrainMode::deterministic;
  const Generator gen = make_generator(model.params, model.config.train.loss, diff.label_scaling);

  const std::size_t jobs = data.records.size() * combos.size();
  std::vector<std::vector<LabelSequence>> results(jobs);
  std::vector<ProtocolSplit> splits(jobs);
  parallel_for(jobs, a.threads, [&](std::size_t j) {
    const std::size_t r = j / combos.size(), c = j % combos.size();
    const SequenceRecord& rec = data.records[r];
    splits[j] = split_protocol(rec.length(), combos[c].first, combos[c].second);
    const Tensor cond = build_condition(rec, splits[j]);
    if (deterministic) {
      results[j].assign(m_count, predict_deterministic(model.params, cond));
    } else {
      results[j] = sample_many(gen, cond, model.config.model.num_classes, m_count, diff, schedule,
                               derive_seed(a.seed, r, c), 1);
    }
  });

  std::ofstream out(a.out, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + a.out);
  for (std::size_t j = 0; j < jobs; ++j) {
    const std::size_t r = j / combos.size();
    const ProtocolSplit& sp = splits[j];
    for (std::size_t m = 0; m < m_count; ++m) {
      const LabelSequence& pred = results[j][m];
      json line = {{"id", data.records[r].id},
                   {"m", m},
                   {"alpha", sp.alpha},
                   {"beta", sp.beta},
                   {"n_obs", sp.observed},
                   {"n_future", sp.future},
                   {"pred", pred},
                   {"observed", LabelSequence(pred.begin(), pred.begin() + static_cast<long>(sp.observed))},
                   {"future", LabelSequence(pred.begin() + static_cast<long>(sp.observed), pred.end())}};
      out << line.dump() << "\n";
    }
  }
  std::cout << "wrote " << jobs * m_count << " prediction records to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictionSet {
  std::size_t n_obs = 0, n_future = 0;
  std::map<std::size_t, LabelSequence> samples;  // m -> full prediction
};

int cmd_eval(const std::string& predictions, const std::string& data_dir, const std::string& out_prefix) {
  const Dataset data = read_dataset(data_dir);
  std::map<std::string, const SequenceRecord*> by_id;
  for (const auto& r : data.records) by_id[r.id] = &r;

  // (alpha, beta) -> id -> samples
  std::map<std::pair<double, double>, std::map<std::string, PredictionSet>> groups;
  std::ifstream in(predictions);
  if (!in) throw FormatError("cannot read " + predictions);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = predictions + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    try {
      const std::string id = j.at("id");
      auto it = by_id.find(id);
      if (it == by_id.end()) throw FormatError(where + ": unknown sequence id '" + id + "'");
      const double alpha = j.at("alpha"), beta = j.at("beta");
      const ProtocolSplit sp = split_protocol(it->second->length(), alpha, beta);
      const std::size_t n_obs = j.at("n_obs"), n_future = j.at("n_future");
      if (n_obs != sp.observed || n_future != sp.future) {
        throw FormatError(where + ": n_obs/n_future disagree with the split of the ground truth");
      }
      LabelSequence pred = j.at("pred").get<LabelSequence>();
      if (pred.size() != sp.total()) throw FormatError(where + ": prediction length is not n_obs + n_future");
      PredictionSet& set = groups[{alpha, beta}][id];
      set.n_obs = n_obs;
      set.n_future = n_future;
      if (!set.samples.emplace(j.at("m").get<std::size_t>(), std::move(pred)).second) {
        throw FormatError(where + ": duplicate sample index");
      }
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (groups.empty()) throw FormatError(predictions + " holds no prediction records");

  std::ostringstream report;
  std::ofstream jsonl(out_prefix + ".jsonl", std::ios::trunc);
  if (!jsonl) throw FormatError("cannot write " + out_prefix + ".jsonl");
  report.setf(std::ios::fixed);
  report.precision(2);
  for (const auto& [ab, videos] : groups) {
    double mean_sum = 0.0, top_sum = 0.0;
    std::vector<VideoDiversity> div;
    std::vector<std::vector<LabelSequence>> fut_sets, obs_sets;
    std::vector<Region> fut_regions, obs_regions;
    std::size_t min_m = std::numeric_limits<std::size_t>::max();
    for (const auto& [id, set] : videos) {
      std::vector<LabelSequence> samples;
      for (const auto& [m, p] : set.samples) samples.push_back(p);
      min_m = std::min(min_m, samples.size());
      const ProtocolSplit sp = split_protocol(by_id.at(id)->length(), ab.first, ab.second);
      const LabelSequence gt = window_labels(*by_id.at(id), sp);
      const Region fut{sp.observed, sp.total()}, obs{0, sp.observed};
      const SampleScores s = evaluate_samples(samples, gt, fut);
      mean_sum += s.mean_moc;
      top_sum += s.top1_moc;
      json vrec = {{"kind", "video"}, {"alpha", ab.first}, {"beta", ab.second}, {"id", id},
                   {"mean_moc", s.mean_moc}, {"top1_moc", s.top1_moc}, {"samples", samples.size()}};
      if (samples.size() >= 2) {
        VideoDiversity v{mfss_single(samples, obs), s.mean_moc, mfss_single(samples, fut)};
        vrec["observed_mfss"] = v.observed_mfss;
        vrec["future_mfss"] = v.future_mfss;
        div.push_back(v);
      }
      jsonl << vrec.dump() << "\n";
    }
    const double z = static_cast<double>(videos.size());
    json summary = {{"kind", "summary"}, {"alpha", ab.first}, {"beta", ab.second}, {"videos", videos.size()},
                    {"mean_moc", mean_sum / z}, {"top1_moc", top_sum / z}};
    report << "alpha=" << ab.first << " beta=" << ab.second << "  videos=" << videos.size() << "\n";
    report << "  Mean MoC   " << mean_sum / z << "\n  Top-1 MoC  " << top_sum / z << "\n";
    if (min_m >= 2) {
      double obs_mfss = 0.0, fut_mfss = 0.0;
      std::vector<double> xo, yf;
      for (const auto& v : div) {
        obs_mfss += v.observed_mfss;
        fut_mfss += v.future_mfss;
        xo.push_back(v.observed_mfss);
        yf.push_back(v.future_mean_moc);
      }
      summary["observed_mfss"] = obs_mfss / z;
      summary["future_mfss"] = fut_mfss / z;
      report << "  MFSS future   " << fut_mfss / z << "\n  MFSS observed " << obs_mfss / z << "\n";
      if (div.size() >= 4) {
        const auto buckets = quartile_report(div);
        summary["spearman_observed_mfss_vs_mean_moc"] = spearman(xo, yf);
        report << "  quartile  videos  obs MFSS  Mean MoC  fut MFSS\n";
        for (std::size_t q = 0; q < buckets.size(); ++q) {
          const auto& b = buckets[q];
          report << "  Q" << q + 1 << "        " << b.count << "       " << b.observed_mfss << "     "
                 << b.future_mean_moc << "     " << b.future_mfss << "\n";
          jsonl << json{{"kind", "quartile"}, {"alpha", ab.first}, {"beta", ab.second}, {"quartile", q + 1},
                        {"videos", b.count}, {"observed_mfss", b.observed_mfss},
                        {"future_mean_moc", b.future_mean_moc}, {"future_mfss", b.future_mfss}}
                       .dump()
                << "\n";
        }
      }
    } else {
      report << "  MFSS n/a (needs at least 2 samples per sequence)\n";
    }
    jsonl << summary.dump() << "\n";
    report << "\n";
  }
  write_text(out_prefix + ".txt", report.str());
  std::cout << report.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, double eps) {
  const auto entries = run_gradient_suite(seed, eps);
  double worst = 0.0;
  for (const auto& e : entries) {
    std::cout << e.name << "  max_rel_err=" << e.result.max_relative_error << "  coords=" << e.result.coordinates
              << "\n";
    worst = std::max(worst, e.result.max_relative_error);
  }
  const bool ok = worst < 1e-4;
  std::cout << "max relative error " << worst << (ok ? "  PASS" : "  FAIL") << " (threshold 1e-4)\n";
  return ok ? kExitOk : kExitGradcheck;
}

int cmd_inspect_gates(const std::string& checkpoint, const std::string& data_dir, const std::string& id, double alpha,
                      double beta, const std::string& out, std::uint64_t seed, std::optional<int> step) {
  LoadedModel model = load_model(checkpoint);
  if (!model.config.model.has_gate()) throw ConfigError("model was trained without gates (feature_only)");
  const Dataset data = read_dataset(data_dir);
  const SequenceRecord* rec = nullptr;
  for (const auto& r : data.records) {
    if (r.id == id) rec = &r;
  }
  if (!rec) throw FormatError("no sequence '" + id + "' in " + data_dir);
  const ProtocolSplit sp = split_protocol(rec->length(), alpha, beta);
  const Tensor cond = build_condition(*rec, sp);
  const std::size_t c = model.config.model.num_classes;
  Rng rng(seed);
  Tensor y_t({sp.total(), c});
  Tensor self_cond({sp.total(), c});
  std::optional<double> t;
  if (model.config.train.mode == TrainMode::stochastic) {
    const int s = step.value_or(model.config.diffusion.steps);
    check_step(make_schedule(model.config.diffusion.schedule, model.config.diffusion.steps), s);
    fill_normal(y_t, rng);
    t = s;
  }
  const GtanOutput fwd = gtan_forward(model.params, y_t, self_cond, cond, t, false, rng);
  ArrayContainer gates;
  for (std::size_t s = 0; s < fwd.gates.gates.size(); ++s) {
    for (std::size_t l = 0; l < fwd.gates.gates[s].size(); ++l) {
      gates.arrays.push_back({"stage" + std::to_string(s) + ".layer" + std::to_string(l) + ".gate", fwd.gates.gates[s][l]});
    }
  }
  gates.text = json{{"id", id}, {"alpha", alpha}, {"beta", beta}, {"n_obs", sp.observed}, {"n_future", sp.future},
                    {"step", t ? json(*t) : json(nullptr)}, {"seed", seed}}
                   .dump();
  write_container(out, gates);
  std::cout << "wrote " << gates.arrays.size() << " gate arrays to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated temporal diffusion for dense action anticipation"};
  app.require_subcommand(1);

  ConfigArgs gen_cfg, train_cfg;
  std::string out, data_dir, checkpoint, predictions, id;
  std::optional<std::uint64_t> gen_seed;
  std::uint64_t seed = 0;
  std::optional<std::string> resume;
  SampleArgs sample;
  double eps = 1e-5, alpha = 0.2, beta = 0.3;
  std::optional<int> step;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset (train/ and test/)");
  gen_cfg.attach(gen);
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "overrides data.seed");

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint.gtd, log.jsonl, config.ini");
  train_cfg.attach(train);
  train->add_option("--data", data_dir, "training split directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--seed", seed, "training seed")->required();
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* smp = app.add_subcommand("sample", "write M prediction records per sequence and (alpha, beta)");
  smp->add_option("--checkpoint", sample.checkpoint)->required()->check(CLI::ExistingFile);
  smp->add_option("--data", sample.data_dir, "split directory")->required()->check(CLI::ExistingDirectory);
  smp->add_option("--out", sample.out, "prediction records (jsonl)")->required();
  smp->add_option("--seed", sample.seed)->required();
  smp->add_option("--alpha", sample.alphas, "observed fraction (repeatable)");
  smp->add_option("--beta", sample.betas, "future fraction (repeatable)");
  smp->add_option("--samples", sample.samples, "samples per sequence (M)");
  smp->add_option("--threads", sample.threads, "worker threads");
  smp->add_option("--sampler", sample.sampler, "ddim or ddpm (default from checkpoint)");
  smp->add_option("--inference-steps", sample.inference_steps, "denoising steps D (default from checkpoint)");

  auto* ev = app.add_subcommand("eval", "score prediction records against ground truth");
  ev->add_option("--predictions", predictions)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "split directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", out, "report prefix; writes <out>.txt and <out>.jsonl")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite at the tiny configuration");
  gc->add_option("--seed", seed, "suite seed (default 0)");
  gc->add_option("--eps", eps, "finite-difference step for the operator checks");

  auto* ig = app.add_subcommand("inspect-gates", "dump gate activations for one sequence");
  ig->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  ig->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  ig->add_option("--id", id, "sequence id")->required();
  ig->add_option("--alpha", alpha);
  ig->add_option("--beta", beta);
  ig->add_option("--out", out, "gate container")->required();
  ig->add_option("--seed", seed, "seed for the noisy input");
  ig->add_option("--step", step, "diffusion step (default T)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_cfg, out, gen_seed);
    if (*train) return cmd_train(train_cfg, data_dir, out, seed, resume);
    if (*smp) return cmd_sample(sample);
    if (*ev) return cmd_eval(predictions, data_dir, out);
    if (*gc) return cmd_gradcheck(seed, eps);
    if (*ig) return cmd_inspect_gates(checkpoint, data_dir, id, alpha, beta, out, seed, step);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}
