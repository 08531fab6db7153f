#ifndef GTD_DATA_HPP
#define GTD_DATA_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gtd/container.hpp"
#include "gtd/diffusion.hpp"
#include "json.hpp"

namespace gtd {

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------

struct Segment {
  int action = 0;
  int min_frames = 1;
  int max_frames = 1;
};

struct Branch {
  std::vector<Segment> segments;
};

struct Activity {
  int id = 0;
  std::vector<Branch> branches;
};

/// Activities made of alternative branches of timed action segments.
/// `shared_prefix` lists activity pairs whose branches all begin with the same segment.
struct GrammarSpec {
  std::size_t classes = 0;
  std::vector<Activity> activities;
  std::vector<std::pair<int, int>> shared_prefix;
  std::uint64_t seed = 0;

  void validate() const {
    if (activities.empty()) throw ConfigError("grammar has no activities");
    std::set<int> used;
    for (const auto& a : activities) {
      if (a.branches.empty()) throw ConfigError("activity " + std::to_string(a.id) + " has no branches");
      for (const auto& b : a.branches) {
        if (b.segments.empty()) throw ConfigError("empty branch in activity " + std::to_string(a.id));
        for (const auto& s : b.segments) {
          if (s.min_frames < 1 || s.max_frames < s.min_frames) throw ConfigError("bad segment duration bounds");
          if (s.action < 0 || static_cast<std::size_t>(s.action) >= classes) {
            throw ConfigError("action id " + std::to_string(s.action) + " outside [0, classes)");
          }
          used.insert(s.action);
        }
      }
    }
    if (used.size() != classes) throw ConfigError("grammar class ids are not dense in [0, classes)");
    for (auto [x, y] : shared_prefix) {
      const Activity& ax = activity(x);
      const Activity& ay = activity(y);
      for (const auto& bx : ax.branches) {
        for (const auto& by : ay.branches) {
          const auto& sx = bx.segments.front();
          const auto& sy = by.segments.front();
          if (sx.action != sy.action || sx.min_frames != sy.min_frames || sx.max_frames != sy.max_frames) {
            throw ConfigError("activities flagged as sharing a prefix begin differently");
          }
        }
      }
    }
  }

  const Activity& activity(int id) const {
    for (const auto& a : activities) {
      if (a.id == id) return a;
    }
    throw ConfigError("no activity with id " + std::to_string(id));
  }
};

struct SequenceRecord {
  std::string id;
  int activity = 0;
  LabelSequence labels;
  Tensor features;  ///< |V| x D

  std::size_t length() const { return labels.size(); }

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

/// Uniform activity, uniform branch, uniform duration per segment. Features are left empty.
inline SequenceRecord sample_sequence(const GrammarSpec& spec, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_activity(0, spec.activities.size() - 1);
  const Activity& a = spec.activities[pick_activity(rng)];
  std::uniform_int_distribution<std::size_t> pick_branch(0, a.branches.size() - 1);
  const Branch& b = a.branches[pick_branch(rng)];
  SequenceRecord rec;
  rec.activity = a.id;
  for (const auto& s : b.segments) {
    std::uniform_int_distribution<int> dur(s.min_frames, s.max_frames);
    rec.labels.insert(rec.labels.end(), static_cast<std::size_t>(dur(rng)), s.action);
  }
  return rec;
}

struct AmbiguityRange {
  std::size_t begin = 0;
  std::size_t end = 0;  ///< exclusive
  double extra_sigma = 0.0;
};

/// feature[n] = embedding[label[n]] + sigma * g_n (+ extra_sigma * g'_n inside the ambiguity range).
inline Tensor synthesize_features(const LabelSequence& labels, const Tensor& embeddings, double noise_sigma,
                                  std::optional<AmbiguityRange> ambiguity, Rng& rng) {
  const std::size_t d = embeddings.dim(1);
  Tensor out({labels.size(), d});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto cls = static_cast<std::size_t>(labels[n]);
    if (cls >= embeddings.dim(0)) throw ShapeError("label without an embedding row");
    const bool dark = ambiguity && n >= ambiguity->begin && n < ambiguity->end;
    for (std::size_t k = 0; k < d; ++k) {
      double v = embeddings.at(cls, k);
      if (noise_sigma > 0.0) v += noise_sigma * normal(rng);
      if (dark && ambiguity->extra_sigma > 0.0) v += ambiguity->extra_sigma * normal(rng);
      out.at(n, k) = v;
    }
  }
  return out;
}

/// Unit-norm random class embeddings with every pairwise distance >= min_distance.
inline Tensor make_class_embeddings(std::size_t classes, std::size_t dim, Rng& rng, double min_distance = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Tensor e({classes, dim});
    for (std::size_t c = 0; c < classes; ++c) {
      double norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        e.at(c, k) = normal(rng);
        norm += e.at(c, k) * e.at(c, k);
      }
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < dim; ++k) e.at(c, k) /= norm;
    }
    bool ok = true;
    for (std::size_t a = 0; a < classes && ok; ++a) {
      for (std::size_t b = a + 1; b < classes && ok; ++b) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (e.at(a, k) - e.at(b, k)) * (e.at(a, k) - e.at(b, k));
        ok = std::sqrt(d2) >= min_distance;
      }
    }
    if (ok) return e;
  }
  throw ConfigError("could not place class embeddings; increase feature_dim");
}

// ---------------------------------------------------------------------------
// Observation protocol
// ---------------------------------------------------------------------------

struct ProtocolSplit {
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t observed = 0;  ///< N_o
  std::size_t future = 0;    ///< N_a
  std::size_t total() const { return observed + future; }
};

/// N_o = max(1, floor(alpha |V|)), N_a = max(1, floor(beta |V|)).
inline ProtocolSplit split_protocol(std::size_t video_length, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("alpha and beta must be positive");
  if (alpha + beta > 1.0 + 1e-12) throw ConfigError("alpha + beta must not exceed 1");
  // The small offset keeps products like 0.29 * 100 from flooring to 28.
  auto frames = [video_length](double frac) {
    const auto n = static_cast<std::size_t>(std::floor(frac * static_cast<double>(video_length) + 1e-9));
    return std::max<std::size_t>(1, n);
  };
  ProtocolSplit s{alpha, beta, frames(alpha), frames(beta)};
  if (s.total() > video_length) {
    throw ConfigError("sequence of " + std::to_string(video_length) + " frames is too short for the split");
  }
  return s;
}

/// First N_o rows of the features, then N_a zero rows.
inline Tensor build_condition(const SequenceRecord& rec, const ProtocolSplit& split) {
  if (rec.features.rank() != 2 || rec.features.dim(0) != rec.length()) {
    throw ShapeError("record features do not match its labels");
  }
  if (split.total() > rec.length()) throw ShapeError("split exceeds record length");
  const std::size_t d = rec.features.dim(1);
  Tensor out({split.total(), d});
  for (std::size_t n = 0; n < split.observed; ++n) {
    std::copy(rec.features.row(n).begin(), rec.features.row(n).end(), out.row(n).begin());
  }
  return out;
}

inline LabelSequence window_labels(const SequenceRecord& rec, const ProtocolSplit& split) {
  return LabelSequence(rec.labels.begin(), rec.labels.begin() + static_cast<long>(split.total()));
}

// ---------------------------------------------------------------------------
// Synthetic presets and dataset generation
// ---------------------------------------------------------------------------

enum class GrammarPreset { unambiguous, ambiguous, mixed };

inline GrammarPreset parse_grammar_preset(std::string_view s) {
  if (s == "unambiguous") return GrammarPreset::unambiguous;
  if (s == "ambiguous") return GrammarPreset::ambiguous;
  if (s == "mixed") return GrammarPreset::mixed;
  throw ConfigError("unknown grammar preset '" + std::string(s) + "'");
}

inline std::string to_string(GrammarPreset p) {
  switch (p) {
    case GrammarPreset::unambiguous: return "unambiguous";
    case GrammarPreset::ambiguous: return "ambiguous";
    case GrammarPreset::mixed: return "mixed";
  }
  return "?";
}

/// Eight-class presets.
///  unambiguous: every activity opens with its own action, single branch each.
///  ambiguous:   activities 0 and 1 share a long opening action and then diverge.
///  mixed:       like unambiguous, intended for use with observation noise (see DataConfig).
inline GrammarSpec make_grammar(GrammarPreset preset, std::uint64_t seed = 0) {
  auto branch = [](std::initializer_list<Segment> s) { return Branch{std::vector<Segment>(s)}; };
  GrammarSpec g;
  g.classes = 8;
  g.seed = seed;
  switch (preset) {
    case GrammarPreset::unambiguous:
      g.activities = {
          {0, {branch({{0, 22, 24}, {1, 14, 16}, {2, 14, 16}, {3, 12, 14}})}},
          {1, {branch({{4, 22, 24}, {5, 14, 16}, {6, 14, 16}, {7, 12, 14}})}},
          {2, {branch({{2, 22, 24}, {7, 14, 16}, {0, 14, 16}, {5, 12, 14}})}},
          {3, {branch({{6, 22, 24}, {3, 14, 16}, {4, 14, 16}, {1, 12, 14}})}},
      };
      break;
    case GrammarPreset::ambiguous:
      g.activities = {
          {0, {branch({{0, 20, 24}, {1, 20, 24}, {2, 20, 24}})}},
          {1, {branch({{0, 20, 24}, {3, 20, 24}, {4, 20, 24}})}},
          {2, {branch({{5, 20, 24}, {6, 20, 24}, {7, 20, 24}})}},
      };
      g.shared_prefix = {{0, 1}};
      break;
    case GrammarPreset::mixed:
      g.activities = {
          {0, {branch({{0, 20, 24}, {1, 20, 24}, {2, 20, 24}})}},
          {1, {branch({{3, 20, 24}, {4, 20, 24}, {5, 20, 24}})}},
          {2, {branch({{6, 20, 24}, {7, 20, 24}, {1, 20, 24}})}},
      };
      break;
  }
  g.validate();
  return g;
}

struct DataConfig {
  GrammarPreset grammar = GrammarPreset::unambiguous;
  std::size_t feature_dim = 16;
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  double noise_sigma = 0.1;
  double ambiguous_fraction = 0.0;  ///< share of sequences with whole-sequence extra feature noise
  double extra_sigma_max = 0.0;     ///< extra noise level drawn uniformly from [0, max] per noisy sequence
  std::uint64_t seed = 1;
};

struct Dataset {
  std::size_t classes = 0;
  std::size_t feature_dim = 0;
  std::vector<SequenceRecord> records;
};

struct GeneratedData {
  GrammarSpec grammar;
  Tensor embeddings;
  Dataset train;
  Dataset test;
};

/// Deterministic in (config, split, index): each record draws from its own stream.
inline SequenceRecord generate_record(const GrammarSpec& grammar, const Tensor& embeddings, const DataConfig& cfg,
                                      std::uint64_t split_tag, std::size_t index) {
  std::seed_seq seq{cfg.seed, split_tag, static_cast<std::uint64_t>(index)};
  Rng rng(seq);
  SequenceRecord rec = sample_sequence(grammar, rng);
  std::optional<AmbiguityRange> amb;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double coin = u(rng);
  const double level = u(rng) * cfg.extra_sigma_max;
  if (coin < cfg.ambiguous_fraction && level > 0.0) amb = AmbiguityRange{0, rec.length(), level};
  rec.features = synthesize_features(rec.labels, embeddings, cfg.noise_sigma, amb, rng);
  rec.id = (split_tag == 0 ? "train-" : "test-") + std::to_string(index);
  return rec;
}

inline GeneratedData generate_data(const DataConfig& cfg) {
  GeneratedData out;
  out.grammar = make_grammar(cfg.grammar, cfg.seed);
  Rng emb_rng(cfg.seed);
  out.embeddings = make_class_embeddings(out.grammar.classes, cfg.feature_dim, emb_rng);
  for (auto* ds : {&out.train, &out.test}) {
    ds->classes = out.grammar.classes;
    ds->feature_dim = cfg.feature_dim;
  }
  for (std::size_t i = 0; i < cfg.train_count; ++i) {
    out.train.records.push_back(generate_record(out.grammar, out.embeddings, cfg, 0, i));
  }
  for (std::size_t i = 0; i < cfg.test_count; ++i) {
    out.test.records.push_back(generate_record(out.grammar, out.embeddings, cfg, 1, i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory: meta.jsonl + features.bin
// ---------------------------------------------------------------------------

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "meta.jsonl", std::ios::trunc);
  if (!meta) throw FormatError("cannot write " + (dir / "meta.jsonl").string());
  ArrayContainer features;
  for (const auto& r : ds.records) {
    nlohmann::json line = {{"id", r.id}, {"activity", r.activity}, {"labels", r.labels}, {"length", r.length()}};
    meta << line.dump() << '\n';
    features.arrays.push_back({r.id, r.features});
  }
  features.text = nlohmann::json{{"classes", ds.classes}, {"feature_dim", ds.feature_dim}}.dump();
  write_container(dir / "features.bin", features);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "meta.jsonl");
  if (!meta) throw FormatError("cannot open " + (dir / "meta.jsonl").string());
  const ArrayContainer features = read_container(dir / "features.bin");
  Dataset ds;
  if (!features.text.empty()) {
    try {
      auto j = nlohmann::json::parse(features.text);
      ds.classes = j.value("classes", std::size_t{0});
      ds.feature_dim = j.value("feature_dim", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("features.bin metadata: ") + e.what());
    }
  }
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    SequenceRecord r;
    try {
      auto j = nlohmann::json::parse(line);
      r.id = j.at("id").get<std::string>();
      r.activity = j.value("activity", 0);
      r.labels = j.at("labels").get<LabelSequence>();
      if (j.at("length").get<std::size_t>() != r.labels.size()) {
        throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": length disagrees with labels");
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.labels.empty()) throw FormatError("record " + r.id + " has no frames");
    for (int l : r.labels) {
      if (l < 0) throw FormatError("record " + r.id + " has a negative label");
      max_label = std::max(max_label, l);
    }
    r.features = features.get(r.id);
    if (r.features.rank() != 2 || r.features.dim(0) != r.labels.size()) {
      throw FormatError("record " + r.id + ": labels/features length disagreement");
    }
    if (ds.feature_dim == 0) ds.feature_dim = r.features.dim(1);
    if (r.features.dim(1) != ds.feature_dim) throw FormatError("record " + r.id + ": feature width mismatch");
    ds.records.push_back(std::move(r));
  }
  if (ds.classes == 0) ds.classes = static_cast<std::size_t>(max_label + 1);
  if (max_label >= static_cast<int>(ds.classes)) throw FormatError("label exceeds declared class count");
  return ds;
}

}  // namespace gtd

#endif  // GTD_DATA_HPP
