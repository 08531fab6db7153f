#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "gtd/data.hpp"

using namespace gtd;
namespace fs = std::filesystem;

namespace {

fs::path fixture(const std::string& name) { return fs::path(GTD_FIXTURE_DIR) / name; }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gtd_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

GrammarSpec single_branch(std::vector<Segment> segs, std::size_t classes) {
  GrammarSpec g;
  g.classes = classes;
  g.activities = {{0, {Branch{std::move(segs)}}}};
  g.validate();
  return g;
}

}  // namespace

TEST(Grammar, FixedDurationsAreDeterministic) {
  const GrammarSpec g = single_branch({{0, 3, 3}, {1, 2, 2}}, 2);
  Rng rng(1);
  EXPECT_EQ(sample_sequence(g, rng).labels, (LabelSequence{0, 0, 0, 1, 1}));
}

TEST(Grammar, SharedPrefixOpensEverySequence) {
  const GrammarSpec g = make_grammar(GrammarPreset::ambiguous);
  ASSERT_FALSE(g.shared_prefix.empty());
  const int prefix_action = g.activity(g.shared_prefix[0].first).branches[0].segments[0].action;
  Rng rng(2);
  std::set<int> seen;
  for (int i = 0; i < 500; ++i) {
    const SequenceRecord r = sample_sequence(g, rng);
    seen.insert(r.activity);
    if (r.activity == g.shared_prefix[0].first || r.activity == g.shared_prefix[0].second) {
      for (int n = 0; n < 20; ++n) EXPECT_EQ(r.labels[static_cast<std::size_t>(n)], prefix_action);
    }
  }
  EXPECT_EQ(seen.size(), g.activities.size());
}

TEST(Grammar, DurationsStayInBounds) {
  const GrammarSpec g = single_branch({{0, 2, 4}, {1, 1, 1}}, 2);
  Rng rng(3);
  std::set<std::size_t> lengths;
  for (int i = 0; i < 1000; ++i) {
    const auto labels = sample_sequence(g, rng).labels;
    std::size_t run = 0;
    while (labels[run] == 0) ++run;
    lengths.insert(run);
  }
  EXPECT_EQ(lengths, (std::set<std::size_t>{2, 3, 4}));
}

TEST(Grammar, RejectsInvalidSpecs) {
  EXPECT_THROW(single_branch({{0, 3, 2}}, 1), ConfigError);
  EXPECT_THROW(single_branch({{0, 1, 1}, {2, 1, 1}}, 2), ConfigError);
  EXPECT_THROW(single_branch({{0, 1, 1}}, 2), ConfigError);  // class 1 never used
  GrammarSpec g = make_grammar(GrammarPreset::unambiguous);
  g.shared_prefix = {{0, 1}};
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Features, NoiselessRowsEqualEmbeddings) {
  Rng rng(4);
  const Tensor emb = make_class_embeddings(3, 5, rng);
  const LabelSequence labels{0, 2, 1, 1};
  const Tensor f = synthesize_features(labels, emb, 0.0, std::nullopt, rng);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(f.at(n, k), emb.at(static_cast<std::size_t>(labels[n]), k));
  }
  for (std::size_t a = 0; a < 3; ++a) {
    double norm = 0.0;
    for (double v : emb.row(a)) norm += v * v;
    EXPECT_NEAR(norm, 1.0, 1e-12);
  }
}

TEST(Features, EmptyAmbiguityRangeIsNoOp) {
  Rng rng(5);
  const Tensor emb = make_class_embeddings(2, 4, rng);
  const LabelSequence labels{0, 1, 1, 0, 1};
  Rng a(9), b(9);
  EXPECT_EQ(synthesize_features(labels, emb, 0.3, std::nullopt, a),
            synthesize_features(labels, emb, 0.3, AmbiguityRange{2, 2, 5.0}, b));
}

TEST(Features, AmbiguityOnlyTouchesItsRange) {
  Rng rng(6);
  const Tensor emb = make_class_embeddings(2, 4, rng);
  const LabelSequence labels{0, 1, 1, 0, 1, 0};
  Rng a(1);
  const Tensor f = synthesize_features(labels, emb, 0.0, AmbiguityRange{2, 4, 1.0}, a);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const bool inside = n >= 2 && n < 4;
    double diff = 0.0;
    for (std::size_t k = 0; k < 4; ++k) diff += std::abs(f.at(n, k) - emb.at(static_cast<std::size_t>(labels[n]), k));
    EXPECT_EQ(diff > 0.0, inside) << n;
  }
}

TEST(Split, Examples) {
  auto s = split_protocol(100, 0.2, 0.3);
  EXPECT_EQ(s.observed, 20u);
  EXPECT_EQ(s.future, 30u);
  EXPECT_EQ(s.total(), 50u);
  s = split_protocol(10, 0.5, 0.5);
  EXPECT_EQ(s.observed, 5u);
  EXPECT_EQ(s.future, 5u);
  s = split_protocol(7, 0.2, 0.3);
  EXPECT_EQ(s.observed, 1u);
  EXPECT_EQ(s.future, 2u);
  EXPECT_EQ(split_protocol(100, 0.29, 0.1).observed, 29u);
  EXPECT_THROW(split_protocol(10, 0.7, 0.5), ConfigError);
  EXPECT_THROW(split_protocol(1, 0.5, 0.5), ConfigError);
}

TEST(Split, ConditionZerosFuture) {
  SequenceRecord r;
  r.labels = {0, 1, 1, 0};
  r.features = Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor c = build_condition(r, ProtocolSplit{0.5, 0.5, 2, 2});
  EXPECT_EQ(c.storage(), (std::vector<double>{1, 2, 3, 4, 0, 0, 0, 0}));
  EXPECT_EQ(window_labels(r, ProtocolSplit{0.25, 0.5, 1, 2}), (LabelSequence{0, 1, 1}));
}

TEST(Generate, DeterministicAndPresetsValid) {
  for (GrammarPreset p : {GrammarPreset::unambiguous, GrammarPreset::ambiguous, GrammarPreset::mixed}) {
    DataConfig c;
    c.grammar = p;
    c.train_count = 6;
    c.test_count = 3;
    c.ambiguous_fraction = 0.5;
    c.extra_sigma_max = 1.0;
    const auto a = generate_data(c), b = generate_data(c);
    EXPECT_EQ(a.train.records, b.train.records);
    EXPECT_EQ(a.test.records, b.test.records);
    EXPECT_EQ(a.train.records.size(), 6u);
    EXPECT_EQ(a.test.records[0].id, "test-0");
    EXPECT_EQ(a.train.classes, 8u);
  }
}

TEST(Dataset, RoundTripHundredRecords) {
  DataConfig c;
  c.train_count = 100;
  c.test_count = 1;
  const auto d = generate_data(c);
  const fs::path dir = scratch_dir("roundtrip");
  write_dataset(dir, d.train);
  const Dataset back = read_dataset(dir);
  EXPECT_EQ(back.records, d.train.records);
  EXPECT_EQ(back.classes, d.train.classes);
  EXPECT_EQ(back.feature_dim, d.train.feature_dim);
  const fs::path again = scratch_dir("roundtrip2");
  write_dataset(again, back);
  EXPECT_EQ(read_file_bytes(dir / "features.bin"), read_file_bytes(again / "features.bin"));
  EXPECT_EQ(read_file_bytes(dir / "meta.jsonl"), read_file_bytes(again / "meta.jsonl"));
}

TEST(Dataset, ReadsExternallyWrittenFixture) {
  const Dataset ds = read_dataset(fixture("tiny_dataset"));
  ASSERT_EQ(ds.records.size(), 3u);
  EXPECT_EQ(ds.classes, 3u);
  EXPECT_EQ(ds.feature_dim, 3u);
  EXPECT_EQ(ds.records[1].id, "seq-b");
  EXPECT_EQ(ds.records[1].activity, 1);
  EXPECT_EQ(ds.records[2].labels, (LabelSequence{1, 0, 0, 0, 0, 2, 2}));
  // features[n][k] = 10 n + k + 0.25 label
  for (const auto& r : ds.records) {
    for (std::size_t n = 0; n < r.length(); ++n) {
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.features.at(n, k), 10.0 * n + k + 0.25 * r.labels[n]);
    }
  }
  // rewriting with this library reproduces the external bytes
  const fs::path dir = scratch_dir("fixture");
  write_dataset(dir, ds);
  EXPECT_EQ(read_file_bytes(dir / "features.bin"), read_file_bytes(fixture("tiny_dataset") / "features.bin"));
  EXPECT_EQ(read_file_bytes(dir / "meta.jsonl"), read_file_bytes(fixture("tiny_dataset") / "meta.jsonl"));
}

TEST(Dataset, RejectsMalformedInput) {
  const fs::path dir = scratch_dir("bad");
  fs::copy(fixture("tiny_dataset"), dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  {
    std::ofstream(dir / "meta.jsonl", std::ios::app) << R"({"activity":0,"id":"seq-x","labels":[0,1],"length":2})"
                                                     << "\n";
  }
  EXPECT_THROW(read_dataset(dir), FormatError);  // no feature array
  {
    std::ofstream(dir / "meta.jsonl", std::ios::trunc) << R"({"activity":0,"id":"seq-a","labels":[0,1],"length":2})"
                                                       << "\n";
  }
  EXPECT_THROW(read_dataset(dir), FormatError);  // labels/features length disagree
  {
    std::ofstream(dir / "meta.jsonl", std::ios::trunc) << "{not json\n";
  }
  EXPECT_THROW(read_dataset(dir), FormatError);
  EXPECT_THROW(read_dataset(dir / "missing"), FormatError);
}

TEST(Container, RoundTripAndHeaderChecks) {
  ArrayContainer c;
  c.arrays.push_back({"a", Tensor({2, 3}, {1, 2, 3, 4, 5, -0.0})});
  c.arrays.push_back({"b/c", Tensor({1}, {1e-300})});
  c.text = R"({"k":1})";
  const std::string bytes = encode_container(c);
  EXPECT_EQ(decode_container(bytes), c);
  EXPECT_EQ(encode_container(decode_container(bytes)), bytes);

  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_container(bad), FormatError);
  bad = bytes;
  bad[4] = static_cast<char>(kContainerVersion + 1);
  try {
    decode_container(bad);
    FAIL() << "version+1 accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported"), std::string::npos);
  }
  EXPECT_THROW(decode_container(bytes.substr(0, bytes.size() - 2)), FormatError);
  EXPECT_THROW(decode_container(bytes + "x"), FormatError);
  EXPECT_THROW(c.get("missing"), FormatError);
}
