#include <gtest/gtest.h>

#include <sstream>

#include "gtd/run_config.hpp"

using namespace gtd;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

}  // namespace

TEST(RunConfig, DefaultsValidate) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.gtd.diffusion.self_cond_prob, 0.5);
  EXPECT_EQ(c.gtd.diffusion.schedule, ScheduleKind::linear);
}

TEST(RunConfig, ParsesSectionsAndLists) {
  const RunConfig c = parse(
      "[data]\ngrammar = ambiguous\nfeature_dim = 12\n"
      "[model]\nstages = 2\ngating = feature_only\n"
      "[diffusion]\nsampler = ddpm\nlabel_scaling = signed\n"
      "[train]\nloss = bce\nbetas = 0.5, 0.25\n"
      "[eval]\nthreads = 4\n");
  EXPECT_EQ(c.data.grammar, GrammarPreset::ambiguous);
  EXPECT_EQ(c.data.feature_dim, 12u);
  EXPECT_EQ(c.gtd.model.stages, 2u);
  EXPECT_EQ(c.gtd.model.gating_mode, GatingMode::feature_only);
  EXPECT_EQ(c.gtd.diffusion.sampler, SamplerKind::ddpm);
  EXPECT_EQ(c.gtd.diffusion.label_scaling, LabelScaling::signed_unit);
  EXPECT_EQ(c.gtd.train.loss, LossKind::bce);
  EXPECT_EQ(c.gtd.train.betas, (std::vector<double>{0.5, 0.25}));
  EXPECT_EQ(c.eval.threads, 4u);
}

TEST(RunConfig, RejectsUnknownAndMalformed) {
  EXPECT_THROW(parse("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse("[nosuch]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("stages = 3\n"), ConfigError);
  EXPECT_THROW(parse("[model]\nstages = three\n"), ConfigError);
  EXPECT_THROW(parse("[model]\nstages = -1\n"), ConfigError);
  EXPECT_THROW(parse("[train]\nlr = 1e-3x\n"), ConfigError);
  EXPECT_THROW(parse("[model]\ngating = maybe\n"), ConfigError);
  EXPECT_THROW(parse("[model\n"), ConfigError);
  EXPECT_NO_THROW(parse("[model]\n"));
}

TEST(RunConfig, OverridesApplyInOrder) {
  RunConfig c;
  apply_override(c, "train.lr=0.01");
  apply_override(c, " train.lr = 0.02 ");
  EXPECT_EQ(c.gtd.train.learning_rate, 0.02);
  EXPECT_THROW(apply_override(c, "train.lr"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.nope=1"), ConfigError);
}

TEST(RunConfig, LoadValidates) {
  EXPECT_THROW(load_run_config(std::nullopt, {"diffusion.inference_steps=2000"}), ConfigError);
  EXPECT_THROW(load_run_config(std::nullopt, {"train.mode=deterministic", "train.loss=mse"}), ConfigError);
  EXPECT_THROW(load_run_config(std::filesystem::path("/nonexistent/run.ini"), {}), ConfigError);
  EXPECT_NO_THROW(load_run_config(std::nullopt, {"train.mode=deterministic", "train.loss=ce"}));
}

TEST(RunConfig, IniRoundTrip) {
  RunConfig c;
  apply_override(c, "model.dropout=0.125");
  apply_override(c, "train.alphas=0.3");
  apply_override(c, "data.noise_sigma=0.1");
  apply_override(c, "diffusion.schedule=cosine");
  const std::string ini = to_ini(c);
  EXPECT_EQ(to_ini(parse(ini)), ini);
  EXPECT_NE(ini.find("dropout = 0.125"), std::string::npos);
  EXPECT_NE(ini.find("schedule = cosine"), std::string::npos);
}
