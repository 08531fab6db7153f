#include <gtest/gtest.h>

#include <cmath>

#include "gtd/diffusion.hpp"
#include "gtd/gtan.hpp"
#include "gtd/reference.hpp"

using namespace gtd;

namespace {

GtanConfig small_config() {
  GtanConfig c;
  c.stages = 3;
  c.layers_per_stage = 3;
  c.channels = 6;
  c.num_classes = 5;
  c.feature_dim = 4;
  c.dropout_rate = 0.25;
  return c;
}

Tensor normal_tensor(Dims dims, Rng& rng) {
  Tensor t(std::move(dims));
  fill_normal(t, rng);
  return t;
}

struct Inputs {
  Tensor y_t, sc, cond;
};

Inputs random_inputs(const GtanConfig& c, std::size_t n, Rng& rng) {
  return {normal_tensor({n, c.num_classes}, rng), normal_tensor({n, c.num_classes}, rng),
          normal_tensor({n, c.feature_dim}, rng)};
}

}  // namespace

TEST(StepEmbedding, Examples) {
  EXPECT_EQ(sinusoidal_step_embedding(0.0, 4), (std::vector<double>{0, 0, 1, 1}));
  const auto e = sinusoidal_step_embedding(1.0, 2);
  EXPECT_NEAR(e[0], std::sin(1.0), 1e-15);
  EXPECT_NEAR(e[1], std::cos(1.0), 1e-15);
  EXPECT_NEAR(e[0], 0.84147, 1e-5);
  EXPECT_NEAR(e[1], 0.54030, 1e-5);
  EXPECT_THROW(sinusoidal_step_embedding(1.0, 3), ConfigError);
}

TEST(AssembleInput, ConcatenatesPerFrame) {
  const Tensor out = assemble_input(Tensor({1, 2}, {1, 2}), Tensor({1, 2}, {0, 0}), Tensor({1, 1}, {5}));
  EXPECT_EQ(out.storage(), (std::vector<double>{1, 2, 0, 0, 5}));
  GtanConfig c;
  c.num_classes = 48;
  c.feature_dim = 64;
  EXPECT_EQ(c.input_width(), 160u);
  EXPECT_EQ(assemble_input(Tensor({3, 48}), Tensor({3, 48}), Tensor({3, 64})).dim(1), 160u);
  EXPECT_THROW(assemble_input(Tensor({3, 2}), Tensor({2, 2}), Tensor({3, 1})), ShapeError);
}

TEST(GtaBlock, ZeroParamsIsIdentity) {
  GtanConfig c = small_config();
  const ModelParams p = zero_params(c);
  Rng rng(1);
  const Tensor x = normal_tensor({c.channels, 10}, rng);
  Graph g(false);
  const ParamVars v = bind(g, p, false);
  EXPECT_EQ(g.value(gta_block(g, g.leaf(x), v.stages[0].layers[1], 1, c, true, rng)), x);
}

TEST(GtaBlock, ZeroGateHalvesFeature) {
  GtanConfig c = small_config();
  c.dropout_rate = 0.0;
  Rng rng(2);
  ModelParams p = init_params(c, rng);
  auto& layer = p.stages[0].layers[0];
  layer.gate.weight.fill(0.0);
  layer.gate.bias.fill(0.0);
  const Tensor x = normal_tensor({c.channels, 9}, rng);
  Graph g(false);
  const ParamVars v = bind(g, p, false);
  Tensor gate;
  gta_block(g, g.leaf(x), v.stages[0].layers[0], 0, c, false, rng, &gate);
  for (double s : gate.data()) EXPECT_EQ(s, 0.5);
  // the block output must match ReLU(pointwise(0.5 * feature)) + x, built from the raw kernels
  const Tensor f = kernels::conv1d_dilated(x, layer.feature.weight, layer.feature.bias, 1);
  Tensor half(f.dims());
  for (std::size_t i = 0; i < f.size(); ++i) half[i] = 0.5 * f[i];
  const Tensor pw = kernels::conv1d_dilated(half, layer.pointwise.weight, layer.pointwise.bias, 1);
  Graph g2(false);
  const ParamVars v2 = bind(g2, p, false);
  const Tensor& out = g2.value(gta_block(g2, g2.leaf(x), v2.stages[0].layers[0], 0, c, false, rng));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], x[i] + std::max(0.0, pw[i]), 1e-12);
}

TEST(GtaBlock, SaturatedGateMatchesFeatureOnly) {
  GtanConfig gated = small_config();
  GtanConfig plain = gated;
  plain.gating_mode = GatingMode::feature_only;
  Rng rng(3);
  ModelParams pg = init_params(gated, rng);
  for (auto& s : pg.stages) {
    for (auto& l : s.layers) {
      l.gate.weight.fill(0.0);
      l.gate.bias.fill(20.0);
    }
  }
  // copy every shared tensor by name
  std::map<std::string, Tensor> by_name;
  pg.visit([&](const std::string& n, const Dims&, const Tensor& t) { by_name[n] = t; });
  ModelParams pf = zero_params(plain);
  pf.visit([&](const std::string& n, const Dims&, Tensor& t) { t = by_name.at(n); });
  EXPECT_LT(parameter_count(pf), parameter_count(pg));

  const Inputs in = random_inputs(gated, 20, rng);
  Rng r1(0), r2(0);
  const auto a = gtan_forward(pg, in.y_t, in.sc, in.cond, 7.0, false, r1);
  const auto b = gtan_forward(pf, in.y_t, in.sc, in.cond, 7.0, false, r2);
  for (std::size_t s = 0; s < a.stages.size(); ++s) EXPECT_LT(max_abs_diff(a.stages[s], b.stages[s]), 1e-6);
}

TEST(Gtan, ShapeContract) {
  GtanConfig c = small_config();
  c.num_classes = 5;
  c.stages = 3;
  Rng rng(4);
  const ModelParams p = init_params(c, rng);
  const Inputs in = random_inputs(c, 32, rng);
  const auto out = gtan_forward(p, in.y_t, in.sc, in.cond, 3.0, true, rng);
  ASSERT_EQ(out.stages.size(), 3u);
  for (const auto& s : out.stages) EXPECT_EQ(s.dims(), (Dims{32, 5}));
  ASSERT_EQ(out.gates.gates.size(), 3u);
  for (const auto& st : out.gates.gates) {
    ASSERT_EQ(st.size(), c.layers_per_stage);
    for (const auto& gt : st) {
      EXPECT_EQ(gt.dims(), (Dims{c.channels, 32}));
      for (double v : gt.data()) EXPECT_TRUE(v > 0.0 && v < 1.0);
    }
  }
  EXPECT_THROW(gtan_forward(p, Tensor({32, 4}), in.sc, in.cond, 3.0, true, rng), ShapeError);
}

TEST(Gtan, ZeroNetworkOutputsZero) {
  const GtanConfig c = small_config();
  Rng rng(5);
  const Inputs in = random_inputs(c, 12, rng);
  for (const auto& s : gtan_forward(zero_params(c), in.y_t, in.sc, in.cond, 10.0, true, rng).stages) {
    for (double v : s.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Gtan, FeatureOnlyHasNoGateParams) {
  GtanConfig c = small_config();
  c.gating_mode = GatingMode::feature_only;
  for (const auto& n : parameter_names(c)) EXPECT_EQ(n.find("gate"), std::string::npos) << n;
  c.gating_mode = GatingMode::gated;
  std::size_t gates = 0;
  for (const auto& n : parameter_names(c)) gates += n.find(".gate.") != std::string::npos;
  EXPECT_EQ(gates, 2 * c.stages * c.layers_per_stage);
}

TEST(Gtan, OutputsRespectReceptiveField) {
  GtanConfig c = small_config();
  c.stages = 2;
  c.layers_per_stage = 2;  // radius 1 + 2 = 3 per stage
  ASSERT_EQ(receptive_radius(c), 3u);
  Rng rng(6);
  const ModelParams p = init_params(c, rng);
  const std::size_t n = 20, reach = c.stages * receptive_radius(c);
  Inputs in = random_inputs(c, n, rng);
  Rng r1(0);
  const auto base = gtan_forward(p, in.y_t, in.sc, in.cond, 4.0, false, r1);
  in.cond.at(0, 0) += 3.0;
  Rng r2(0);
  const auto moved = gtan_forward(p, in.y_t, in.sc, in.cond, 4.0, false, r2);
  const Tensor& a = base.stages.back();
  const Tensor& b = moved.stages.back();
  for (std::size_t t = reach + 1; t < n; ++t) {
    for (std::size_t k = 0; k < c.num_classes; ++k) EXPECT_EQ(a.at(t, k), b.at(t, k)) << "frame " << t;
  }
  double near = 0.0;
  for (std::size_t t = 0; t <= reach; ++t) {
    for (std::size_t k = 0; k < c.num_classes; ++k) near += std::abs(a.at(t, k) - b.at(t, k));
  }
  EXPECT_GT(near, 0.0);
}

TEST(Gtan, UndilatedGateUsesDilationOne) {
  GtanConfig c = small_config();
  c.gating_mode = GatingMode::gated_undilated_gate;
  c.dropout_rate = 0.0;
  Rng rng(7);
  const ModelParams p = init_params(c, rng);
  const Tensor x = normal_tensor({c.channels, 16}, rng);
  const auto& layer = p.stages[0].layers[2];
  Graph g(false);
  const ParamVars v = bind(g, p, false);
  Tensor gate;
  gta_block(g, g.leaf(x), v.stages[0].layers[2], 2, c, false, rng, &gate);
  const Tensor pre = kernels::conv1d_dilated(x, layer.gate.weight, layer.gate.bias, 1);
  for (std::size_t i = 0; i < pre.size(); ++i) EXPECT_NEAR(gate[i], 1.0 / (1.0 + std::exp(-pre[i])), 1e-14);
}

TEST(Gtan, StepEmbeddingChangesOutput) {
  const GtanConfig c = small_config();
  Rng rng(8);
  const ModelParams p = init_params(c, rng);
  const Inputs in = random_inputs(c, 8, rng);
  Rng r1(0), r2(0);
  EXPECT_GT(max_abs_diff(gtan_forward(p, in.y_t, in.sc, in.cond, 1.0, false, r1).stages.back(),
                         gtan_forward(p, in.y_t, in.sc, in.cond, 900.0, false, r2).stages.back()),
            0.0);
}

TEST(Gtan, ReferenceForwardAgrees) {
  for (GatingMode mode : {GatingMode::gated, GatingMode::feature_only, GatingMode::gated_undilated_gate}) {
    GtanConfig c = small_config();
    c.gating_mode = mode;
    Rng rng(9);
    const ModelParams p = init_params(c, rng);
    const Inputs in = random_inputs(c, 14, rng);
    for (bool train : {false, true}) {
      for (std::optional<double> step : {std::optional<double>(12.0), std::optional<double>()}) {
        Rng r1(31), r2(31);
        const auto tape = gtan_forward(p, in.y_t, in.sc, in.cond, step, train, r1);
        const auto ref = reference::forward(p, in.y_t, in.sc, in.cond, step, train, r2);
        ASSERT_EQ(ref.size(), tape.stages.size());
        for (std::size_t s = 0; s < ref.size(); ++s) {
          for (std::size_t t = 0; t < 14; ++t) {
            for (std::size_t k = 0; k < c.num_classes; ++k) {
              EXPECT_NEAR(tape.stages[s].at(t, k), static_cast<double>(ref[s].at(k, t)), 1e-12);
            }
          }
        }
      }
    }
  }
}

TEST(Params, FlattenRoundTripAndNames) {
  const GtanConfig c = small_config();
  Rng rng(10);
  const ModelParams p = init_params(c, rng);
  const auto flat = flatten(p);
  EXPECT_EQ(flatten(unflatten(c, flat)), flat);
  EXPECT_EQ(parameter_names(c).size(), flat.size());
  auto shorter = flat;
  shorter.pop_back();
  EXPECT_THROW(unflatten(c, shorter), ShapeError);
  // fan-in bound on a 3-tap conv over `channels` inputs
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.channels * c.kernel_size));
  for (double v : p.stages[1].layers[0].feature.weight.data()) EXPECT_LE(std::abs(v), bound);
}
