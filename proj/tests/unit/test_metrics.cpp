#include <gtest/gtest.h>

#include "gtd/metrics.hpp"

using namespace gtd;

TEST(Moc, Examples) {
  const LabelSequence gt{0, 0, 1, 1};
  const Region all{0, 4};
  EXPECT_EQ(moc(gt, gt, all), 100.0);
  EXPECT_EQ(moc({0, 0, 1, 0}, gt, all), 75.0);
  EXPECT_EQ(moc({2, 2, 0, 0}, gt, all), 0.0);
}

TEST(Moc, OnlyPresentClassesCountAndRegionIsRespected) {
  // class 2 is predicted but absent from gt: it adds no term
  EXPECT_EQ(moc({2, 2, 1, 1}, {0, 0, 1, 1}, Region{0, 4}), 50.0);
  EXPECT_EQ(moc({9, 9, 1, 0}, {0, 0, 1, 1}, Region{2, 4}), 50.0);
  EXPECT_THROW(moc({0}, {0, 0}, Region{0, 1}), ShapeError);
  EXPECT_THROW(moc({0, 0}, {0, 0}, Region{1, 1}), ConfigError);
  EXPECT_THROW(moc({0, 0}, {0, 0}, Region{0, 3}), ShapeError);
}

TEST(EvaluateSamples, MeanAndTop1) {
  // gt over 5 frames of one class: MoC equals the percentage of matching frames
  const LabelSequence gt{0, 0, 0, 0, 0};
  const std::vector<LabelSequence> s{{0, 0, 1, 1, 1}, {0, 0, 0, 1, 1}};  // 40, 60
  const auto r = evaluate_samples(s, gt, Region{0, 5});
  EXPECT_DOUBLE_EQ(r.mean_moc, 50.0);
  EXPECT_DOUBLE_EQ(r.top1_moc, 60.0);
  const auto one = evaluate_samples({s[0]}, gt, Region{0, 5});
  EXPECT_EQ(one.mean_moc, one.top1_moc);
}

TEST(Mfss, Examples) {
  const Region r{0, 4};
  EXPECT_EQ(mfss_single({{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}}, r), 0.0);
  EXPECT_EQ(mfss_single({{0, 1, 2, 3}, {0, 1, 2, 0}}, r), 25.0);
  EXPECT_EQ(mfss_single({{0, 0, 0, 0}, {1, 1, 1, 1}, {2, 2, 2, 2}}, r), 100.0);
  // only the region is compared
  EXPECT_EQ(mfss_single({{5, 1, 2}, {6, 1, 2}}, Region{1, 3}), 0.0);
}

TEST(Mfss, PairAverageByDirectCount) {
  // three samples: pairs (0,1) differ in 2 of 4, (0,2) in 4, (1,2) in 2 -> (50 + 100 + 50) / 3
  const std::vector<LabelSequence> s{{0, 0, 0, 0}, {0, 0, 1, 1}, {1, 1, 1, 1}};
  EXPECT_DOUBLE_EQ(mfss_single(s, Region{0, 4}), 200.0 / 3.0);
  EXPECT_DOUBLE_EQ(mfss({s, {{0, 0, 0, 0}, {0, 0, 0, 0}}}, {Region{0, 4}, Region{0, 4}}), 100.0 / 3.0);
}

TEST(Quartiles, SingletonBuckets) {
  std::vector<VideoDiversity> v{{30, 1, 0}, {0, 4, 0}, {20, 2, 0}, {10, 3, 0}};
  const auto q = quartile_report(v);
  ASSERT_EQ(q.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(q[i].count, 1u);
    EXPECT_EQ(q[i].observed_mfss, 10.0 * static_cast<double>(i));
    EXPECT_EQ(q[i].future_mean_moc, 4.0 - static_cast<double>(i));
  }
}

TEST(Quartiles, RemainderGoesToEarlyBuckets) {
  std::vector<VideoDiversity> v;
  for (int i = 0; i < 10; ++i) v.push_back({static_cast<double>(i), 42.0, 0.0});
  const auto q = quartile_report(v);
  EXPECT_EQ(q[0].count, 3u);
  EXPECT_EQ(q[1].count, 3u);
  EXPECT_EQ(q[2].count, 2u);
  EXPECT_EQ(q[3].count, 2u);
  for (const auto& b : q) EXPECT_EQ(b.future_mean_moc, 42.0);
  EXPECT_DOUBLE_EQ(q[0].observed_mfss, 1.0);  // videos 0,1,2
  EXPECT_DOUBLE_EQ(q[3].observed_mfss, 8.5);  // videos 8,9
  EXPECT_THROW(quartile_report({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}), ConfigError);
}

TEST(Spearman, RanksAndSign) {
  EXPECT_EQ(average_ranks({10, 30, 20, 20}), (std::vector<double>{1, 4, 2.5, 2.5}));
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {20, 40, 10, 30}), 0.0);
  EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
  // monotone transform leaves it unchanged
  EXPECT_DOUBLE_EQ(spearman({0.1, 5, 2, 9}, {3, 1, 2, 0}), spearman({1, 125, 8, 729}, {3, 1, 2, 0}));
}
