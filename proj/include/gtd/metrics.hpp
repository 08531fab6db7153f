#ifndef GTD_METRICS_HPP
#define GTD_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "gtd/diffusion.hpp"

namespace gtd {

/// Half-open frame interval [begin, end).
struct Region {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end > begin ? end - begin : 0; }
};

inline void check_region(std::size_t length, const Region& r) {
  if (r.size() == 0) throw ConfigError("metric region is empty");
  if (r.end > length) throw ShapeError("metric region exceeds sequence length");
}

/// Mean over classes: per-class frame accuracy over the ground-truth frames of each class present
/// in the region, averaged over those classes, in percent.
inline double moc(const LabelSequence& pred, const LabelSequence& gt, const Region& region) {
  if (pred.size() != gt.size()) throw ShapeError("moc: prediction and ground truth lengths differ");
  check_region(gt.size(), region);
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // class -> (correct, total)
  for (std::size_t n = region.begin; n < region.end; ++n) {
    auto& [correct, total] = per_class[gt[n]];
    ++total;
    if (pred[n] == gt[n]) ++correct;
  }
  double acc = 0.0;
  for (const auto& [cls, ct] : per_class) acc += static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return 100.0 * acc / static_cast<double>(per_class.size());
}

struct SampleScores {
  double mean_moc = 0.0;
  double top1_moc = 0.0;
};

/// Mean and best MoC over M samples of the same sequence.
inline SampleScores evaluate_samples(const std::vector<LabelSequence>& samples, const LabelSequence& gt,
                                     const Region& region) {
  if (samples.empty()) throw ConfigError("evaluate_samples: need at least one sample");
  SampleScores s;
  s.top1_moc = 0.0;
  for (const auto& p : samples) {
    const double m = moc(p, gt, region);
    s.mean_moc += m;
    s.top1_moc = std::max(s.top1_moc, m);
  }
  s.mean_moc /= static_cast<double>(samples.size());
  return s;
}

/// Mean pairwise framewise disagreement between M >= 2 samples of one sequence, in percent.
inline double mfss_single(const std::vector<LabelSequence>& samples, const Region& region) {
  const std::size_t m = samples.size();
  if (m < 2) throw ConfigError("mfss needs at least two samples");
  for (const auto& s : samples) check_region(s.size(), region);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      std::size_t same = 0;
      for (std::size_t n = region.begin; n < region.end; ++n) same += samples[i][n] == samples[j][n] ? 1 : 0;
      total += 100.0 * (1.0 - static_cast<double>(same) / static_cast<double>(region.size()));
    }
  }
  return total * 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
}

/// MFSS averaged over videos; `regions[z]` is the evaluated region of video z.
inline double mfss(const std::vector<std::vector<LabelSequence>>& sets, const std::vector<Region>& regions) {
  if (sets.empty()) throw ConfigError("mfss over zero videos");
  if (sets.size() != regions.size()) throw ShapeError("mfss: one region per video required");
  double total = 0.0;
  for (std::size_t z = 0; z < sets.size(); ++z) total += mfss_single(sets[z], regions[z]);
  return total / static_cast<double>(sets.size());
}

struct VideoDiversity {
  double observed_mfss = 0.0;
  double future_mean_moc = 0.0;
  double future_mfss = 0.0;
};

struct QuartileBucket {
  std::size_t count = 0;
  double observed_mfss = 0.0;
  double future_mean_moc = 0.0;
  double future_mfss = 0.0;
};

/// Sorts videos by observed MFSS (ascending) and splits them into four contiguous rank buckets;
/// the Z mod 4 leftover videos go one each to the earliest buckets.
inline std::vector<QuartileBucket> quartile_report(const std::vector<VideoDiversity>& videos) {
  if (videos.size() < 4) throw ConfigError("quartile report needs at least four videos");
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return videos[a].observed_mfss < videos[b].observed_mfss; });
  std::vector<QuartileBucket> out(4);
  const std::size_t base = videos.size() / 4, extra = videos.size() % 4;
  std::size_t pos = 0;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t n = base + (q < extra ? 1 : 0);
    auto& b = out[q];
    b.count = n;
    for (std::size_t k = 0; k < n; ++k, ++pos) {
      const auto& v = videos[order[pos]];
      b.observed_mfss += v.observed_mfss;
      b.future_mean_moc += v.future_mean_moc;
      b.future_mfss += v.future_mfss;
    }
    b.observed_mfss /= static_cast<double>(n);
    b.future_mean_moc /= static_cast<double>(n);
    b.future_mfss /= static_cast<double>(n);
  }
  return out;
}

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson on average ranks). 0 when either side is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman needs two equal-length series");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gtd

#endif  // GTD_METRICS_HPP
