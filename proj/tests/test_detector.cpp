#include "aura/detector.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace aura;
using namespace aura::detect;

namespace {

std::vector<double> ones_zeros(int ones, int zeros) {
  std::vector<double> v(static_cast<std::size_t>(ones), 1.0);
  v.insert(v.end(), static_cast<std::size_t>(zeros), 0.0);
  return v;
}

void shuffle(std::vector<double>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

TEST(DetectWindow, Examples) {
  const DetectorConfig cfg;
  const auto all = detect_window(ones_zeros(30, 0), cfg);
  EXPECT_EQ(all.mean_score, 1.0);
  EXPECT_TRUE(all.stop);
  const auto seventy = detect_window(ones_zeros(21, 9), cfg);
  EXPECT_NEAR(seventy.mean_score, 0.7, 1e-15);
  EXPECT_FALSE(seventy.stop);
  const auto above = detect_window(ones_zeros(22, 8), cfg);
  EXPECT_NEAR(above.mean_score, 22.0 / 30.0, 1e-15);
  EXPECT_TRUE(above.stop);
}

TEST(DetectWindow, TieDoesNotStop) {
  DetectorConfig cfg;
  cfg.threshold = 0.5;
  EXPECT_FALSE(detect_window(ones_zeros(15, 15), cfg).stop);
}

TEST(DetectWindow, Errors) {
  const DetectorConfig cfg;
  EXPECT_THROW(detect_window(ones_zeros(10, 0), cfg), ConfigError);
  auto bad = ones_zeros(29, 0);
  bad.push_back(1.5);
  EXPECT_THROW(detect_window(bad, cfg), ConfigError);
  DetectorConfig c2;
  c2.slide_s = 0.015;
  EXPECT_THROW(c2.validate(), ConfigError);
  c2 = DetectorConfig{};
  c2.threshold = 1.2;
  EXPECT_THROW(c2.validate(), ConfigError);
}

TEST(StreamDetect, OneSecondGivesEightEvents) {
  const auto events = stream_detect(std::vector<double>(100, 0.2), DetectorConfig{});
  ASSERT_EQ(events.size(), 8u);
  EXPECT_NEAR(events.front().time_s, 0.3, 1e-12);
  EXPECT_NEAR(events.back().time_s, 1.0, 1e-12);
}

TEST(StreamDetect, AllZeroNeverStops) {
  for (const auto& e : stream_detect(std::vector<double>(500, 0.0), DetectorConfig{})) EXPECT_FALSE(e.stop);
}

TEST(StreamDetect, BurstIsCaughtWithinOneSlide) {
  // Every alignment of the burst against the event grid.
  for (double threshold : {0.5, 0.717}) {
    DetectorConfig cfg;
    cfg.threshold = threshold;
    for (int start = 0; start < 40; ++start) {
      std::vector<double> s(200, 0.0);
      std::fill(s.begin() + 40 + start, s.begin() + 70 + start, 1.0);
      const double burst_end = (70 + start) * 0.01;
      const auto events = stream_detect(s, cfg);
      const auto it = std::find_if(events.begin(), events.end(), [](const auto& e) { return e.stop; });
      ASSERT_NE(it, events.end()) << threshold << " " << start;
      EXPECT_GT(it->time_s, burst_end - 0.3);
      EXPECT_LE(it->time_s - burst_end, 0.1 + 1e-9);
    }
  }
}

TEST(StreamDetect, LatchPersistsUntilReset) {
  StreamDetector det(DetectorConfig{});
  std::vector<DetectionEvent> events;
  for (int i = 0; i < 30; ++i)
    if (auto e = det.push(1.0)) events.push_back(*e);
  for (int i = 0; i < 60; ++i)
    if (auto e = det.push(0.0)) events.push_back(*e);
  ASSERT_EQ(events.size(), 7u);
  EXPECT_TRUE(events.front().stop);
  EXPECT_FALSE(events.back().stop);
  EXPECT_TRUE(events.back().latched);
  EXPECT_TRUE(det.latched());
  det.reset();
  EXPECT_FALSE(det.latched());
  for (int i = 0; i < 10; ++i)
    if (auto e = det.push(0.0)) EXPECT_FALSE(e->latched);
}

TEST(StreamDetect, GapsDegradeOrSkip) {
  StreamDetector det(DetectorConfig{});
  std::vector<DetectionEvent> events;
  // 30 windows with 10 missing: degraded event over 20 scores.
  for (int i = 0; i < 30; ++i) {
    const std::optional<double> s = i % 3 == 0 ? std::nullopt : std::optional<double>(1.0);
    if (auto e = det.push(s)) events.push_back(*e);
  }
  ASSERT_EQ(events.size(), 1u);
  EXPECT_TRUE(events[0].degraded);
  EXPECT_EQ(events[0].scores_used, 20);
  EXPECT_EQ(events[0].mean_score, 1.0);
  // Next 20 windows missing: the event at window 40 has 10 of 30 and is skipped,
  // the one at 50 has none.
  for (int i = 0; i < 20; ++i)
    if (auto e = det.push(std::nullopt)) events.push_back(*e);
  EXPECT_EQ(events.size(), 1u);
  // Exactly N/2 present is enough.
  StreamDetector half(DetectorConfig{});
  std::optional<DetectionEvent> last;
  for (int i = 0; i < 30; ++i) last = half.push(i < 15 ? std::optional<double>(0.9) : std::nullopt);
  ASSERT_TRUE(last.has_value());
  EXPECT_EQ(last->scores_used, 15);
}

TEST(StreamDetect, GaplessStreamMatchesDetectWindow) {
  Rng rng(4);
  std::vector<double> s(300);
  for (auto& v : s) v = rng.uniform();
  const auto events = stream_detect(s, DetectorConfig{});
  for (const auto& e : events) {
    const auto end = static_cast<std::size_t>(std::lround(e.time_s / 0.01));
    const std::vector<double> window(s.begin() + static_cast<long>(end) - 30, s.begin() + static_cast<long>(end));
    const auto ref = detect_window(window, DetectorConfig{}, e.time_s);
    EXPECT_EQ(ref.mean_score, e.mean_score);
    EXPECT_EQ(ref.stop, e.stop);
    EXPECT_EQ(e.stop, e.mean_score > e.threshold);
  }
}

TEST(DetectorProperties, RandomizedCases) {
  Rng rng(2024);
  const int cases = 10000;
  for (int c = 0; c < cases; ++c) {
    DetectorConfig cfg;
    cfg.threshold = rng.uniform();
    std::vector<double> scores(30);
    for (auto& s : scores) s = rng.below(4) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
    const auto base = detect_window(scores, cfg);

    // Permutation invariance.
    auto perm = scores;
    shuffle(perm, rng);
    const auto p = detect_window(perm, cfg);
    ASSERT_EQ(p.mean_score, base.mean_score) << c;
    ASSERT_EQ(p.stop, base.stop) << c;

    // Monotonicity: raising a score never removes a stop.
    auto raised = scores;
    const auto i = rng.below(30);
    raised[i] = rng.uniform(raised[i], 1.0);
    if (base.stop) ASSERT_TRUE(detect_window(raised, cfg).stop) << c;

    // Threshold sweep: stops at a higher threshold are a subset.
    DetectorConfig higher = cfg;
    higher.threshold = rng.uniform(cfg.threshold, 1.0);
    if (detect_window(scores, higher).stop) ASSERT_TRUE(base.stop) << c;
  }
}

TEST(DetectorProperties, CoverageBound) {
  Rng rng(7);
  const DetectorConfig cfg;
  const int bound = static_cast<int>(std::ceil(cfg.window_count * cfg.window_duration_s / cfg.slide_s - 1e-9));
  ASSERT_EQ(bound, 3);
  for (int c = 0; c < 10000; ++c) {
    const int n = 30 + static_cast<int>(rng.below(200));
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (auto& s : scores) s = rng.uniform();
    const auto events = stream_detect(scores, cfg);
    ASSERT_FALSE(events.empty());
    const auto last_end = std::lround(events.back().time_s / cfg.window_duration_s);
    std::vector<int> covered(static_cast<std::size_t>(n), 0);
    for (const auto& e : events) {
      const auto end = std::lround(e.time_s / cfg.window_duration_s);
      for (long k = end - cfg.window_count; k < end; ++k) ++covered[static_cast<std::size_t>(k)];
    }
    for (long k = 0; k < last_end; ++k) {
      ASSERT_GE(covered[static_cast<std::size_t>(k)], 1) << c << " " << k;
      ASSERT_LE(covered[static_cast<std::size_t>(k)], bound) << c << " " << k;
    }
  }
}

TEST(MaxSpeed, FormulaExamples) {
  EXPECT_NEAR(max_speed(0.183, 0.150) * 100.0, 122.0, 1e-9);
  const double v = max_speed(0.109, 0.150) * 100.0;
  EXPECT_GE(v, 72.0);
  EXPECT_LE(v, 73.0);
  EXPECT_EQ(max_speed(0.0, 0.15), 0.0);
  EXPECT_THROW(max_speed(0.1, 0.0), ConfigError);
  EXPECT_THROW(max_speed(0.1, -1.0), ConfigError);
}

TEST(ResponseBudget, ReportsPassAndSpeed) {
  const auto r = response_budget_check({{"classify", {0.004, 0.006}}}, {0.01, 0.02, 0.03});
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.end_to_end.max_s, 0.03, 1e-15);
  EXPECT_NEAR(r.stages.at("classify").mean_s, 0.005, 1e-15);
  EXPECT_NEAR(r.v_max_budget_m_s, 1.22, 1e-12);
  EXPECT_NEAR(r.v_max_measured_m_s, 0.183 / 0.13, 1e-12);
  EXPECT_FALSE(response_budget_check({}, {0.06}).pass);
}
