#include "aura/realtime.hpp"
#include "aura/sim.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace aura;
using namespace aura::realtime;

namespace {

// Deterministic stand-in for a classifier: squashes the window's trailing
// context slope so an approach raises the score.
class SlopeScorer : public classify::WindowScorer {
 public:
  std::vector<double> score(const std::vector<pipeline::WindowInput>& windows) const override {
    std::vector<double> out;
    for (const auto& w : windows) {
      const Eigen::Index n = w.context.size();
      const double drift = n > 1 ? (w.context(n - 1) - w.context(0)) : 0.0;
      out.push_back(1.0 / (1.0 + std::exp(-2000.0 * drift)));
    }
    return out;
  }
  std::string name() const override { return "slope"; }
};

SampleBuffer approach_recording(double seconds) {
  auto channel = sim::calibrated_channel(sim::RobotState::Static, 5);
  sim::ExcitationConfig ex;
  const auto s = sim::gen_excitation(ex, seconds);
  const auto traj = sim::ObstacleTrajectory::linear(seconds - 1.0, 0.12, seconds, 0.0);
  return sim::simulate_received(s, ex.frequency_hz, channel, &traj);
}

}  // namespace

TEST(BoundedQueue, BlocksInsteadOfDropping) {
  BoundedQueue<int> q(2);
  std::atomic<int> waits{0};
  std::thread producer([&] {
    for (int i = 0; i < 200; ++i)
      if (q.push(i)) ++waits;
    q.close();
  });
  std::vector<int> got;
  while (auto v = q.pop()) {
    got.push_back(*v);
    if (got.size() % 20 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  producer.join();
  ASSERT_EQ(got.size(), 200u);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(got[static_cast<std::size_t>(i)], i);
  EXPECT_GT(waits.load(), 0);
  EXPECT_THROW(BoundedQueue<int>(0), ConfigError);
}

TEST(RunDetection, PacedAndOfflineDecisionsMatch) {
  const auto rec = approach_recording(2.0);
  const SlopeScorer scorer;
  StreamOptions opt;
  opt.detector.threshold = 0.6;
  const auto offline = run_detection(rec, scorer, opt);
  opt.pace = true;
  opt.chunk_s = 0.02;
  opt.queue_capacity = 4;
  const auto paced = run_detection(rec, scorer, opt);
  ASSERT_EQ(offline.events.size(), paced.events.size());
  ASSERT_FALSE(offline.events.empty());
  for (std::size_t i = 0; i < offline.events.size(); ++i) {
    EXPECT_EQ(offline.events[i].time_s, paced.events[i].time_s);
    EXPECT_EQ(offline.events[i].mean_score, paced.events[i].mean_score);
    EXPECT_EQ(offline.events[i].stop, paced.events[i].stop);
  }
  EXPECT_EQ(paced.event_latency_s.size(), paced.events.size());
  EXPECT_GE(paced.wall_s, 2.0);
}

TEST(RunDetection, EventsMatchOfflineStreamDetect) {
  const auto rec = approach_recording(1.5);
  const SlopeScorer scorer;
  StreamOptions opt;
  std::vector<detect::DetectionEvent> seen;
  const auto r = run_detection(rec, scorer, opt, [&](const detect::DetectionEvent& e) { seen.push_back(e); });

  // Whole-recording envelope, windowed and scored in one pass.
  pipeline::EnvelopeChain chain(pipeline::ChainConfig::for_carrier(opt.carrier_hz));
  Vector env = chain.push(rec.samples);
  const Vector tail = chain.flush();
  env.conservativeResize(env.size() + tail.size());
  env.tail(tail.size()) = tail;
  std::vector<pipeline::WindowInput> windows;
  for (Eigen::Index end = pipeline::kWindowLength; end <= env.size(); end += pipeline::kWindowLength)
    windows.push_back(pipeline::make_window_input(env, end));
  const auto expected = detect::stream_detect(scorer.score(windows), opt.detector);

  ASSERT_EQ(r.events.size(), expected.size());
  ASSERT_EQ(seen.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(r.events[i].time_s, expected[i].time_s, 1e-12);
    EXPECT_EQ(r.events[i].mean_score, expected[i].mean_score);
  }
  EXPECT_GT(r.samples_per_s, 0.0);
  for (const char* stage : {"envelope", "windows", "classify", "detect"}) EXPECT_TRUE(r.stage_s.count(stage)) << stage;
}

TEST(RunDetection, RejectsWrongSampleRate) {
  SampleBuffer rec(Vector::Zero(4800), 48000.0);
  const SlopeScorer scorer;
  EXPECT_THROW(run_detection(rec, scorer, StreamOptions{}), ConfigError);
}
