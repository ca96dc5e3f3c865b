#include "aura/realtime.hpp"

#include <chrono>
#include <thread>

namespace aura::realtime {

namespace {

using Clock = std::chrono::steady_clock;

struct Chunk {
  Vector samples;
  Eigen::Index end = 0;  // one past the last sample
  Clock::time_point arrival;
};

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

}  // namespace

StreamResult run_detection(const SampleBuffer& input, const classify::WindowScorer& scorer,
                           const StreamOptions& options,
                           const std::function<void(const detect::DetectionEvent&)>& on_event) {
  input.validate();
  options.detector.validate();
  const double fs = input.sample_rate_hz;
  if (std::abs(fs - 96000.0) > 1e-9)
    throw ConfigError("detect: input sample rate " + std::to_string(fs) + " Hz, expected 96000 Hz");
  const double window_s = pipeline::kWindowLength / fs;
  if (std::abs(options.detector.window_duration_s - window_s) > 1e-12)
    throw ConfigError("detect: detector window duration must match the 960-sample classifier window");
  const auto chunk = static_cast<Eigen::Index>(std::llround(options.chunk_s * fs));
  if (chunk < 1) throw ConfigError("detect: chunk must hold at least one sample");

  BoundedQueue<Chunk> queue(options.queue_capacity);
  StreamResult result;
  const Eigen::Index total = input.size();
  const auto start = Clock::now();

  std::thread producer([&] {
    for (Eigen::Index pos = 0; pos < total; pos += chunk) {
      Chunk c;
      const Eigen::Index n = std::min(chunk, total - pos);
      c.samples = input.samples.segment(pos, n);
      c.end = pos + n;
      if (options.pace)
        std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                  std::chrono::duration<double>(static_cast<double>(c.end) / fs)));
      c.arrival = Clock::now();
      if (queue.push(std::move(c))) ++result.producer_waits;
    }
    queue.close();
  });

  pipeline::EnvelopeChain chain(pipeline::ChainConfig::for_carrier(options.carrier_hz, fs));
  pipeline::WindowAssembler windows;
  detect::StreamDetector detector(options.detector);
  const Eigen::Index lookahead = chain.lookahead_samples();
  // Per received chunk. Unpaced input is available all at once, so latency
  // counts from when processing of the chunk starts.
  std::vector<Clock::time_point> arrivals;

  auto& env_s = result.stage_s["envelope"];
  auto& win_s = result.stage_s["windows"];
  auto& cls_s = result.stage_s["classify"];
  auto& det_s = result.stage_s["detect"];

  const auto process = [&](const Vector& envelope) {
    const auto t1 = Clock::now();
    const auto ready = windows.push(envelope);
    const auto t2 = Clock::now();
    const auto scores = ready.empty() ? std::vector<double>{} : scorer.score(ready);
    const auto t3 = Clock::now();
    for (std::size_t i = 0; i < ready.size(); ++i) {
      const auto event = detector.push(scores[i]);
      if (!event) continue;
      const auto emitted = Clock::now();
      const Eigen::Index needed = std::min(total - 1, ready[i].end_sample - 1 + lookahead);
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(needed / chunk), arrivals.size() - 1);
      result.events.push_back(*event);
      result.event_latency_s.push_back(std::max(0.0, seconds(emitted - arrivals[idx])));
      if (on_event) on_event(*event);
    }
    win_s.push_back(seconds(t2 - t1));
    cls_s.push_back(seconds(t3 - t2));
    det_s.push_back(seconds(Clock::now() - t3));
  };

  try {
    while (auto c = queue.pop()) {
      const auto t0 = Clock::now();
      arrivals.push_back(options.pace ? c->arrival : t0);
      const Vector envelope = chain.push(c->samples);
      env_s.push_back(seconds(Clock::now() - t0));
      process(envelope);
    }
    if (!arrivals.empty()) {
      const auto t0 = Clock::now();
      const Vector tail = chain.flush();
      env_s.push_back(seconds(Clock::now() - t0));
      process(tail);
    }
  } catch (...) {
    // Drain so the producer can finish before rethrowing.
    while (queue.pop()) {
    }
    producer.join();
    throw;
  }
  producer.join();

  result.wall_s = seconds(Clock::now() - start);
  result.samples_per_s = result.wall_s > 0.0 ? static_cast<double>(total) / result.wall_s : 0.0;
  result.report = detect::response_budget_check(result.stage_s, result.event_latency_s);
  return result;
}

}  // namespace aura::realtime
