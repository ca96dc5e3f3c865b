#pragma once

// Streaming detection: a producer thread feeds sample chunks through a
// bounded FIFO into envelope extraction, window scoring and the detector.

#include "aura/classifiers.hpp"
#include "aura/detector.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>

namespace aura::realtime {

/// Blocking single-producer/single-consumer queue. push() waits while full,
/// so nothing is ever dropped.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("queue: capacity must be positive");
  }

  /// Returns true if the call had to wait for space.
  bool push(T item) {
    std::unique_lock lock(mutex_);
    const bool waited = items_.size() >= capacity_;
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return waited;
  }

  /// Next item, or nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
};

struct StreamOptions {
  double carrier_hz = 19000.0;
  detect::DetectorConfig detector;
  bool pace = false;             // release chunks at the wall-clock sample rate
  double chunk_s = 0.01;
  std::size_t queue_capacity = 64;
};

struct StreamResult {
  std::vector<detect::DetectionEvent> events;
  /// Per event: wall time from the arrival of the last input sample the event
  /// depends on to its emission (unpaced: from the start of its processing).
  std::vector<double> event_latency_s;
  std::map<std::string, std::vector<double>> stage_s;  // per-chunk stage durations
  double wall_s = 0.0;
  double samples_per_s = 0.0;
  std::size_t producer_waits = 0;
  detect::LatencyReport report;
};

/// Runs the full chain over a recording. Decisions depend only on the samples,
/// never on timing; `on_event` fires as each event is emitted.
StreamResult run_detection(const SampleBuffer& input, const classify::WindowScorer& scorer,
                           const StreamOptions& options,
                           const std::function<void(const detect::DetectionEvent&)>& on_event = {});

}  // namespace aura::realtime
