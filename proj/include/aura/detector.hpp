#pragma once

// Aggregation of per-window scores into stop decisions.

#include "aura/core.hpp"

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aura::detect {

struct DetectorConfig {
  int window_count = 30;
  double window_duration_s = 0.01;
  double slide_s = 0.1;
  double threshold = 0.717;

  void validate() const;
  /// Slide length in windows.
  int slide_windows() const;
};

struct DetectionEvent {
  double time_s = 0.0;  // right edge of the last window covered
  double mean_score = 0.0;
  double threshold = 0.0;
  bool stop = false;      // mean_score > threshold
  bool degraded = false;  // some windows in range were missing
  int scores_used = 0;
  bool latched = false;   // detector latch state after this event
};

/// Mean of exactly N scores in [0, 1] against the threshold (strict).
DetectionEvent detect_window(const std::vector<double>& scores, const DetectorConfig& config,
                             double time_s = 0.0);

/// Sliding detector over a score stream with one entry per window. Missing
/// windows (underruns) are pushed as std::nullopt. A stop latches until reset().
class StreamDetector {
 public:
  explicit StreamDetector(DetectorConfig config);

  /// Advances one window. Returns the event emitted at this window, if any.
  std::optional<DetectionEvent> push(std::optional<double> score);
  bool latched() const { return latched_; }
  /// Clears the latch; the score history is kept.
  void reset() { latched_ = false; }
  Eigen::Index windows_seen() const { return seen_; }
  const DetectorConfig& config() const { return config_; }

 private:
  DetectorConfig config_;
  int slide_;
  std::deque<std::optional<double>> recent_;
  Eigen::Index seen_ = 0;
  bool latched_ = false;
};

/// Gapless convenience wrapper.
std::vector<DetectionEvent> stream_detect(const std::vector<double>& scores, const DetectorConfig& config);

/// v_max = D / t_d.
double max_speed(double distance_m, double response_time_s);

struct StageLatency {
  double mean_s = 0.0;
  double max_s = 0.0;
};

/// Per-event processing latency: wall time from the arrival of an event's last
/// input sample to the event's emission, excluding the data window itself.
struct LatencyReport {
  std::map<std::string, StageLatency> stages;
  StageLatency end_to_end;
  double p99_s = 0.0;
  std::size_t events = 0;
  double budget_s = 0.05;
  bool pass = false;
  double detection_range_m = 0.183;
  double system_response_s = 0.15;
  double v_max_budget_m_s = 0.0;    // D / system response time
  double v_max_measured_m_s = 0.0;  // D / (worst processing latency + mechanical margin)
  double mechanical_margin_s = 0.1;
};

/// Summarizes latency samples (seconds). `stage_samples` holds per-stage
/// durations; `event_latencies` the end-to-end value per event.
LatencyReport response_budget_check(const std::map<std::string, std::vector<double>>& stage_samples,
                                    const std::vector<double>& event_latencies, double budget_s = 0.05,
                                    double detection_range_m = 0.183, double system_response_s = 0.15,
                                    double mechanical_margin_s = 0.1);

}  // namespace aura::detect
