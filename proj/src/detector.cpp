#include "aura/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aura::detect {

void DetectorConfig::validate() const {
  if (window_count < 1) throw ConfigError("detector: window_count must be at least 1");
  if (!(window_duration_s > 0.0)) throw ConfigError("detector: window duration must be positive");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("detector: threshold must lie in [0, 1]");
  const double ratio = slide_s / window_duration_s;
  if (!(slide_s > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
    throw ConfigError("detector: slide must be a positive multiple of the window duration");
}

namespace {

// Summing in sorted order makes the mean depend only on the multiset of scores.
double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

int DetectorConfig::slide_windows() const { return static_cast<int>(std::lround(slide_s / window_duration_s)); }

DetectionEvent detect_window(const std::vector<double>& scores, const DetectorConfig& config, double time_s) {
  config.validate();
  if (static_cast<int>(scores.size()) != config.window_count)
    throw ConfigError("detector: expected " + std::to_string(config.window_count) + " scores, got " +
                      std::to_string(scores.size()));
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("detector: score outside [0, 1]");
  DetectionEvent e;
  e.time_s = time_s;
  e.mean_score = sorted_mean(scores);
  e.threshold = config.threshold;
  e.stop = e.mean_score > config.threshold;
  e.scores_used = config.window_count;
  return e;
}

StreamDetector::StreamDetector(DetectorConfig config) : config_(config) {
  config_.validate();
  slide_ = config_.slide_windows();
}

std::optional<DetectionEvent> StreamDetector::push(std::optional<double> score) {
  if (score && !(*score >= 0.0 && *score <= 1.0)) throw ConfigError("detector: score outside [0, 1]");
  recent_.push_back(score);
  if (static_cast<int>(recent_.size()) > config_.window_count) recent_.pop_front();
  ++seen_;
  if (seen_ < config_.window_count || seen_ % slide_ != 0) return std::nullopt;

  std::vector<double> present_scores;
  for (const auto& s : recent_)
    if (s) present_scores.push_back(*s);
  const int present = static_cast<int>(present_scores.size());
  if (2 * present < config_.window_count) return std::nullopt;
  DetectionEvent e;
  // Snapped to the nanosecond so 70 x 0.01 prints as 0.7.
  e.time_s = std::round(static_cast<double>(seen_) * config_.window_duration_s * 1e9) / 1e9;
  e.mean_score = sorted_mean(std::move(present_scores));
  e.threshold = config_.threshold;
  e.stop = e.mean_score > config_.threshold;
  e.degraded = present < config_.window_count;
  e.scores_used = present;
  if (e.stop) latched_ = true;
  e.latched = latched_;
  return e;
}

std::vector<DetectionEvent> stream_detect(const std::vector<double>& scores, const DetectorConfig& config) {
  StreamDetector det(config);
  std::vector<DetectionEvent> out;
  for (double s : scores)
    if (auto e = det.push(s)) out.push_back(*e);
  return out;
}

double max_speed(double distance_m, double response_time_s) {
  if (!(response_time_s > 0.0)) throw ConfigError("max_speed: response time must be positive");
  if (distance_m < 0.0) throw ConfigError("max_speed: distance must be non-negative");
  return distance_m / response_time_s;
}

namespace {

StageLatency summarize(const std::vector<double>& v) {
  StageLatency s;
  if (v.empty()) return s;
  s.mean_s = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.max_s = *std::max_element(v.begin(), v.end());
  return s;
}

}  // namespace

LatencyReport response_budget_check(const std::map<std::string, std::vector<double>>& stage_samples,
                                    const std::vector<double>& event_latencies, double budget_s,
                                    double detection_range_m, double system_response_s,
                                    double mechanical_margin_s) {
  LatencyReport r;
  for (const auto& [name, v] : stage_samples) r.stages[name] = summarize(v);
  r.end_to_end = summarize(event_latencies);
  r.events = event_latencies.size();
  if (!event_latencies.empty()) {
    std::vector<double> sorted = event_latencies;
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size()))) - 1;
    r.p99_s = sorted[std::min(idx, sorted.size() - 1)];
  }
  r.budget_s = budget_s;
  r.pass = !event_latencies.empty() && r.end_to_end.max_s <= budget_s;
  r.detection_range_m = detection_range_m;
  r.system_response_s = system_response_s;
  r.mechanical_margin_s = mechanical_margin_s;
  r.v_max_budget_m_s = max_speed(detection_range_m, system_response_s);
  r.v_max_measured_m_s = max_speed(detection_range_m, r.end_to_end.max_s + mechanical_margin_s);
  return r;
}

}  // namespace aura::detect
