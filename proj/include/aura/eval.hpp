#pragma once

// Experiment protocol on synthetic data: field-study datasets, CUSUM
// micro-benchmarks, ROC analysis and TPR/TNR tables.

#include "aura/classifiers.hpp"
#include "aura/detector.hpp"
#include "aura/io.hpp"
#include "aura/sim.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace aura::eval {

enum class Scenario { StaticRobotMovingObject, MovingRobotStaticObject, MovingRobotMovingObject, NegativeOnly };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& name);
/// Robot motion state behind a scenario's channel.
sim::RobotState robot_state(Scenario s);

/// Object reduced to an approach attenuation and a detection-cutoff scale.
struct ObjectProfile {
  std::string name;
  double location_gain = 1.0;
  double cutoff_scale = 1.0;
};

std::vector<ObjectProfile> default_object_profiles();

/// Channel disturbance statistics for a moving robot. Events are drawn per
/// trial, identically for positive and negative trials.
struct DisturbanceModel {
  double disturbance_rate_hz = 1.5;
  double disturbance_magnitude = 0.004;  // largest |magnitude|
  double disturbance_min_s = 0.15;
  double disturbance_max_s = 0.6;
  double self_detection_probability = 0.3;
  double self_detection_min_m = 0.08;
  double self_detection_max_m = 0.14;
  double self_detection_min_s = 0.2;
  double self_detection_max_s = 0.5;

  void validate() const;
};

enum class Split { Train, Test };
std::string to_string(Split s);

struct ScenarioSpec {
  Scenario scenario = Scenario::MovingRobotMovingObject;
  int trials = 200;           // positive trials
  int negative_trials = -1;   // -1: same as trials
  std::vector<ObjectProfile> object_profiles = default_object_profiles();
  double speed_min_m_s = 0.05;
  double speed_max_m_s = 0.25;
  std::uint64_t seed = 1;
  double carrier_hz = 19000.0;
  double sample_rate_hz = 96000.0;
  double duration_s = 1.5;
  double contact_s = 1.5;
  double segment_start_before_s = 0.5;  // positive segment: [contact - 0.5, contact - 0.2)
  double segment_end_before_s = 0.2;
  double speed_jitter = 0.3;  // moving object: relative speed change per 0.25 s leg
  double day_floor_step = 0.3;  // floor-noise increase per simulated day
  DisturbanceModel disturbance;

  int positive_count() const { return scenario == Scenario::NegativeOnly ? 0 : trials; }
  int negative_count() const { return negative_trials < 0 ? trials : negative_trials; }
  /// Positives split by object profile (true) or by day (false).
  bool split_by_profile() const { return scenario != Scenario::StaticRobotMovingObject; }
  Eigen::Index segment_begin_sample() const;
  Eigen::Index segment_end_sample() const;
  void validate() const;

  /// Keys: scenario, trials, negative_trials, seed, speed_min_m_s, speed_max_m_s,
  /// carrier_hz, duration_s, contact_s, profiles (name:gain:cutoff list), and
  /// disturbance.* fields. Unknown keys are rejected by the caller via unused().
  static ScenarioSpec from_config(const io::Config& config);
  io::Json to_json() const;
};

struct TrialRecord {
  std::string id;
  int index = 0;
  classify::Label label = classify::Negative;
  Scenario scenario = Scenario::NegativeOnly;
  std::string profile;  // empty for negatives
  int profile_index = -1;
  int day = 0;
  Split split = Split::Train;
  double speed_m_s = 0.0;  // mean approach speed
  double location_gain = 0.0;
  double cutoff_scale = 1.0;
  double start_distance_m = 0.0;
  double contact_s = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index segment_begin = 0;  // samples
  Eigen::Index segment_end = 0;
  std::vector<std::pair<double, double>> knots;
  sim::ChannelModel channel;

  io::Json to_json() const;
  static TrialRecord from_json(const io::Json& j);
};

/// Per-trial parameters drawn deterministically from the spec seed.
std::vector<TrialRecord> plan_trials(const ScenarioSpec& spec);

/// Received signal of one trial.
SampleBuffer simulate_trial(const ScenarioSpec& spec, const TrialRecord& trial);

/// Cleaned envelope over [segment_begin - context, segment_end) of a trial
/// recording, with the labeled sequence covering the segment.
struct PreparedTrial {
  TrialRecord record;
  classify::LabeledSequence sequence;
};

PreparedTrial prepare_trial(const TrialRecord& record, const SampleBuffer& audio, double carrier_hz);

struct FieldDataset {
  ScenarioSpec spec;
  std::vector<TrialRecord> trials;
  std::vector<PreparedTrial> prepared;
};

/// Simulates and prepares every trial. The raw audio is handed to `sink` (if
/// set) and then dropped.
FieldDataset build_field_dataset(const ScenarioSpec& spec,
                                 const std::function<void(const TrialRecord&, const SampleBuffer&)>& sink = {});

io::Json manifest_json(const ScenarioSpec& spec, const std::vector<TrialRecord>& trials);

/// Dataset directory: manifest.json plus trials/<id>.f32 (or .wav). Returns
/// the manifest fingerprint.
std::string write_dataset(const io::fs::path& dir, const ScenarioSpec& spec, bool wav = false);

struct StoredDataset {
  io::fs::path dir;
  std::string fingerprint;  // checksum of manifest.json
  double carrier_hz = 19000.0;
  std::vector<TrialRecord> trials;
  std::vector<std::string> audio;  // relative paths, parallel to trials
};

StoredDataset read_dataset(const io::fs::path& dir);
/// Loads and prepares the stored trials, optionally only one split.
std::vector<PreparedTrial> load_trials(const StoredDataset& dataset, std::optional<Split> split = std::nullopt);

/// Prepared trials matching `split`.
std::vector<const PreparedTrial*> select(const std::vector<PreparedTrial>& trials, Split split);

// --- Classifier scoring --------------------------------------------------------

struct TrialScore {
  std::string id;
  classify::Label label = classify::Negative;
  Scenario scenario = Scenario::NegativeOnly;
  std::string profile;  // "negative" for negatives
  std::vector<double> window_scores;
  double score = 0.0;  // detector mean over the segment windows
};

/// Window scores over the segment of each trial, aggregated like the detector.
std::vector<TrialScore> score_trials(const classify::WindowScorer& scorer,
                                     const std::vector<const PreparedTrial*>& trials,
                                     const detect::DetectorConfig& detector = {});

/// SVM training set: features of the trailing context at `per_trial` window
/// ends spread over each segment.
void svm_training_set(const std::vector<const PreparedTrial*>& trials, int per_trial, Eigen::MatrixXd& X,
                      std::vector<classify::Label>& labels);

classify::WindowSource window_source(const std::vector<const PreparedTrial*>& trials);

// --- ROC -----------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;  // decision: score >= threshold
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending: +inf, distinct scores, -inf
  double auc = 0.0;
  /// Youden-optimal operating point and a decision threshold for the strict
  /// `score > t` rule that reproduces it (midpoint to the next lower score).
  RocPoint youden;
  double decision_threshold = 0.5;
};

RocCurve compute_roc(const std::vector<double>& scores, const std::vector<classify::Label>& labels);
void write_roc_csv(const io::fs::path& path, const RocCurve& roc);

// --- Rates ---------------------------------------------------------------------

struct RateRow {
  std::string group;
  long positives = 0;
  long true_positives = 0;
  long negatives = 0;
  long true_negatives = 0;
  std::optional<double> tpr() const;
  std::optional<double> tnr() const;
};

struct RateTable {
  RateRow overall;
  std::vector<RateRow> groups;  // sorted by name
};

RateTable tpr_tnr(const std::vector<bool>& decisions, const std::vector<classify::Label>& labels,
                  const std::vector<std::string>& groups);

/// "95.3%" or "undefined".
std::string format_rate(const std::optional<double>& r);
void write_rate_csv(const io::fs::path& path, const RateTable& table);

// --- Micro-benchmark -----------------------------------------------------------

struct MicroPoint {
  std::string name;
  double location_gain = 1.0;
  double surface_gain = 1.0;
  double cutoff_scale = 1.0;
};

struct MicroConfig {
  int trials_per_point = 13;
  double speed_m_s = 0.05;
  double start_distance_m = 0.45;
  double warmup_s = 0.5;  // chain start-up; block means are discarded
  double quiet_s = 1.5;   // obstacle absent, covers warmup and CUSUM calibration
  double carrier_hz = 19000.0;
  dsp::CusumConfig cusum;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MicroResult {
  MicroPoint point;
  std::vector<double> distances_m;  // 0 for a non-detection
  int detections = 0;
  double mean_m = 0.0;
  double min_m = 0.0;
  double max_m = 0.0;
};

/// Distance at CUSUM alarm for one approach; 0 when no alarm fires before contact.
double micro_trial_distance(const MicroPoint& point, const MicroConfig& config, int trial);

/// Trial t of every point shares its noise seed, so points differ only in the
/// proximity term.
std::vector<MicroResult> micro_benchmark_max_distance(const std::vector<MicroPoint>& sweep,
                                                      const MicroConfig& config);

std::vector<MicroPoint> default_micro_sweep();

}  // namespace aura::eval
