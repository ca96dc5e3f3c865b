#include "aura/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace aura::eval {

namespace {

constexpr double kChainWarmupS = 0.35;  // ripple span plus filter settling

const std::vector<std::pair<Scenario, std::string>>& scenario_names() {
  static const std::vector<std::pair<Scenario, std::string>> names{
      {Scenario::StaticRobotMovingObject, "static_robot_moving_object"},
      {Scenario::MovingRobotStaticObject, "moving_robot_static_object"},
      {Scenario::MovingRobotMovingObject, "moving_robot_moving_object"},
      {Scenario::NegativeOnly, "negative_only"}};
  return names;
}

}  // namespace

std::string to_string(Scenario s) {
  for (const auto& [v, n] : scenario_names())
    if (v == s) return n;
  throw ConfigError("unknown scenario");
}

Scenario parse_scenario(const std::string& name) {
  for (const auto& [v, n] : scenario_names())
    if (n == name) return v;
  throw ConfigError("unknown scenario '" + name + "'");
}

sim::RobotState robot_state(Scenario s) {
  return s == Scenario::StaticRobotMovingObject ? sim::RobotState::Static : sim::RobotState::Moving;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::vector<ObjectProfile> default_object_profiles() {
  return {{"aluminum_rod", 1.0, 1.0},    {"steel_mug", 0.9, 1.1},       {"hand", 0.8, 1.0},
          {"plastic_bottle", 0.7, 0.9},  {"ceramic_plate", 0.85, 0.95}, {"wood_block", 0.6, 0.85},
          {"glass_jar", 0.75, 1.05},     {"cardboard_box", 0.55, 0.8}};
}

void DisturbanceModel::validate() const {
  if (disturbance_rate_hz < 0.0 || disturbance_magnitude < 0.0)
    throw ConfigError("disturbance: rate and magnitude must be non-negative");
  if (!(disturbance_min_s > 0.0 && disturbance_max_s >= disturbance_min_s))
    throw ConfigError("disturbance: invalid duration range");
  if (!(self_detection_probability >= 0.0 && self_detection_probability <= 1.0))
    throw ConfigError("self-detection: probability must lie in [0, 1]");
  if (!(self_detection_min_m >= 0.0 && self_detection_max_m >= self_detection_min_m))
    throw ConfigError("self-detection: invalid distance range");
  if (!(self_detection_min_s > 0.0 && self_detection_max_s >= self_detection_min_s))
    throw ConfigError("self-detection: invalid duration range");
}

// --- Scenario spec -------------------------------------------------------------

Eigen::Index ScenarioSpec::segment_begin_sample() const {
  return static_cast<Eigen::Index>(std::llround((contact_s - segment_start_before_s) * sample_rate_hz));
}

Eigen::Index ScenarioSpec::segment_end_sample() const {
  return static_cast<Eigen::Index>(std::llround((contact_s - segment_end_before_s) * sample_rate_hz));
}

void ScenarioSpec::validate() const {
  if (trials < 1) throw ConfigError("scenario: trials must be at least 1");
  if (negative_trials < -1) throw ConfigError("scenario: negative_trials must be -1 or non-negative");
  if (scenario != Scenario::NegativeOnly && object_profiles.empty())
    throw ConfigError("scenario: at least one object profile is required");
  for (const auto& p : object_profiles) {
    if (!(p.location_gain > 0.0 && p.location_gain <= 1.0))
      throw ConfigError("scenario: profile '" + p.name + "' gain must lie in (0, 1]");
    if (!(p.cutoff_scale > 0.0)) throw ConfigError("scenario: profile '" + p.name + "' cutoff scale must be positive");
  }
  if (!(speed_min_m_s > 0.0 && speed_max_m_s >= speed_min_m_s))
    throw ConfigError("scenario: speeds must be positive with min <= max");
  if (!(speed_jitter >= 0.0 && speed_jitter < 1.0)) throw ConfigError("scenario: speed_jitter must lie in [0, 1)");
  if (!(sample_rate_hz > 0.0) || !(carrier_hz > 0.0 && carrier_hz < sample_rate_hz / 2.0))
    throw ConfigError("scenario: invalid carrier or sample rate");
  if (!(duration_s > 0.0)) throw ConfigError("scenario: duration must be positive");
  if (!(segment_start_before_s > segment_end_before_s && segment_end_before_s >= 0.0))
    throw ConfigError("scenario: invalid pre-impact segment");
  const double context_s = pipeline::kContextLength / sample_rate_hz;
  if (contact_s > duration_s + 1e-12 ||
      contact_s - segment_start_before_s - context_s < kChainWarmupS - 1e-12)
    throw ConfigError("scenario: contact time outside the simulated duration (needs " +
                      io::format_double(segment_start_before_s + context_s + kChainWarmupS) + " s to " +
                      io::format_double(duration_s) + " s)");
  if (day_floor_step < 0.0) throw ConfigError("scenario: day_floor_step must be non-negative");
  disturbance.validate();
}

ScenarioSpec ScenarioSpec::from_config(const io::Config& c) {
  ScenarioSpec s;
  s.scenario = parse_scenario(c.get_string("scenario", to_string(s.scenario)));
  s.trials = static_cast<int>(c.get_int("trials", s.trials));
  s.negative_trials = static_cast<int>(c.get_int("negative_trials", s.negative_trials));
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long>(s.seed)));
  s.speed_min_m_s = c.get_double("speed_min_m_s", s.speed_min_m_s);
  s.speed_max_m_s = c.get_double("speed_max_m_s", s.speed_max_m_s);
  s.carrier_hz = c.get_double("carrier_hz", s.carrier_hz);
  s.duration_s = c.get_double("duration_s", s.duration_s);
  s.contact_s = c.get_double("contact_s", s.contact_s);
  s.speed_jitter = c.get_double("speed_jitter", s.speed_jitter);
  s.day_floor_step = c.get_double("day_floor_step", s.day_floor_step);
  if (c.has("profiles")) {
    s.object_profiles.clear();
    for (const auto& item : c.get_list("profiles")) {
      std::istringstream in(item);
      ObjectProfile p;
      std::string gain, cutoff;
      if (!std::getline(in, p.name, ':') || !std::getline(in, gain, ':') || !std::getline(in, cutoff))
        throw ConfigError("profiles: expected name:gain:cutoff, got '" + item + "'");
      io::Config one = io::Config::parse("g = " + gain + "\nc = " + cutoff + "\n", "profiles");
      p.location_gain = one.get_double("g", 0.0);
      p.cutoff_scale = one.get_double("c", 0.0);
      s.object_profiles.push_back(p);
    }
  }
  auto& d = s.disturbance;
  d.disturbance_rate_hz = c.get_double("disturbance.rate_hz", d.disturbance_rate_hz);
  d.disturbance_magnitude = c.get_double("disturbance.magnitude", d.disturbance_magnitude);
  d.disturbance_min_s = c.get_double("disturbance.min_s", d.disturbance_min_s);
  d.disturbance_max_s = c.get_double("disturbance.max_s", d.disturbance_max_s);
  d.self_detection_probability = c.get_double("self_detection.probability", d.self_detection_probability);
  d.self_detection_min_m = c.get_double("self_detection.min_m", d.self_detection_min_m);
  d.self_detection_max_m = c.get_double("self_detection.max_m", d.self_detection_max_m);
  d.self_detection_min_s = c.get_double("self_detection.min_s", d.self_detection_min_s);
  d.self_detection_max_s = c.get_double("self_detection.max_s", d.self_detection_max_s);
  s.validate();
  return s;
}

io::Json ScenarioSpec::to_json() const {
  io::Json profiles = io::Json::array();
  for (const auto& p : object_profiles)
    profiles.push_back({{"name", p.name}, {"location_gain", p.location_gain}, {"cutoff_scale", p.cutoff_scale}});
  const auto& d = disturbance;
  return {{"scenario", to_string(scenario)},
          {"trials", trials},
          {"negative_trials", negative_count()},
          {"seed", seed},
          {"speed_min_m_s", speed_min_m_s},
          {"speed_max_m_s", speed_max_m_s},
          {"carrier_hz", carrier_hz},
          {"sample_rate_hz", sample_rate_hz},
          {"duration_s", duration_s},
          {"contact_s", contact_s},
          {"segment_start_before_s", segment_start_before_s},
          {"segment_end_before_s", segment_end_before_s},
          {"speed_jitter", speed_jitter},
          {"day_floor_step", day_floor_step},
          {"object_profiles", profiles},
          {"disturbance",
           {{"rate_hz", d.disturbance_rate_hz},
            {"magnitude", d.disturbance_magnitude},
            {"min_s", d.disturbance_min_s},
            {"max_s", d.disturbance_max_s},
            {"self_detection_probability", d.self_detection_probability},
            {"self_detection_min_m", d.self_detection_min_m},
            {"self_detection_max_m", d.self_detection_max_m},
            {"self_detection_min_s", d.self_detection_min_s},
            {"self_detection_max_s", d.self_detection_max_s}}}};
}

// --- Trial records -------------------------------------------------------------

io::Json TrialRecord::to_json() const {
  io::Json dist = io::Json::array();
  for (const auto& e : channel.disturbance_events)
    dist.push_back({{"start_s", e.start_s}, {"duration_s", e.duration_s}, {"magnitude", e.magnitude}});
  io::Json self = io::Json::array();
  for (const auto& e : channel.self_detection_events)
    self.push_back({{"start_s", e.start_s}, {"duration_s", e.duration_s}, {"equivalent_distance_m", e.equivalent_distance_m}});
  io::Json k = io::Json::array();
  for (const auto& [t, d] : knots) k.push_back({t, d});
  return {{"id", id},
          {"index", index},
          {"label", label == classify::Positive ? "positive" : "negative"},
          {"scenario", to_string(scenario)},
          {"profile", profile},
          {"profile_index", profile_index},
          {"day", day},
          {"split", to_string(split)},
          {"speed_m_s", speed_m_s},
          {"location_gain", location_gain},
          {"cutoff_scale", cutoff_scale},
          {"start_distance_m", start_distance_m},
          {"contact_s", contact_s},
          {"seed", seed},
          {"segment_begin", segment_begin},
          {"segment_end", segment_end},
          {"knots", k},
          {"channel",
           {{"surface_gain", channel.surface_gain},
            {"leak_fraction", channel.leak_fraction},
            {"sound_speed_m_s", channel.sound_speed_m_s},
            {"decay_length_m", channel.decay_length_m},
            {"detection_cutoff_m", channel.detection_cutoff_m},
            {"phase_offset_rad", channel.phase_offset_rad},
            {"mechanical_noise_level", channel.mechanical_noise_level},
            {"electrical_tone_level", channel.electrical_tone_level},
            {"floor_noise_level", channel.floor_noise_level},
            {"mechanical_corner_hz", channel.mechanical_corner_hz},
            {"electrical_tone_hz", channel.electrical_tone_hz},
            {"self_detection_excursion_m", channel.self_detection_excursion_m},
            {"rng_seed", channel.rng_seed},
            {"disturbance_events", dist},
            {"self_detection_events", self}}}};
}

TrialRecord TrialRecord::from_json(const io::Json& j) {
  try {
    TrialRecord r;
    r.id = j.at("id").get<std::string>();
    r.index = j.at("index").get<int>();
    r.label = j.at("label").get<std::string>() == "positive" ? classify::Positive : classify::Negative;
    r.scenario = parse_scenario(j.at("scenario").get<std::string>());
    r.profile = j.at("profile").get<std::string>();
    r.profile_index = j.at("profile_index").get<int>();
    r.day = j.at("day").get<int>();
    r.split = j.at("split").get<std::string>() == "train" ? Split::Train : Split::Test;
    r.speed_m_s = j.at("speed_m_s").get<double>();
    r.location_gain = j.at("location_gain").get<double>();
    r.cutoff_scale = j.at("cutoff_scale").get<double>();
    r.start_distance_m = j.at("start_distance_m").get<double>();
    r.contact_s = j.at("contact_s").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.segment_begin = j.at("segment_begin").get<Eigen::Index>();
    r.segment_end = j.at("segment_end").get<Eigen::Index>();
    for (const auto& k : j.at("knots")) r.knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    const auto& c = j.at("channel");
    auto& ch = r.channel;
    ch.surface_gain = c.at("surface_gain").get<double>();
    ch.leak_fraction = c.at("leak_fraction").get<double>();
    ch.sound_speed_m_s = c.at("sound_speed_m_s").get<double>();
    ch.decay_length_m = c.at("decay_length_m").get<double>();
    ch.detection_cutoff_m = c.at("detection_cutoff_m").get<double>();
    ch.phase_offset_rad = c.at("phase_offset_rad").get<double>();
    ch.mechanical_noise_level = c.at("mechanical_noise_level").get<double>();
    ch.electrical_tone_level = c.at("electrical_tone_level").get<double>();
    ch.floor_noise_level = c.at("floor_noise_level").get<double>();
    ch.mechanical_corner_hz = c.at("mechanical_corner_hz").get<double>();
    ch.electrical_tone_hz = c.at("electrical_tone_hz").get<double>();
    ch.self_detection_excursion_m = c.at("self_detection_excursion_m").get<double>();
    ch.rng_seed = c.at("rng_seed").get<std::uint64_t>();
    for (const auto& e : c.at("disturbance_events"))
      ch.disturbance_events.push_back({e.at("start_s").get<double>(), e.at("duration_s").get<double>(),
                                       e.at("magnitude").get<double>()});
    for (const auto& e : c.at("self_detection_events"))
      ch.self_detection_events.push_back({e.at("start_s").get<double>(), e.at("duration_s").get<double>(),
                                          e.at("equivalent_distance_m").get<double>()});
    return r;
  } catch (const io::Json::exception& e) {
    throw ConfigError(std::string("manifest: malformed trial record: ") + e.what());
  }
}

namespace {

// Knuth's method; rates here are small.
int poisson(double mean, Rng& rng) {
  const double limit = std::exp(-mean);
  int k = 0;
  double p = rng.uniform();
  while (p > limit) {
    ++k;
    p *= rng.uniform();
  }
  return k;
}

void add_disturbances(sim::ChannelModel& ch, const DisturbanceModel& d, double duration_s, Rng& rng) {
  const int count = poisson(d.disturbance_rate_hz * duration_s, rng);
  for (int i = 0; i < count; ++i) {
    sim::DisturbanceEvent e;
    e.duration_s = std::min(duration_s, rng.uniform(d.disturbance_min_s, d.disturbance_max_s));
    e.start_s = rng.uniform(0.0, duration_s - e.duration_s);
    const double sign = rng.below(2) == 0 ? -1.0 : 1.0;
    e.magnitude = sign * rng.uniform(0.25, 1.0) * d.disturbance_magnitude;
    ch.disturbance_events.push_back(e);
  }
  if (rng.uniform() < d.self_detection_probability) {
    sim::SelfDetectionEvent e;
    e.duration_s = std::min(duration_s, rng.uniform(d.self_detection_min_s, d.self_detection_max_s));
    e.start_s = rng.uniform(0.0, duration_s - e.duration_s);
    e.equivalent_distance_m = rng.uniform(d.self_detection_min_m, d.self_detection_max_m);
    ch.self_detection_events.push_back(e);
  }
}

// Distance knots ending at contact; a moving object changes speed every leg.
std::vector<std::pair<double, double>> approach_knots(double contact_s, double speed, double jitter, bool moving,
                                                      Rng& rng) {
  if (!moving) return {{0.0, speed * contact_s}, {contact_s, 0.0}};
  constexpr double kLeg = 0.25;
  std::vector<std::pair<double, double>> back{{contact_s, 0.0}};
  double t = contact_s, d = 0.0;
  while (t > 1e-12) {
    const double dt = std::min(kLeg, t);
    d += speed * (1.0 + jitter * rng.uniform(-1.0, 1.0)) * dt;
    t -= dt;
    back.emplace_back(t < 1e-12 ? 0.0 : t, d);
  }
  std::reverse(back.begin(), back.end());
  return back;
}

}  // namespace

std::vector<TrialRecord> plan_trials(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<TrialRecord> out;
  const auto state = robot_state(spec.scenario);
  const int profiles = static_cast<int>(spec.object_profiles.size());
  for (int label = 1; label >= 0; --label) {
    const int count = label == 1 ? spec.positive_count() : spec.negative_count();
    for (int i = 0; i < count; ++i) {
      TrialRecord r;
      r.index = i;
      r.label = label == 1 ? classify::Positive : classify::Negative;
      r.scenario = spec.scenario;
      r.seed = derive_seed(derive_seed(spec.seed, static_cast<std::uint64_t>(label)), static_cast<std::uint64_t>(i));
      r.contact_s = spec.contact_s;
      r.segment_begin = spec.segment_begin_sample();
      r.segment_end = spec.segment_end_sample();
      Rng rng(r.seed);
      char id[96];
      std::snprintf(id, sizeof(id), "%s-%s-%04d", to_string(spec.scenario).c_str(), label == 1 ? "pos" : "neg", i);
      r.id = id;
      if (label == 1) {
        r.profile_index = i % profiles;
        const auto& p = spec.object_profiles[static_cast<std::size_t>(r.profile_index)];
        r.profile = p.name;
        r.day = (i / profiles) % 2;
        r.split = spec.split_by_profile() ? (r.profile_index % 2 == 0 ? Split::Train : Split::Test)
                                          : (r.day == 0 ? Split::Train : Split::Test);
        r.speed_m_s = rng.uniform(spec.speed_min_m_s, spec.speed_max_m_s);
        r.location_gain = p.location_gain * rng.uniform(0.85, 1.0);
        r.cutoff_scale = p.cutoff_scale;
        const bool object_moves = spec.scenario == Scenario::MovingRobotMovingObject;
        r.knots = approach_knots(spec.contact_s, r.speed_m_s, spec.speed_jitter, object_moves, rng);
        r.start_distance_m = r.knots.front().second;
      } else {
        r.day = i % 2;
        r.split = r.day == 0 ? Split::Train : Split::Test;
      }
      r.channel = sim::calibrated_channel(state, derive_seed(r.seed, 7));
      r.channel.floor_noise_level *= 1.0 + spec.day_floor_step * r.day;
      r.channel.detection_cutoff_m *= r.cutoff_scale;
      if (state == sim::RobotState::Moving) add_disturbances(r.channel, spec.disturbance, spec.duration_s, rng);
      out.push_back(std::move(r));
    }
  }
  return out;
}

SampleBuffer simulate_trial(const ScenarioSpec& spec, const TrialRecord& trial) {
  sim::ExcitationConfig ex;
  ex.frequency_hz = spec.carrier_hz;
  ex.sample_rate_hz = spec.sample_rate_hz;
  const auto excitation = sim::gen_excitation(ex, spec.duration_s);
  if (trial.knots.empty()) return sim::simulate_received(excitation, spec.carrier_hz, trial.channel, nullptr);
  sim::ObstacleTrajectory traj;
  traj.knots = trial.knots;
  traj.location_gain = trial.location_gain;
  traj.present_start_s = trial.knots.front().first;
  traj.present_end_s = trial.contact_s;
  return sim::simulate_received(excitation, spec.carrier_hz, trial.channel, &traj);
}

PreparedTrial prepare_trial(const TrialRecord& record, const SampleBuffer& audio, double carrier_hz) {
  if (record.segment_end > audio.size() || record.segment_begin < pipeline::kContextLength)
    throw ConfigError("trial " + record.id + ": segment outside the recording");
  const Vector env =
      pipeline::cleaned_envelope(pipeline::ChainConfig::for_carrier(carrier_hz, audio.sample_rate_hz), audio.samples);
  const Eigen::Index from = record.segment_begin - pipeline::kContextLength;
  PreparedTrial p;
  p.record = record;
  p.sequence.envelope = std::make_shared<const Vector>(env.segment(from, record.segment_end - from));
  p.sequence.begin = pipeline::kContextLength;
  p.sequence.end = record.segment_end - from;
  p.sequence.label = record.label;
  p.sequence.id = record.id;
  return p;
}

FieldDataset build_field_dataset(const ScenarioSpec& spec,
                                 const std::function<void(const TrialRecord&, const SampleBuffer&)>& sink) {
  FieldDataset ds;
  ds.spec = spec;
  ds.trials = plan_trials(spec);
  ds.prepared.reserve(ds.trials.size());
  for (const auto& t : ds.trials) {
    const auto audio = simulate_trial(spec, t);
    if (sink) sink(t, audio);
    ds.prepared.push_back(prepare_trial(t, audio, spec.carrier_hz));
  }
  return ds;
}

io::Json manifest_json(const ScenarioSpec& spec, const std::vector<TrialRecord>& trials) {
  io::Json list = io::Json::array();
  long positives = 0;
  for (const auto& t : trials) {
    list.push_back(t.to_json());
    positives += t.label == classify::Positive;
  }
  return {{"format", "aurasense-dataset"},
          {"version", 1},
          {"spec", spec.to_json()},
          {"positives", positives},
          {"negatives", static_cast<long>(trials.size()) - positives},
          {"trials", list}};
}

std::string write_dataset(const io::fs::path& dir, const ScenarioSpec& spec, bool wav) {
  const auto trials = plan_trials(spec);
  auto manifest = manifest_json(spec, trials);
  io::fs::create_directories(dir / "trials");
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const std::string rel = "trials/" + trials[i].id + (wav ? ".wav" : ".f32");
    io::write_audio(dir / rel, simulate_trial(spec, trials[i]));
    manifest["trials"][i]["audio"] = rel;
  }
  io::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
  return io::file_checksum(dir / "manifest.json");
}

StoredDataset read_dataset(const io::fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!io::fs::exists(path)) throw ConfigError("dataset: no manifest.json in " + dir.string());
  io::Json manifest;
  try {
    manifest = io::Json::parse(io::read_text(path));
  } catch (const io::Json::exception& e) {
    throw ConfigError("dataset: malformed manifest " + path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "aurasense-dataset") throw ConfigError("dataset: not a dataset manifest: " + path.string());
  StoredDataset ds;
  ds.dir = dir;
  ds.fingerprint = io::file_checksum(path);
  ds.carrier_hz = manifest.at("spec").value("carrier_hz", 19000.0);
  for (const auto& t : manifest.at("trials")) {
    ds.trials.push_back(TrialRecord::from_json(t));
    ds.audio.push_back(t.value("audio", ""));
  }
  return ds;
}

std::vector<PreparedTrial> load_trials(const StoredDataset& dataset, std::optional<Split> split) {
  std::vector<PreparedTrial> out;
  for (std::size_t i = 0; i < dataset.trials.size(); ++i) {
    const auto& t = dataset.trials[i];
    if (split && t.split != *split) continue;
    if (dataset.audio[i].empty()) throw ConfigError("dataset: trial " + t.id + " has no audio file");
    out.push_back(prepare_trial(t, io::read_audio(dataset.dir / dataset.audio[i]), dataset.carrier_hz));
  }
  return out;
}

std::vector<const PreparedTrial*> select(const std::vector<PreparedTrial>& trials, Split split) {
  std::vector<const PreparedTrial*> out;
  for (const auto& t : trials)
    if (t.record.split == split) out.push_back(&t);
  return out;
}

// --- Scoring -------------------------------------------------------------------

std::vector<TrialScore> score_trials(const classify::WindowScorer& scorer,
                                     const std::vector<const PreparedTrial*>& trials,
                                     const detect::DetectorConfig& detector) {
  std::vector<TrialScore> out;
  out.reserve(trials.size());
  for (const auto* t : trials) {
    const auto& seq = t->sequence;
    std::vector<pipeline::WindowInput> windows;
    for (Eigen::Index end = seq.begin + pipeline::kWindowLength; end <= seq.end; end += pipeline::kWindowLength)
      windows.push_back(pipeline::make_window_input(*seq.envelope, end));
    TrialScore s;
    s.id = t->record.id;
    s.label = t->record.label;
    s.scenario = t->record.scenario;
    s.profile = t->record.label == classify::Positive ? t->record.profile : "negative";
    s.window_scores = scorer.score(windows);
    s.score = detect::detect_window(s.window_scores, detector).mean_score;
    out.push_back(std::move(s));
  }
  return out;
}

void svm_training_set(const std::vector<const PreparedTrial*>& trials, int per_trial, Eigen::MatrixXd& X,
                      std::vector<classify::Label>& labels) {
  if (per_trial < 1) throw ConfigError("svm training set: per_trial must be at least 1");
  X.resize(static_cast<Eigen::Index>(trials.size()) * per_trial, classify::kFeatureCount);
  labels.clear();
  Eigen::Index row = 0;
  for (const auto* t : trials) {
    const auto& seq = t->sequence;
    const Eigen::Index windows = (seq.end - seq.begin) / pipeline::kWindowLength;
    for (int k = 0; k < per_trial; ++k) {
      // Window ends spread evenly, always including the segment end.
      const Eigen::Index w = windows - 1 - (static_cast<Eigen::Index>(k) * windows) / per_trial;
      const Eigen::Index end = seq.begin + (w + 1) * pipeline::kWindowLength;
      const auto input = pipeline::make_window_input(*seq.envelope, end);
      X.row(row++) = classify::envelope_features(input.context).transpose();
      labels.push_back(seq.label);
    }
  }
}

classify::WindowSource window_source(const std::vector<const PreparedTrial*>& trials) {
  std::vector<classify::LabeledSequence> seqs;
  seqs.reserve(trials.size());
  for (const auto* t : trials) seqs.push_back(t->sequence);
  return classify::WindowSource(std::move(seqs));
}

// --- ROC -----------------------------------------------------------------------

RocCurve compute_roc(const std::vector<double>& scores, const std::vector<classify::Label>& labels) {
  if (scores.size() != labels.size()) throw ConfigError("roc: scores and labels differ in length");
  std::vector<std::pair<double, classify::Label>> items;
  long pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ConfigError("roc: non-finite score");
    items.emplace_back(scores[i], labels[i]);
    (labels[i] == classify::Positive ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw ConfigError("roc: need at least one positive and one negative");
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve roc;
  const double inf = std::numeric_limits<double>::infinity();
  roc.points.push_back({inf, 0.0, 0.0});
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < items.size();) {
    const double s = items[i].first;
    for (; i < items.size() && items[i].first == s; ++i) (items[i].second == classify::Positive ? tp : fp)++;
    roc.points.push_back({s, static_cast<double>(tp) / static_cast<double>(pos),
                          static_cast<double>(fp) / static_cast<double>(neg)});
  }
  roc.points.push_back({-inf, 1.0, 1.0});

  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }

  std::size_t best = 1;
  for (std::size_t i = 1; i + 1 < roc.points.size(); ++i)
    if (roc.points[i].tpr - roc.points[i].fpr > roc.points[best].tpr - roc.points[best].fpr) best = i;
  roc.youden = roc.points[best];
  const double lower = roc.points[best + 1].threshold;
  roc.decision_threshold = std::isfinite(lower) ? (roc.youden.threshold + lower) / 2.0
                                                : std::nextafter(roc.youden.threshold, -inf);
  return roc;
}

void write_roc_csv(const io::fs::path& path, const RocCurve& roc) {
  io::CsvWriter w(path, {"threshold", "tpr", "fpr"});
  for (const auto& p : roc.points)
    w.row({io::format_double(p.threshold), io::format_double(p.tpr), io::format_double(p.fpr)});
  w.close();
}

// --- Rates ---------------------------------------------------------------------

std::optional<double> RateRow::tpr() const {
  if (positives == 0) return std::nullopt;
  return static_cast<double>(true_positives) / static_cast<double>(positives);
}

std::optional<double> RateRow::tnr() const {
  if (negatives == 0) return std::nullopt;
  return static_cast<double>(true_negatives) / static_cast<double>(negatives);
}

RateTable tpr_tnr(const std::vector<bool>& decisions, const std::vector<classify::Label>& labels,
                  const std::vector<std::string>& groups) {
  if (decisions.size() != labels.size() || (!groups.empty() && groups.size() != labels.size()))
    throw ConfigError("tpr_tnr: inputs differ in length");
  RateTable t;
  t.overall.group = "all";
  std::map<std::string, RateRow> by;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RateRow* rows[2] = {&t.overall, nullptr};
    if (!groups.empty()) {
      rows[1] = &by[groups[i]];
      rows[1]->group = groups[i];
    }
    for (RateRow* r : rows) {
      if (!r) continue;
      if (labels[i] == classify::Positive) {
        ++r->positives;
        r->true_positives += decisions[i];
      } else {
        ++r->negatives;
        r->true_negatives += !decisions[i];
      }
    }
  }
  for (auto& [k, v] : by) t.groups.push_back(v);
  return t;
}

std::string format_rate(const std::optional<double>& r) {
  if (!r) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * *r);
  return buf;
}

void write_rate_csv(const io::fs::path& path, const RateTable& table) {
  io::CsvWriter w(path, {"group", "positives", "true_positives", "tpr", "negatives", "true_negatives", "tnr"});
  const auto rate = [](const std::optional<double>& r) { return r ? io::format_double(*r) : std::string("undefined"); };
  std::vector<RateRow> rows = table.groups;
  rows.push_back(table.overall);
  for (const auto& r : rows)
    w.row({r.group, std::to_string(r.positives), std::to_string(r.true_positives), rate(r.tpr()),
           std::to_string(r.negatives), std::to_string(r.true_negatives), rate(r.tnr())});
  w.close();
}

// --- Micro-benchmark -----------------------------------------------------------

void MicroConfig::validate() const {
  if (trials_per_point < 1) throw ConfigError("microbench: trials_per_point must be at least 1");
  if (!(speed_m_s > 0.0) || !(start_distance_m > 0.0)) throw ConfigError("microbench: speed and distance must be positive");
  if (warmup_s < 0.0 || quiet_s < warmup_s + cusum.calibration_s)
    throw ConfigError("microbench: quiet lead-in shorter than warmup plus CUSUM calibration");
}

double micro_trial_distance(const MicroPoint& point, const MicroConfig& config, int trial) {
  config.validate();
  auto channel = sim::calibrated_channel(sim::RobotState::Static, derive_seed(config.seed, static_cast<std::uint64_t>(trial)));
  channel.surface_gain = point.surface_gain;
  channel.detection_cutoff_m *= point.cutoff_scale;
  const double contact = config.quiet_s + config.start_distance_m / config.speed_m_s;
  auto traj = sim::ObstacleTrajectory::linear(config.quiet_s, config.start_distance_m, contact, 0.0, point.location_gain);
  sim::ExcitationConfig ex;
  ex.frequency_hz = config.carrier_hz;
  sim::ReceivedSignalGenerator gen(ex, channel, traj);
  const auto chain_cfg = pipeline::ChainConfig::for_carrier(config.carrier_hz, ex.sample_rate_hz);
  pipeline::EnvelopeChain chain(chain_cfg);
  pipeline::BlockMeans means(chain_cfg.block_length);
  dsp::BlockCusum cusum(config.cusum, ex.sample_rate_hz / chain_cfg.block_length);

  const auto total = static_cast<Eigen::Index>(std::llround(contact * ex.sample_rate_hz));
  const Eigen::Index chunk = 9600;
  const auto skip = static_cast<Eigen::Index>(std::llround(config.warmup_s * ex.sample_rate_hz / chain_cfg.block_length));
  Eigen::Index block = 0;
  bool done = false;
  const auto feed = [&](const Vector& env) {
    for (double m : means.push(env))
      if (block++ >= skip && cusum.push(m)) {
        done = true;
        return;
      }
  };
  for (Eigen::Index pos = 0; pos < total && !done; pos += chunk) feed(chain.push(gen.next(std::min(chunk, total - pos))));
  if (!done) feed(chain.flush());
  const auto alarm = cusum.alarm_block();
  if (!alarm) return 0.0;
  const double t = static_cast<double>((*alarm + skip + 1) * chain_cfg.block_length) / ex.sample_rate_hz;
  if (t < config.quiet_s || t > contact) return 0.0;
  return traj.distance_at(t);
}

std::vector<MicroResult> micro_benchmark_max_distance(const std::vector<MicroPoint>& sweep,
                                                      const MicroConfig& config) {
  config.validate();
  std::vector<MicroResult> out;
  for (const auto& p : sweep) {
    MicroResult r;
    r.point = p;
    for (int t = 0; t < config.trials_per_point; ++t) {
      const double d = micro_trial_distance(p, config, t);
      r.distances_m.push_back(d);
      r.detections += d > 0.0;
    }
    const auto [lo, hi] = std::minmax_element(r.distances_m.begin(), r.distances_m.end());
    r.min_m = *lo;
    r.max_m = *hi;
    double sum = 0.0;
    for (double d : r.distances_m) sum += d;
    r.mean_m = sum / static_cast<double>(r.distances_m.size());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MicroPoint> default_micro_sweep() {
  return {{"angle_0", 1.0, 1.0, 1.0},       {"angle_30", 0.7, 1.0, 1.0},      {"angle_60", 0.45, 1.0, 1.0},
          {"angle_90", 0.3, 1.0, 1.0},      {"angle_120", 0.085, 1.0, 1.0},   {"angle_150", 0.15, 1.0, 1.0},
          {"location_0cm", 1.0, 1.0, 1.0},  {"location_10cm", 0.6, 1.0, 1.0}, {"location_20cm", 0.25, 1.0, 1.0},
          {"material_pvc", 1.0, 1.0, 0.45}, {"material_foil", 0.0, 1.0, 1.0}, {"material_thin_aluminum", 1.0, 1.0, 2.0}};
}

}  // namespace aura::eval
