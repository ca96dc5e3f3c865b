#include "aura/eval.hpp"
#include "aura/io.hpp"
#include "aura/realtime.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <set>
#include <thread>

#include <unistd.h>

using namespace aura;
namespace fs = io::fs;
using io::Json;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> threshold;
  std::string classifier;
  std::vector<std::string> datasets;
  std::string model;
  std::string input;
  bool pace = false;
  bool allow_train_eval = false;
  bool overwrite = false;
  bool force = false;
};

/// Output directory built under a sibling staging path and renamed into place.
class OutputDir {
 public:
  OutputDir(fs::path target, bool overwrite) : target_(std::move(target)) {
    if (fs::exists(target_) && !fs::is_directory(target_))
      throw ConfigError("output path exists and is not a directory: " + target_.string());
    if (fs::exists(target_) && !fs::is_empty(target_) && !overwrite)
      throw ConfigError("output directory " + target_.string() + " is not empty (use --overwrite)");
    const auto parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    staging_ = parent / ("." + target_.filename().string() + ".staging-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  fs::path operator/(const std::string& name) const { return staging_ / name; }

  void commit() {
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

  const fs::path& target() const { return target_; }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

fs::path output_path(const Options& o, const std::string& command) {
  if (!o.out.empty()) return o.out;
  const char* root = std::getenv("AURASENSE_OUT_ROOT");
  return fs::path(root && *root ? root : "runs") / command;
}

/// Config file merged with flag overrides (flags win).
io::Config load_config(const Options& o) {
  io::Config c;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw ConfigError("config file not found: " + o.config_path);
    c = io::Config::load(o.config_path);
  }
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (o.threshold) c.set("threshold", io::format_double(*o.threshold));
  if (!o.classifier.empty()) c.set("classifier", o.classifier);
  if (!o.datasets.empty()) {
    std::string joined;
    for (const auto& d : o.datasets) joined += (joined.empty() ? "" : ",") + d;
    c.set("dataset", joined);
  }
  if (!o.model.empty()) c.set("model", o.model);
  if (!o.input.empty()) c.set("input", o.input);
  if (o.pace) c.set("pace", "true");
  return c;
}

void reject_unused(const io::Config& c) {
  const auto unused = c.unused();
  if (unused.empty()) return;
  std::string keys;
  for (const auto& k : unused) keys += (keys.empty() ? "" : ", ") + k;
  throw ConfigError("unknown config key(s): " + keys);
}

void write_snapshot(const OutputDir& out, const std::string& command, const io::Config& c) {
  io::write_text(out / "config.snapshot", "# aurasense " + command + "\n" + c.to_string());
}

std::string required(const io::Config& c, const std::string& key) {
  const auto v = c.get_string(key, "");
  if (v.empty()) throw ConfigError("missing required setting '" + key + "'");
  return v;
}

std::uint64_t seed_of(const io::Config& c, std::uint64_t fallback = 1) {
  const long s = c.get_int("seed", static_cast<long>(fallback));
  if (s < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

std::vector<eval::StoredDataset> open_datasets(const io::Config& c) {
  auto dirs = c.get_list("dataset");
  if (dirs.empty()) throw ConfigError("missing required setting 'dataset'");
  std::vector<eval::StoredDataset> out;
  for (const auto& d : dirs) out.push_back(eval::read_dataset(d));
  return out;
}

io::ModelFile open_model(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
  return io::load_model(path);
}

std::unique_ptr<classify::WindowScorer> make_scorer(const io::ModelFile& file) {
  if (file.kind() == io::ModelKind::Cnn) return std::make_unique<classify::CnnScorer>(std::get<cnn::Model>(file.model));
  return std::make_unique<classify::SvmScorer>(std::get<classify::SvmModel>(file.model));
}

detect::DetectorConfig detector_from(const io::Config& c) {
  detect::DetectorConfig d;
  d.window_count = static_cast<int>(c.get_int("detector.window_count", d.window_count));
  d.slide_s = c.get_double("detector.slide_s", d.slide_s);
  d.threshold = c.get_double("threshold", d.threshold);
  d.validate();
  return d;
}

// --- simulate --------------------------------------------------------------------

int cmd_simulate(const Options& o) {
  auto c = load_config(o);
  const auto spec = eval::ScenarioSpec::from_config(c);
  const auto format = c.get_string("audio_format", "f32");
  if (format != "f32" && format != "wav") throw ConfigError("audio_format must be f32 or wav");
  reject_unused(c);
  spec.validate();

  OutputDir out(output_path(o, "simulate"), o.overwrite);
  write_snapshot(out, "simulate", c);
  const auto fingerprint = eval::write_dataset(out / "", spec, format == "wav");
  out.commit();
  std::cout << "dataset " << out.target().string() << ": " << spec.positive_count() << " positives, "
            << spec.negative_count() << " negatives, fingerprint " << fingerprint << "\n";
  return 0;
}

// --- train -----------------------------------------------------------------------

int cmd_train(const Options& o) {
  auto c = load_config(o);
  const auto classifier = c.get_string("classifier", "cnn");
  if (classifier != "cnn" && classifier != "svm") throw ConfigError("classifier must be cnn or svm");
  const auto seed = seed_of(c);
  const auto datasets = open_datasets(c);

  classify::CnnTrainConfig cnn_cfg;
  classify::SvmTrainConfig svm_cfg;
  long validation_every = 0;
  long svm_windows = 0;
  if (classifier == "cnn") {
    auto& a = cnn_cfg.architecture;
    a.layers = static_cast<int>(c.get_int("cnn.layers", a.layers));
    a.channels = static_cast<int>(c.get_int("cnn.channels", a.channels));
    a.kernel = static_cast<int>(c.get_int("cnn.kernel", a.kernel));
    a.stride = static_cast<int>(c.get_int("cnn.stride", a.stride));
    cnn_cfg.learning_rate = c.get_double("cnn.learning_rate", 3e-4);
    cnn_cfg.steps = static_cast<int>(c.get_int("cnn.steps", 800));
    cnn_cfg.per_class_batch = static_cast<int>(c.get_int("cnn.per_class_batch", cnn_cfg.per_class_batch));
    cnn_cfg.eval_interval = static_cast<int>(c.get_int("cnn.eval_interval", 50));
    cnn_cfg.patience = static_cast<int>(c.get_int("cnn.patience", cnn_cfg.patience));
    cnn_cfg.validation_windows = static_cast<int>(c.get_int("cnn.validation_windows", cnn_cfg.validation_windows));
    validation_every = c.get_int("validation_every", 10);
    if (validation_every < 0 || validation_every == 1) throw ConfigError("validation_every must be 0 or at least 2");
    cnn_cfg.seed = seed;
    cnn_cfg.validate();
  } else {
    svm_cfg.C = c.get_double("svm.C", svm_cfg.C);
    svm_cfg.gamma = c.get_double("svm.gamma", svm_cfg.gamma);
    svm_cfg.tolerance = c.get_double("svm.tolerance", svm_cfg.tolerance);
    svm_windows = c.get_int("svm.windows_per_trial", 5);
    svm_cfg.seed = seed;
  }
  reject_unused(c);

  OutputDir out(output_path(o, "train"), o.overwrite);
  write_snapshot(out, "train", c);

  std::vector<eval::PreparedTrial> train, validation;
  Json sources = Json::array();
  for (const auto& ds : datasets) {
    auto trials = eval::load_trials(ds, eval::Split::Train);
    for (std::size_t i = 0; i < trials.size(); ++i) {
      const bool held_out = validation_every > 0 && i % static_cast<std::size_t>(validation_every) ==
                                                       static_cast<std::size_t>(validation_every) - 1;
      (held_out ? validation : train).push_back(std::move(trials[i]));
    }
    sources.push_back({{"fingerprint", ds.fingerprint},
                       {"scenario", ds.trials.empty() ? "" : eval::to_string(ds.trials.front().scenario)}});
  }
  if (train.empty()) throw ConfigError("dataset has no training trials");
  const auto train_ptrs = eval::select(train, eval::Split::Train);
  const auto val_ptrs = eval::select(validation, eval::Split::Train);

  io::ModelFile file;
  Json hyper;
  io::CsvWriter loss(out / "loss.csv", {"step", "train_loss", "validation_loss"});
  Json extra = Json::object();
  if (classifier == "cnn") {
    const auto& a = cnn_cfg.architecture;
    hyper = {{"layers", a.layers},
             {"channels", a.channels},
             {"kernel", a.kernel},
             {"stride", a.stride},
             {"learning_rate", cnn_cfg.learning_rate},
             {"steps", cnn_cfg.steps},
             {"per_class_batch", cnn_cfg.per_class_batch},
             {"eval_interval", cnn_cfg.eval_interval},
             {"patience", cnn_cfg.patience},
             {"validation_windows", cnn_cfg.validation_windows},
             {"validation_every", validation_every}};
    const auto source = eval::window_source(train_ptrs);
    std::optional<classify::WindowSource> val_source;
    if (!val_ptrs.empty()) val_source.emplace(eval::window_source(val_ptrs));
    const int report = std::max(1, cnn_cfg.steps / 20);
    auto result = classify::train_cnn(source, val_source ? &*val_source : nullptr, cnn_cfg, [&](int step, double l) {
      if (step % report == 0) std::cerr << "step " << step << " loss " << l << "\n";
    });
    for (const auto& r : result.trace)
      loss.row({std::to_string(r.step), io::format_double(r.train_loss),
                r.validation_loss ? io::format_double(*r.validation_loss) : ""});
    extra = {{"best_step", result.best_step}, {"stopped_early", result.stopped_early}};
    file.model = std::move(result.model);
  } else {
    hyper = {{"C", svm_cfg.C}, {"gamma", svm_cfg.gamma}, {"tolerance", svm_cfg.tolerance},
             {"windows_per_trial", svm_windows}};
    Eigen::MatrixXd X;
    std::vector<classify::Label> labels;
    eval::svm_training_set(train_ptrs, static_cast<int>(svm_windows), X, labels);
    auto model = classify::train_svm(X, labels, svm_cfg);
    extra = {{"support_vectors", model.support.rows()}};
    file.model = std::move(model);
  }
  loss.close();

  file.metadata = {{"classifier", classifier},
                   {"seed", seed},
                   {"hyperparameters", hyper},
                   {"datasets", sources},
                   {"train_trials", train.size()},
                   {"validation_trials", validation.size()},
                   {"training", extra}};
  io::save_model(out / "model.lswm", file);
  Json meta = file.metadata;
  meta["model_checksum"] = io::file_checksum(out / "model.lswm");
  io::write_text(out / "model.json", meta.dump(1) + "\n");
  out.commit();
  std::cout << classifier << " model " << (out.target() / "model.lswm").string() << " checksum "
            << meta["model_checksum"].get<std::string>() << "\n";
  return 0;
}

// --- eval ------------------------------------------------------------------------

std::vector<eval::TrialScore> score_parallel(const io::ModelFile& file,
                                             const std::vector<const eval::PreparedTrial*>& trials, int jobs) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(trials.size())));
  if (jobs == 1) return eval::score_trials(*make_scorer(file), trials);
  std::vector<std::vector<eval::TrialScore>> parts(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  const std::size_t per = (trials.size() + jobs - 1) / jobs;
  for (int j = 0; j < jobs; ++j) {
    workers.emplace_back([&, j] {
      try {
        const std::size_t lo = std::min(trials.size(), j * per), hi = std::min(trials.size(), lo + per);
        const std::vector<const eval::PreparedTrial*> mine(trials.begin() + lo, trials.begin() + hi);
        parts[j] = eval::score_trials(*make_scorer(file), mine);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<eval::TrialScore> out;
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

std::string table_row(const std::string& name, const eval::RateRow& row, bool tpr) {
  char line[96];
  std::snprintf(line, sizeof(line), "%-20s %8s  (%ld/%ld)", name.c_str(),
                eval::format_rate(tpr ? row.tpr() : row.tnr()).c_str(), tpr ? row.true_positives : row.true_negatives,
                tpr ? row.positives : row.negatives);
  return line;
}

int cmd_eval(const Options& o) {
  auto c = load_config(o);
  const auto model_path = required(c, "model");
  const auto datasets = open_datasets(c);
  const auto split_name = c.get_string("split", "test");
  if (split_name != "test" && split_name != "train") throw ConfigError("split must be test or train");
  const auto split = split_name == "train" ? eval::Split::Train : eval::Split::Test;
  const bool fixed_threshold = c.has("threshold");
  const double threshold = c.get_double("threshold", 0.0);
  const int jobs = static_cast<int>(c.get_int("jobs", 1));
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  reject_unused(c);

  const auto file = open_model(model_path);
  std::set<std::string> trained_on;
  if (file.metadata.contains("datasets"))
    for (const auto& d : file.metadata["datasets"]) trained_on.insert(d.value("fingerprint", ""));
  for (const auto& ds : datasets) {
    const bool known = trained_on.count(ds.fingerprint) != 0;
    if (split == eval::Split::Train && known && !o.allow_train_eval)
      throw ConfigError("refusing to evaluate on the model's own training split (use --allow-train-eval)");
    if (!known) {
      std::cerr << "warning: dataset " << ds.dir.string() << " (" << ds.fingerprint
                << ") is not one the model was trained on\n";
      if (!o.force) throw ConfigError("dataset fingerprint mismatch (use --force to evaluate anyway)");
    }
  }

  OutputDir out(output_path(o, "eval"), o.overwrite);
  write_snapshot(out, "eval", c);

  std::vector<eval::PreparedTrial> trials;
  for (const auto& ds : datasets) {
    auto t = eval::load_trials(ds, split);
    std::move(t.begin(), t.end(), std::back_inserter(trials));
  }
  const auto ptrs = eval::select(trials, split);
  const auto scores = score_parallel(file, ptrs, jobs);

  std::vector<double> s;
  std::vector<classify::Label> labels;
  for (const auto& t : scores) {
    s.push_back(t.score);
    labels.push_back(t.label);
  }
  const auto roc = eval::compute_roc(s, labels);
  const double decision = fixed_threshold ? threshold : roc.decision_threshold;

  std::vector<bool> decisions;
  std::vector<std::string> by_scenario, by_profile, by_object;
  for (const auto& t : scores) {
    decisions.push_back(t.score > decision);
    by_scenario.push_back(eval::to_string(t.scenario));
    by_profile.push_back(t.profile);
    by_object.push_back(t.scenario == eval::Scenario::MovingRobotStaticObject ? "static_object" : "moving_object");
  }
  const auto rates = eval::tpr_tnr(decisions, labels, by_scenario);
  const auto profiles = eval::tpr_tnr(decisions, labels, by_profile);
  const auto objects = eval::tpr_tnr(decisions, labels, by_object);

  io::CsvWriter csv(out / "scores.csv", {"id", "scenario", "profile", "label", "score", "decision"});
  std::string jsonl;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& t = scores[i];
    csv.row({t.id, eval::to_string(t.scenario), t.profile, std::to_string(static_cast<int>(t.label)),
             io::format_double(t.score), decisions[i] ? "1" : "0"});
    jsonl += Json{{"id", t.id}, {"label", static_cast<int>(t.label)}, {"score", t.score},
                  {"window_scores", t.window_scores}}.dump() + "\n";
  }
  csv.close();
  io::write_text(out / "trials.jsonl", jsonl);
  eval::write_roc_csv(out / "roc.csv", roc);
  eval::write_rate_csv(out / "rates.csv", rates);
  eval::write_rate_csv(out / "rates_by_profile.csv", profiles);

  eval::RateRow static_row{"static_object"}, moving_row{"moving_object"};
  for (const auto& g : objects.groups) (g.group == "static_object" ? static_row : moving_row) = g;
  const auto rate_json = [](const std::optional<double>& r) { return r ? Json(*r) : Json(nullptr); };
  Json summary = {{"model_checksum", io::file_checksum(model_path)},
                  {"split", split_name},
                  {"trials", scores.size()},
                  {"auc", roc.auc},
                  {"youden", {{"threshold", roc.youden.threshold}, {"tpr", roc.youden.tpr}, {"fpr", roc.youden.fpr}}},
                  {"roc_threshold", roc.decision_threshold},
                  {"threshold", decision},
                  {"threshold_source", fixed_threshold ? "config" : "roc"},
                  {"static_object_tpr", rate_json(static_row.tpr())},
                  {"moving_object_tpr", rate_json(moving_row.tpr())},
                  {"tnr", rate_json(rates.overall.tnr())}};
  Json datasets_json = Json::array();
  for (const auto& ds : datasets) datasets_json.push_back(ds.fingerprint);
  summary["datasets"] = datasets_json;
  io::write_text(out / "summary.json", summary.dump(1) + "\n");
  out.commit();

  std::cout << table_row("Static Object TPR", static_row, true) << "\n"
            << table_row("Moving Object TPR", moving_row, true) << "\n"
            << table_row("TNR", rates.overall, false) << "\n"
            << "AUC " << io::format_double(roc.auc) << ", threshold " << io::format_double(decision) << " ("
            << (fixed_threshold ? "config" : "roc") << ")\n";
  return 0;
}

// --- detect ----------------------------------------------------------------------

Json event_json(const detect::DetectionEvent& e) {
  return {{"time_s", e.time_s},   {"mean_score", e.mean_score}, {"threshold", e.threshold},
          {"stop", e.stop},       {"degraded", e.degraded},     {"scores_used", e.scores_used}};
}

int cmd_detect(const Options& o) {
  auto c = load_config(o);
  const auto model_path = required(c, "model");
  const auto input_path = required(c, "input");
  realtime::StreamOptions opt;
  opt.carrier_hz = c.get_double("carrier_hz", opt.carrier_hz);
  opt.detector = detector_from(c);
  opt.pace = c.get_bool("pace", false);
  opt.chunk_s = c.get_double("chunk_s", opt.chunk_s);
  const long capacity = c.get_int("queue_capacity", static_cast<long>(opt.queue_capacity));
  if (capacity < 1) throw ConfigError("queue_capacity must be at least 1");
  opt.queue_capacity = static_cast<std::size_t>(capacity);
  reject_unused(c);

  const auto file = open_model(model_path);
  if (!fs::exists(input_path)) throw ConfigError("input file not found: " + input_path);
  const auto input = io::read_audio(input_path);
  const auto scorer = make_scorer(file);

  OutputDir out(output_path(o, "detect"), o.overwrite);
  write_snapshot(out, "detect", c);
  const auto result = realtime::run_detection(input, *scorer, opt, [](const detect::DetectionEvent& e) {
    std::cout << event_json(e).dump() << std::endl;
  });

  std::string events, stops;
  for (const auto& e : result.events) {
    events += event_json(e).dump() + "\n";
    if (e.stop) stops += "STOP " + io::format_double(e.time_s) + "\n";
  }
  io::write_text(out / "events.jsonl", events);
  io::write_text(out / "stop.txt", stops);

  const auto& r = result.report;
  Json stages = Json::object();
  for (const auto& [name, s] : r.stages) stages[name] = {{"mean_s", s.mean_s}, {"max_s", s.max_s}};
  double worst = 0.0;
  for (double l : result.event_latency_s) worst = std::max(worst, l);
  const Json latency = {{"paced", opt.pace},
                        {"samples", input.size()},
                        {"wall_s", result.wall_s},
                        {"samples_per_s", result.samples_per_s},
                        {"realtime_factor", result.samples_per_s / input.sample_rate_hz},
                        {"producer_waits", result.producer_waits},
                        {"events", result.events.size()},
                        {"event_latency_s", result.event_latency_s},
                        {"max_event_latency_s", worst},
                        {"budget_s", r.budget_s},
                        {"within_budget", r.pass},
                        {"v_max_budget_m_s", r.v_max_budget_m_s},
                        {"v_max_measured_m_s", r.v_max_measured_m_s},
                        {"stages", stages}};
  io::write_text(out / "latency.json", latency.dump(1) + "\n");
  out.commit();

  std::cerr << result.events.size() << " events, " << std::count_if(result.events.begin(), result.events.end(),
                                                                      [](const auto& e) { return e.stop; })
            << " stop; " << io::format_double(result.samples_per_s / input.sample_rate_hz) << "x real time\n";
  return 0;
}

// --- microbench ------------------------------------------------------------------

int cmd_microbench(const Options& o) {
  auto c = load_config(o);
  eval::MicroConfig m;
  m.trials_per_point = static_cast<int>(c.get_int("trials_per_point", m.trials_per_point));
  m.speed_m_s = c.get_double("speed_m_s", m.speed_m_s);
  m.start_distance_m = c.get_double("start_distance_m", m.start_distance_m);
  m.warmup_s = c.get_double("warmup_s", m.warmup_s);
  m.quiet_s = c.get_double("quiet_s", m.quiet_s);
  m.carrier_hz = c.get_double("carrier_hz", m.carrier_hz);
  m.cusum.k_sigma = c.get_double("cusum.k_sigma", m.cusum.k_sigma);
  m.cusum.h_sigma = c.get_double("cusum.h_sigma", m.cusum.h_sigma);
  m.cusum.calibration_s = c.get_double("cusum.calibration_s", m.cusum.calibration_s);
  m.seed = seed_of(c, m.seed);
  const double response_s = c.get_double("response_time_s", 0.15);
  auto sweep = eval::default_micro_sweep();
  const auto points = c.get_list("points");
  if (!points.empty()) {
    std::vector<eval::MicroPoint> chosen;
    for (const auto& name : points) {
      const auto it = std::find_if(sweep.begin(), sweep.end(), [&](const auto& p) { return p.name == name; });
      if (it == sweep.end()) throw ConfigError("unknown micro-benchmark point '" + name + "'");
      chosen.push_back(*it);
    }
    sweep = chosen;
  }
  reject_unused(c);
  m.validate();

  OutputDir out(output_path(o, "microbench"), o.overwrite);
  write_snapshot(out, "microbench", c);
  const auto results = eval::micro_benchmark_max_distance(sweep, m);

  io::CsvWriter dist(out / "distances.csv", {"point", "trial", "distance_m"});
  io::CsvWriter sum(out / "summary.csv", {"point", "location_gain", "surface_gain", "cutoff_scale", "detections",
                                          "mean_m", "min_m", "max_m", "v_max_m_s"});
  for (const auto& r : results) {
    for (std::size_t t = 0; t < r.distances_m.size(); ++t)
      dist.row({r.point.name, std::to_string(t), io::format_double(r.distances_m[t])});
    const double v = r.mean_m > 0.0 ? detect::max_speed(r.mean_m, response_s) : 0.0;
    sum.row({r.point.name, io::format_double(r.point.location_gain), io::format_double(r.point.surface_gain),
             io::format_double(r.point.cutoff_scale), std::to_string(r.detections), io::format_double(r.mean_m),
             io::format_double(r.min_m), io::format_double(r.max_m), io::format_double(v)});
    std::printf("%-24s %2d/%-2zu  mean %6.2f cm  v_max %6.1f cm/s\n", r.point.name.c_str(), r.detections,
                r.distances_m.size(), 100.0 * r.mean_m, 100.0 * v);
  }
  dist.close();
  sum.close();
  out.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aurasense: surface-wave proximity sensing workflows"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file");
    sub->add_option("--seed", o.seed, "master seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory (default $AURASENSE_OUT_ROOT/<command> or runs/<command>)");
    sub->add_flag("--overwrite", o.overwrite, "replace a non-empty output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate a scenario dataset");
  common(simulate);

  auto* train = app.add_subcommand("train", "train a window classifier");
  common(train);
  train->add_option("--classifier", o.classifier, "cnn or svm")->check(CLI::IsMember({"cnn", "svm"}));
  train->add_option("--dataset", o.datasets, "dataset directory (repeatable)");

  auto* evaluate = app.add_subcommand("eval", "evaluate a model on held-out trials");
  common(evaluate);
  evaluate->add_option("--model", o.model, "model.lswm");
  evaluate->add_option("--dataset", o.datasets, "dataset directory (repeatable)");
  evaluate->add_option("--threshold", o.threshold, "fixed decision threshold instead of the ROC choice");
  evaluate->add_flag("--allow-train-eval", o.allow_train_eval, "permit evaluation on the training split");
  evaluate->add_flag("--force", o.force, "proceed despite a dataset fingerprint mismatch");

  auto* detect_cmd = app.add_subcommand("detect", "run the streaming detector over a recording");
  common(detect_cmd);
  detect_cmd->add_option("--model", o.model, "model.lswm");
  detect_cmd->add_option("--input", o.input, "96 kHz mono recording (.wav or .f32 with sidecar)");
  detect_cmd->add_option("--threshold", o.threshold, "detector threshold");
  detect_cmd->add_flag("--pace", o.pace, "consume input at the wall-clock sample rate");

  auto* micro = app.add_subcommand("microbench", "CUSUM maximum detection distance sweep");
  common(micro);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*train) return cmd_train(o);
    if (*evaluate) return cmd_eval(o);
    if (*detect_cmd) return cmd_detect(o);
    if (*micro) return cmd_microbench(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
