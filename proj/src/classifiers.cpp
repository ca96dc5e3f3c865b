#include "aura/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace aura::classify {

// --- Window sampling -----------------------------------------------------------

WindowSource::WindowSource(std::vector<LabeledSequence> sequences, int window, int context)
    : sequences_(std::move(sequences)), window_(window), context_(context) {
  for (std::size_t i = 0; i < sequences_.size(); ++i) {
    const auto& s = sequences_[i];
    if (!s.envelope) throw ConfigError("window source: sequence without envelope");
    if (s.begin < 0 || s.end > s.envelope->size() || s.begin > s.end)
      throw ConfigError("window source: sequence bounds outside the recording");
    const Eigen::Index n = s.window_count(window_);
    if (n == 0) continue;
    auto& cum = cumulative_[s.label];
    by_label_[s.label].push_back(i);
    cum.push_back((cum.empty() ? 0 : cum.back()) + n);
  }
}

Eigen::Index WindowSource::window_count(Label label) const {
  return cumulative_[label].empty() ? 0 : cumulative_[label].back();
}

Eigen::VectorXf WindowSource::window(std::size_t seq, Eigen::Index end) const {
  return pipeline::normalize_trailing(*sequences_.at(seq).envelope, end, window_, context_);
}

Eigen::VectorXf WindowSource::sample(Label label, Rng& rng) const {
  const Eigen::Index total = window_count(label);
  if (total == 0) throw TrainingError("window source: no windows for the requested class");
  const auto pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(total)));
  const auto& cum = cumulative_[label];
  const auto it = std::upper_bound(cum.begin(), cum.end(), pick);
  const auto k = static_cast<std::size_t>(it - cum.begin());
  const Eigen::Index offset = pick - (k == 0 ? 0 : cum[k - 1]);
  const std::size_t seq = by_label_[label][k];
  return window(seq, sequences_[seq].begin + offset + window_);
}

// --- CNN training --------------------------------------------------------------

void CnnTrainConfig::validate() const {
  architecture.validate();
  if (architecture.in_channels != 1) throw ConfigError("train: window sources provide one input channel");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (per_class_batch < 1) throw ConfigError("train: per_class_batch must be at least 1");
  if (steps < 1) throw ConfigError("train: steps must be at least 1");
  if (eval_interval < 1 || patience < 1 || validation_windows < 1)
    throw ConfigError("train: invalid early-stopping settings");
}

namespace {

using Matf = cnn::Model::Mat;

struct ValidationSet {
  Matf input;
  std::vector<int> labels;
};

ValidationSet draw_validation(const WindowSource& source, int per_class, int window, std::uint64_t seed) {
  Rng rng(seed);
  ValidationSet set;
  set.input.resize(1, static_cast<Eigen::Index>(2 * per_class) * window);
  int col = 0;
  for (Label label : {Positive, Negative}) {
    for (int i = 0; i < per_class; ++i) {
      set.input.block(0, static_cast<Eigen::Index>(col) * window, 1, window) =
          source.sample(label, rng).transpose();
      set.labels.push_back(label);
      ++col;
    }
  }
  return set;
}

double validation_loss(const cnn::Model& model, const ValidationSet& set, int window) {
  const int n = static_cast<int>(set.labels.size());
  const int chunk = 32;
  double total = 0.0;
  for (int start = 0; start < n; start += chunk) {
    const int b = std::min(chunk, n - start);
    const Matf input = set.input.middleCols(static_cast<Eigen::Index>(start) * window,
                                            static_cast<Eigen::Index>(b) * window);
    const std::vector<int> labels(set.labels.begin() + start, set.labels.begin() + start + b);
    total += static_cast<double>(cnn::Model::cross_entropy(model.forward(input, b, cnn::Mode::Infer), labels)) * b;
  }
  return total / n;
}

}  // namespace

void make_batch(const WindowSource& source, int per_class, Rng& rng, Matf& input, std::vector<int>& labels) {
  const int window = source.window_length();
  const int batch = 2 * per_class;
  input.resize(1, static_cast<Eigen::Index>(batch) * window);
  labels.assign(static_cast<std::size_t>(batch), Negative);
  for (int b = 0; b < batch; ++b) {
    const Label label = b < per_class ? Positive : Negative;
    labels[static_cast<std::size_t>(b)] = label;
    input.block(0, static_cast<Eigen::Index>(b) * window, 1, window) = source.sample(label, rng).transpose();
  }
}

CnnTrainResult train_cnn(const WindowSource& train, const WindowSource* validation,
                         const CnnTrainConfig& config, const StepCallback& callback) {
  config.validate();
  const int window = config.architecture.input_length;
  if (train.window_length() != window) throw ConfigError("train: window length does not match the architecture");
  if (train.window_count(Positive) == 0) throw TrainingError("train: no positive training windows");
  if (train.window_count(Negative) == 0) throw TrainingError("train: no negative training windows");
  std::optional<ValidationSet> val;
  if (validation) {
    if (validation->window_count(Positive) == 0 || validation->window_count(Negative) == 0)
      throw TrainingError("train: validation split needs both classes");
    val = draw_validation(*validation, config.validation_windows, window, derive_seed(config.seed, 2));
  }

  CnnTrainResult result{cnn::Model::initialized(config.architecture, derive_seed(config.seed, 0)), {}, 0, false};
  cnn::Model& model = result.model;
  Rng rng(derive_seed(config.seed, 1));
  auto moment1 = cnn::Parameters<float>::zeros(config.architecture);
  auto moment2 = cnn::Parameters<float>::zeros(config.architecture);

  const int batch = 2 * config.per_class_batch;
  Matf input;
  std::vector<int> labels;

  double best = std::numeric_limits<double>::infinity();
  std::optional<cnn::Model> best_model;
  int stale = 0;
  const auto b1 = config.adam_beta1;
  const auto b2 = config.adam_beta2;

  for (int step = 1; step <= config.steps; ++step) {
    make_batch(train, config.per_class_batch, rng, input, labels);
    cnn::ForwardCache<float> cache;
    const Matf logits = model.forward(input, batch, cnn::Mode::Train, &cache);
    const double loss = cnn::Model::cross_entropy(logits, labels);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "train: loss diverged at step " << step << " (loss " << loss << ", learning rate "
          << config.learning_rate << ")";
      throw TrainingError(msg.str());
    }
    auto grad = model.gradients(cache, labels);
    model.update_running_stats(cache);

    const double c1 = 1.0 - std::pow(b1, step);
    const double c2 = 1.0 - std::pow(b2, step);
    auto p = model.params.tensors();
    auto g = grad.tensors();
    auto m = moment1.tensors();
    auto v = moment2.tensors();
    for (std::size_t t = 0; t < p.size(); ++t) {
      auto& pt = p[t].second;
      auto& gt = g[t].second;
      auto& mt = m[t].second;
      auto& vt = v[t].second;
      mt = static_cast<float>(b1) * mt + static_cast<float>(1.0 - b1) * gt;
      vt = static_cast<float>(b2) * vt + static_cast<float>(1.0 - b2) * gt.cwiseAbs2();
      pt.array() -= static_cast<float>(config.learning_rate) * (mt.array() / static_cast<float>(c1)) /
                    ((vt.array() / static_cast<float>(c2)).sqrt() + static_cast<float>(config.adam_eps));
    }

    LossRecord rec{step, loss, std::nullopt};
    if (val && step % config.eval_interval == 0) {
      const double vl = validation_loss(model, *val, window);
      rec.validation_loss = vl;
      if (vl < best) {
        best = vl;
        best_model = model;
        result.best_step = step;
        stale = 0;
      } else if (++stale >= config.patience) {
        result.trace.push_back(rec);
        result.stopped_early = true;
        if (callback) callback(step, loss);
        break;
      }
    }
    result.trace.push_back(rec);
    if (callback) callback(step, loss);
  }
  if (best_model) {
    model = std::move(*best_model);
  } else {
    result.best_step = result.trace.back().step;
  }
  return result;
}

double window_accuracy(const cnn::Model& model, const std::vector<Eigen::VectorXf>& windows,
                       const std::vector<Label>& labels) {
  if (windows.size() != labels.size() || windows.empty()) throw ConfigError("accuracy: mismatched inputs");
  const int window = model.architecture().input_length;
  std::size_t correct = 0;
  const std::size_t chunk = 32;
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const std::size_t b = std::min(chunk, windows.size() - start);
    Matf input(1, static_cast<Eigen::Index>(b) * window);
    for (std::size_t i = 0; i < b; ++i)
      input.block(0, static_cast<Eigen::Index>(i) * window, 1, window) = windows[start + i].transpose();
    const auto s = model.scores(input, static_cast<int>(b));
    for (std::size_t i = 0; i < b; ++i)
      if ((s(static_cast<Eigen::Index>(i)) > 0.5f) == (labels[start + i] == Positive)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(windows.size());
}

// --- Features ------------------------------------------------------------------

Vector envelope_features(const Eigen::Ref<const Vector>& envelope, double sample_rate_hz) {
  const int factor = static_cast<int>(std::lround(sample_rate_hz / kFeatureRateHz));
  if (factor < 1 || envelope.size() < 4 * factor) throw ConfigError("features: segment too short");
  const dsp::WindowStats st = dsp::window_stats(envelope);
  const double scale = 1.0 / std::max(st.stddev, dsp::kSigmaFloor);
  const Eigen::Index n = envelope.size() / factor;
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d(i) = (envelope.segment(i * factor, factor).mean() - st.mean) * scale;

  const dsp::WindowStats ds = dsp::window_stats(d);
  Vector f(kFeatureCount);
  f(0) = ds.mean;
  f(1) = ds.stddev;
  f(2) = d.minCoeff();
  f(3) = d.maxCoeff();

  int peaks = 0;
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    if (d(i) > d(i - 1) && d(i) >= d(i + 1)) ++peaks;
  f(4) = peaks;

  Eigen::Index best_bin = 1;
  double best_power = -1.0;
  for (Eigen::Index k = 1; 2 * k <= n; ++k) {
    double re = 0.0;
    double im = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * static_cast<double>((k * i) % n) / static_cast<double>(n);
      re += (d(i) - ds.mean) * std::cos(a);
      im -= (d(i) - ds.mean) * std::sin(a);
    }
    const double power = re * re + im * im;
    if (power > best_power) {
      best_power = power;
      best_bin = k;
    }
  }
  f(5) = static_cast<double>(best_bin) * kFeatureRateHz / static_cast<double>(n);

  f(6) = (d.tail(n - 1) - d.head(n - 1)).squaredNorm() / static_cast<double>(n - 1);

  const double tmean = (static_cast<double>(n) - 1.0) / 2.0;
  double sxy = 0.0;
  double sxx = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sxy += (static_cast<double>(i) - tmean) * (d(i) - ds.mean);
    sxx += (static_cast<double>(i) - tmean) * (static_cast<double>(i) - tmean);
  }
  f(7) = sxy / sxx * kFeatureRateHz;
  return f;
}

// --- SVM -----------------------------------------------------------------------

double SvmModel::margin(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != dimension())
    throw ConfigError("svm: feature dimension " + std::to_string(x.size()) + " does not match " +
                      std::to_string(dimension()));
  const Vector z = (x - feature_mean).cwiseQuotient(feature_scale);
  double m = bias;
  for (Eigen::Index i = 0; i < support.rows(); ++i)
    m += coef(i) * std::exp(-gamma * (support.row(i).transpose() - z).squaredNorm());
  return m;
}

double SvmModel::predict(const Eigen::Ref<const Vector>& x) const { return 1.0 / (1.0 + std::exp(-margin(x))); }

SvmModel train_svm(const Eigen::MatrixXd& X, const std::vector<Label>& labels, const SvmTrainConfig& config) {
  const Eigen::Index n = X.rows();
  const Eigen::Index dim = X.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw ConfigError("svm: label count mismatch");
  if (!(config.C > 0.0) || config.gamma < 0.0 || !(config.tolerance > 0.0))
    throw ConfigError("svm: C and tolerance must be positive, gamma non-negative");
  const auto positives = std::count(labels.begin(), labels.end(), Positive);
  if (positives == 0 || positives == n) throw TrainingError("svm: training needs both classes");
  if (!X.allFinite()) throw ConfigError("svm: non-finite feature");

  SvmModel model;
  model.C = config.C;
  model.gamma = config.gamma > 0.0 ? config.gamma : 1.0 / static_cast<double>(dim);
  model.feature_mean = X.colwise().mean().transpose();
  model.feature_scale.resize(dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    const double sd = std::sqrt((X.col(c).array() - model.feature_mean(c)).square().mean());
    model.feature_scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  const Eigen::MatrixXd Z =
      (X.rowwise() - model.feature_mean.transpose()).array().rowwise() / model.feature_scale.transpose().array();

  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] == Positive ? 1.0 : -1.0;
  const Vector sq = Z.rowwise().squaredNorm();
  Eigen::MatrixXd K = Z * Z.transpose();
  K = ((-2.0 * K).colwise() + sq).rowwise() + sq.transpose();
  K = (-model.gamma * K.array().max(0.0)).exp().matrix();
  // Q_ij = y_i y_j K_ij
  const Eigen::MatrixXd Q = y.asDiagonal() * K * y.asDiagonal();

  const double C = config.C;
  const double tau = 1e-12;
  Vector alpha = Vector::Zero(n);
  Vector G = -Vector::Ones(n);
  const auto upper = [&](Eigen::Index t) { return alpha(t) >= C; };
  const auto lower = [&](Eigen::Index t) { return alpha(t) <= 0.0; };

  long iter = 0;
  double gap = 0.0;
  for (;; ++iter) {
    // Working-set selection with second-order information.
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y(t) > 0) {
        if (!upper(t) && -G(t) >= gmax) { gmax = -G(t); i = t; }
      } else if (!lower(t) && G(t) >= gmax) {
        gmax = G(t);
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    double obj_min = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n && i >= 0; ++t) {
      if (y(t) > 0) {
        if (lower(t)) continue;
        const double diff = gmax + G(t);
        gmax2 = std::max(gmax2, G(t));
        if (diff > 0) {
          double quad = Q(i, i) + Q(t, t) - 2.0 * y(i) * Q(i, t);
          if (quad <= 0) quad = tau;
          const double obj = -diff * diff / quad;
          if (obj <= obj_min) { obj_min = obj; j = t; }
        }
      } else {
        if (upper(t)) continue;
        const double diff = gmax - G(t);
        gmax2 = std::max(gmax2, -G(t));
        if (diff > 0) {
          double quad = Q(i, i) + Q(t, t) + 2.0 * y(i) * Q(i, t);
          if (quad <= 0) quad = tau;
          const double obj = -diff * diff / quad;
          if (obj <= obj_min) { obj_min = obj; j = t; }
        }
      }
    }
    gap = gmax + gmax2;
    if (i < 0 || j < 0 || gap < config.tolerance) break;
    if (iter >= config.max_iterations) {
      std::ostringstream msg;
      msg << "svm: no convergence after " << iter << " iterations (KKT gap " << gap << ", tolerance "
          << config.tolerance << ")";
      throw TrainingError(msg.str());
    }

    const double ai_old = alpha(i);
    const double aj_old = alpha(j);
    double ai = ai_old;
    double aj = aj_old;
    if (y(i) != y(j)) {
      double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0) {
        if (aj < 0) { aj = 0; ai = diff; }
      } else if (ai < 0) {
        ai = 0;
        aj = -diff;
      }
      if (diff > 0) {
        if (ai > C) { ai = C; aj = C - diff; }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (G(i) - G(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) { ai = C; aj = sum - C; }
      } else if (aj < 0) {
        aj = 0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) { aj = C; ai = sum - C; }
      } else if (ai < 0) {
        ai = 0;
        aj = sum;
      }
    }
    alpha(i) = ai;
    alpha(j) = aj;
    G += Q.col(i) * (ai - ai_old) + Q.col(j) * (aj - aj_old);
  }

  // Offset from free vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * G(t);
    if (upper(t)) {
      if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  const double rho = free > 0 ? sum_free / free : (ub + lb) / 2.0;
  model.bias = -rho;

  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < n; ++t)
    if (alpha(t) > 0.0) sv.push_back(t);
  model.support.resize(static_cast<Eigen::Index>(sv.size()), dim);
  model.coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    model.support.row(static_cast<Eigen::Index>(k)) = Z.row(sv[k]);
    model.coef(static_cast<Eigen::Index>(k)) = alpha(sv[k]) * y(sv[k]);
  }
  return model;
}

// --- Scorers -------------------------------------------------------------------

CnnScorer::CnnScorer(cnn::Model model, int max_batch)
    : model_(std::move(model)), frozen_(model_), max_batch_(max_batch) {
  if (max_batch_ < 1) throw ConfigError("cnn scorer: batch must be positive");
}

std::vector<double> CnnScorer::score(const std::vector<pipeline::WindowInput>& windows) const {
  std::vector<double> out;
  out.reserve(windows.size());
  const int window = model_.architecture().input_length;
  for (std::size_t start = 0; start < windows.size(); start += static_cast<std::size_t>(max_batch_)) {
    const auto b = std::min(static_cast<std::size_t>(max_batch_), windows.size() - start);
    Matf input(1, static_cast<Eigen::Index>(b) * window);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& w = windows[start + i].normalized;
      if (w.size() != window)
        throw ConfigError("cnn scorer: window length " + std::to_string(w.size()) + " does not match " +
                          std::to_string(window));
      input.block(0, static_cast<Eigen::Index>(i) * window, 1, window) = w.transpose();
    }
    const auto s = frozen_.scores(input, static_cast<int>(b));
    for (std::size_t i = 0; i < b; ++i) out.push_back(s(static_cast<Eigen::Index>(i)));
  }
  return out;
}

SvmScorer::SvmScorer(SvmModel model, double sample_rate_hz)
    : model_(std::move(model)), sample_rate_hz_(sample_rate_hz) {}

std::vector<double> SvmScorer::score(const std::vector<pipeline::WindowInput>& windows) const {
  std::vector<double> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(model_.predict(envelope_features(w.context, sample_rate_hz_)));
  return out;
}

}  // namespace aura::classify
