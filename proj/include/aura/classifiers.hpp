#pragma once

// Window classifiers: CNN training, the RBF support vector machine and its
// envelope features, and the scorer interface used by the detector.

#include "aura/cnn.hpp"
#include "aura/pipeline.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aura::classify {

enum Label : int { Negative = 0, Positive = 1 };

/// A labeled stretch of a cleaned-envelope recording. Training windows are any
/// 960-sample windows lying inside [begin, end); each is z-scored against the
/// trailing context in the full recording.
struct LabeledSequence {
  std::shared_ptr<const Vector> envelope;
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Label label = Negative;
  std::string id;

  Eigen::Index window_count(int window = pipeline::kWindowLength) const {
    return std::max<Eigen::Index>(0, end - begin - window + 1);
  }
};

/// Uniform sampling over every contiguous window of one class.
class WindowSource {
 public:
  explicit WindowSource(std::vector<LabeledSequence> sequences, int window = pipeline::kWindowLength,
                        int context = pipeline::kContextLength);

  Eigen::Index window_count(Label label) const;
  /// Normalized window drawn uniformly from all windows of `label`.
  Eigen::VectorXf sample(Label label, Rng& rng) const;
  /// Normalized window ending at `end` inside sequence `seq`.
  Eigen::VectorXf window(std::size_t seq, Eigen::Index end) const;
  const std::vector<LabeledSequence>& sequences() const { return sequences_; }
  int window_length() const { return window_; }

 private:
  std::vector<LabeledSequence> sequences_;
  std::vector<std::size_t> by_label_[2];
  std::vector<Eigen::Index> cumulative_[2];
  int window_;
  int context_;
};

struct CnnTrainConfig {
  cnn::Architecture architecture;
  double learning_rate = 1e-5;
  int per_class_batch = 16;
  int steps = 20000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Early stopping: validation loss every `eval_interval` steps on a fixed set
  // of `validation_windows` per class; stop after `patience` evaluations
  // without improvement and keep the best parameters.
  int eval_interval = 100;
  int patience = 10;
  int validation_windows = 128;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LossRecord {
  int step = 0;
  double train_loss = 0.0;
  std::optional<double> validation_loss;
};

struct CnnTrainResult {
  cnn::Model model;
  std::vector<LossRecord> trace;
  int best_step = 0;
  bool stopped_early = false;
};

/// One balanced training batch: `per_class` positive windows then `per_class`
/// negative windows, laid out as a 1 x (batch * window) input.
void make_batch(const WindowSource& source, int per_class, Rng& rng, cnn::Model::Mat& input,
                std::vector<int>& labels);

/// Called after every step with (step, training loss).
using StepCallback = std::function<void(int, double)>;

/// Mini-batch Adam on softmax cross-entropy. `validation` enables early stopping.
CnnTrainResult train_cnn(const WindowSource& train, const WindowSource* validation,
                         const CnnTrainConfig& config, const StepCallback& callback = {});

/// Fraction of windows classified correctly (score > 0.5 means positive).
double window_accuracy(const cnn::Model& model, const std::vector<Eigen::VectorXf>& windows,
                       const std::vector<Label>& labels);

// --- Support vector machine ----------------------------------------------------

inline constexpr int kFeatureCount = 8;
inline constexpr int kFeatureRateHz = 1000;

/// Summary of a normalized envelope segment: z-score, decimate to 1 kHz by
/// block means, then mean, std, min, max, peak count, dominant modulation
/// frequency (Hz), mean squared first difference and least-squares slope (per s).
Vector envelope_features(const Eigen::Ref<const Vector>& envelope, double sample_rate_hz = 96000.0);

struct SvmTrainConfig {
  double C = 10.0;
  double gamma = 0.0;  // 0 picks 1 / feature count
  double tolerance = 1e-3;
  long max_iterations = 1000000;
  std::uint64_t seed = 1;  // recorded; the solver itself is deterministic
};

struct SvmModel {
  Eigen::MatrixXd support;  // rows are standardized support vectors
  Vector coef;              // alpha_i * y_i, y in {-1, +1}
  double bias = 0.0;
  double gamma = 1.0;
  double C = 1.0;
  Vector feature_mean;
  Vector feature_scale;

  Eigen::Index dimension() const { return feature_mean.size(); }
  double margin(const Eigen::Ref<const Vector>& x) const;
  /// sigmoid(margin).
  double predict(const Eigen::Ref<const Vector>& x) const;
};

/// Soft-margin RBF SVM by SMO (second-order working-set selection). Rows of X
/// are samples. Features are standardized with the training mean and std.
SvmModel train_svm(const Eigen::MatrixXd& X, const std::vector<Label>& labels,
                   const SvmTrainConfig& config);

// --- Scorers -------------------------------------------------------------------

/// Scores classifier windows; positive-class score in [0, 1].
class WindowScorer {
 public:
  virtual ~WindowScorer() = default;
  virtual std::vector<double> score(const std::vector<pipeline::WindowInput>& windows) const = 0;
  virtual std::string name() const = 0;
};

class CnnScorer : public WindowScorer {
 public:
  explicit CnnScorer(cnn::Model model, int max_batch = 16);
  std::vector<double> score(const std::vector<pipeline::WindowInput>& windows) const override;
  std::string name() const override { return "cnn"; }
  const cnn::Model& model() const { return model_; }

 private:
  cnn::Model model_;
  cnn::FrozenCnn<float> frozen_;
  int max_batch_;
};

/// SVM over the features of each window's trailing context.
class SvmScorer : public WindowScorer {
 public:
  explicit SvmScorer(SvmModel model, double sample_rate_hz = 96000.0);
  std::vector<double> score(const std::vector<pipeline::WindowInput>& windows) const override;
  std::string name() const override { return "svm"; }
  const SvmModel& model() const { return model_; }

 private:
  SvmModel model_;
  double sample_rate_hz_;
};

}  // namespace aura::classify
