#pragma once

// Received signal -> bandpass -> block analytic signal -> envelope -> ripple
// removal, and the classifier windows cut from the cleaned envelope.

#include "aura/dsp.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace aura::pipeline {

inline constexpr int kWindowLength = 960;      // 0.01 s at 96 kHz
inline constexpr int kContextLength = 28800;   // 0.3 s at 96 kHz

struct ChainConfig {
  double sample_rate_hz = 96000.0;
  double carrier_hz = 19000.0;
  dsp::BandpassSpec bandpass;
  int block_length = 300;
  bool cancel_ripple = true;
  double ripple_span_s = 0.3;

  /// Defaults with the bandpass centered on `carrier_hz`.
  static ChainConfig for_carrier(double carrier_hz, double sample_rate_hz = 96000.0);
  int ripple_span_samples() const;
};

/// Streaming envelope extraction. Output sample n lines up with input sample n;
/// output lags input by the filter group delay plus up to one analytic block.
class EnvelopeChain {
 public:
  explicit EnvelopeChain(const ChainConfig& config);
  EnvelopeChain(const ChainConfig& config, dsp::FilterKernel kernel);

  /// Newly completed cleaned-envelope samples.
  Vector push(const Eigen::Ref<const Vector>& raw);
  /// Drains the filter tail and the padded final block.
  Vector flush();

  const ChainConfig& config() const { return config_; }
  Eigen::Index emitted() const { return emitted_; }
  int ripple_period() const { return canceller_.period(); }
  /// Input samples that must arrive after sample n before its envelope is out (worst case).
  int lookahead_samples() const;

 private:
  Vector finish(const std::vector<dsp::AnalyticFrame>& frames);

  ChainConfig config_;
  dsp::FirFilter filter_;
  dsp::AnalyticBlockStream analytic_;
  dsp::RippleCanceller canceller_;
  Eigen::Index emitted_ = 0;
};

/// One-shot cleaned envelope of a whole recording.
Vector cleaned_envelope(const ChainConfig& config, const Eigen::Ref<const Vector>& raw);

/// Envelope block means (one per analytic block) for change detection.
class BlockMeans {
 public:
  explicit BlockMeans(int block_length) : block_length_(block_length) {}
  std::vector<double> push(const Eigen::Ref<const Vector>& envelope);

 private:
  int block_length_;
  double sum_ = 0.0;
  int fill_ = 0;
};

/// Classifier input: a window z-scored against the trailing context that ends
/// with it, plus that raw context.
struct WindowInput {
  Eigen::Index index = 0;        // window number within the stream
  Eigen::Index end_sample = 0;   // one past the last envelope sample
  Eigen::VectorXf normalized;
  Vector context;
};

/// z-scores env[end - window, end) with the mean and standard deviation of
/// env[max(0, end - context), end).
Eigen::VectorXf normalize_trailing(const Eigen::Ref<const Vector>& env, Eigen::Index end,
                                   int window = kWindowLength, int context = kContextLength);

WindowInput make_window_input(const Eigen::Ref<const Vector>& env, Eigen::Index end,
                              int window = kWindowLength, int context = kContextLength);

/// Cuts consecutive, non-overlapping windows from a cleaned-envelope stream.
class WindowAssembler {
 public:
  explicit WindowAssembler(int window = kWindowLength, int context = kContextLength);
  std::vector<WindowInput> push(const Eigen::Ref<const Vector>& envelope);
  int window_length() const { return window_; }

 private:
  int window_;
  int context_;
  Vector ring_;          // trailing context, oldest first once full
  Eigen::Index filled_ = 0;
  Eigen::Index total_ = 0;
  Eigen::Index windows_ = 0;
};

}  // namespace aura::pipeline
