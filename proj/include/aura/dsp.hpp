#pragma once

// Signal conditioning: FIR design and filtering, block-wise analytic signal,
// envelope clean-up, window normalization and CUSUM change detection.

#include "aura/core.hpp"

#include <complex>
#include <deque>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace aura::dsp {

using ComplexVector = Eigen::VectorXcd;
using FilterKernel = Vector;

struct BandpassSpec {
  double center_hz = 19000.0;
  double passband_halfwidth_hz = 250.0;
  double stop_attenuation_db = 60.0;
  int filter_length = 511;
  // Bands that must sit below -stop_attenuation_db: everything under
  // reject_below_hz and everything above reject_above_hz.
  double reject_below_hz = 15000.0;
  double reject_above_hz = 30000.0;

  void validate(double sample_rate_hz) const;
};

double kaiser_beta(double attenuation_db);
/// Kaiser window of odd or even length.
Vector kaiser_window(int length, double beta);

/// Linear-phase windowed-sinc bandpass. Throws DesignError when the
/// stopband attenuation is unreachable at the given length.
FilterKernel design_bandpass(const BandpassSpec& spec, double sample_rate_hz);

/// Kaiser windowed-sinc lowpass, length chosen from the transition band.
FilterKernel design_lowpass(double passband_edge_hz, double stopband_edge_hz,
                            double attenuation_db, double sample_rate_hz);

/// |H(f)| in dB from the tap DTFT.
double response_db(const FilterKernel& taps, double frequency_hz, double sample_rate_hz);

/// Streaming FIR. With compensation on, output sample n is aligned with
/// input sample n (the (length-1)/2 group delay is removed) and the final
/// samples are produced by flush(); chunking does not change the result.
class FirFilter {
 public:
  explicit FirFilter(FilterKernel taps, bool compensate_delay = true);

  Vector process(const Eigen::Ref<const Vector>& chunk);
  /// Drains the delayed tail assuming zero input beyond the end.
  Vector flush();
  void reset();

  int delay() const { return compensate_ ? static_cast<int>((reversed_.size() - 1) / 2) : 0; }
  const FilterKernel& taps() const { return taps_; }

 private:
  FilterKernel taps_;
  Vector reversed_;
  Vector history_;  // last (length - 1) inputs
  Eigen::Index consumed_ = 0;
  Eigen::Index emitted_ = 0;
  bool compensate_;
};

/// One-shot delay-compensated filtering; output has the input length and timestamps.
SampleBuffer apply_filter(const FilterKernel& kernel, const SampleBuffer& input);

/// Discrete analytic signal by one-sided spectrum: negative bins zeroed,
/// positive bins doubled, DC and Nyquist kept. Real part equals the input.
ComplexVector analytic_signal(const Eigen::Ref<const Vector>& x);

struct AnalyticFrame {
  int block_length = 300;
  ComplexVector samples;
  Eigen::Index start_index = 0;
  Eigen::Index valid_length = 0;  // < block_length only for a padded final block
  bool padded = false;
};

/// Splits input into length-L blocks and computes each block's analytic signal
/// independently. A final partial block is zero-padded and flagged.
std::vector<AnalyticFrame> analytic_blocks(const SampleBuffer& input, int block_length);

/// Streaming counterpart of analytic_blocks.
class AnalyticBlockStream {
 public:
  explicit AnalyticBlockStream(int block_length);
  ~AnalyticBlockStream();
  AnalyticBlockStream(AnalyticBlockStream&&) noexcept;
  AnalyticBlockStream& operator=(AnalyticBlockStream&&) noexcept;

  std::vector<AnalyticFrame> push(const Eigen::Ref<const Vector>& chunk);
  /// Emits the zero-padded partial block, if any.
  std::optional<AnalyticFrame> flush();
  int block_length() const { return block_length_; }

 private:
  struct Fft;
  int block_length_;
  Vector pending_;
  Eigen::Index fill_ = 0;
  Eigen::Index next_start_ = 0;
  std::unique_ptr<Fft> fft_;
};

/// Per-sample magnitude of contiguous frames (padding dropped).
SampleBuffer envelope(const std::vector<AnalyticFrame>& frames, double sample_rate_hz,
                      double start_time_s = 0.0);
Vector frame_magnitude(const AnalyticFrame& frame);

/// Period in samples of the deterministic block-edge pattern that independent
/// analytic blocks imprint on a steady carrier: the smallest whole number of
/// blocks spanning a whole number of carrier half-periods. Falls back to one
/// block when no period up to max_blocks exists.
int ripple_period(double carrier_hz, double sample_rate_hz, int block_length,
                  int max_blocks = 64);

/// Removes the block-edge pattern from an envelope stream by subtracting the
/// phase-locked average over a trailing span of whole periods. Slow envelope
/// changes pass through; only components periodic in `period` are removed.
class RippleCanceller {
 public:
  RippleCanceller(int period, int span);
  Vector process(const Eigen::Ref<const Vector>& chunk);
  void reset();
  int period() const { return period_; }
  int span() const { return span_; }

 private:
  int period_;
  int span_;
  Vector ring_;            // last `span` inputs
  Vector phase_sum_;       // per-phase sum over the ring
  double total_sum_ = 0.0;
  Eigen::Index count_ = 0;
};

struct WindowStats {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Two-pass mean and population standard deviation.
WindowStats window_stats(const Eigen::Ref<const Vector>& x);

inline constexpr double kSigmaFloor = 1e-12;

struct NormalizedSignal {
  SampleBuffer signal;
  int window_length = 0;
  std::vector<bool> constant_window;  // windows that hit the sigma floor
};

/// Per non-overlapping window z-score. Constant windows become zeros and are flagged.
NormalizedSignal normalize_windows(const SampleBuffer& input, double window_s = 0.3);

/// Two-sided tabular CUSUM.
struct CusumState {
  double target_mean = 0.0;
  double reference_k = 0.5;
  double threshold_h = 5.0;
  double s_plus = 0.0;
  double s_minus = 0.0;
  std::optional<Eigen::Index> alarm_index;
  Eigen::Index steps = 0;

  void reset() {
    s_plus = 0.0;
    s_minus = 0.0;
    alarm_index.reset();
    steps = 0;
  }
};

std::pair<CusumState, bool> cusum_step(CusumState state, double value);

struct CusumConfig {
  double k_sigma = 1.0;
  double h_sigma = 10.0;
  double calibration_s = 1.0;
};

/// CUSUM over per-block envelope means, with target and scale taken from an
/// obstacle-free calibration segment at the start of the stream.
class BlockCusum {
 public:
  BlockCusum(CusumConfig config, double block_rate_hz);

  /// Returns true on the step where an alarm is first raised.
  bool push(double block_mean);
  bool calibrated() const { return calibrated_; }
  std::optional<Eigen::Index> alarm_block() const;
  const CusumState& state() const { return state_; }
  double sigma() const { return sigma_; }
  Eigen::Index blocks_seen() const { return seen_; }

 private:
  CusumConfig config_;
  Eigen::Index calibration_blocks_;
  std::vector<double> calibration_;
  CusumState state_;
  double sigma_ = 0.0;
  bool calibrated_ = false;
  Eigen::Index seen_ = 0;
  std::optional<Eigen::Index> alarm_block_;
};

}  // namespace aura::dsp
