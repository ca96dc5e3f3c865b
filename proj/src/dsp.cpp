#include "aura/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aura::dsp {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

// Modified Bessel function of the first kind, order zero (power series).
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double half = x / 2.0;
  for (int k = 1; k < 200; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

// Transition width (Hz) a Kaiser design reaches at this length and attenuation.
double kaiser_transition_hz(double attenuation_db, int length, double sample_rate_hz) {
  return (attenuation_db - 7.95) * sample_rate_hz / (2.285 * 2.0 * M_PI * (length - 1));
}

// Design margin over the nominal attenuation; the Kaiser length formula is approximate.
constexpr double kMarginDb = 6.0;

}  // namespace

void BandpassSpec::validate(double sample_rate_hz) const {
  const double nyquist = sample_rate_hz / 2.0;
  if (sample_rate_hz <= 0.0) throw ConfigError("bandpass: sample rate must be positive");
  if (passband_halfwidth_hz <= 0.0) throw ConfigError("bandpass: halfwidth must be positive");
  if (center_hz - passband_halfwidth_hz <= 0.0 || center_hz + passband_halfwidth_hz >= nyquist)
    throw ConfigError("bandpass: passband must lie inside (0, Nyquist)");
  if (filter_length < 3 || filter_length % 2 == 0)
    throw ConfigError("bandpass: filter_length must be odd and >= 3");
  if (stop_attenuation_db <= 0.0) throw ConfigError("bandpass: attenuation must be positive");
}

double kaiser_beta(double a) {
  if (a > 50.0) return 0.1102 * (a - 8.7);
  if (a >= 21.0) return 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0);
  return 0.0;
}

Vector kaiser_window(int length, double beta) {
  Vector w(length);
  if (length == 1) {
    w(0) = 1.0;
    return w;
  }
  const double denom = bessel_i0(beta);
  const double m = (length - 1) / 2.0;
  for (int n = 0; n < length; ++n) {
    const double r = (n - m) / m;
    w(n) = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
  }
  return w;
}

double response_db(const FilterKernel& taps, double frequency_hz, double sample_rate_hz) {
  const double omega = 2.0 * M_PI * frequency_hz / sample_rate_hz;
  std::complex<double> acc = 0.0;
  for (Eigen::Index n = 0; n < taps.size(); ++n)
    acc += taps(n) * std::polar(1.0, -omega * static_cast<double>(n));
  return 20.0 * std::log10(std::max(std::abs(acc), 1e-300));
}

FilterKernel design_bandpass(const BandpassSpec& spec, double fs) {
  spec.validate(fs);
  const int length = spec.filter_length;
  const double design_db = spec.stop_attenuation_db + kMarginDb;
  const double transition = kaiser_transition_hz(design_db, length, fs);
  const double low_pass_edge = spec.center_hz - spec.passband_halfwidth_hz;
  const double high_pass_edge = spec.center_hz + spec.passband_halfwidth_hz;
  if (low_pass_edge - transition < spec.reject_below_hz ||
      high_pass_edge + transition > spec.reject_above_hz) {
    std::ostringstream msg;
    msg << "bandpass: " << spec.stop_attenuation_db << " dB stopband needs a "
        << transition << " Hz transition at length " << length
        << ", which overlaps the reject bands; increase filter_length";
    throw DesignError(msg.str());
  }
  const double f1 = (low_pass_edge - transition / 2.0) / fs;
  const double f2 = (high_pass_edge + transition / 2.0) / fs;
  const Vector window = kaiser_window(length, kaiser_beta(design_db));
  const double mid = (length - 1) / 2.0;
  FilterKernel taps(length);
  for (int n = 0; n < length; ++n) {
    const double t = n - mid;
    taps(n) = window(n) * (2.0 * f2 * sinc(2.0 * f2 * t) - 2.0 * f1 * sinc(2.0 * f1 * t));
  }
  // Unit gain at the center frequency.
  taps /= std::pow(10.0, response_db(taps, spec.center_hz, fs) / 20.0);

  const auto fail = [&](const char* what, double freq, double db) {
    std::ostringstream msg;
    msg << "bandpass: " << what << " at " << freq << " Hz is " << db << " dB";
    throw DesignError(msg.str());
  };
  for (double f : {low_pass_edge, spec.center_hz, high_pass_edge}) {
    const double db = response_db(taps, f, fs);
    if (db < -0.5 || db > 0.1) fail("passband response", f, db);
  }
  const double step = 50.0;
  for (double f = 0.0; f <= spec.reject_below_hz; f += step) {
    const double db = response_db(taps, f, fs);
    if (db > -spec.stop_attenuation_db) fail("stopband response", f, db);
  }
  for (double f = spec.reject_above_hz; f <= fs / 2.0; f += step) {
    const double db = response_db(taps, f, fs);
    if (db > -spec.stop_attenuation_db) fail("stopband response", f, db);
  }
  return taps;
}

FilterKernel design_lowpass(double pass_edge, double stop_edge, double attenuation_db, double fs) {
  if (!(pass_edge > 0.0 && stop_edge > pass_edge && stop_edge < fs / 2.0))
    throw ConfigError("lowpass: need 0 < pass edge < stop edge < Nyquist");
  const double delta_omega = 2.0 * M_PI * (stop_edge - pass_edge) / fs;
  int length = static_cast<int>(std::ceil((attenuation_db - 7.95) / (2.285 * delta_omega))) + 1;
  if (length % 2 == 0) ++length;
  const double cutoff = (pass_edge + stop_edge) / 2.0 / fs;
  const Vector window = kaiser_window(length, kaiser_beta(attenuation_db));
  const double mid = (length - 1) / 2.0;
  FilterKernel taps(length);
  for (int n = 0; n < length; ++n) taps(n) = window(n) * 2.0 * cutoff * sinc(2.0 * cutoff * (n - mid));
  taps /= taps.sum();
  return taps;
}

// --- FirFilter ---------------------------------------------------------------

FirFilter::FirFilter(FilterKernel taps, bool compensate_delay)
    : taps_(std::move(taps)), compensate_(compensate_delay) {
  if (taps_.size() == 0) throw ConfigError("fir: empty kernel");
  reversed_ = taps_.reverse();
  reset();
}

void FirFilter::reset() {
  history_ = Vector::Zero(taps_.size() - 1);
  consumed_ = 0;
  emitted_ = 0;
}

Vector FirFilter::process(const Eigen::Ref<const Vector>& chunk) {
  const Eigen::Index taps = reversed_.size();
  const Eigen::Index hist = taps - 1;
  const Eigen::Index n = chunk.size();
  Vector extended(hist + n);
  extended.head(hist) = history_;
  extended.tail(n) = chunk;

  // Causal output index m = consumed_ + i; aligned output lags it by delay().
  const Eigen::Index d = delay();
  const Eigen::Index first = std::max<Eigen::Index>(0, d - consumed_);
  Vector out(std::max<Eigen::Index>(0, n - first));
  for (Eigen::Index i = first; i < n; ++i) out(i - first) = reversed_.dot(extended.segment(i, taps));
  consumed_ += n;
  emitted_ += out.size();
  history_ = extended.tail(hist);
  return out;
}

Vector FirFilter::flush() {
  const Eigen::Index owed = consumed_ - emitted_;
  if (owed <= 0) return Vector();
  const Eigen::Index saved_consumed = consumed_;
  Vector tail = process(Vector::Zero(delay()));
  consumed_ = saved_consumed;
  emitted_ = consumed_;
  return tail.head(std::min<Eigen::Index>(tail.size(), owed));
}

SampleBuffer apply_filter(const FilterKernel& kernel, const SampleBuffer& input) {
  if (input.empty()) throw ConfigError("filter: empty input");
  FirFilter fir(kernel, true);
  Vector head = fir.process(input.samples);
  Vector tail = fir.flush();
  Vector out(head.size() + tail.size());
  out << head, tail;
  return SampleBuffer(std::move(out), input.sample_rate_hz, input.start_time_s);
}

// --- Analytic signal ---------------------------------------------------------

namespace {

void one_sided(ComplexVector& spectrum) {
  const Eigen::Index n = spectrum.size();
  const Eigen::Index half = n / 2;
  if (n % 2 == 0) {
    spectrum.segment(1, half - 1) *= 2.0;
    spectrum.tail(half - 1).setZero();
  } else {
    spectrum.segment(1, half) *= 2.0;
    spectrum.tail(half).setZero();
  }
}

ComplexVector analytic_with(Eigen::FFT<double>& fft, const Eigen::Ref<const Vector>& x) {
  const Vector input = x;
  ComplexVector spectrum;
  fft.fwd(spectrum, input);
  one_sided(spectrum);
  ComplexVector out;
  fft.inv(out, spectrum);
  out.real() = input;
  return out;
}

}  // namespace

ComplexVector analytic_signal(const Eigen::Ref<const Vector>& x) {
  if (x.size() == 0) return ComplexVector();
  Eigen::FFT<double> fft;
  return analytic_with(fft, x);
}

struct AnalyticBlockStream::Fft {
  Eigen::FFT<double> engine;
};

AnalyticBlockStream::AnalyticBlockStream(int block_length)
    : block_length_(block_length), pending_(block_length), fft_(std::make_unique<Fft>()) {
  if (block_length < 8) throw ConfigError("analytic: block length must be >= 8");
}
AnalyticBlockStream::~AnalyticBlockStream() = default;
AnalyticBlockStream::AnalyticBlockStream(AnalyticBlockStream&&) noexcept = default;
AnalyticBlockStream& AnalyticBlockStream::operator=(AnalyticBlockStream&&) noexcept = default;

std::vector<AnalyticFrame> AnalyticBlockStream::push(const Eigen::Ref<const Vector>& chunk) {
  std::vector<AnalyticFrame> frames;
  Eigen::Index pos = 0;
  while (pos < chunk.size()) {
    const Eigen::Index take = std::min(chunk.size() - pos, block_length_ - fill_);
    pending_.segment(fill_, take) = chunk.segment(pos, take);
    fill_ += take;
    pos += take;
    if (fill_ == block_length_) {
      AnalyticFrame frame;
      frame.block_length = block_length_;
      frame.samples = analytic_with(fft_->engine, pending_);
      frame.start_index = next_start_;
      frame.valid_length = block_length_;
      frames.push_back(std::move(frame));
      next_start_ += block_length_;
      fill_ = 0;
    }
  }
  return frames;
}

std::optional<AnalyticFrame> AnalyticBlockStream::flush() {
  if (fill_ == 0) return std::nullopt;
  pending_.tail(block_length_ - fill_).setZero();
  AnalyticFrame frame;
  frame.block_length = block_length_;
  frame.samples = analytic_with(fft_->engine, pending_);
  frame.start_index = next_start_;
  frame.valid_length = fill_;
  frame.padded = true;
  next_start_ += fill_;
  fill_ = 0;
  return frame;
}

std::vector<AnalyticFrame> analytic_blocks(const SampleBuffer& input, int block_length) {
  AnalyticBlockStream stream(block_length);
  auto frames = stream.push(input.samples);
  if (auto last = stream.flush()) frames.push_back(std::move(*last));
  return frames;
}

Vector frame_magnitude(const AnalyticFrame& frame) {
  return frame.samples.head(frame.valid_length).cwiseAbs();
}

SampleBuffer envelope(const std::vector<AnalyticFrame>& frames, double fs, double start) {
  Eigen::Index total = 0;
  for (const auto& f : frames) total += f.valid_length;
  Vector out(total);
  Eigen::Index pos = 0;
  Eigen::Index expected = frames.empty() ? 0 : frames.front().start_index;
  for (const auto& f : frames) {
    if (f.start_index != expected) throw ConfigError("envelope: frames are not contiguous");
    out.segment(pos, f.valid_length) = frame_magnitude(f);
    pos += f.valid_length;
    expected += f.valid_length;
  }
  return SampleBuffer(std::move(out), fs, start);
}

// --- Ripple cancellation -----------------------------------------------------

int ripple_period(double carrier_hz, double fs, int block_length, int max_blocks) {
  const double half_periods_per_block = 2.0 * carrier_hz * block_length / fs;
  for (int p = 1; p <= max_blocks; ++p) {
    const double v = p * half_periods_per_block;
    if (std::abs(v - std::round(v)) < 1e-9) return p * block_length;
  }
  return block_length;
}

RippleCanceller::RippleCanceller(int period, int span) : period_(period), span_(span) {
  if (period < 1 || span < period || span % period != 0)
    throw ConfigError("ripple canceller: span must be a positive multiple of the period");
  reset();
}

void RippleCanceller::reset() {
  ring_ = Vector::Zero(span_);
  phase_sum_ = Vector::Zero(period_);
  total_sum_ = 0.0;
  count_ = 0;
}

Vector RippleCanceller::process(const Eigen::Ref<const Vector>& chunk) {
  Vector out(chunk.size());
  for (Eigen::Index i = 0; i < chunk.size(); ++i) {
    const double x = chunk(i);
    const Eigen::Index slot = count_ % span_;
    const Eigen::Index phase = count_ % period_;
    if (count_ >= span_) {
      const double old = ring_(slot);
      phase_sum_(phase) -= old;
      total_sum_ -= old;
    }
    ring_(slot) = x;
    phase_sum_(phase) += x;
    total_sum_ += x;
    ++count_;

    Eigen::Index n_phase;
    Eigen::Index n_total;
    if (count_ >= span_) {
      n_phase = span_ / period_;
      n_total = span_;
    } else {
      n_phase = (count_ - 1 - phase) / period_ + 1;
      n_total = count_;
    }
    out(i) = x - phase_sum_(phase) / static_cast<double>(n_phase) +
             total_sum_ / static_cast<double>(n_total);

    // Re-sum periodically so add/subtract rounding cannot accumulate.
    if (count_ >= span_ && (count_ & ((Eigen::Index{1} << 22) - 1)) == 0) {
      phase_sum_.setZero();
      for (Eigen::Index k = 0; k < span_; ++k) phase_sum_(k % period_) += ring_(k);
      total_sum_ = ring_.sum();
    }
  }
  return out;
}

// --- Normalization -------------------------------------------------------------

WindowStats window_stats(const Eigen::Ref<const Vector>& x) {
  WindowStats s;
  if (x.size() == 0) return s;
  s.mean = x.mean();
  s.stddev = std::sqrt((x.array() - s.mean).square().mean());
  return s;
}

NormalizedSignal normalize_windows(const SampleBuffer& input, double window_s) {
  if (!(window_s > 0.0)) throw ConfigError("normalize: window must be positive");
  NormalizedSignal result;
  const auto length = static_cast<Eigen::Index>(std::llround(window_s * input.sample_rate_hz));
  if (length < 1) throw ConfigError("normalize: window shorter than one sample");
  result.window_length = static_cast<int>(length);
  Vector out(input.size());
  for (Eigen::Index start = 0; start < input.size(); start += length) {
    const Eigen::Index n = std::min(length, input.size() - start);
    const auto seg = input.samples.segment(start, n);
    const WindowStats st = window_stats(seg);
    if (st.stddev <= kSigmaFloor) {
      out.segment(start, n).setZero();
      result.constant_window.push_back(true);
    } else {
      out.segment(start, n) = (seg.array() - st.mean) / st.stddev;
      result.constant_window.push_back(false);
    }
  }
  result.signal = SampleBuffer(std::move(out), input.sample_rate_hz, input.start_time_s);
  return result;
}

// --- CUSUM ---------------------------------------------------------------------

std::pair<CusumState, bool> cusum_step(CusumState state, double value) {
  state.s_plus = std::max(0.0, state.s_plus + (value - state.target_mean - state.reference_k));
  state.s_minus = std::max(0.0, state.s_minus + (state.target_mean - value - state.reference_k));
  const bool alarm = state.s_plus > state.threshold_h || state.s_minus > state.threshold_h;
  if (alarm && !state.alarm_index) state.alarm_index = state.steps;
  ++state.steps;
  return {state, alarm};
}

BlockCusum::BlockCusum(CusumConfig config, double block_rate_hz) : config_(config) {
  calibration_blocks_ =
      std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(config.calibration_s * block_rate_hz)));
  calibration_.reserve(static_cast<std::size_t>(calibration_blocks_));
}

bool BlockCusum::push(double block_mean) {
  const Eigen::Index index = seen_++;
  if (!calibrated_) {
    calibration_.push_back(block_mean);
    if (static_cast<Eigen::Index>(calibration_.size()) == calibration_blocks_) {
      const Eigen::Map<const Vector> cal(calibration_.data(), calibration_blocks_);
      const WindowStats st = window_stats(cal);
      sigma_ = std::max(st.stddev, kSigmaFloor);
      state_.target_mean = st.mean;
      state_.reference_k = config_.k_sigma * sigma_;
      state_.threshold_h = config_.h_sigma * sigma_;
      state_.reset();
      calibrated_ = true;
    }
    return false;
  }
  auto [next, alarm] = cusum_step(state_, block_mean);
  state_ = next;
  if (alarm && !alarm_block_) {
    alarm_block_ = index;
    return true;
  }
  return false;
}

std::optional<Eigen::Index> BlockCusum::alarm_block() const { return alarm_block_; }

}  // namespace aura::dsp
