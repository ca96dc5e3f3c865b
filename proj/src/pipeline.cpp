#include "aura/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace aura::pipeline {

ChainConfig ChainConfig::for_carrier(double carrier_hz, double sample_rate_hz) {
  ChainConfig c;
  c.sample_rate_hz = sample_rate_hz;
  c.carrier_hz = carrier_hz;
  c.bandpass.center_hz = carrier_hz;
  return c;
}

int ChainConfig::ripple_span_samples() const {
  const int period = dsp::ripple_period(carrier_hz, sample_rate_hz, block_length);
  const auto wanted = static_cast<int>(std::llround(ripple_span_s * sample_rate_hz));
  return std::max(1, wanted / period) * period;
}

EnvelopeChain::EnvelopeChain(const ChainConfig& config)
    : EnvelopeChain(config, dsp::design_bandpass(config.bandpass, config.sample_rate_hz)) {}

EnvelopeChain::EnvelopeChain(const ChainConfig& config, dsp::FilterKernel kernel)
    : config_(config),
      filter_(std::move(kernel), true),
      analytic_(config.block_length),
      canceller_(dsp::ripple_period(config.carrier_hz, config.sample_rate_hz, config.block_length),
                 config.ripple_span_samples()) {}

Vector EnvelopeChain::finish(const std::vector<dsp::AnalyticFrame>& frames) {
  Eigen::Index total = 0;
  for (const auto& f : frames) total += f.valid_length;
  Vector magnitude(total);
  Eigen::Index pos = 0;
  for (const auto& f : frames) {
    magnitude.segment(pos, f.valid_length) = dsp::frame_magnitude(f);
    pos += f.valid_length;
  }
  Vector out = config_.cancel_ripple ? canceller_.process(magnitude) : magnitude;
  emitted_ += out.size();
  return out;
}

Vector EnvelopeChain::push(const Eigen::Ref<const Vector>& raw) {
  const Vector filtered = filter_.process(raw);
  return finish(analytic_.push(filtered));
}

Vector EnvelopeChain::flush() {
  const Vector tail = filter_.flush();
  auto frames = analytic_.push(tail);
  if (auto last = analytic_.flush()) frames.push_back(std::move(*last));
  return finish(frames);
}

int EnvelopeChain::lookahead_samples() const { return filter_.delay() + config_.block_length - 1; }

Vector cleaned_envelope(const ChainConfig& config, const Eigen::Ref<const Vector>& raw) {
  EnvelopeChain chain(config);
  const Vector head = chain.push(raw);
  const Vector tail = chain.flush();
  Vector out(head.size() + tail.size());
  out << head, tail;
  return out;
}

std::vector<double> BlockMeans::push(const Eigen::Ref<const Vector>& envelope) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < envelope.size(); ++i) {
    sum_ += envelope(i);
    if (++fill_ == block_length_) {
      out.push_back(sum_ / block_length_);
      sum_ = 0.0;
      fill_ = 0;
    }
  }
  return out;
}

Eigen::VectorXf normalize_trailing(const Eigen::Ref<const Vector>& env, Eigen::Index end, int window,
                                   int context) {
  if (end < window || end > env.size()) throw ConfigError("window: end index out of range");
  const Eigen::Index begin = std::max<Eigen::Index>(0, end - context);
  const dsp::WindowStats st = dsp::window_stats(env.segment(begin, end - begin));
  const double scale = 1.0 / std::max(st.stddev, dsp::kSigmaFloor);
  return ((env.segment(end - window, window).array() - st.mean) * scale).cast<float>().matrix();
}

WindowInput make_window_input(const Eigen::Ref<const Vector>& env, Eigen::Index end, int window,
                              int context) {
  WindowInput in;
  in.end_sample = end;
  in.index = end / window - 1;
  in.normalized = normalize_trailing(env, end, window, context);
  const Eigen::Index begin = std::max<Eigen::Index>(0, end - context);
  in.context = env.segment(begin, end - begin);
  return in;
}

WindowAssembler::WindowAssembler(int window, int context)
    : window_(window), context_(context), ring_(2 * static_cast<Eigen::Index>(context) + window) {
  if (window < 1 || context < window) throw ConfigError("window assembler: context must cover the window");
}

std::vector<WindowInput> WindowAssembler::push(const Eigen::Ref<const Vector>& envelope) {
  std::vector<WindowInput> out;
  for (Eigen::Index i = 0; i < envelope.size(); ++i) {
    if (filled_ == ring_.size()) {
      // Keep the trailing context only.
      ring_.head(context_) = ring_.tail(context_).eval();
      filled_ = context_;
    }
    ring_(filled_++) = envelope(i);
    ++total_;
    if (total_ % window_ == 0) {
      const Eigen::Index avail = std::min<Eigen::Index>(filled_, context_);
      const auto ctx = ring_.segment(filled_ - avail, avail);
      WindowInput in = make_window_input(ctx, avail, window_, context_);
      in.index = windows_++;
      in.end_sample = total_;
      out.push_back(std::move(in));
    }
  }
  return out;
}

}  // namespace aura::pipeline
