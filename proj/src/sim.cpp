#include "aura/sim.hpp"

#include "aura/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace aura::sim {

void ExcitationConfig::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ConfigError("excitation: sample rate must be positive");
  if (!(frequency_hz > 0.0 && frequency_hz < sample_rate_hz / 2.0))
    throw ConfigError("excitation: frequency must lie in (0, Nyquist)");
  if (!(amplitude >= 0.0)) throw ConfigError("excitation: amplitude must be non-negative");
}

void ChannelModel::validate() const {
  if (!(leak_fraction > 0.0 && leak_fraction < 1.0))
    throw ConfigError("channel: leak_fraction must lie in (0, 1)");
  if (!(decay_length_m > 0.0)) throw ConfigError("channel: decay_length_m must be positive");
  if (!(detection_cutoff_m > 0.0)) throw ConfigError("channel: detection_cutoff_m must be positive");
  if (!(sound_speed_m_s > 0.0)) throw ConfigError("channel: sound speed must be positive");
  if (mechanical_noise_level < 0.0 || electrical_tone_level < 0.0 || floor_noise_level < 0.0)
    throw ConfigError("channel: noise levels must be non-negative");
  for (const auto& e : disturbance_events)
    if (!(e.duration_s > 0.0)) throw ConfigError("channel: disturbance duration must be positive");
  for (const auto& e : self_detection_events)
    if (!(e.duration_s > 0.0) || e.equivalent_distance_m < 0.0)
      throw ConfigError("channel: invalid self-detection event");
}

double ObstacleTrajectory::distance_at(double t) const {
  if (knots.empty()) return 1e300;
  if (t <= knots.front().first) return knots.front().second;
  if (t >= knots.back().first) return knots.back().second;
  const auto it = std::upper_bound(knots.begin(), knots.end(), t,
                                   [](double v, const auto& k) { return v < k.first; });
  const auto& [t1, d1] = *it;
  const auto& [t0, d0] = *(it - 1);
  const double span = t1 - t0;
  if (span <= 0.0) return d1;
  return d0 + (d1 - d0) * (t - t0) / span;
}

void ObstacleTrajectory::validate() const {
  if (knots.empty()) throw ConfigError("trajectory: no knots");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (knots[i].second < 0.0) throw ConfigError("trajectory: negative distance");
    if (i > 0 && knots[i].first < knots[i - 1].first)
      throw ConfigError("trajectory: knot times must be ascending");
  }
  if (!(location_gain >= 0.0 && location_gain <= 1.0))
    throw ConfigError("trajectory: location_gain must lie in [0, 1]");
  if (present_end_s < present_start_s) throw ConfigError("trajectory: empty presence interval");
}

ObstacleTrajectory ObstacleTrajectory::linear(double t0, double d0, double t1, double d1,
                                              double location_gain) {
  ObstacleTrajectory traj;
  traj.knots = {{t0, d0}, {t1, d1}};
  traj.location_gain = location_gain;
  traj.present_start_s = t0;
  traj.present_end_s = t1;
  return traj;
}

std::optional<double> ObstacleTrajectory::contact_time() const {
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (knots[i].second <= 0.0) {
      if (i == 0) return knots[0].first;
      const auto& [t0, d0] = knots[i - 1];
      const auto& [t1, d1] = knots[i];
      return t0 + (t1 - t0) * d0 / (d0 - d1);
    }
  }
  return std::nullopt;
}

ChannelModel calibrated_channel(RobotState state, std::uint64_t seed) {
  ChannelModel c;
  c.electrical_tone_level = 0.02;
  c.floor_noise_level = 4.0e-4;
  c.mechanical_noise_level = state == RobotState::Moving ? 0.05 : 0.0;
  c.rng_seed = seed;
  return c;
}

SampleBuffer gen_excitation(const ExcitationConfig& cfg, double duration_s) {
  cfg.validate();
  if (!(duration_s > 0.0)) throw ConfigError("excitation: duration must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(duration_s * cfg.sample_rate_hz));
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Exact phase reduction keeps long buffers accurate.
    const double cycles = std::fmod(cfg.frequency_hz * static_cast<double>(i), cfg.sample_rate_hz);
    s(i) = cfg.amplitude * std::sin(2.0 * M_PI * cycles / cfg.sample_rate_hz);
  }
  return SampleBuffer(std::move(s), cfg.sample_rate_hz, 0.0);
}

double standing_wave_gain(double d_m, double wavelength_m, const ChannelModel& channel) {
  if (d_m < 0.0) throw ConfigError("standing wave: negative distance");
  if (!(wavelength_m > 0.0)) throw ConfigError("standing wave: wavelength must be positive");
  return channel.leak_fraction * std::exp(-d_m / channel.effective_decay_m()) *
         std::cos(4.0 * M_PI * d_m / wavelength_m + channel.phase_offset_rad);
}

namespace {

double bump(double t, double start, double duration) {
  const double u = (t - start) / duration;
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double s = std::sin(M_PI * u);
  return s * s;
}

// Carrier gain factor (1 + proximity + disturbance + self-detection) at time t.
class Modulation {
 public:
  Modulation(const ChannelModel& channel, const ObstacleTrajectory* trajectory, double wavelength)
      : channel_(channel), trajectory_(trajectory), wavelength_(wavelength) {}

  double at(double t) const {
    double m = 1.0;
    if (trajectory_ && trajectory_->present_at(t) && trajectory_->location_gain > 0.0)
      m += trajectory_->location_gain *
           standing_wave_gain(trajectory_->distance_at(t), wavelength_, channel_);
    for (const auto& e : channel_.disturbance_events) m += e.magnitude * bump(t, e.start_s, e.duration_s);
    for (const auto& e : channel_.self_detection_events) {
      const double w = bump(t, e.start_s, e.duration_s);
      if (w == 0.0) continue;
      const double u = (t - e.start_s) / e.duration_s;
      const double d = e.equivalent_distance_m + channel_.self_detection_excursion_m * std::abs(2.0 * u - 1.0);
      m += w * standing_wave_gain(d, wavelength_, channel_);
    }
    return channel_.surface_gain * m;
  }

 private:
  const ChannelModel& channel_;
  const ObstacleTrajectory* trajectory_;
  double wavelength_;
};

// Noise streams: independent RNGs so the proximity configuration never
// changes how noise is consumed.
class NoiseSource {
 public:
  NoiseSource(const ChannelModel& channel, double fs)
      : channel_(channel),
        fs_(fs),
        mech_rng_(derive_seed(channel.rng_seed, 1)),
        floor_rng_(derive_seed(channel.rng_seed, 2)) {
    Rng phase_rng(derive_seed(channel.rng_seed, 3));
    tone_phase_ = 2.0 * M_PI * phase_rng.uniform();
    if (channel.mechanical_corner_hz < fs / 2.0) {
      auto taps = dsp::design_lowpass(0.93 * channel.mechanical_corner_hz,
                                      channel.mechanical_corner_hz, 80.0, fs);
      mech_scale_ = channel.mechanical_noise_level / taps.norm();
      mech_filter_ = std::make_unique<dsp::FirFilter>(std::move(taps), false);
    }
  }

  Vector next(Eigen::Index count) {
    Vector white(count);
    Vector floor(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      white(i) = mech_rng_.normal();
      floor(i) = floor_rng_.normal();
    }
    Vector out = channel_.floor_noise_level * floor;
    if (mech_filter_ && channel_.mechanical_noise_level > 0.0) out += mech_scale_ * mech_filter_->process(white);
    if (channel_.electrical_tone_level > 0.0) {
      for (Eigen::Index i = 0; i < count; ++i) {
        const double cycles = std::fmod(channel_.electrical_tone_hz * static_cast<double>(position_ + i), fs_);
        out(i) += channel_.electrical_tone_level * std::sin(2.0 * M_PI * cycles / fs_ + tone_phase_);
      }
    }
    position_ += count;
    return out;
  }

 private:
  const ChannelModel& channel_;
  double fs_;
  Rng mech_rng_;
  Rng floor_rng_;
  double tone_phase_ = 0.0;
  double mech_scale_ = 0.0;
  std::unique_ptr<dsp::FirFilter> mech_filter_;
  Eigen::Index position_ = 0;
};

}  // namespace

SampleBuffer gen_noise(const ChannelModel& channel, double duration_s, double sample_rate_hz) {
  channel.validate();
  if (!(duration_s > 0.0)) throw ConfigError("noise: duration must be positive");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("noise: sample rate must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(duration_s * sample_rate_hz));
  NoiseSource source(channel, sample_rate_hz);
  return SampleBuffer(source.next(n), sample_rate_hz, 0.0);
}

SampleBuffer simulate_received(const SampleBuffer& excitation, double carrier_hz,
                               const ChannelModel& channel, const ObstacleTrajectory* trajectory) {
  channel.validate();
  if (excitation.empty()) throw ConfigError("simulate: empty excitation");
  if (trajectory) trajectory->validate();
  const double t_begin = excitation.start_time_s;
  const double t_end = excitation.time_at(excitation.size());
  const auto in_range = [&](double start, double duration) {
    return start >= t_begin - 1e-12 && start + duration <= t_end + 1e-12;
  };
  for (const auto& e : channel.disturbance_events)
    if (!in_range(e.start_s, e.duration_s)) throw ConfigError("simulate: disturbance schedule out of range");
  for (const auto& e : channel.self_detection_events)
    if (!in_range(e.start_s, e.duration_s)) throw ConfigError("simulate: self-detection schedule out of range");

  const Modulation modulation(channel, trajectory, channel.sound_speed_m_s / carrier_hz);
  NoiseSource noise(channel, excitation.sample_rate_hz);
  Vector r = noise.next(excitation.size());
  for (Eigen::Index n = 0; n < excitation.size(); ++n)
    r(n) += modulation.at(excitation.time_at(n)) * excitation.samples(n);
  return SampleBuffer(std::move(r), excitation.sample_rate_hz, excitation.start_time_s);
}

struct ReceivedSignalGenerator::Impl {
  ExcitationConfig excitation;
  ChannelModel channel;
  std::optional<ObstacleTrajectory> trajectory;
  bool include_carrier;
  std::unique_ptr<Modulation> modulation;
  std::unique_ptr<NoiseSource> noise;
  Eigen::Index position = 0;
};

ReceivedSignalGenerator::ReceivedSignalGenerator(ExcitationConfig excitation, ChannelModel channel,
                                                 std::optional<ObstacleTrajectory> trajectory,
                                                 bool include_carrier)
    : impl_(std::make_unique<Impl>()) {
  excitation.validate();
  channel.validate();
  if (trajectory) trajectory->validate();
  impl_->excitation = excitation;
  impl_->channel = std::move(channel);
  impl_->trajectory = std::move(trajectory);
  impl_->include_carrier = include_carrier;
  impl_->modulation = std::make_unique<Modulation>(
      impl_->channel, impl_->trajectory ? &*impl_->trajectory : nullptr,
      impl_->channel.sound_speed_m_s / excitation.frequency_hz);
  impl_->noise = std::make_unique<NoiseSource>(impl_->channel, excitation.sample_rate_hz);
}

ReceivedSignalGenerator::~ReceivedSignalGenerator() = default;
ReceivedSignalGenerator::ReceivedSignalGenerator(ReceivedSignalGenerator&&) noexcept = default;
ReceivedSignalGenerator& ReceivedSignalGenerator::operator=(ReceivedSignalGenerator&&) noexcept = default;

Vector ReceivedSignalGenerator::next(Eigen::Index count) {
  auto& s = *impl_;
  Vector out = s.noise->next(count);
  if (s.include_carrier) {
    const double fs = s.excitation.sample_rate_hz;
    for (Eigen::Index i = 0; i < count; ++i) {
      const auto n = static_cast<double>(s.position + i);
      const double cycles = std::fmod(s.excitation.frequency_hz * n, fs);
      const double carrier = s.excitation.amplitude * std::sin(2.0 * M_PI * cycles / fs);
      out(i) += s.modulation->at(n / fs) * carrier;
    }
  }
  s.position += count;
  return out;
}

Eigen::Index ReceivedSignalGenerator::position() const { return impl_->position; }
double ReceivedSignalGenerator::sample_rate_hz() const { return impl_->excitation.sample_rate_hz; }

}  // namespace aura::sim
