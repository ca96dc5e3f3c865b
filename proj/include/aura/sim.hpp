#pragma once

// Synthetic leaky-surface-wave received-signal generator.

#include "aura/core.hpp"

#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace aura::sim {

struct ExcitationConfig {
  double frequency_hz = 19000.0;
  double sample_rate_hz = 96000.0;
  double amplitude = 1.0;

  void validate() const;
};

/// Multiplicative carrier-amplitude bump caused by a pose change.
struct DisturbanceEvent {
  double start_s = 0.0;
  double duration_s = 0.0;
  double magnitude = 0.0;
};

/// The robot's own linkage seen as an obstacle at a virtual distance.
struct SelfDetectionEvent {
  double start_s = 0.0;
  double duration_s = 0.0;
  double equivalent_distance_m = 0.1;
};

/// Distance-independent reference for the detection cutoff; decay lengths
/// scale with detection_cutoff_m / kNominalCutoffM.
inline constexpr double kNominalCutoffM = 0.10;

struct ChannelModel {
  double surface_gain = 1.0;
  double leak_fraction = 0.02;
  double sound_speed_m_s = 343.0;
  double decay_length_m = 0.03;
  double detection_cutoff_m = 0.10;
  double phase_offset_rad = 0.0;
  double mechanical_noise_level = 0.0;  // RMS of the sub-15 kHz motor noise
  double electrical_tone_level = 0.0;   // amplitude of the 30 kHz spike
  double floor_noise_level = 0.0;       // RMS of the broadband floor
  double mechanical_corner_hz = 15000.0;
  double electrical_tone_hz = 30000.0;
  double self_detection_excursion_m = 0.02;
  std::vector<DisturbanceEvent> disturbance_events;
  std::vector<SelfDetectionEvent> self_detection_events;
  std::uint64_t rng_seed = 0;

  /// Leaky-field e-folding distance after the cutoff scaling.
  double effective_decay_m() const {
    return decay_length_m * detection_cutoff_m / kNominalCutoffM;
  }

  void validate() const;
};

/// Obstacle distance to the surface over time (piecewise linear in the knots).
struct ObstacleTrajectory {
  std::vector<std::pair<double, double>> knots;  // (time_s, distance_m), time ascending
  double location_gain = 1.0;
  double present_start_s = 0.0;
  double present_end_s = 1e300;

  double distance_at(double t) const;
  bool present_at(double t) const { return t >= present_start_s && t < present_end_s; }
  void validate() const;

  /// Constant-velocity motion from d0 at t0 to d1 at t1; present over [t0, t1].
  static ObstacleTrajectory linear(double t0, double d0, double t1, double d1,
                                   double location_gain = 1.0);
  /// First time at which the trajectory reaches distance zero, if any.
  std::optional<double> contact_time() const;
};

enum class RobotState { Static, Moving };

/// Committed noise constants for the desk-scale scenarios. A static robot has
/// only the electrical tone and the broadband floor; a moving robot adds motor
/// noise. The floor level sets the proximity detection range.
ChannelModel calibrated_channel(RobotState state, std::uint64_t seed = 0);

/// s[n] = A sin(2 pi f n / Fs), length round(duration * Fs).
SampleBuffer gen_excitation(const ExcitationConfig& cfg, double duration_s);

/// Proximity modulation of the carrier for an obstacle at d_m.
double standing_wave_gain(double d_m, double wavelength_m, const ChannelModel& channel);

/// Robot noise: band-limited mechanical noise, electrical tone and broadband floor.
SampleBuffer gen_noise(const ChannelModel& channel, double duration_s, double sample_rate_hz);

/// r = h (1 + proximity + disturbance + self-detection) s + noise.
SampleBuffer simulate_received(const SampleBuffer& excitation, double carrier_hz,
                               const ChannelModel& channel,
                               const ObstacleTrajectory* trajectory);

/// Chunked version of gen_noise/simulate_received. Chunks concatenate to the
/// one-shot output bit for bit.
class ReceivedSignalGenerator {
 public:
  ReceivedSignalGenerator(ExcitationConfig excitation, ChannelModel channel,
                          std::optional<ObstacleTrajectory> trajectory,
                          bool include_carrier = true);
  ~ReceivedSignalGenerator();
  ReceivedSignalGenerator(ReceivedSignalGenerator&&) noexcept;
  ReceivedSignalGenerator& operator=(ReceivedSignalGenerator&&) noexcept;

  /// Next `count` samples.
  Vector next(Eigen::Index count);
  Eigen::Index position() const;
  double sample_rate_hz() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aura::sim
