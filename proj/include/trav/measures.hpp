#pragma once

#include <span>

#include "trav/observation.hpp"

namespace trav {

struct MeasureParams {
  double tau = 1.0;           ///< observation window [s]
  double sigma = 1.0 / 3.0;   ///< locomotion Gaussian width
  double E0 = 700000.0;       ///< energy normalisation [J/m]
  double A0 = 100.0;          ///< acceleration normalisation [m/s^2]
  double efficiency = 1.0;    ///< motor efficiency c
  double stuck_fraction = 0.2;
  int stuck_consecutive = 5;
  /// Below this fraction of the target speed the window-start velocity does
  /// not define a heading and the body forward axis is used instead.
  double heading_speed_floor = 0.1;

  void validate() const;
};

struct TraversabilityLabel {
  double L = 0.0;
  double E = 0.0;
  double A = 0.0;
};

/// Window-level quantities the labels are computed from.
struct WindowSummary {
  double d_tau = 0.0;   ///< travelled distance along the initial heading [m]
  double work = 0.0;    ///< integral of summed motor power [J]
  double a_peak = 0.0;  ///< peak accelerometer magnitude [m/s^2]
};

// All window functions expect observations spanning exactly tau (first to last
// sample) and throw ArgumentError otherwise.

/// d_tau = (x(t + tau) - x(t)) . t_hat(t), t_hat the unit 3-D velocity at the
/// window start (body forward axis when the vehicle is nearly at rest).
double travelled_distance(std::span<const Observation> window, double v, const MeasureParams& p);

/// Trapezoidal integral of the summed wheel power over the window.
double motor_work(std::span<const Observation> window, const MeasureParams& p);

double peak_acceleration(std::span<const Observation> window, const MeasureParams& p);

WindowSummary summarize(std::span<const Observation> window, double v, const MeasureParams& p);

double locomotion_from_distance(double d_tau, double v, const MeasureParams& p);
double energy_from_work(double work, double d_tau, const MeasureParams& p);
double acceleration_from_peak(double a_peak, const MeasureParams& p);
TraversabilityLabel label_from_summary(const WindowSummary& s, double v, const MeasureParams& p);

double locomotion(std::span<const Observation> window, double v, const MeasureParams& p);
double energy(std::span<const Observation> window, double v, const MeasureParams& p);
double acceleration(std::span<const Observation> window, const MeasureParams& p);
TraversabilityLabel label(std::span<const Observation> window, double v, const MeasureParams& p);

/// Streaming stuck test: true once the last `stuck_consecutive` windows all had
/// d_tau < stuck_fraction * v * tau.
class StuckDetector {
 public:
  StuckDetector(double v, const MeasureParams& p);
  bool update(double d_tau);
  bool stuck() const { return run_ >= consecutive_; }
  int run() const { return run_; }
  void reset() { run_ = 0; }

 private:
  double threshold_;
  int consecutive_;
  int run_ = 0;
};

}  // namespace trav
