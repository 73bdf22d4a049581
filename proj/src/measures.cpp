#include "trav/measures.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trav/errors.hpp"

namespace trav {

const char* status_name(VehicleStatus s) {
  switch (s) {
    case VehicleStatus::kOk: return "ok";
    case VehicleStatus::kStuck: return "stuck";
    case VehicleStatus::kOverturned: return "overturned";
    case VehicleStatus::kOutOfBounds: return "out_of_bounds";
  }
  return "?";
}

void MeasureParams::validate() const {
  if (!(tau > 0.0 && E0 > 0.0 && A0 > 0.0 && efficiency > 0.0))
    throw ArgumentError("measure parameters must be positive");
  if (!(sigma > 0.0 && sigma < 1.0)) throw ArgumentError("sigma must lie in (0, 1)");
  if (!(stuck_fraction > 0.0 && stuck_fraction < 1.0))
    throw ArgumentError("stuck_fraction must lie in (0, 1)");
  if (stuck_consecutive < 1) throw ArgumentError("stuck_consecutive must be positive");
}

namespace {

void check_window(std::span<const Observation> w, const MeasureParams& p) {
  if (w.size() < 2) throw ArgumentError("observation window needs at least two samples");
  const double span = w.back().time - w.front().time;
  if (!(span > 0.0)) throw ArgumentError("observation window has zero length");
  if (std::abs(span - p.tau) > 1e-6)
    throw ArgumentError("observation window spans " + std::to_string(span) + " s, expected " +
                        std::to_string(p.tau));
}

void check_speed(double v) {
  if (!(v > 0.0)) throw ArgumentError("target speed must be positive");
}

}  // namespace

double travelled_distance(std::span<const Observation> window, double v, const MeasureParams& p) {
  check_window(window, p);
  check_speed(v);
  const Observation& first = window.front();
  const double speed = first.velocity.norm();
  const Eigen::Vector3d t_hat =
      speed >= p.heading_speed_floor * v ? Eigen::Vector3d(first.velocity / speed) : first.forward.normalized();
  return (window.back().position - first.position).dot(t_hat);
}

double motor_work(std::span<const Observation> window, const MeasureParams& p) {
  check_window(window, p);
  double work = 0.0;
  for (std::size_t i = 1; i < window.size(); ++i) {
    const double dt = window[i].time - window[i - 1].time;
    work += 0.5 * dt * (window[i].total_power() + window[i - 1].total_power());
  }
  return work;
}

double peak_acceleration(std::span<const Observation> window, const MeasureParams& p) {
  check_window(window, p);
  double peak = 0.0;
  for (const auto& o : window) peak = std::max(peak, o.acceleration);
  return peak;
}

WindowSummary summarize(std::span<const Observation> window, double v, const MeasureParams& p) {
  return {travelled_distance(window, v, p), motor_work(window, p), peak_acceleration(window, p)};
}

double locomotion_from_distance(double d_tau, double v, const MeasureParams& p) {
  check_speed(v);
  const double d = v * p.tau;
  const double rel = (d - d_tau) / d;
  return std::exp(-rel * rel / (2.0 * p.sigma * p.sigma));
}

double energy_from_work(double work, double d_tau, const MeasureParams& p) {
  // Zero or negative travel means nothing was gained for the work spent.
  if (!(d_tau > 0.0)) return 1.0;
  return std::clamp(p.efficiency * work / (d_tau * p.E0), 0.0, 1.0);
}

double acceleration_from_peak(double a_peak, const MeasureParams& p) {
  return std::clamp(a_peak / p.A0, 0.0, 1.0);
}

TraversabilityLabel label_from_summary(const WindowSummary& s, double v, const MeasureParams& p) {
  return {locomotion_from_distance(s.d_tau, v, p), energy_from_work(s.work, s.d_tau, p),
          acceleration_from_peak(s.a_peak, p)};
}

double locomotion(std::span<const Observation> window, double v, const MeasureParams& p) {
  return locomotion_from_distance(travelled_distance(window, v, p), v, p);
}

double energy(std::span<const Observation> window, double v, const MeasureParams& p) {
  return energy_from_work(motor_work(window, p), travelled_distance(window, v, p), p);
}

double acceleration(std::span<const Observation> window, const MeasureParams& p) {
  return acceleration_from_peak(peak_acceleration(window, p), p);
}

TraversabilityLabel label(std::span<const Observation> window, double v, const MeasureParams& p) {
  return label_from_summary(summarize(window, v, p), v, p);
}

StuckDetector::StuckDetector(double v, const MeasureParams& p)
    : threshold_(p.stuck_fraction * v * p.tau), consecutive_(p.stuck_consecutive) {
  check_speed(v);
}

bool StuckDetector::update(double d_tau) {
  run_ = d_tau < threshold_ ? run_ + 1 : 0;
  return stuck();
}

}  // namespace trav
