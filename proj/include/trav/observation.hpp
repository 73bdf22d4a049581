#pragma once

#include <Eigen/Core>

#include <array>
#include <string>

namespace trav {

inline constexpr int kWheels = 8;

enum class VehicleStatus { kOk, kStuck, kOverturned, kOutOfBounds };
const char* status_name(VehicleStatus s);

/// One 20 Hz telemetry record.
struct Observation {
  double time = 0.0;                                    ///< s since data collection started
  Eigen::Vector3d position = Eigen::Vector3d::Zero();   ///< articulation joint [m]
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();   ///< articulation joint [m/s]
  Eigen::Vector2d heading = Eigen::Vector2d::UnitX();   ///< horizontal front-frame axis
  Eigen::Vector3d forward = Eigen::Vector3d::UnitX();   ///< front-frame x axis
  std::array<double, kWheels> wheel_power{};            ///< P_i >= 0 [W]
  double acceleration = 0.0;                            ///< accelerometer magnitude [m/s^2]
  VehicleStatus status = VehicleStatus::kOk;

  double total_power() const {
    double s = 0.0;
    for (double p : wheel_power) s += p;
    return s;
  }
};

}  // namespace trav
