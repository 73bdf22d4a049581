#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "trav/heightfield.hpp"
#include "trav/kvconfig.hpp"
#include "trav/measures.hpp"
#include "trav/observation.hpp"

namespace trav {

/// Forwarder geometry and contact parameters. Vehicle-frame coordinates are
/// relative to the articulation joint: x forward, y left, z up.
struct VehicleConfig {
  double mass = 16950.0;        ///< total [kg]
  double front_mass_fraction = 0.36;
  double rear_mass_fraction = 0.33;  ///< the four bogies share the remainder
  double length = 9.3;
  double width = 3.4;
  double wheel_radius = 0.675;
  double max_wheel_torque = 40000.0;  ///< per wheel motor [N m]
  double wheel_inertia = 100.0;       ///< spin inertia [kg m^2]
  double motor_gain = 1.0e6;          ///< velocity controller gain [N m s/rad]

  Eigen::Vector3d front_com{1.5, 0.0, 0.35};
  Eigen::Vector3d rear_com{-2.0, 0.0, 0.45};
  double front_bogie_x = 1.85;
  double rear_bogie_x = -2.75;
  double bogie_y = 1.35;              ///< lateral pivot offset
  double bogie_pivot_z = -0.2;
  double bogie_half_length = 0.75;    ///< pivot to wheel centre, along the bogie
  double wheel_drop = 0.15;           ///< wheel centres below the pivot
  double front_extent = 4.0;          ///< bumper ahead of the joint
  double rear_extent = 5.3;           ///< tail behind the joint
  double hull_z = -0.425;             ///< frame underside relative to the joint
  double bumper_z = -0.325;           ///< lower edge of the front bumper
  /// Accelerometer relative to the rear-frame centre of mass.
  Eigen::Vector3d accel_mount_offset{-0.5, 0.0, 1.5};

  double friction_mu = 1.2;
  double slip_scale = 0.05;             ///< friction regularisation [m/s]
  double contact_stiffness = 1.5e6;     ///< per contact [N/m]
  double contact_damping = 1.1e5;       ///< per contact [N s/m]
  double roll_limit = 0.35;             ///< articulation roll [rad]
  double pitch_limit = 0.5;             ///< bogie pitch [rad]
  double limit_stiffness = 5.0e6;       ///< joint-limit spring [N m/rad]
  double limit_damping = 2.0e5;
  double joint_damping = 2000.0;        ///< bogie and roll joints [N m s/rad]
  double overturn_angle = 55.0 * M_PI / 180.0;
  int substeps = 10;                    ///< integration substeps per 60 Hz tick

  double front_mass() const { return mass * front_mass_fraction; }
  double rear_mass() const { return mass * rear_mass_fraction; }
  double bogie_mass() const { return mass * (1.0 - front_mass_fraction - rear_mass_fraction) / 4.0; }

  /// Radius of the disc around the joint that contains every wheel and hull point.
  double footprint_radius() const;

  void validate() const;
  KeyValueConfig to_config() const;
  static VehicleConfig from_config(const KeyValueConfig& cfg);
};

inline constexpr int kBogies = 4;
inline constexpr double kGravity = 9.81;
inline constexpr double kSimRate = 60.0;

/// Reduced-coordinate state: front-frame pose (6), articulation roll and yaw,
/// four bogie pitches, their rates, and per-wheel spin.
struct VehicleState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  ///< front-frame centre of mass
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  double articulation_roll = 0.0;
  double articulation_yaw = 0.0;  ///< held at the commanded value
  std::array<double, kBogies> bogie_pitch{};

  Eigen::Vector3d linear_velocity = Eigen::Vector3d::Zero();   ///< world frame
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();  ///< world frame
  double roll_rate = 0.0;
  std::array<double, kBogies> bogie_rate{};

  std::array<double, kWheels> wheel_spin{};    ///< absolute spin about the axle [rad/s]
  std::array<double, kWheels> wheel_omega{};   ///< motor speed relative to the bogie [rad/s]
  std::array<double, kWheels> wheel_torque{};  ///< M_i [N m]
  std::array<double, kWheels> wheel_power{};   ///< max(0, omega_i M_i) averaged over the tick [W]
  double vertical_contact_force = 0.0;         ///< sum of contact force z components [N]
  double time = 0.0;

  bool finite() const;
};

struct StepOptions {
  /// Keeps the front frame from moving horizontally or yawing.
  bool anchored = false;
};

/// Pose and velocity of the frames derived from a state.
struct VehiclePose {
  Eigen::Vector3d joint;
  Eigen::Vector3d joint_velocity;
  Eigen::Matrix3d front_rotation;
  Eigen::Matrix3d rear_rotation;
  Eigen::Vector3d accel_mount;
  Eigen::Vector3d accel_mount_velocity;
  std::array<Eigen::Vector3d, kWheels> hubs;
};

/// Integrates one fixed tick. Semi-implicit Euler over `config.substeps`
/// substeps; wheel spin is solved implicitly against the regularised friction.
/// Throws SimulationDiverged on a non-finite result and BoundsError if a
/// contact probe leaves the raster.
class VehicleModel {
 public:
  VehicleModel(const VehicleConfig& config, const Heightfield& terrain);

  const VehicleConfig& config() const { return config_; }
  const Heightfield& terrain() const { return terrain_; }

  VehicleState step(const VehicleState& state, double target_speed, double dt,
                    const StepOptions& options = {}) const;

  /// Places the vehicle at rest with its joint above (x, y), aligned with the
  /// local terrain plane and lifted `clearance` above the nearest contact.
  VehicleState place(double x, double y, double heading, double clearance = 0.02) const;

  VehiclePose pose(const VehicleState& state) const;

  /// Kinetic energy of all bodies [J].
  double kinetic_energy(const VehicleState& state) const;

  /// True when every contact probe and the joint disc of `margin` lie inside
  /// the raster.
  bool in_bounds(const VehicleState& state, double margin) const;

  /// Largest |roll| or |pitch| of either frame [rad].
  double max_tilt(const VehicleState& state) const;

 private:
  struct Impl;
  VehicleConfig config_;
  const Heightfield& terrain_;
};

/// Free-function form of VehicleModel::step.
VehicleState step(const VehicleState& state, const VehicleConfig& config, const Heightfield& hf,
                  double v, double dt);

struct EpisodeConfig {
  double target_speed = 1.3;  ///< v [m/s]
  double spawn_x = 0.0;
  double spawn_y = 0.0;
  double spawn_heading = 0.0;  ///< [rad]
  double max_duration = 10.0;  ///< data-collection time after relaxation [s]
  double sim_rate = 60.0;
  double sample_rate = 20.0;
  bool anchored = false;       ///< anchor during relaxation
  double min_relax = 1.0;      ///< [s]
  double max_relax = 5.0;      ///< [s]
  double relax_energy = 0.01;  ///< kinetic energy per mass threshold [J/kg]
  /// Joint must stay this far inside the raster (at least the vehicle footprint).
  double boundary_margin = 0.0;
  bool detect_stuck = true;
  /// Time kept recording after the stuck flag before the episode ends [s].
  double stuck_dwell = 0.0;

  void validate() const;
};

struct EpisodeResult {
  std::vector<Observation> observations;
  VehicleStatus termination = VehicleStatus::kOk;  ///< kOk when max duration was reached
  bool discarded = false;
  std::string reason;  ///< set when discarded
};

/// Drops the vehicle, relaxes it, then records observations at the sample rate
/// until stuck, overturned, out of bounds, or the duration elapses.
EpisodeResult run_episode(const Heightfield& hf, const VehicleConfig& config, const EpisodeConfig& episode,
                          const MeasureParams& measures = {});

struct ProbeResult {
  bool valid = false;
  TraversabilityLabel label;
  WindowSummary summary;
  std::string reason;
};

/// Ground-truth measurement: lower the vehicle under an anchor that only
/// permits vertical motion at fixed yaw, relax, release, drive one window.
ProbeResult anchored_spawn_probe(const Heightfield& hf, const VehicleConfig& config, double x, double y,
                                 double heading, double v, const MeasureParams& measures = {});

}  // namespace trav
