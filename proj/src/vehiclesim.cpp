#include "trav/vehiclesim.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trav/errors.hpp"

namespace trav {

namespace {

constexpr int kDof = 11;  // base linear 3, base angular 3, roll, 4 bogie pitches
constexpr int kBodies = 6;  // front, rear, 4 bogies
constexpr int kRollDof = 6;
constexpr int kFirstBogieDof = 7;
constexpr double kRunawaySpeed = 200.0;  // m/s or rad/s

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Jacobian = Eigen::Matrix<double, 6, kDof>;
using GenVec = Eigen::Matrix<double, kDof, 1>;
using MassMatrix = Eigen::Matrix<double, kDof, kDof>;

Mat3 box_inertia(double m, double lx, double ly, double lz) {
  return Eigen::Vector3d(m / 12.0 * (ly * ly + lz * lz), m / 12.0 * (lx * lx + lz * lz),
                         m / 12.0 * (lx * lx + ly * ly))
      .asDiagonal();
}

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

bool is_front_bogie(int k) { return k < 2; }

}  // namespace

// ---------------------------------------------------------------------------
// Config

double VehicleConfig::footprint_radius() const {
  double r = 0.0;
  auto consider = [&](double x, double y, double pad) { r = std::max(r, std::hypot(x, y) + pad); };
  consider(front_extent, 1.0, 0.0);
  consider(-rear_extent, 1.2, 0.0);
  consider(front_bogie_x + bogie_half_length, bogie_y, wheel_radius);
  consider(rear_bogie_x - bogie_half_length, bogie_y, wheel_radius);
  return r;
}

void VehicleConfig::validate() const {
  const bool positive = mass > 0 && length > 0 && width > 0 && wheel_radius > 0 && max_wheel_torque > 0 &&
                        wheel_inertia > 0 && motor_gain > 0 && friction_mu > 0 && slip_scale > 0 &&
                        contact_stiffness > 0 && contact_damping >= 0 && roll_limit > 0 && pitch_limit > 0 &&
                        bogie_half_length > 0 && bogie_y > 0 && front_extent > 0 && rear_extent > 0;
  if (!positive) throw ArgumentError("vehicle masses, lengths, stiffnesses and limits must be positive");
  if (!(front_mass_fraction > 0 && rear_mass_fraction > 0 && front_mass_fraction + rear_mass_fraction < 1))
    throw ArgumentError("vehicle mass fractions must leave mass for the bogies");
  if (substeps < 1) throw ArgumentError("substeps must be positive");
}

KeyValueConfig VehicleConfig::to_config() const {
  KeyValueConfig c;
  c.set("mass", mass);
  c.set("front_mass_fraction", front_mass_fraction);
  c.set("rear_mass_fraction", rear_mass_fraction);
  c.set("length", length);
  c.set("width", width);
  c.set("wheel_radius", wheel_radius);
  c.set("max_wheel_torque", max_wheel_torque);
  c.set("wheel_inertia", wheel_inertia);
  c.set("motor_gain", motor_gain);
  c.set("front_com", std::vector<double>{front_com.x(), front_com.y(), front_com.z()});
  c.set("rear_com", std::vector<double>{rear_com.x(), rear_com.y(), rear_com.z()});
  c.set("front_bogie_x", front_bogie_x);
  c.set("rear_bogie_x", rear_bogie_x);
  c.set("bogie_y", bogie_y);
  c.set("bogie_pivot_z", bogie_pivot_z);
  c.set("bogie_half_length", bogie_half_length);
  c.set("wheel_drop", wheel_drop);
  c.set("front_extent", front_extent);
  c.set("rear_extent", rear_extent);
  c.set("hull_z", hull_z);
  c.set("bumper_z", bumper_z);
  c.set("accel_mount_offset",
        std::vector<double>{accel_mount_offset.x(), accel_mount_offset.y(), accel_mount_offset.z()});
  c.set("friction_mu", friction_mu);
  c.set("slip_scale", slip_scale);
  c.set("contact_stiffness", contact_stiffness);
  c.set("contact_damping", contact_damping);
  c.set("roll_limit", roll_limit);
  c.set("pitch_limit", pitch_limit);
  c.set("limit_stiffness", limit_stiffness);
  c.set("limit_damping", limit_damping);
  c.set("joint_damping", joint_damping);
  c.set("overturn_angle", overturn_angle);
  c.set("substeps", static_cast<long long>(substeps));
  return c;
}

VehicleConfig VehicleConfig::from_config(const KeyValueConfig& c) {
  VehicleConfig v;
  auto vec3 = [&](const char* key, Vec3 fallback) {
    const auto xs = c.get_doubles(key, {fallback.x(), fallback.y(), fallback.z()});
    if (xs.size() != 3) throw ConfigError(std::string("config key '") + key + "' needs three values");
    return Vec3(xs[0], xs[1], xs[2]);
  };
  v.mass = c.get_double("mass", v.mass);
  v.front_mass_fraction = c.get_double("front_mass_fraction", v.front_mass_fraction);
  v.rear_mass_fraction = c.get_double("rear_mass_fraction", v.rear_mass_fraction);
  v.length = c.get_double("length", v.length);
  v.width = c.get_double("width", v.width);
  v.wheel_radius = c.get_double("wheel_radius", v.wheel_radius);
  v.max_wheel_torque = c.get_double("max_wheel_torque", v.max_wheel_torque);
  v.wheel_inertia = c.get_double("wheel_inertia", v.wheel_inertia);
  v.motor_gain = c.get_double("motor_gain", v.motor_gain);
  v.front_com = vec3("front_com", v.front_com);
  v.rear_com = vec3("rear_com", v.rear_com);
  v.front_bogie_x = c.get_double("front_bogie_x", v.front_bogie_x);
  v.rear_bogie_x = c.get_double("rear_bogie_x", v.rear_bogie_x);
  v.bogie_y = c.get_double("bogie_y", v.bogie_y);
  v.bogie_pivot_z = c.get_double("bogie_pivot_z", v.bogie_pivot_z);
  v.bogie_half_length = c.get_double("bogie_half_length", v.bogie_half_length);
  v.wheel_drop = c.get_double("wheel_drop", v.wheel_drop);
  v.front_extent = c.get_double("front_extent", v.front_extent);
  v.rear_extent = c.get_double("rear_extent", v.rear_extent);
  v.hull_z = c.get_double("hull_z", v.hull_z);
  v.bumper_z = c.get_double("bumper_z", v.bumper_z);
  v.accel_mount_offset = vec3("accel_mount_offset", v.accel_mount_offset);
  v.friction_mu = c.get_double("friction_mu", v.friction_mu);
  v.slip_scale = c.get_double("slip_scale", v.slip_scale);
  v.contact_stiffness = c.get_double("contact_stiffness", v.contact_stiffness);
  v.contact_damping = c.get_double("contact_damping", v.contact_damping);
  v.roll_limit = c.get_double("roll_limit", v.roll_limit);
  v.pitch_limit = c.get_double("pitch_limit", v.pitch_limit);
  v.limit_stiffness = c.get_double("limit_stiffness", v.limit_stiffness);
  v.limit_damping = c.get_double("limit_damping", v.limit_damping);
  v.joint_damping = c.get_double("joint_damping", v.joint_damping);
  v.overturn_angle = c.get_double("overturn_angle", v.overturn_angle);
  v.substeps = static_cast<int>(c.get_int("substeps", v.substeps));
  v.validate();
  return v;
}

bool VehicleState::finite() const {
  bool ok = position.allFinite() && orientation.coeffs().allFinite() && linear_velocity.allFinite() &&
            angular_velocity.allFinite() && std::isfinite(articulation_roll) && std::isfinite(roll_rate);
  for (int k = 0; k < kBogies; ++k) ok = ok && std::isfinite(bogie_pitch[k]) && std::isfinite(bogie_rate[k]);
  for (int i = 0; i < kWheels; ++i) ok = ok && std::isfinite(wheel_spin[i]);
  return ok;
}

// ---------------------------------------------------------------------------
// Dynamics

struct VehicleModel::Impl {
  struct Geometry {
    std::array<double, kBodies> mass{};
    std::array<Mat3, kBodies> inertia{};  // body frame, about the centre of mass
    std::array<Vec3, kBogies> pivot;      // vehicle coordinates relative to the joint
    Vec3 bogie_com;                       // bogie frame, relative to the pivot
    std::array<Vec3, kWheels> hub;        // bogie frame, relative to the pivot
    std::vector<Vec3> front_hull;         // vehicle coordinates relative to the joint
    std::vector<Vec3> rear_hull;

    explicit Geometry(const VehicleConfig& c) {
      mass = {c.front_mass(), c.rear_mass(), c.bogie_mass(), c.bogie_mass(), c.bogie_mass(), c.bogie_mass()};
      inertia[0] = box_inertia(mass[0], 4.0, 2.6, 1.4);
      inertia[1] = box_inertia(mass[1], 5.3, 2.8, 1.4);
      for (int k = 0; k < kBogies; ++k)
        inertia[2 + k] = box_inertia(mass[2 + k], 2.0 * (c.bogie_half_length + c.wheel_radius), 0.7,
                                     2.0 * c.wheel_radius);
      pivot[0] = {c.front_bogie_x, c.bogie_y, c.bogie_pivot_z};
      pivot[1] = {c.front_bogie_x, -c.bogie_y, c.bogie_pivot_z};
      pivot[2] = {c.rear_bogie_x, c.bogie_y, c.bogie_pivot_z};
      pivot[3] = {c.rear_bogie_x, -c.bogie_y, c.bogie_pivot_z};
      bogie_com = {0.0, 0.0, -c.wheel_drop};
      for (int i = 0; i < kWheels; ++i)
        hub[i] = {(i % 2 == 0 ? 1.0 : -1.0) * c.bogie_half_length, 0.0, -c.wheel_drop};
      front_hull = {{c.front_extent, 1.0, c.bumper_z},
                    {c.front_extent, -1.0, c.bumper_z},
                    {c.front_bogie_x, 0.0, c.hull_z},
                    {0.4, 0.0, c.hull_z}};
      rear_hull = {{-0.4, 0.0, c.hull_z},
                   {c.rear_bogie_x, 0.0, c.hull_z},
                   {-c.rear_extent, 1.2, c.hull_z + 0.4},
                   {-c.rear_extent, -1.2, c.hull_z + 0.4}};
    }
  };

  /// Positions, velocities and Jacobians of every body for one state.
  struct Frame {
    std::array<Mat3, kBodies> R;
    std::array<Vec3, kBodies> com;
    std::array<Vec3, kBodies> v;
    std::array<Vec3, kBodies> w;
    std::array<Jacobian, kBodies> J;
    Vec3 joint, joint_velocity, roll_axis;
    std::array<Vec3, kBogies> pivot, axis;
    std::array<Vec3, kWheels> hub, hub_velocity;
  };

  struct WheelContact {
    bool active = false;
    double penetration = 0.0;
    Vec3 normal = Vec3::UnitZ();
  };

  const VehicleConfig& cfg;
  const Heightfield& hf;
  Geometry geo;

  Impl(const VehicleConfig& c, const Heightfield& h) : cfg(c), hf(h), geo(c) {}

  static GenVec velocity_vector(const VehicleState& s) {
    GenVec u;
    u.segment<3>(0) = s.linear_velocity;
    u.segment<3>(3) = s.angular_velocity;
    u(kRollDof) = s.roll_rate;
    for (int k = 0; k < kBogies; ++k) u(kFirstBogieDof + k) = s.bogie_rate[k];
    return u;
  }

  Frame frame(const VehicleState& s) const {
    Frame f;
    const Mat3 Rf = s.orientation.toRotationMatrix();
    const Mat3 Ryaw = Rf * rot_z(s.articulation_yaw);
    const Mat3 Rr = Ryaw * rot_x(s.articulation_roll);
    const Vec3& pf = s.position;
    const Vec3& vf = s.linear_velocity;
    const Vec3& wf = s.angular_velocity;

    f.R[0] = Rf;
    f.com[0] = pf;
    f.v[0] = vf;
    f.w[0] = wf;
    f.joint = pf - Rf * cfg.front_com;
    f.joint_velocity = vf + wf.cross(f.joint - pf);
    f.roll_axis = Ryaw * Vec3::UnitX();

    f.R[1] = Rr;
    f.com[1] = f.joint + Rr * cfg.rear_com;
    f.w[1] = wf + f.roll_axis * s.roll_rate;
    f.v[1] = f.joint_velocity + f.w[1].cross(f.com[1] - f.joint);

    for (int k = 0; k < kBogies; ++k) {
      const int b = 2 + k;
      const bool front = is_front_bogie(k);
      const Mat3& Rp = front ? Rf : Rr;
      const int parent = front ? 0 : 1;
      f.pivot[k] = front ? Vec3(pf + Rf * (geo.pivot[k] - cfg.front_com)) : Vec3(f.joint + Rr * geo.pivot[k]);
      f.axis[k] = Rp * Vec3::UnitY();
      f.R[b] = Rp * rot_y(s.bogie_pitch[k]);
      f.com[b] = f.pivot[k] + f.R[b] * geo.bogie_com;
      const Vec3 v_pivot = f.v[parent] + f.w[parent].cross(f.pivot[k] - f.com[parent]);
      f.w[b] = f.w[parent] + f.axis[k] * s.bogie_rate[k];
      f.v[b] = v_pivot + f.w[b].cross(f.com[b] - f.pivot[k]);
      for (int j = 0; j < 2; ++j) {
        const int i = 2 * k + j;
        f.hub[i] = f.pivot[k] + f.R[b] * geo.hub[i];
        f.hub_velocity[i] = v_pivot + f.w[b].cross(f.hub[i] - f.pivot[k]);
      }
    }

    // Jacobians: body COM linear velocity (rows 0-2) and angular velocity (3-5).
    for (int b = 0; b < kBodies; ++b) {
      Jacobian& J = f.J[b];
      J.setZero();
      J.block<3, 3>(0, 0).setIdentity();
      J.block<3, 3>(0, 3) = -skew(f.com[b] - pf);
      J.block<3, 3>(3, 3).setIdentity();
      const bool rear_subtree = b == 1 || (b >= 2 && !is_front_bogie(b - 2));
      if (rear_subtree) {
        J.block<3, 1>(0, kRollDof) = f.roll_axis.cross(f.com[b] - f.joint);
        J.block<3, 1>(3, kRollDof) = f.roll_axis;
      }
      if (b >= 2) {
        const int k = b - 2;
        J.block<3, 1>(0, kFirstBogieDof + k) = f.axis[k].cross(f.com[b] - f.pivot[k]);
        J.block<3, 1>(3, kFirstBogieDof + k) = f.axis[k];
      }
    }
    return f;
  }

  /// Velocity-product accelerations (J-dot u) of each body: linear at the COM
  /// and angular.
  void bias_accelerations(const VehicleState& s, const Frame& f, std::array<Vec3, kBodies>& a,
                          std::array<Vec3, kBodies>& alpha) const {
    const Vec3& wf = f.w[0];
    a[0].setZero();
    alpha[0].setZero();
    // Rear frame through the articulation joint.
    const Vec3 a_joint = wf.cross(wf.cross(f.joint - f.com[0]));
    alpha[1] = wf.cross(f.roll_axis * s.roll_rate);
    a[1] = a_joint + alpha[1].cross(f.com[1] - f.joint) + f.w[1].cross(f.w[1].cross(f.com[1] - f.joint));
    for (int k = 0; k < kBogies; ++k) {
      const int b = 2 + k;
      const int p = is_front_bogie(k) ? 0 : 1;
      const Vec3 r_pivot = f.pivot[k] - f.com[p];
      const Vec3 a_pivot = a[p] + alpha[p].cross(r_pivot) + f.w[p].cross(f.w[p].cross(r_pivot));
      alpha[b] = alpha[p] + f.w[p].cross(f.axis[k] * s.bogie_rate[k]);
      const Vec3 r = f.com[b] - f.pivot[k];
      a[b] = a_pivot + alpha[b].cross(r) + f.w[b].cross(f.w[b].cross(r));
    }
  }

  static void apply_force(GenVec& Q, const Frame& f, int body, const Vec3& point, const Vec3& force) {
    Eigen::Matrix<double, 6, 1> wrench;
    wrench.head<3>() = force;
    wrench.tail<3>() = (point - f.com[body]).cross(force);
    Q.noalias() += f.J[body].transpose() * wrench;
  }

  static void apply_torque(GenVec& Q, const Frame& f, int body, const Vec3& torque) {
    Q.noalias() += f.J[body].block<3, kDof>(3, 0).transpose() * torque;
  }

  /// Deepest contact of the wheel circle (in the vertical plane through the
  /// hub, along the rolling direction) against the terrain profile.
  WheelContact probe_wheel(const Vec3& hub, const Vec3& axle) const {
    WheelContact c;
    Vec3 fwd = axle.cross(Vec3::UnitZ());
    fwd.z() = 0.0;
    const double fn = fwd.norm();
    if (fn < 1e-6) return c;
    fwd /= fn;
    const double r = cfg.wheel_radius;
    const int n = std::max(9, static_cast<int>(std::ceil(2.0 * r / (0.5 * hf.cell_size())))) + 1;
    // Profile samples relative to the hub, (s, dz).
    std::array<Eigen::Vector2d, 128> prof;
    const int m = std::min(n, 128);
    for (int k = 0; k < m; ++k) {
      const double s = -r + 2.0 * r * k / (m - 1);
      prof[k] = {s, hf.sample(hub.x() + s * fwd.x(), hub.y() + s * fwd.y()) - hub.z()};
    }
    double best = 0.0;
    Eigen::Vector2d closest = Eigen::Vector2d::Zero();
    for (int k = 0; k + 1 < m; ++k) {
      const Eigen::Vector2d d = prof[k + 1] - prof[k];
      const double t = std::clamp(-prof[k].dot(d) / d.squaredNorm(), 0.0, 1.0);
      const Eigen::Vector2d q = prof[k] + t * d;
      const double pen = r - q.norm();
      if (pen > best) {
        best = pen;
        closest = q;
      }
    }
    const double dist = closest.norm();
    if (best <= 0.0 || dist < 1e-9) return c;
    c.active = true;
    c.penetration = best;
    c.normal = -(closest.x() * fwd + closest.y() * Vec3::UnitZ()) / dist;
    return c;
  }

  Vec3 terrain_normal(double x, double y) const {
    const double h = hf.cell_size();
    const double gx = (hf.sample(x + h, y) - hf.sample(x - h, y)) / (2.0 * h);
    const double gy = (hf.sample(x, y + h) - hf.sample(x, y - h)) / (2.0 * h);
    return Vec3(-gx, -gy, 1.0).normalized();
  }

  Vec3 regularized_friction(const Vec3& slip, double normal_force) const {
    const double s = slip.norm();
    return -cfg.friction_mu * normal_force * slip / std::max(s, cfg.slip_scale);
  }

  void hull_contacts(GenVec& Q, const Frame& f, int body, const std::vector<Vec3>& points,
                     double& vertical) const {
    for (const Vec3& local : points) {
      const Vec3 p = body == 0 ? Vec3(f.joint + f.R[0] * local) : Vec3(f.joint + f.R[1] * (local));
      const double h = hf.sample(p.x(), p.y());
      if (p.z() >= h) continue;
      const Vec3 n = terrain_normal(p.x(), p.y());
      const double pen = (h - p.z()) * n.z();
      const Vec3 vp = f.v[body] + f.w[body].cross(p - f.com[body]);
      const double N = std::max(0.0, cfg.contact_stiffness * pen - cfg.contact_damping * vp.dot(n));
      if (N <= 0.0) continue;
      const Vec3 vt = vp - vp.dot(n) * n;
      const Vec3 F = N * n + regularized_friction(vt, N);
      vertical += F.z();
      apply_force(Q, f, body, p, F);
    }
  }

  /// One substep; returns per-wheel energy delivered by the motors.
  void substep(VehicleState& s, double target_speed, double dt, bool anchored,
               std::array<double, kWheels>& motor_energy) const {
    const Frame f = frame(s);
    const double r = cfg.wheel_radius;
    const double omega_target = target_speed / r;
    GenVec Q = GenVec::Zero();
    double vertical = 0.0;

    for (int b = 0; b < kBodies; ++b) apply_force(Q, f, b, f.com[b], Vec3(0.0, 0.0, -geo.mass[b] * kGravity));

    for (int i = 0; i < kWheels; ++i) {
      const int k = i / 2;
      const int body = 2 + k;
      const int frame_body = is_front_bogie(k) ? 0 : 1;
      const Vec3& a = f.axis[k];
      // The drive enters through the bogie pivot, so the motor works against the frame.
      const double frame_spin = f.w[frame_body].dot(a);
      const WheelContact c = probe_wheel(f.hub[i], a);
      double N = 0.0, v_long = 0.0, v_lat = 0.0;
      Vec3 t_long = Vec3::Zero(), t_lat = Vec3::Zero();
      if (c.active) {
        const Vec3& vh = f.hub_velocity[i];
        N = std::max(0.0, cfg.contact_stiffness * c.penetration - cfg.contact_damping * vh.dot(c.normal));
        t_long = a.cross(c.normal);
        const double tn = t_long.norm();
        if (tn > 1e-9) {
          t_long /= tn;
          t_lat = c.normal.cross(t_long);
          v_long = vh.dot(t_long);
          v_lat = vh.dot(t_lat);
        } else {
          N = 0.0;
        }
      }

      const double mu_n = cfg.friction_mu * N;
      const double f_cap = cfg.max_wheel_torque / r;
      auto motor = [&](double spin) {
        return std::clamp(cfg.motor_gain * (omega_target - (spin - frame_spin)), -cfg.max_wheel_torque,
                          cfg.max_wheel_torque);
      };
      auto traction = [&](double spin) {
        if (N <= 0.0) return 0.0;
        const double sl = v_long - spin * r;
        const double mag = std::max(std::hypot(sl, v_lat), cfg.slip_scale);
        return std::clamp(-mu_n * sl / mag, -f_cap, f_cap);
      };
      // Implicit spin update: I (w' - w) / dt = M(w') - r F(w'), monotone in w'.
      const double w0 = s.wheel_spin[i];
      const double I = cfg.wheel_inertia;
      auto residual = [&](double spin) { return I * (spin - w0) / dt - motor(spin) + r * traction(spin); };
      const double span = (2.0 * cfg.max_wheel_torque + r * mu_n + 1.0) * dt / I + 1.0;
      double lo = w0 - span, hi = w0 + span;
      for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) > 0.0 ? hi : lo) = mid;
      }
      const double spin = 0.5 * (lo + hi);
      const double torque = motor(spin);
      const double f_long = traction(spin);
      s.wheel_spin[i] = spin;
      s.wheel_omega[i] = spin - frame_spin;
      s.wheel_torque[i] = torque;
      motor_energy[i] += std::max(0.0, s.wheel_omega[i] * torque) * dt;

      if (N > 0.0) {
        // Lateral share of the friction circle at the solved longitudinal slip.
        const double sl = v_long - spin * r;
        const double mag = std::max(std::hypot(sl, v_lat), cfg.slip_scale);
        const double f_lat = -mu_n * v_lat / mag;
        const Vec3 F = N * c.normal + f_long * t_long + f_lat * t_lat;
        vertical += F.z();
        apply_force(Q, f, body, f.hub[i], F);
      }
      apply_torque(Q, f, frame_body, -torque * a);
    }

    hull_contacts(Q, f, 0, geo.front_hull, vertical);
    hull_contacts(Q, f, 1, geo.rear_hull, vertical);
    s.vertical_contact_force = vertical;

    // Joint limits and damping.
    auto limit = [&](double q, double rate, double lim) {
      double tau = -cfg.joint_damping * rate;
      if (q > lim) tau += -cfg.limit_stiffness * (q - lim) - cfg.limit_damping * std::max(0.0, rate);
      if (q < -lim) tau += -cfg.limit_stiffness * (q + lim) - cfg.limit_damping * std::min(0.0, rate);
      return tau;
    };
    Q(kRollDof) += limit(s.articulation_roll, s.roll_rate, cfg.roll_limit);
    for (int k = 0; k < kBogies; ++k)
      Q(kFirstBogieDof + k) += limit(s.bogie_pitch[k], s.bogie_rate[k], cfg.pitch_limit);

    // M u' = Q - sum J^T [m a_bias; I alpha_bias + w x I w]
    std::array<Vec3, kBodies> a_bias, alpha_bias;
    bias_accelerations(s, f, a_bias, alpha_bias);
    MassMatrix M = MassMatrix::Zero();
    for (int b = 0; b < kBodies; ++b) {
      const Mat3 Iw = f.R[b] * geo.inertia[b] * f.R[b].transpose();
      const auto Jv = f.J[b].block<3, kDof>(0, 0);
      const auto Jw = f.J[b].block<3, kDof>(3, 0);
      M.noalias() += geo.mass[b] * Jv.transpose() * Jv;
      M.noalias() += Jw.transpose() * Iw * Jw;
      Q.noalias() -= Jv.transpose() * (geo.mass[b] * a_bias[b]);
      Q.noalias() -= Jw.transpose() * (Iw * alpha_bias[b] + f.w[b].cross(Iw * f.w[b]));
    }
    const GenVec accel = M.ldlt().solve(Q);

    GenVec u = velocity_vector(s) + dt * accel;
    if (anchored) {
      u(0) = 0.0;
      u(1) = 0.0;
      u(5) = 0.0;
    }
    s.linear_velocity = u.segment<3>(0);
    s.angular_velocity = u.segment<3>(3);
    s.roll_rate = u(kRollDof);
    for (int k = 0; k < kBogies; ++k) s.bogie_rate[k] = u(kFirstBogieDof + k);

    s.position += dt * s.linear_velocity;
    const double wn = s.angular_velocity.norm();
    if (wn > 0.0)
      s.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(wn * dt, s.angular_velocity / wn)) * s.orientation;
    s.orientation.normalize();
    s.articulation_roll += dt * s.roll_rate;
    for (int k = 0; k < kBogies; ++k) s.bogie_pitch[k] += dt * s.bogie_rate[k];
  }

  /// Lift needed so that no wheel circle or hull point touches the terrain.
  double required_lift(const Frame& f) const {
    double lift = -std::numeric_limits<double>::infinity();
    const double r = cfg.wheel_radius;
    for (int i = 0; i < kWheels; ++i) {
      Vec3 fwd = f.axis[i / 2].cross(Vec3::UnitZ());
      fwd.z() = 0.0;
      fwd.normalize();
      for (int k = 0; k <= 32; ++k) {
        const double s = -r + 2.0 * r * k / 32.0;
        const double ground = hf.sample(f.hub[i].x() + s * fwd.x(), f.hub[i].y() + s * fwd.y());
        lift = std::max(lift, ground + std::sqrt(std::max(0.0, r * r - s * s)) - f.hub[i].z());
      }
    }
    for (const Vec3& local : geo.front_hull) {
      const Vec3 p = f.joint + f.R[0] * local;
      lift = std::max(lift, hf.sample(p.x(), p.y()) - p.z());
    }
    for (const Vec3& local : geo.rear_hull) {
      const Vec3 p = f.joint + f.R[1] * local;
      lift = std::max(lift, hf.sample(p.x(), p.y()) - p.z());
    }
    return lift;
  }

  std::vector<Vec3> probe_points(const VehicleState& s) const {
    const Frame f = frame(s);
    std::vector<Vec3> pts(f.hub.begin(), f.hub.end());
    for (const Vec3& local : geo.front_hull) pts.push_back(f.joint + f.R[0] * local);
    for (const Vec3& local : geo.rear_hull) pts.push_back(f.joint + f.R[1] * local);
    return pts;
  }
};

VehicleModel::VehicleModel(const VehicleConfig& config, const Heightfield& terrain)
    : config_(config), terrain_(terrain) {
  config_.validate();
}

VehicleState VehicleModel::step(const VehicleState& state, double target_speed, double dt,
                                 const StepOptions& options) const {
  if (!(dt > 0.0)) throw ArgumentError("step dt must be positive");
  const Impl impl(config_, terrain_);
  VehicleState s = state;
  const int n = config_.substeps;
  const double h = dt / n;
  std::array<double, kWheels> energy{};
  for (int i = 0; i < n; ++i) {
    impl.substep(s, target_speed, h, options.anchored, energy);
    // A penalty-contact blow-up shows as runaway velocities before it turns
    // non-finite; either way the state is meaningless.
    const bool runaway = s.linear_velocity.norm() > kRunawaySpeed || s.angular_velocity.norm() > kRunawaySpeed;
    if (!s.finite() || runaway) {
      std::ostringstream os;
      os << "vehicle state diverged at t=" << state.time + (i + 1) * h
         << " s; check contact stiffness against the timestep";
      throw SimulationDiverged(os.str());
    }
  }
  for (int i = 0; i < kWheels; ++i) s.wheel_power[i] = energy[i] / dt;
  s.time = state.time + dt;
  return s;
}

VehicleState VehicleModel::place(double x, double y, double heading, double clearance) const {
  const Impl impl(config_, terrain_);
  const Vec3 fwd(std::cos(heading), std::sin(heading), 0.0);
  const Vec3 left(-std::sin(heading), std::cos(heading), 0.0);

  // Least-squares plane through the terrain under the wheel hubs.
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (int i = 0; i < kWheels; ++i) {
    const Vec3 local = impl.geo.pivot[i / 2] + impl.geo.hub[i];
    const Vec3 w = Vec3(x, y, 0.0) + local.x() * fwd + local.y() * left;
    const double h = terrain_.sample(w.x(), w.y());
    const Vec3 row(1.0, local.x(), local.y());
    A += row * row.transpose();
    rhs += row * h;
  }
  const Vec3 plane = A.ldlt().solve(rhs);
  const double gx = plane.y();
  const double gy = plane.z();

  const Vec3 xa = (fwd + gx * Vec3::UnitZ()).normalized();
  const Vec3 ya0 = (left + gy * Vec3::UnitZ()).normalized();
  const Vec3 za = xa.cross(ya0).normalized();
  const Vec3 ya = za.cross(xa);
  Mat3 R;
  R.col(0) = xa;
  R.col(1) = ya;
  R.col(2) = za;

  VehicleState s;
  s.orientation = Eigen::Quaterniond(R).normalized();
  const Vec3 joint(x, y, plane.x());
  s.position = joint + R * config_.front_com;
  const double lift = impl.required_lift(impl.frame(s)) + clearance;
  s.position.z() += lift;
  return s;
}

VehiclePose VehicleModel::pose(const VehicleState& state) const {
  const Impl impl(config_, terrain_);
  const auto f = impl.frame(state);
  VehiclePose p;
  p.joint = f.joint;
  p.joint_velocity = f.joint_velocity;
  p.front_rotation = f.R[0];
  p.rear_rotation = f.R[1];
  p.accel_mount = f.com[1] + f.R[1] * config_.accel_mount_offset;
  p.accel_mount_velocity = f.v[1] + f.w[1].cross(p.accel_mount - f.com[1]);
  p.hubs = f.hub;
  return p;
}

double VehicleModel::kinetic_energy(const VehicleState& state) const {
  const Impl impl(config_, terrain_);
  const auto f = impl.frame(state);
  double ke = 0.0;
  for (int b = 0; b < kBodies; ++b) {
    const Mat3 Iw = f.R[b] * impl.geo.inertia[b] * f.R[b].transpose();
    ke += 0.5 * impl.geo.mass[b] * f.v[b].squaredNorm() + 0.5 * f.w[b].dot(Iw * f.w[b]);
  }
  return ke;
}

bool VehicleModel::in_bounds(const VehicleState& state, double margin) const {
  const Impl impl(config_, terrain_);
  const auto f = impl.frame(state);
  if (!terrain_.contains(f.joint.x(), f.joint.y(), margin)) return false;
  const double pad = config_.wheel_radius + 2.0 * terrain_.cell_size();
  for (const Vec3& h : f.hub)
    if (!terrain_.contains(h.x(), h.y(), pad)) return false;
  for (const Vec3& p : impl.probe_points(state))
    if (!terrain_.contains(p.x(), p.y(), 2.0 * terrain_.cell_size())) return false;
  return true;
}

double VehicleModel::max_tilt(const VehicleState& state) const {
  const auto p = pose(state);
  double tilt = 0.0;
  for (const Mat3* R : {&p.front_rotation, &p.rear_rotation}) {
    const double pitch = std::asin(std::clamp(R->col(0).z(), -1.0, 1.0));
    const double roll = std::atan2(R->col(1).z(), R->col(2).z());
    tilt = std::max({tilt, std::abs(pitch), std::abs(roll)});
  }
  return tilt;
}

VehicleState step(const VehicleState& state, const VehicleConfig& config, const Heightfield& hf, double v,
                  double dt) {
  return VehicleModel(config, hf).step(state, v, dt);
}

// ---------------------------------------------------------------------------
// Episodes

void EpisodeConfig::validate() const {
  if (!(target_speed > 0.0)) throw ArgumentError("target speed must be positive");
  if (!(sim_rate > 0.0 && sample_rate > 0.0)) throw ArgumentError("rates must be positive");
  const double ratio = sim_rate / sample_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
    throw ArgumentError("sim_rate must be a multiple of sample_rate");
  if (!(max_duration > 0.0 && max_relax >= min_relax && min_relax >= 0.0))
    throw ArgumentError("episode durations must be positive and ordered");
  if (!(stuck_dwell >= 0.0)) throw ArgumentError("stuck dwell must be non-negative");
}

namespace {

Observation observe(const VehicleModel& model, const VehicleState& s, double time, double accel) {
  const auto p = model.pose(s);
  Observation o;
  o.time = time;
  o.position = p.joint;
  o.velocity = p.joint_velocity;
  o.forward = p.front_rotation.col(0);
  Eigen::Vector2d h(o.forward.x(), o.forward.y());
  o.heading = h.norm() > 1e-9 ? Eigen::Vector2d(h.normalized()) : Eigen::Vector2d::UnitX();
  o.wheel_power = s.wheel_power;
  o.acceleration = accel;
  return o;
}

struct RelaxOutcome {
  bool ok = false;
  bool overturned = false;
  std::string reason;
};

RelaxOutcome relax(const VehicleModel& model, VehicleState& s, const EpisodeConfig& ep, double margin) {
  const double dt = 1.0 / ep.sim_rate;
  const int max_ticks = static_cast<int>(std::ceil(ep.max_relax * ep.sim_rate));
  const int min_ticks = static_cast<int>(std::ceil(ep.min_relax * ep.sim_rate));
  StepOptions opt;
  opt.anchored = ep.anchored;
  for (int tick = 1; tick <= max_ticks; ++tick) {
    if (!model.in_bounds(s, margin)) return {false, false, "left the terrain during relaxation"};
    if (model.max_tilt(s) > model.config().overturn_angle) return {false, true, "overturned during relaxation"};
    s = model.step(s, 0.0, dt, opt);
    if (tick >= min_ticks && model.kinetic_energy(s) / model.config().mass < ep.relax_energy)
      return {true, false, {}};
  }
  return {false, false, "unable to stabilize at the start"};
}

}  // namespace

EpisodeResult run_episode(const Heightfield& hf, const VehicleConfig& config, const EpisodeConfig& episode,
                          const MeasureParams& measures) {
  episode.validate();
  measures.validate();
  const VehicleModel model(config, hf);
  const double margin = std::max(episode.boundary_margin, 0.0);
  EpisodeResult result;

  if (!model.terrain().contains(episode.spawn_x, episode.spawn_y, std::max(margin, config.footprint_radius() + 1.0))) {
    result.discarded = true;
    result.reason = "spawn footprint outside the terrain";
    return result;
  }

  try {
    VehicleState s = model.place(episode.spawn_x, episode.spawn_y, episode.spawn_heading);
    const auto relaxed = relax(model, s, episode, margin);
    if (relaxed.overturned) {
      Observation o = observe(model, s, 0.0, 0.0);
      o.status = VehicleStatus::kOverturned;
      result.observations.push_back(o);
      result.termination = VehicleStatus::kOverturned;
      return result;
    }
    if (!relaxed.ok) {
      result.discarded = true;
      result.reason = relaxed.reason;
      return result;
    }

    const double dt = 1.0 / episode.sim_rate;
    const int ticks_per_sample = static_cast<int>(std::lround(episode.sim_rate / episode.sample_rate));
    const int max_ticks = static_cast<int>(std::lround(episode.max_duration * episode.sim_rate));
    const int window = static_cast<int>(std::lround(measures.tau * episode.sample_rate));
    const double v = episode.target_speed;
    StuckDetector detector(v, measures);
    const int dwell_samples = static_cast<int>(std::lround(episode.stuck_dwell * episode.sample_rate));
    int stuck_at = -1;

    s.time = 0.0;
    result.observations.push_back(observe(model, s, 0.0, 0.0));
    double peak = 0.0;
    for (int tick = 1; tick <= max_ticks; ++tick) {
      if (!model.in_bounds(s, margin)) {
        result.termination = VehicleStatus::kOutOfBounds;
        break;
      }
      const Eigen::Vector3d v_before = model.pose(s).accel_mount_velocity;
      s = model.step(s, v, dt);
      const Eigen::Vector3d v_after = model.pose(s).accel_mount_velocity;
      peak = std::max(peak, (v_after - v_before).norm() / dt);
      if (model.max_tilt(s) > config.overturn_angle) {
        Observation o = observe(model, s, tick / episode.sim_rate, peak);
        o.status = VehicleStatus::kOverturned;
        result.observations.push_back(o);
        result.termination = VehicleStatus::kOverturned;
        break;
      }
      if (tick % ticks_per_sample != 0) continue;
      result.observations.push_back(observe(model, s, tick / episode.sim_rate, peak));
      peak = 0.0;
      const int n = static_cast<int>(result.observations.size());
      if (stuck_at >= 0) {
        if (n - 1 - stuck_at >= dwell_samples) {
          result.observations.back().status = VehicleStatus::kStuck;
          result.termination = VehicleStatus::kStuck;
          break;
        }
      } else if (episode.detect_stuck && n > window) {
        const std::span<const Observation> w(result.observations.data() + (n - 1 - window),
                                             static_cast<std::size_t>(window + 1));
        if (detector.update(travelled_distance(w, v, measures))) {
          stuck_at = n - 1;
          if (dwell_samples == 0) {
            result.observations.back().status = VehicleStatus::kStuck;
            result.termination = VehicleStatus::kStuck;
            break;
          }
        }
      }
    }
    if (result.termination == VehicleStatus::kOutOfBounds && !result.observations.empty())
      result.observations.back().status = VehicleStatus::kOutOfBounds;
  } catch (const SimulationDiverged& e) {
    result.discarded = true;
    result.reason = e.what();
  }
  return result;
}

ProbeResult anchored_spawn_probe(const Heightfield& hf, const VehicleConfig& config, double x, double y,
                                 double heading, double v, const MeasureParams& measures) {
  if (!(v > 0.0)) throw ArgumentError("probe target speed must be positive");
  measures.validate();
  const VehicleModel model(config, hf);
  ProbeResult out;
  const double margin = config.footprint_radius() + 0.2;
  if (!hf.contains(x, y, margin + v * measures.tau))
    throw BoundsError("probe footprint at (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") leaves the terrain");

  EpisodeConfig ep;
  ep.target_speed = v;
  ep.anchored = true;
  try {
    VehicleState s = model.place(x, y, heading);
    const auto relaxed = relax(model, s, ep, 0.0);
    if (!relaxed.ok) {
      out.reason = relaxed.reason;
      return out;
    }
    const double dt = 1.0 / ep.sim_rate;
    const int ticks_per_sample = static_cast<int>(std::lround(ep.sim_rate / ep.sample_rate));
    const int ticks = static_cast<int>(std::lround(measures.tau * ep.sim_rate));
    std::vector<Observation> window;
    window.push_back(observe(model, s, 0.0, 0.0));
    double peak = 0.0;
    for (int tick = 1; tick <= ticks; ++tick) {
      if (!model.in_bounds(s, 0.0)) {
        out.reason = "left the terrain during the window";
        return out;
      }
      const Eigen::Vector3d v_before = model.pose(s).accel_mount_velocity;
      s = model.step(s, v, dt);
      const Eigen::Vector3d v_after = model.pose(s).accel_mount_velocity;
      peak = std::max(peak, (v_after - v_before).norm() / dt);
      if (tick % ticks_per_sample == 0) {
        window.push_back(observe(model, s, tick / ep.sim_rate, peak));
        peak = 0.0;
      }
    }
    out.summary = summarize(window, v, measures);
    out.label = label_from_summary(out.summary, v, measures);
    out.valid = true;
  } catch (const SimulationDiverged& e) {
    out.reason = e.what();
  }
  return out;
}

}  // namespace trav
