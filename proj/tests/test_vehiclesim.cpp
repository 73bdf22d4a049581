#include "doctest.h"

#include <cmath>

#include "trav/errors.hpp"
#include "trav/terraingen.hpp"
#include "trav/vehiclesim.hpp"

using namespace trav;

namespace {

constexpr double kDt = 1.0 / 60.0;

Heightfield flat_ground(double size = 40.0) {
  const int n = static_cast<int>(std::lround(size / 0.1)) + 1;
  return Heightfield::constant(0.0, 0.0, 0.1, n, n, 0.0);
}

double total_power(const VehicleState& s) {
  double p = 0.0;
  for (double w : s.wheel_power) p += w;
  return p;
}

}  // namespace

TEST_CASE("static force balance on flat ground") {
  const VehicleConfig cfg;
  const Heightfield hf = flat_ground();
  const VehicleModel model(cfg, hf);
  VehicleState s = model.place(20.0, 20.0, 0.4);
  for (int i = 0; i < 240; ++i) {
    s = model.step(s, 0.0, kDt);
    CHECK(s.vertical_contact_force >= 0.0);
  }
  const double mg = cfg.mass * kGravity;
  CHECK(std::abs(s.vertical_contact_force - mg) <= 0.01 * mg);
  CHECK(model.kinetic_energy(s) / cfg.mass < 1e-6);
  // Static sinkage stays under 2 cm.
  for (const auto& hub : model.pose(s).hubs) CHECK(hub.z() > cfg.wheel_radius - 0.02);
}

TEST_CASE("steady speed on flat ground") {
  const VehicleConfig cfg;
  const Heightfield hf = flat_ground();
  const VehicleModel model(cfg, hf);
  VehicleState s = model.place(10.0, 10.0, 0.0);
  for (int i = 0; i < 60; ++i) s = model.step(s, 0.0, kDt);
  double work = 0.0;
  for (int i = 0; i < 300; ++i) {
    s = model.step(s, 1.3, kDt);
    if (i >= 180) work += total_power(s) * kDt;
    for (double m : s.wheel_torque) CHECK(std::abs(m) <= cfg.max_wheel_torque);
    CHECK(std::abs(s.orientation.norm() - 1.0) < 1e-6);
  }
  const double speed = model.pose(s).joint_velocity.norm();
  CHECK(std::abs(speed - 1.3) <= 0.02 * 1.3);
  // No rolling resistance: steady driving costs almost nothing.
  CHECK(work <= 0.05 * cfg.mass * kGravity * 1.3 * 2.0);
}

TEST_CASE("climbing a 45 degree incline") {
  const VehicleConfig cfg;
  const Heightfield hf = Heightfield::from_function(0.0, 0.0, 0.1, 401, 201, [](double x, double) { return x; });
  const VehicleModel model(cfg, hf);
  const double v = 0.675;
  VehicleState s = model.place(10.0, 10.0, 0.0);
  for (int i = 0; i < 60; ++i) s = model.step(s, 0.0, kDt);
  for (int i = 0; i < 120; ++i) s = model.step(s, v, kDt);
  const Eigen::Vector3d start = model.pose(s).joint;
  double work = 0.0;
  for (int i = 0; i < 240; ++i) {
    s = model.step(s, v, kDt);
    work += total_power(s) * kDt;
    for (double m : s.wheel_torque) CHECK(std::abs(m) <= cfg.max_wheel_torque);
  }
  const double dist = (model.pose(s).joint - start).norm();
  const double specific = work / dist;
  const double reference = cfg.mass * kGravity * std::sin(M_PI / 4);
  CHECK(dist > 0.5 * v * 4.0);
  CHECK(specific >= 0.8 * reference);
  CHECK(specific <= 1.3 * reference);
}

TEST_CASE("stiff contacts without substeps diverge loudly") {
  VehicleConfig cfg;
  cfg.contact_stiffness = 1.0e11;
  cfg.contact_damping = 0.0;
  cfg.substeps = 1;
  const Heightfield hf = flat_ground();
  const VehicleModel model(cfg, hf);
  VehicleState s = model.place(20.0, 20.0, 0.0, 0.0);
  s.position.z() -= 0.05;
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 600; ++i) s = model.step(s, 1.0, kDt);
      }(),
      SimulationDiverged);
}

TEST_CASE("flat episode records every sample") {
  const VehicleConfig cfg;
  const Heightfield hf = flat_ground(60.0);
  EpisodeConfig ep;
  ep.target_speed = 1.3;
  ep.spawn_x = 15.0;
  ep.spawn_y = 30.0;
  const EpisodeResult r = run_episode(hf, cfg, ep);
  REQUIRE_FALSE(r.discarded);
  CHECK(r.termination == VehicleStatus::kOk);
  CHECK(r.observations.size() == 201);
  for (const auto& o : r.observations) {
    CHECK(o.status == VehicleStatus::kOk);
    CHECK(o.acceleration >= 0.0);
    for (double p : o.wheel_power) CHECK(p >= 0.0);
  }
  CHECK(r.observations.back().time == doctest::Approx(10.0).epsilon(1e-12));
  // Coordinate acceleration at constant speed is close to zero.
  CHECK(r.observations.back().acceleration < 0.5);
}

TEST_CASE("driving into a wall ends stuck") {
  const VehicleConfig cfg;
  const Heightfield hf = Heightfield::from_function(0.0, 0.0, 0.1, 401, 401, [](double x, double) {
    return x >= 24.0 ? 2.0 : (x > 23.8 ? 2.0 * (x - 23.8) / 0.2 : 0.0);
  });
  EpisodeConfig ep;
  ep.target_speed = 1.3;
  ep.spawn_x = 23.8 - 3.0 - cfg.front_extent;
  ep.spawn_y = 20.0;
  const EpisodeResult r = run_episode(hf, cfg, ep);
  REQUIRE_FALSE(r.discarded);
  CHECK(r.termination == VehicleStatus::kStuck);
  CHECK(r.observations.back().status == VehicleStatus::kStuck);
  CHECK(r.observations.back().time <= 10.0);
}

TEST_CASE("spawning on an 80 degree slope terminates with a cause") {
  const VehicleConfig cfg;
  const double g = std::tan(80.0 * M_PI / 180.0);
  const Heightfield hf = Heightfield::from_function(0.0, 0.0, 0.1, 301, 301, [&](double x, double) { return g * x; });
  EpisodeConfig ep;
  ep.spawn_x = 15.0;
  ep.spawn_y = 15.0;
  ep.spawn_heading = M_PI / 2;
  const EpisodeResult r = run_episode(hf, cfg, ep);
  REQUIRE_FALSE(r.discarded);
  CHECK((r.termination == VehicleStatus::kOverturned || r.termination == VehicleStatus::kStuck));
  CHECK(r.observations.back().status == r.termination);
}

TEST_CASE("anchored probes") {
  const VehicleConfig cfg;
  SUBCASE("flat ground") {
    const Heightfield hf = flat_ground();
    const ProbeResult p = anchored_spawn_probe(hf, cfg, 20.0, 20.0, 0.3, 1.3);
    REQUIRE(p.valid);
    CHECK(p.label.L >= 0.9);
    CHECK(p.label.L < 1.0);
  }
  SUBCASE("head-on at the step") {
    const Heightfield hf = synthetic_test_terrain(SyntheticKind::kStep);
    const ProbeResult p = anchored_spawn_probe(hf, cfg, 16.0, 20.0, 0.0, 1.3);
    REQUIRE(p.valid);
    CHECK(p.label.L < 0.2);
    CHECK(p.label.E == 1.0);
  }
  SUBCASE("footprint outside the raster") {
    const Heightfield hf = flat_ground(20.0);
    CHECK_THROWS_AS(anchored_spawn_probe(hf, cfg, 3.0, 10.0, 0.0, 1.3), BoundsError);
  }
}

TEST_CASE("mirror symmetry about the driving axis") {
  const VehicleConfig cfg;
  const double y0 = 20.0;
  auto h = [](double x, double y) {
    return 0.25 * std::sin(0.45 * x) * std::cos(0.3 * (y - 20.0) + 0.4) + 0.03 * (y - 20.0);
  };
  const Heightfield a = Heightfield::from_function(0.0, 0.0, 0.1, 401, 401, h);
  const Heightfield b =
      Heightfield::from_function(0.0, 0.0, 0.1, 401, 401, [&](double x, double y) { return h(x, 2 * y0 - y); });
  const VehicleModel ma(cfg, a), mb(cfg, b);
  VehicleState sa = ma.place(12.0, y0, 0.0);
  VehicleState sb = mb.place(12.0, y0, 0.0);
  double worst = 0.0;
  for (int i = 0; i < 300; ++i) {
    sa = ma.step(sa, 1.3, kDt);
    sb = mb.step(sb, 1.3, kDt);
    const Eigen::Vector3d pa = ma.pose(sa).joint, pb = mb.pose(sb).joint;
    worst = std::max({worst, std::abs(pa.x() - pb.x()), std::abs(pa.y() - (2 * y0 - pb.y())),
                      std::abs(pa.z() - pb.z())});
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("episodes are deterministic") {
  const VehicleConfig cfg;
  const Heightfield hf = generate(default_recipe(3, 0.8, 30.0, 0.1));
  EpisodeConfig ep;
  ep.target_speed = 1.7;
  ep.spawn_x = 14.0;
  ep.spawn_y = 15.0;
  ep.spawn_heading = 0.7;
  ep.max_duration = 4.0;
  const EpisodeResult r1 = run_episode(hf, cfg, ep);
  const EpisodeResult r2 = run_episode(hf, cfg, ep);
  REQUIRE(r1.observations.size() == r2.observations.size());
  for (std::size_t i = 0; i < r1.observations.size(); ++i) {
    CHECK(r1.observations[i].position == r2.observations[i].position);
    CHECK(r1.observations[i].acceleration == r2.observations[i].acceleration);
    CHECK(r1.observations[i].wheel_power == r2.observations[i].wheel_power);
  }
}

TEST_CASE("vehicle config round trip and validation") {
  VehicleConfig cfg;
  cfg.mass = 20000.0;
  cfg.front_com = {1.4, 0.1, 0.3};
  const VehicleConfig back = VehicleConfig::from_config(KeyValueConfig::parse(cfg.to_config().to_string()));
  CHECK(back.mass == 20000.0);
  CHECK(back.front_com == cfg.front_com);
  CHECK(back.substeps == cfg.substeps);
  VehicleConfig bad;
  bad.friction_mu = 0.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  EpisodeConfig ep;
  ep.sample_rate = 25.0;
  CHECK_THROWS_AS(ep.validate(), ArgumentError);
}

TEST_CASE("stuck dwell keeps recording after detection") {
  const Heightfield hf = synthetic_test_terrain(SyntheticKind::kStep);
  EpisodeConfig ep;
  ep.target_speed = 1.0;
  ep.spawn_x = 12.0;
  ep.spawn_y = 20.0;
  ep.max_duration = 30.0;
  const EpisodeResult quick = run_episode(hf, VehicleConfig{}, ep);
  REQUIRE(quick.termination == VehicleStatus::kStuck);
  ep.stuck_dwell = 2.0;
  const EpisodeResult dwell = run_episode(hf, VehicleConfig{}, ep);
  REQUIRE(dwell.termination == VehicleStatus::kStuck);
  REQUIRE(dwell.observations.size() == quick.observations.size() + 40);
  for (std::size_t i = 0; i < quick.observations.size(); ++i)
    CHECK(dwell.observations[i].position == quick.observations[i].position);
  CHECK(dwell.observations.back().time == doctest::Approx(quick.observations.back().time + 2.0));
  CHECK(dwell.observations[quick.observations.size() - 1].status == VehicleStatus::kOk);
  ep.stuck_dwell = -1.0;
  CHECK_THROWS_AS(ep.validate(), ArgumentError);
}
