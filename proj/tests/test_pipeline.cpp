#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "trav/errors.hpp"
#include "trav/pipeline.hpp"

using namespace trav;
namespace fs = std::filesystem;

TEST_CASE("config sections") {
  KeyValueConfig c;
  c.set("vehicle.mass", 12.0);
  c.set("vehicle.width", 2.0);
  c.set("vehicles", "x");
  const KeyValueConfig v = config_section(c, "vehicle.");
  CHECK(v.values().size() == 2);
  CHECK(v.get_double("mass", 0) == 12.0);
  CHECK(config_section(with_prefix(v, "p."), "p.").values() == v.values());

  const KeyValueConfig desk = pipeline_defaults(false), paper = pipeline_defaults(true);
  CHECK(desk.values().size() == paper.values().size());
  CHECK(desk.get_double("terrain.cell_size", 0) == 0.1);
  CHECK(paper.get_double("terrain.cell_size", 0) == 0.05);
  CHECK(CollectionSchedule::from_config(paper).seconds_per_vehicle == 500.0);
  CHECK(VehicleConfig::from_config(config_section(desk, "vehicle.")).mass == VehicleConfig{}.mass);
}

TEST_CASE("terrain manifest round trip") {
  const fs::path dir = fs::temp_directory_path() / "trav_test_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<TerrainEntry> entries(2);
  entries[0].terrain.id = 4;
  entries[0].terrain.recipe = default_recipe(11, 0.5, 20.0, 0.1);
  entries[0].file = "a.hfb";
  entries[1].terrain.id = 5;
  entries[1].terrain.split = Split::kValidation;
  entries[1].synthetic = "step";
  entries[1].file = "step.hfb";
  write_terrain_manifest(entries, dir);
  write_raster(generate(entries[0].terrain.recipe), dir / "a.hfb");
  write_raster(synthetic_test_terrain(SyntheticKind::kStep), dir / "step.hfb");

  const auto back = read_terrain_manifest(dir);
  REQUIRE(back.size() == 2);
  CHECK(back[0].terrain.id == 4);
  CHECK(back[0].terrain.split == Split::kTrain);
  CHECK(back[0].terrain.recipe.to_config().values() == entries[0].terrain.recipe.to_config().values());
  CHECK(back[1].synthetic == "step");
  CHECK(back[1].terrain.split == Split::kValidation);
  CHECK(load_terrain(dir, back[0]).nx() == 200);
  CHECK(load_terrain(dir, back[1]).width() == doctest::Approx(40.0));

  TerrainEntry wrong = back[0];
  wrong.file = "step.hfb";
  CHECK_THROWS_AS(load_terrain(dir, wrong), ConfigError);
  CHECK_THROWS_AS(read_terrain_manifest(dir / "missing"), ConfigError);
}

TEST_CASE("demo approaches stay clear of the edge") {
  const VehicleConfig vehicle;
  const double margin = collection_margin(vehicle);
  for (SyntheticKind k : {SyntheticKind::kHill, SyntheticKind::kDitch, SyntheticKind::kStep}) {
    const auto a = demo_approaches(k);
    CHECK(a.size() == 3);
    CHECK(a[0].name == "head_on");
    for (const auto& x : a) {
      CHECK(x.x >= margin);
      CHECK(x.y >= margin);
      CHECK(x.x <= 40.0 - margin);
      CHECK(x.y <= 40.0 - margin);
    }
  }
  CHECK(probe_margin(vehicle, 1.0) > vehicle.footprint_radius() + 1.0);
}

TEST_CASE("demo traces label every full window") {
  const auto traces = demo_traces(SyntheticKind::kHill, VehicleConfig{}, 1.0, 3.0, nullptr);
  REQUIRE(traces.size() == 3);
  for (const auto& t : traces) {
    CHECK_FALSE(t.discarded);
    CHECK(t.rows.size() == 41);
    for (const auto& r : t.rows) {
      CHECK_FALSE(r.has_prediction);
      CHECK(r.simulated.L > 0.9);
    }
    CHECK(t.rows[1].time - t.rows[0].time == doctest::Approx(0.05));
  }
  CHECK_THROWS_AS(demo_traces(SyntheticKind::kHill, VehicleConfig{}, 5.0, 3.0, nullptr), ArgumentError);
  CHECK_THROWS_AS(demo_traces(SyntheticKind::kHill, VehicleConfig{}, 1.0, 0.5, nullptr), ArgumentError);
}

TEST_CASE("approach scans probe along the line") {
  const auto scans = approach_scans(SyntheticKind::kHill, VehicleConfig{}, 1.0, 1.0, 0.5);
  REQUIRE(scans.size() == 3);
  for (const auto& s : scans) {
    REQUIRE(s.points.size() == 3);
    CHECK(s.valid == 3);
    CHECK(s.points[2].distance == 1.0);
    CHECK(std::hypot(s.points[2].x - s.approach.x, s.points[2].y - s.approach.y) == doctest::Approx(1.0));
    CHECK(s.min_L <= 1.0);
    CHECK(s.max_E >= s.E_at_min);
  }
  CHECK_THROWS_AS(approach_scans(SyntheticKind::kHill, VehicleConfig{}, 1.0, 1.0, 0.0), ArgumentError);
}
