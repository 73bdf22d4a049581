#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "planner_oracles.hpp"
#include "trav/errors.hpp"
#include "trav/planner.hpp"

using namespace trav;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "trav_test_planner";
  fs::create_directories(dir);
  return dir / name;
}

TraversabilityMap uniform_map(int nx, int ny, float L, float E, float A) {
  MapGrid g;
  g.nx = nx;
  g.ny = ny;
  TraversabilityMap m;
  m.reset(g, compass_headings(), 1.0);
  for (int h = 0; h < 8; ++h) {
    std::fill(m.valid[h].begin(), m.valid[h].end(), 1);
    std::fill(m.values[h][0].begin(), m.values[h][0].end(), L);
    std::fill(m.values[h][1].begin(), m.values[h][1].end(), E);
    std::fill(m.values[h][2].begin(), m.values[h][2].end(), A);
  }
  return m;
}

void set_cell(TraversabilityMap& m, int i, int j, float L, float E, float A) {
  for (int h = 0; h < 8; ++h) {
    const std::size_t c = static_cast<std::size_t>(j) * m.grid.nx + i;
    m.values[h][0][c] = L;
    m.values[h][1][c] = E;
    m.values[h][2][c] = A;
  }
}

void check_path_shape(const PlannedPath& p, const CostRaster& c) {
  REQUIRE(p.cells.size() == p.steps.size() + 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < p.steps.size(); ++k) {
    const auto& s = p.steps[k];
    CHECK(s.from == p.cells[k]);
    CHECK(p.cells[k + 1].i - p.cells[k].i == kMoveOffsets[s.move][0]);
    CHECK(p.cells[k + 1].j - p.cells[k].j == kMoveOffsets[s.move][1]);
    CHECK(s.cost == c.cost[s.move][c.index(s.from.i, s.from.j)] * move_length(s.move));
    sum += s.cost;
    CHECK(s.cumulative == sum);
  }
  CHECK(p.total_cost == sum);
}

}  // namespace

TEST_CASE("step cost endpoints") {
  CHECK(step_cost(1.0, 0.1, 0.0, Objective::kMulti, 0) == 0.1);
  CHECK(step_cost(0.1, 1.0, 1.0, Objective::kMulti, 0) == 11.0);
  CHECK(step_cost(0.01, 1.0, 1.0, Objective::kMulti, 0) == 11.0);
  CHECK(step_cost(1.0, 0.0, 0.0, Objective::kMulti, 0) == 0.1);
  CHECK(step_cost(0.5, 0.4, 0.2, Objective::kMulti, 1) == step_cost(0.5, 0.4, 0.2, Objective::kMulti, 0) * std::sqrt(2.0));
  CHECK(step_cost(0.5, 0.9, 0.9, Objective::kLocomotionOnly, 0) == 2.0);
  CHECK(step_cost(0.0, 0.9, 0.9, Objective::kLocomotionOnly, 0) == 10.0);
  CHECK(parse_objective("multi") == Objective::kMulti);
  CHECK_THROWS_AS(parse_objective("fast"), ArgumentError);
}

TEST_CASE("cost raster from a map") {
  TraversabilityMap m = uniform_map(4, 3, 1.0f, 0.05f, 0.0f);
  set_cell(m, 2, 1, 0.05f, 1.0f, 1.0f);
  m.valid[3][0] = 0;
  const CostRaster c = build_cost(m, Objective::kMulti);
  CHECK(c.cost[0][0] == 0.1);
  CHECK(c.cost[5][c.index(2, 1)] == 11.0);
  CHECK(std::isinf(c.cost[3][0]));
  CHECK(c.edge_cost(1, 1, 1) == 0.1 * std::sqrt(2.0));
  for (int k = 0; k < 8; ++k)
    for (std::size_t x = 0; x < 12; ++x)
      if (m.valid[k][x]) {
        CHECK(c.cost[k][x] >= 0.1);
        CHECK(c.cost[k][x] <= 11.0);
      }

  TraversabilityMap four = m;
  four.headings.resize(4);
  CHECK_THROWS_AS(build_cost(four, Objective::kMulti), ConfigError);
  TraversabilityMap swapped = m;
  std::swap(swapped.headings[0], swapped.headings[1]);
  CHECK_THROWS_AS(build_cost(swapped, Objective::kMulti), ConfigError);
  TraversabilityMap missing = m;
  missing.values[2][1].clear();
  CHECK_THROWS_AS(build_cost(missing, Objective::kMulti), ConfigError);
}

TEST_CASE("uniform raster gives the octile distance") {
  const CostRaster c = build_cost(uniform_map(9, 7, 0.5f, 0.5f, 0.0f), Objective::kMulti);
  const double base = step_cost(0.5, 0.5, 0.0, Objective::kMulti, 0);
  const PlannedPath p = plan(c, {1, 1}, {8, 4});
  check_path_shape(p, c);
  CHECK(p.total_cost == doctest::Approx(base * (3 * std::sqrt(2.0) + 4)).epsilon(1e-12));
  CHECK(p.steps.size() == 7);
  const auto small = build_cost(uniform_map(5, 5, 0.7f, 0.3f, 0.1f), Objective::kMulti);
  CHECK(plan(small, {0, 0}, {4, 2}).total_cost == oracle::exhaustive_best(small, {0, 0}, {4, 2}));
}

TEST_CASE("a wall with one gap routes through the gap") {
  TraversabilityMap m = uniform_map(9, 9, 1.0f, 0.1f, 0.0f);
  for (int j = 0; j < 9; ++j)
    if (j != 6) set_cell(m, 4, j, 0.0f, 1.0f, 1.0f);
  const CostRaster c = build_cost(m, Objective::kMulti);
  const PlannedPath p = plan(c, {0, 0}, {8, 0});
  check_path_shape(p, c);
  bool through_gap = false;
  for (const Cell& x : p.cells) {
    if (x.i == 4) CHECK(x.j == 6);
    through_gap |= x == Cell{4, 6};
  }
  CHECK(through_gap);
}

TEST_CASE("dijkstra equals exhaustive enumeration on small rasters") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int nx = 2 + static_cast<int>(rng.below(4));
    const int ny = 2 + static_cast<int>(rng.below(4));
    const CostRaster c = oracle::random_raster(nx, ny, seed * 7);
    Cell s{static_cast<int>(rng.below(nx)), static_cast<int>(rng.below(ny))};
    Cell g{static_cast<int>(rng.below(nx)), static_cast<int>(rng.below(ny))};
    if (s == g) g = {(s.i + 1) % nx, s.j};
    const PlannedPath p = plan(c, s, g);
    check_path_shape(p, c);
    CHECK(p.total_cost == oracle::exhaustive_best(c, s, g));
  }
}

TEST_CASE("dijkstra equals bellman-ford") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const CostRaster c = oracle::random_raster(8, 8, 100 + seed);
    Rng rng(seed);
    const Cell s{static_cast<int>(rng.below(8)), static_cast<int>(rng.below(8))};
    const auto bf = oracle::bellman_ford(c, s);
    CHECK(cost_to_go(c, s) == bf);
    const Cell g{7 - s.i, 7 - s.j};
    if (!(g == s)) CHECK(plan(c, s, g).total_cost == bf[c.index(g.i, g.j)]);
  }
}

TEST_CASE("monotonicity and scaling") {
  const CostRaster c = oracle::random_raster(10, 10, 42);
  const Cell s{0, 0}, g{9, 6};
  const PlannedPath base = plan(c, s, g);
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    CostRaster raised = c;
    const int k = static_cast<int>(rng.below(8));
    const std::size_t cell = rng.below(100);
    raised.cost[k][cell] += rng.uniform(0.0, 5.0);
    CHECK(plan(raised, s, g).total_cost >= base.total_cost);
  }
  for (double lambda : {2.0, 0.5, 8.0}) {
    CostRaster scaled = c;
    for (auto& layer : scaled.cost)
      for (double& x : layer) x *= lambda;
    const PlannedPath p = plan(scaled, s, g);
    CHECK(p.total_cost == base.total_cost * lambda);
    CHECK(p.cells == base.cells);
  }
}

TEST_CASE("plan errors") {
  TraversabilityMap m = uniform_map(5, 5, 1.0f, 0.2f, 0.0f);
  const CostRaster c = build_cost(m, Objective::kMulti);
  CHECK_THROWS_AS(plan(c, {1, 1}, {1, 1}), ArgumentError);
  CHECK_THROWS_AS(plan(c, {1, 1}, {5, 1}), ArgumentError);
  CHECK_THROWS_AS(plan(c, {-1, 0}, {1, 1}), ArgumentError);
  for (int h = 0; h < 8; ++h) m.valid[h][0] = 0;
  CHECK_THROWS_AS(plan(build_cost(m, Objective::kMulti), {0, 0}, {4, 4}), NoPathError);
  std::array<std::vector<double>, kMoves> bad;
  for (auto& layer : bad) layer.assign(4, 1.0);
  bad[3][2] = 0.0;
  CHECK_THROWS_AS(cost_raster_from(2, 2, bad), ArgumentError);
}

TEST_CASE("objective comparison") {
  const TraversabilityMap flat = uniform_map(8, 8, 0.9f, 0.3f, 0.1f);
  // Straight axis and diagonal runs are the unique optima on uniform costs.
  for (const auto& [s, g] : {std::pair<Cell, Cell>{{0, 0}, {7, 7}}, {{0, 3}, {7, 3}}, {{5, 7}, {5, 1}}}) {
    const ObjectiveComparison same = compare_objectives(flat, s, g);
    CHECK(same.multi.cells == same.locomotion.cells);
    CHECK(same.energy_percent == 100.0);
    CHECK(same.time_percent == 100.0);
  }

  // Smooth but steep corridor above, rough but flat corridor below, blocked
  // in between.
  TraversabilityMap m = uniform_map(11, 5, 1.0f, 0.9f, 0.0f);
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 2; ++j) set_cell(m, i, j, 0.6f, 0.15f, 0.3f);
    if (i > 0 && i < 10) set_cell(m, i, 2, 0.0f, 1.0f, 1.0f);
  }
  const ObjectiveComparison c = compare_objectives(m, {0, 2}, {10, 2});
  CHECK(c.multi.cells != c.locomotion.cells);
  CHECK(c.multi.cells[1].j < 2);
  CHECK(c.locomotion.cells[1].j > 2);
  CHECK(c.energy_percent < 100.0);
  CHECK(c.time_percent > 100.0);
  CHECK(c.multi.min_locomotion == doctest::Approx(0.6));
  const std::string table = comparison_table(c);
  CHECK(table.find("max_cost") != std::string::npos);
  CHECK(table.find("locomotion_only") != std::string::npos);

  const CostRaster cost = build_cost(m, Objective::kMulti);
  write_path_csv(c.multi, cost, scratch("path.csv"));
  std::ifstream f(scratch("path.csv"));
  std::string header;
  std::getline(f, header);
  CHECK(header == "x,y,heading,step_cost,cumulative_cost");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  CHECK(rows == static_cast<int>(c.multi.cells.size()));
  write_path_overlay(c.multi, cost, scratch("path.pgm"));
  CHECK(fs::file_size(scratch("path.pgm")) == std::string("P5\n11 5\n255\n").size() + 55);
}
