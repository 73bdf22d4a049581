#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "trav/sweep.hpp"

namespace trav {

enum class Objective { kMulti, kLocomotionOnly };
const char* objective_name(Objective o);
Objective parse_objective(const std::string& name);

inline constexpr int kMoves = 8;
/// Grid offsets of the eight moves; move k points along compass heading k.
inline constexpr std::array<std::array<int, 2>, kMoves> kMoveOffsets = {
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

/// Length factor u: 1 for axis moves, sqrt(2) for diagonal ones.
double move_length(int move);

/// Cost of one step with measures clipped to [0.1, 1]:
///   multi           (E / L + A) * u
///   locomotion_only (1 / L) * u
double step_cost(double L, double E, double A, Objective objective, int move);

/// Per-cell, per-heading step costs for axis moves (u = 1) plus the clipped
/// measures they were built from. Masked headings are impassable (infinite).
struct CostRaster {
  MapGrid grid;
  Objective objective = Objective::kMulti;
  double target_speed = 0.0;
  std::array<std::vector<double>, kMoves> cost;  ///< [heading][cell]
  std::array<std::array<std::vector<double>, 3>, kMoves> measures;  ///< clipped L, E, A

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * grid.nx + i; }
  bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < grid.nx && j < grid.ny; }
  /// Cost of leaving (i, j) with `move`, including u.
  double edge_cost(int i, int j, int move) const;
};

/// Requires the eight compass headings in order; throws ConfigError otherwise.
CostRaster build_cost(const TraversabilityMap& map, Objective objective);

/// A raster with given axis costs and no measures, for tests and oracles.
CostRaster cost_raster_from(int nx, int ny, const std::array<std::vector<double>, kMoves>& cost);

struct Cell {
  int i = 0, j = 0;
  bool operator==(const Cell&) const = default;
};

struct PathStep {
  Cell from;
  int move = 0;
  double cost = 0.0;        ///< edge cost including u
  double cumulative = 0.0;  ///< after this step
  double L = 1.0, E = 0.0, A = 0.0;
};

struct PlannedPath {
  std::vector<Cell> cells;  ///< start to goal
  std::vector<PathStep> steps;
  double total_cost = 0.0;
  double energy = 0.0;  ///< sum of E * u * stride
  double time = 0.0;    ///< sum of u * stride / (v * L)
  double max_step_cost = 0.0;
  double min_locomotion = 1.0;
};

/// Dijkstra over the 8-connected grid; edge cost from the source cell's
/// heading-specific cost. Ties resolve to the lowest cell index. Throws
/// NoPathError when the goal cannot be reached.
PlannedPath plan(const CostRaster& cost, Cell start, Cell goal);

/// Optimal cost from `start` to every cell (infinity where unreachable).
std::vector<double> cost_to_go(const CostRaster& cost, Cell start);

struct ObjectiveComparison {
  PlannedPath multi;
  PlannedPath locomotion;
  double energy_percent = 100.0;  ///< multi energy relative to locomotion-only
  double time_percent = 100.0;
};

ObjectiveComparison compare_objectives(const TraversabilityMap& map, Cell start, Cell goal);

/// Plain-text table with cost, energy, time, max cost and min locomotion.
std::string comparison_table(const ObjectiveComparison& c);

/// x, y, heading, step cost, cumulative cost per cell (goal row has no step).
void write_path_csv(const PlannedPath& path, const CostRaster& cost, const std::filesystem::path& file);

/// Grayscale of the mean axis cost per cell with the path drawn in white.
void write_path_overlay(const PlannedPath& path, const CostRaster& cost, const std::filesystem::path& file);

}  // namespace trav
