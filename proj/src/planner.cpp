#include "trav/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>

#include "trav/errors.hpp"

namespace trav {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kClipLo = 0.1;

double clip(double x) { return std::clamp(x, kClipLo, 1.0); }

}  // namespace

const char* objective_name(Objective o) { return o == Objective::kMulti ? "multi" : "locomotion_only"; }

Objective parse_objective(const std::string& name) {
  if (name == "multi") return Objective::kMulti;
  if (name == "locomotion_only" || name == "locomotion") return Objective::kLocomotionOnly;
  throw ArgumentError("unknown objective '" + name + "'");
}

double move_length(int move) {
  if (move < 0 || move >= kMoves) throw ArgumentError("move index out of range");
  return move % 2 == 0 ? 1.0 : std::sqrt(2.0);
}

double step_cost(double L, double E, double A, Objective objective, int move) {
  const double base = objective == Objective::kMulti ? clip(E) / clip(L) + A : 1.0 / clip(L);
  return base * move_length(move);
}

double CostRaster::edge_cost(int i, int j, int move) const { return cost[move][index(i, j)] * move_length(move); }

CostRaster build_cost(const TraversabilityMap& map, Objective objective) {
  if (map.headings.size() != static_cast<std::size_t>(kMoves))
    throw ConfigError("planning needs a map with all eight headings");
  const auto compass = compass_headings(kMoves);
  for (int k = 0; k < kMoves; ++k)
    if ((map.headings[k] - compass[k]).norm() > 1e-9)
      throw ConfigError("map heading " + std::to_string(k) + " is not the compass heading the planner expects");
  for (int k = 0; k < kMoves; ++k)
    for (int m = 0; m < 3; ++m)
      if (map.values.size() != static_cast<std::size_t>(kMoves) || map.values[k][m].size() != map.grid.cells())
        throw ConfigError("map is missing measure " + std::string(measure_name(m)) + " for heading " + std::to_string(k));

  CostRaster c;
  c.grid = map.grid;
  c.objective = objective;
  c.target_speed = map.target_speed;
  const std::size_t n = map.grid.cells();
  for (int k = 0; k < kMoves; ++k) {
    c.cost[k].assign(n, kInf);
    for (int m = 0; m < 3; ++m) c.measures[k][m].assign(n, 0.0);
    for (std::size_t cell = 0; cell < n; ++cell) {
      if (!map.valid[k][cell]) continue;
      const double L = map.values[k][0][cell];
      const double E = map.values[k][1][cell];
      const double A = map.values[k][2][cell];
      c.cost[k][cell] = step_cost(L, E, A, objective, 0);
      c.measures[k][0][cell] = clip(L);
      c.measures[k][1][cell] = clip(E);
      c.measures[k][2][cell] = A;
    }
  }
  return c;
}

CostRaster cost_raster_from(int nx, int ny, const std::array<std::vector<double>, kMoves>& cost) {
  if (nx < 1 || ny < 1) throw ArgumentError("raster needs at least one cell");
  CostRaster c;
  c.grid.nx = nx;
  c.grid.ny = ny;
  c.target_speed = 1.0;
  for (int k = 0; k < kMoves; ++k) {
    if (cost[k].size() != c.grid.cells()) throw ArgumentError("cost layer has the wrong size");
    for (double x : cost[k])
      if (!(x > 0.0)) throw ArgumentError("step costs must be positive");
    c.cost[k] = cost[k];
    c.measures[k][0].assign(c.grid.cells(), 1.0);
    c.measures[k][1].assign(c.grid.cells(), 0.0);
    c.measures[k][2].assign(c.grid.cells(), 0.0);
  }
  return c;
}

namespace {

struct Search {
  std::vector<double> dist;
  std::vector<std::size_t> pred;
  std::vector<int> pred_move;
};

Search dijkstra(const CostRaster& c, Cell start, std::size_t stop_at) {
  const std::size_t n = c.grid.cells();
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  Search s{std::vector<double>(n, kInf), std::vector<std::size_t>(n, none), std::vector<int>(n, -1)};
  std::vector<char> done(n, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  const std::size_t src = c.index(start.i, start.j);
  s.dist[src] = 0.0;
  queue.push({0.0, src});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == stop_at) break;
    const int ui = static_cast<int>(u % c.grid.nx);
    const int uj = static_cast<int>(u / c.grid.nx);
    for (int m = 0; m < kMoves; ++m) {
      const int vi = ui + kMoveOffsets[m][0];
      const int vj = uj + kMoveOffsets[m][1];
      if (!c.in_bounds(vi, vj)) continue;
      const double w = c.edge_cost(ui, uj, m);
      if (!(w < kInf)) continue;
      const std::size_t v = c.index(vi, vj);
      if (done[v]) continue;
      const double nd = d + w;
      if (nd < s.dist[v] || (nd == s.dist[v] && u < s.pred[v])) {
        if (nd < s.dist[v]) queue.push({nd, v});
        s.dist[v] = nd;
        s.pred[v] = u;
        s.pred_move[v] = m;
      }
    }
  }
  return s;
}

void check_cell(const CostRaster& c, Cell x, const char* what) {
  if (!c.in_bounds(x.i, x.j))
    throw ArgumentError(std::string(what) + " (" + std::to_string(x.i) + ", " + std::to_string(x.j) + ") is outside the map");
}

}  // namespace

std::vector<double> cost_to_go(const CostRaster& cost, Cell start) {
  check_cell(cost, start, "start");
  return dijkstra(cost, start, std::numeric_limits<std::size_t>::max()).dist;
}

PlannedPath plan(const CostRaster& cost, Cell start, Cell goal) {
  check_cell(cost, start, "start");
  check_cell(cost, goal, "goal");
  if (start == goal) throw ArgumentError("start and goal coincide");
  const std::size_t g = cost.index(goal.i, goal.j);
  const Search s = dijkstra(cost, start, g);
  if (!(s.dist[g] < kInf)) throw NoPathError("goal is unreachable from the start");

  std::vector<std::size_t> chain;
  for (std::size_t v = g;; v = s.pred[v]) {
    chain.push_back(v);
    if (v == cost.index(start.i, start.j)) break;
  }
  std::reverse(chain.begin(), chain.end());

  PlannedPath p;
  const double stride = cost.grid.stride;
  const double v = cost.target_speed > 0.0 ? cost.target_speed : 1.0;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const Cell cell{static_cast<int>(chain[k] % cost.grid.nx), static_cast<int>(chain[k] / cost.grid.nx)};
    p.cells.push_back(cell);
    if (k + 1 == chain.size()) break;
    PathStep st;
    st.from = cell;
    st.move = s.pred_move[chain[k + 1]];
    st.cost = cost.edge_cost(cell.i, cell.j, st.move);
    p.total_cost += st.cost;
    st.cumulative = p.total_cost;
    st.L = cost.measures[st.move][0][chain[k]];
    st.E = cost.measures[st.move][1][chain[k]];
    st.A = cost.measures[st.move][2][chain[k]];
    const double len = move_length(st.move) * stride;
    p.energy += st.E * len;
    p.time += len / (v * st.L);
    p.max_step_cost = std::max(p.max_step_cost, st.cost);
    p.min_locomotion = std::min(p.min_locomotion, st.L);
    p.steps.push_back(st);
  }
  return p;
}

ObjectiveComparison compare_objectives(const TraversabilityMap& map, Cell start, Cell goal) {
  ObjectiveComparison c;
  c.multi = plan(build_cost(map, Objective::kMulti), start, goal);
  c.locomotion = plan(build_cost(map, Objective::kLocomotionOnly), start, goal);
  c.energy_percent = c.locomotion.energy > 0.0 ? 100.0 * c.multi.energy / c.locomotion.energy : 100.0;
  c.time_percent = c.locomotion.time > 0.0 ? 100.0 * c.multi.time / c.locomotion.time : 100.0;
  return c;
}

std::string comparison_table(const ObjectiveComparison& c) {
  std::string out = "objective        steps  cost      energy    time      max_cost  min_L     energy_%  time_%\n";
  char buf[256];
  auto row = [&](const char* name, const PlannedPath& p, double e, double t) {
    std::snprintf(buf, sizeof buf, "%-16s %5zu  %-8.4g  %-8.4g  %-8.4g  %-8.4g  %-8.4g  %-8.1f  %.1f\n", name,
                  p.steps.size(), p.total_cost, p.energy, p.time, p.max_step_cost, p.min_locomotion, e, t);
    out += buf;
  };
  row("multi", c.multi, c.energy_percent, c.time_percent);
  row("locomotion_only", c.locomotion, 100.0, 100.0);
  return out;
}

void write_path_csv(const PlannedPath& path, const CostRaster& cost, const fs::path& file) {
  std::ofstream f(file);
  if (!f) throw ConfigError("cannot write " + file.string());
  f << "x,y,heading,step_cost,cumulative_cost\n";
  f.precision(12);
  for (std::size_t k = 0; k < path.cells.size(); ++k) {
    const Cell c = path.cells[k];
    f << cost.grid.x(c.i) << "," << cost.grid.y(c.j) << ",";
    if (k < path.steps.size())
      f << path.steps[k].move << "," << path.steps[k].cost << "," << path.steps[k].cumulative << "\n";
    else
      f << ",," << path.total_cost << "\n";
  }
  if (!f) throw ConfigError("failed writing " + file.string());
}

void write_path_overlay(const PlannedPath& path, const CostRaster& cost, const fs::path& file) {
  const std::size_t n = cost.grid.cells();
  std::vector<float> shade(n, 0.0f);
  std::vector<std::uint8_t> valid(n, 1);
  const double lo = std::log(0.1), hi = std::log(11.0);
  for (std::size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    int k = 0;
    for (int m = 0; m < kMoves; ++m)
      if (cost.cost[m][c] < kInf) {
        sum += cost.cost[m][c];
        ++k;
      }
    if (k == 0) {
      valid[c] = 0;
      continue;
    }
    shade[c] = static_cast<float>(0.8 * std::clamp((std::log(sum / k) - lo) / (hi - lo), 0.0, 1.0));
  }
  for (const Cell& c : path.cells) {
    shade[cost.index(c.i, c.j)] = 1.0f;
    valid[cost.index(c.i, c.j)] = 1;
  }
  write_pgm(shade, valid, cost.grid.nx, cost.grid.ny, file);
}

}  // namespace trav
