#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lidsa {

using VehicleId = std::uint32_t;

// Compass order is fixed everywhere: N, E, S, W.
enum class Approach : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

inline constexpr std::array<Approach, 4> all_approaches{Approach::N, Approach::E,
                                                        Approach::S, Approach::W};

enum class Maneuver : std::uint8_t { Left = 0, Straight = 1, Right = 2 };

// Ordered by precedence, highest last.
enum class PriorityClass : std::uint8_t { Normal = 0, Transit = 1, Emergency = 2 };

inline const char* to_string(Approach a) {
  switch (a) {
    case Approach::N: return "N";
    case Approach::E: return "E";
    case Approach::S: return "S";
    case Approach::W: return "W";
  }
  return "?";
}

inline const char* to_string(Maneuver m) {
  switch (m) {
    case Maneuver::Left: return "left";
    case Maneuver::Straight: return "straight";
    case Maneuver::Right: return "right";
  }
  return "?";
}

inline const char* to_string(PriorityClass p) {
  switch (p) {
    case PriorityClass::Normal: return "NORMAL";
    case PriorityClass::Transit: return "TRANSIT";
    case PriorityClass::Emergency: return "EMERGENCY";
  }
  return "?";
}

inline std::optional<Approach> parse_approach(const std::string& s) {
  for (Approach a : all_approaches)
    if (s == to_string(a)) return a;
  return std::nullopt;
}

inline std::optional<Maneuver> parse_maneuver(const std::string& s) {
  for (Maneuver m : {Maneuver::Left, Maneuver::Straight, Maneuver::Right})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

inline std::optional<PriorityClass> parse_priority(const std::string& s) {
  for (PriorityClass p : {PriorityClass::Normal, PriorityClass::Transit, PriorityClass::Emergency})
    if (s == to_string(p)) return p;
  return std::nullopt;
}

// Edge a vehicle leaves on. Left/right are relative to the direction of travel
// (a vehicle from N heads south, so its left turn exits east).
inline Approach outbound_edge(Approach a, Maneuver m) {
  auto i = static_cast<int>(a);
  switch (m) {
    case Maneuver::Straight: return static_cast<Approach>((i + 2) % 4);
    case Maneuver::Left: return static_cast<Approach>((i + 1) % 4);
    case Maneuver::Right: return static_cast<Approach>((i + 3) % 4);
  }
  return a;
}

// One cell of the 4x4 grid over the conflict zone. Rows count from the south
// edge, columns from the west edge.
struct Tile {
  int row = 0;
  int col = 0;
  auto operator<=>(const Tile&) const = default;
};

struct PathFootprint {
  std::vector<Tile> tiles;  // sorted, unique

  bool contains(Tile t) const { return std::binary_search(tiles.begin(), tiles.end(), t); }

  bool overlaps(const PathFootprint& other) const {
    auto a = tiles.begin();
    auto b = other.tiles.begin();
    while (a != tiles.end() && b != other.tiles.end()) {
      if (*a == *b) return true;
      if (*a < *b) ++a; else ++b;
    }
    return false;
  }
};

namespace detail {

// Rotates a tile a quarter turn clockwise in compass terms (N -> E).
inline Tile rotate_cw(Tile t) { return Tile{3 - t.col, t.row}; }

inline std::vector<Tile> rotated(std::vector<Tile> tiles, int quarter_turns) {
  for (auto& t : tiles)
    for (int k = 0; k < quarter_turns; ++k) t = rotate_cw(t);
  std::sort(tiles.begin(), tiles.end());
  return tiles;
}

// Lane centers sit 1.5 m either side of the road axis; through movements sweep
// one column/row of 3 m tiles, lefts arc across the middle and keep their
// merge tiles, rights hug the near corner and stop short of the exit lane
// (hook-free: no conflict with the stream they merge into).
inline const std::array<std::array<PathFootprint, 3>, 4>& footprint_table() {
  static const auto table = [] {
    std::array<std::array<PathFootprint, 3>, 4> t;
    const std::vector<Tile> n_straight{{0, 1}, {1, 1}, {2, 1}, {3, 1}};
    const std::vector<Tile> n_left{{1, 2}, {1, 3}, {2, 1}, {2, 2}, {3, 1}};
    const std::vector<Tile> n_right{{3, 1}};
    for (int a = 0; a < 4; ++a) {
      t[a][static_cast<int>(Maneuver::Straight)] = {rotated(n_straight, a)};
      t[a][static_cast<int>(Maneuver::Left)] = {rotated(n_left, a)};
      t[a][static_cast<int>(Maneuver::Right)] = {rotated(n_right, a)};
    }
    return t;
  }();
  return table;
}

}  // namespace detail

// Tiles of the conflict zone swept by movement (a, m). Pure; same result for
// equal arguments.
inline const PathFootprint& footprint(Approach a, Maneuver m) {
  return detail::footprint_table()[static_cast<int>(a)][static_cast<int>(m)];
}

// True when the two movements can co-occupy a tile. Same-approach queries are
// meaningless (one lane feeds all three maneuvers) and rejected.
inline bool conflicts(Approach a, Maneuver ma, Approach b, Maneuver mb) {
  if (a == b) throw std::invalid_argument("conflicts: identical approaches");
  return footprint(a, ma).overlaps(footprint(b, mb));
}

struct ActiveMovement {
  Approach approach;
  Maneuver maneuver;
};

// Approaches among `active` whose movement conflicts with (a, m).
inline std::vector<Approach> conflict_set(Approach a, Maneuver m,
                                          std::span<const ActiveMovement> active) {
  std::vector<Approach> out;
  for (const auto& mv : active) {
    if (mv.approach == a) continue;
    if (conflicts(a, m, mv.approach, mv.maneuver)) out.push_back(mv.approach);
  }
  return out;
}

// Distance covered crossing the zone: through movements run the full side,
// turns follow quarter arcs whose radii come from the same lane geometry
// (left 7.5 m and right 4.5 m on the default 12 m zone).
inline double crossing_path_length_m(Maneuver m, double zone_side_m) {
  constexpr double half_pi = 1.5707963267948966;
  switch (m) {
    case Maneuver::Straight: return zone_side_m;
    case Maneuver::Left: return zone_side_m * 0.625 * half_pi;
    case Maneuver::Right: return zone_side_m * 0.375 * half_pi;
  }
  return zone_side_m;
}

struct TileSpan {
  int cell = 0;     // row * grid + col
  double s0 = 0.0;  // first arc length touching the tile, from the stop line
  double s1 = 0.0;  // last arc length touching the tile
};

struct PathPlan {
  std::vector<TileSpan> spans;
  double length_m = 0.0;
};

// Rasterizes the crossing center-line onto a square grid and records the
// arc-length interval each tile sees. Approaches drive on the right, lane
// centers 1.5 m either side of the road axis on the default 12 m zone. The
// grid may span just the conflict zone (watchdog) or a wider box (AIM).
inline PathPlan sample_path(Approach a, Maneuver m, double box_side, int grid,
                            double zone_side) {
  const double half_zone = zone_side / 2.0;  // stop line offset from center
  const double half_box = box_side / 2.0;
  const double lane = zone_side / 8.0;
  const double r_left = zone_side * 0.625;
  const double r_right = zone_side * 0.375;

  // Build the polyline for a northern arrival, then rotate into place.
  std::vector<std::array<double, 2>> pts;
  auto emit_line = [&pts](std::array<double, 2> from, std::array<double, 2> to) {
    const double dx = to[0] - from[0], dy = to[1] - from[1];
    const double len = std::hypot(dx, dy);
    const int n = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
    for (int i = 0; i <= n; ++i)
      pts.push_back({from[0] + dx * i / n, from[1] + dy * i / n});
  };
  auto emit_arc = [&pts](std::array<double, 2> center, double r, double a0, double a1) {
    const double sweep = a1 - a0;
    const int n = std::max(2, static_cast<int>(std::ceil(std::abs(sweep) * r / 0.25)));
    for (int i = 0; i <= n; ++i) {
      const double ang = a0 + sweep * i / n;
      pts.push_back({center[0] + r * std::cos(ang), center[1] + r * std::sin(ang)});
    }
  };
  const double pi = std::acos(-1.0);
  switch (m) {
    case Maneuver::Straight:
      emit_line({-lane, half_zone}, {-lane, -half_box});
      break;
    case Maneuver::Left:
      emit_arc({half_zone, half_zone}, r_left, pi, 1.5 * pi);
      emit_line({half_zone, -lane}, {half_box, -lane});
      break;
    case Maneuver::Right:
      emit_arc({-half_zone, half_zone}, r_right, 0.0, -0.5 * pi);
      emit_line({-half_zone, lane}, {-half_box, lane});
      break;
  }
  const int k = static_cast<int>(a);  // rotate N-based points clockwise k times
  for (auto& p : pts)
    for (int i = 0; i < k; ++i) p = {p[1], -p[0]};

  PathPlan plan;
  std::map<int, std::pair<double, double>> touched;
  const double cell_m = box_side / grid;
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) s += std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
    const int col = std::clamp(static_cast<int>((pts[i][0] + half_box) / cell_m), 0, grid - 1);
    const int row = std::clamp(static_cast<int>((half_box - pts[i][1]) / cell_m), 0, grid - 1);
    const int cell = row * grid + col;
    auto [it, fresh] = touched.try_emplace(cell, s, s);
    if (!fresh) {
      it->second.first = std::min(it->second.first, s);
      it->second.second = std::max(it->second.second, s);
    }
  }
  plan.length_m = s;
  for (const auto& [cell, span] : touched)
    plan.spans.push_back({cell, span.first, span.second});
  return plan;
}

struct Vehicle {
  VehicleId id = 0;
  Approach approach = Approach::N;
  Maneuver maneuver = Maneuver::Straight;
  PriorityClass priority = PriorityClass::Normal;
  int occupancy = 1;         // persons aboard
  double energy_pref = 0.0;  // alpha, [0, 1]

  double length_m = 5.0;
  double accel_max = 2.6;    // m/s^2
  double decel_max = 4.5;    // m/s^2
  double v_max_type = 13.89; // m/s

  double position_m = 0.0;   // front bumper to stop line; negative once past it
  double speed_mps = 0.0;
  double prev_speed_mps = 0.0;  // speed over the previous step
  int depart_time_s = 0;
  std::optional<int> arrive_time_s;
  std::optional<Approach> exit_edge;  // recorded on arrival

  double cumulative_wait_s = 0.0;  // total time at speed < 0.1
  double near_zone_wait_s = 0.0;   // waiting time accrued inside the near zone
  int stop_count = 0;

  // Trip accumulators folded into run metrics on arrival.
  double fuel_g = 0.0;
  double ke_loss_kj = 0.0;
  double max_decel_obs = 0.0;   // largest single-step speed drop, m/s^2
  double current_stop_s = 0.0;  // length of the ongoing halt, 0 while moving

  bool crossed_line() const { return position_m < 0.0; }
};

// Front vehicle on `a` still short of the stop line and inside the advisory
// horizon. Ties (same position) go to the smaller id.
inline const Vehicle* leader_of(std::span<const Vehicle> vehicles, Approach a,
                                double horizon_m) {
  const Vehicle* best = nullptr;
  for (const auto& v : vehicles) {
    if (v.approach != a || v.position_m < 0.0 || v.position_m > horizon_m) continue;
    if (!best || v.position_m < best->position_m ||
        (v.position_m == best->position_m && v.id < best->id))
      best = &v;
  }
  return best;
}

}  // namespace lidsa
