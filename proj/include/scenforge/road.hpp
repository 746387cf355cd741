// Copyright 2026 The Scenforge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SCENFORGE_ROAD_HPP
#define SCENFORGE_ROAD_HPP

// Road templates as 2D lane-centerline networks plus ego routes. Conventions:
// right-hand traffic, x east / y north, headings in radians measured from +x.
// The ego always spawns at the first waypoint of its route.
//
//   StraightRoad(n)          n = 1: one-way single lane along +x.
//                            n >= 2: two-way, n lanes per direction.
//   FourWayIntersection(sig) arms along the axes, one lane per direction,
//                            ego approaches northbound from the south.
//   TIntersection            two-way bar along x, stem joining from the
//                            south (the ego's right); ego drives eastbound.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenforge/dsl.hpp"

namespace scenforge::road {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }
inline double heading_of(Vec2 v) { return std::atan2(v.y, v.x); }
inline Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

inline double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

struct PolyProjection {
  double s = 0.0;        // arc length of the closest point
  double lateral = 0.0;  // unsigned distance to the polyline
  Vec2 point;            // closest point
  double heading = 0.0;  // tangent heading at the closest point
};

// Closest-point query against a directed polyline.
inline PolyProjection project_polyline(const std::vector<Vec2>& pts, Vec2 p) {
  PolyProjection best;
  best.lateral = 1e18;
  double s_acc = 0.0;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    Vec2 a = pts[i], b = pts[i + 1];
    Vec2 ab = b - a;
    double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::max(0.0, std::min(1.0, t));
    Vec2 q = a + t * ab;
    double d = dist(p, q);
    if (d < best.lateral) {
      best.lateral = d;
      best.point = q;
      best.s = s_acc + t * std::sqrt(len2);
      best.heading = heading_of(ab);
    }
    s_acc += std::sqrt(len2);
  }
  return best;
}

inline double polyline_length(const std::vector<Vec2>& pts) {
  double s = 0.0;
  for (size_t i = 0; i + 1 < pts.size(); ++i) s += dist(pts[i], pts[i + 1]);
  return s;
}

// Point at arc length s (clamped to the ends).
inline Vec2 polyline_at(const std::vector<Vec2>& pts, double s) {
  if (s <= 0.0) return pts.front();
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    double seg = dist(pts[i], pts[i + 1]);
    if (s <= seg) {
      double t = seg > 0.0 ? s / seg : 0.0;
      return pts[i] + t * (pts[i + 1] - pts[i]);
    }
    s -= seg;
  }
  return pts.back();
}

struct Lane {
  int id = 0;
  std::vector<Vec2> centerline;  // directed along travel
  bool ego_direction = false;    // same travel direction group as the ego spawn lane
};

struct Route {
  std::vector<Vec2> waypoints;
  std::vector<int> waypoint_lane;  // prescribed (nearest) lane per waypoint
  double total_length = 0.0;

  double progress_at(Vec2 p) const {
    auto proj = project_polyline(waypoints, p);
    return total_length > 0.0 ? proj.s / total_length : 1.0;
  }

  // Prescribed lane near arc position s.
  int lane_at(double s) const {
    if (waypoints.size() < 2) return waypoint_lane.empty() ? 0 : waypoint_lane[0];
    double acc = 0.0;
    for (size_t i = 0; i + 1 < waypoints.size(); ++i) {
      acc += dist(waypoints[i], waypoints[i + 1]);
      if (s <= acc) return waypoint_lane[i + 1];
    }
    return waypoint_lane.back();
  }
};

// Fixed two-phase signal cycle; the ego approach belongs to phase 0.
struct SignalSchedule {
  double period = 40.0;
  double ego_green_until = 20.0;

  bool ego_red(double t) const {
    double m = std::fmod(t, period);
    return m >= ego_green_until;
  }
};

struct RoadTemplate {
  dsl::RoadTemplateSpec spec;
  double lane_width = 3.5;
  std::vector<Lane> lanes;
  std::vector<Route> routes;
  int ego_spawn_lane = 0;
  bool has_signals = false;
  SignalSchedule signals;
  bool has_stop_signs = false;
  // Arc position of the ego stop line on each route (intersections only).
  std::vector<double> stop_line_s;
  double extent = 200.0;  // placement sanity bound

  const Lane& lane(int id) const { return lanes.at(static_cast<size_t>(id)); }

  PolyProjection nearest_lane(Vec2 p, int* lane_id = nullptr) const {
    PolyProjection best;
    best.lateral = 1e18;
    int best_id = 0;
    for (const auto& ln : lanes) {
      auto proj = project_polyline(ln.centerline, p);
      if (proj.lateral < best.lateral) {
        best = proj;
        best_id = ln.id;
      }
    }
    if (lane_id) *lane_id = best_id;
    return best;
  }

  bool on_road_vicinity(Vec2 p) const {
    if (std::abs(p.x) > extent + 10.0 || std::abs(p.y) > extent + 10.0) return false;
    int id = 0;
    auto proj = nearest_lane(p, &id);
    return proj.lateral <= 6.0 * lane_width;
  }

  // Full road width around a point, used to size crossing distances.
  double road_width_at(Vec2 p) const {
    (void)p;
    if (spec.kind == dsl::RoadTemplateSpec::Kind::StraightRoad) {
      int n = spec.lanes_per_direction;
      return n <= 1 ? lane_width : 2.0 * n * lane_width;
    }
    return 2.0 * lane_width;
  }
};

namespace detail {

inline std::vector<Vec2> straight_points(Vec2 from, Vec2 to, double step = 5.0) {
  std::vector<Vec2> pts;
  double len = dist(from, to);
  int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    double t = static_cast<double>(i) / n;
    pts.push_back(from + t * (to - from));
  }
  return pts;
}

// Quarter arc from angle a0 to a1 around center, radius r.
inline void append_arc(std::vector<Vec2>& pts, Vec2 center, double r, double a0,
                       double a1, int steps = 6) {
  for (int i = 1; i <= steps; ++i) {
    double a = a0 + (a1 - a0) * static_cast<double>(i) / steps;
    pts.push_back(center + r * Vec2{std::cos(a), std::sin(a)});
  }
}

inline void append_straight(std::vector<Vec2>& pts, Vec2 to, double step = 5.0) {
  Vec2 from = pts.back();
  auto seg = straight_points(from, to, step);
  pts.insert(pts.end(), seg.begin() + 1, seg.end());
}

inline void fill_waypoint_lanes(RoadTemplate& t) {
  for (auto& route : t.routes) {
    route.total_length = polyline_length(route.waypoints);
    route.waypoint_lane.clear();
    for (const auto& wp : route.waypoints) {
      int id = 0;
      t.nearest_lane(wp, &id);
      route.waypoint_lane.push_back(id);
    }
  }
}

inline RoadTemplate build_straight(int lanes_per_dir) {
  RoadTemplate t;
  t.spec.kind = dsl::RoadTemplateSpec::Kind::StraightRoad;
  t.spec.lanes_per_direction = lanes_per_dir;
  t.extent = 210.0;
  const double w = t.lane_width;
  int id = 0;
  // Ego-direction lanes head +x; lane i sits at y = -(i + 0.5) w with i = 0
  // nearest the road center line.
  for (int i = 0; i < lanes_per_dir; ++i) {
    Lane ln;
    ln.id = id++;
    ln.ego_direction = true;
    ln.centerline = straight_points({-40.0, -(i + 0.5) * w}, {200.0, -(i + 0.5) * w});
    t.lanes.push_back(std::move(ln));
  }
  if (lanes_per_dir >= 2) {
    for (int j = 0; j < lanes_per_dir; ++j) {
      Lane ln;
      ln.id = id++;
      ln.ego_direction = false;
      ln.centerline = straight_points({200.0, (j + 0.5) * w}, {-40.0, (j + 0.5) * w});
      t.lanes.push_back(std::move(ln));
    }
  }
  t.ego_spawn_lane = lanes_per_dir >= 2 ? 1 : 0;
  double y_spawn = -(t.ego_spawn_lane + 0.5) * w;

  Route straight_long;
  straight_long.waypoints = straight_points({0.0, y_spawn}, {150.0, y_spawn});
  t.routes.push_back(std::move(straight_long));

  if (lanes_per_dir >= 2) {
    // Lane change into the left-adjacent lane between x = 55 and x = 80.
    Route change;
    change.waypoints = straight_points({0.0, y_spawn}, {55.0, y_spawn});
    double y_target = -0.5 * w;
    append_straight(change.waypoints, {80.0, y_target}, 5.0);
    append_straight(change.waypoints, {150.0, y_target}, 5.0);
    t.routes.push_back(std::move(change));
  }

  Route straight_short;
  straight_short.waypoints = straight_points({0.0, y_spawn}, {100.0, y_spawn});
  t.routes.push_back(std::move(straight_short));

  fill_waypoint_lanes(t);
  return t;
}

inline RoadTemplate build_four_way(bool signalized) {
  RoadTemplate t;
  t.spec.kind = dsl::RoadTemplateSpec::Kind::FourWayIntersection;
  t.spec.signalized = signalized;
  t.extent = 85.0;
  const double w = t.lane_width;
  const double h = 0.5 * w;
  const double arm = 80.0;

  auto add_lane = [&](Vec2 a, Vec2 b, bool ego_dir) {
    Lane ln;
    ln.id = static_cast<int>(t.lanes.size());
    ln.ego_direction = ego_dir;
    ln.centerline = straight_points(a, b);
    t.lanes.push_back(std::move(ln));
    return ln.id;
  };

  int northbound = add_lane({h, -arm}, {h, arm}, true);
  add_lane({-h, arm}, {-h, -arm}, false);   // southbound
  add_lane({-arm, -h}, {arm, -h}, false);   // eastbound
  add_lane({arm, h}, {-arm, h}, false);     // westbound
  t.ego_spawn_lane = northbound;

  // Route 0: through, northbound.
  Route through;
  through.waypoints = straight_points({h, -60.0}, {h, 70.0});
  t.routes.push_back(std::move(through));

  // Route 1: right turn onto the eastbound arm, radius 8.
  {
    Route r;
    double radius = 8.0;
    double y0 = -h - radius;
    r.waypoints = straight_points({h, -60.0}, {h, y0});
    append_arc(r.waypoints, {h + radius, y0}, radius, kPi, 0.5 * kPi, 6);
    append_straight(r.waypoints, {70.0, -h});
    t.routes.push_back(std::move(r));
  }

  // Route 2: left turn onto the westbound arm, radius 10.
  {
    Route r;
    double radius = 10.0;
    double y0 = h - radius;
    r.waypoints = straight_points({h, -60.0}, {h, y0});
    append_arc(r.waypoints, {h - radius, y0}, radius, 0.0, 0.5 * kPi, 6);
    append_straight(r.waypoints, {-70.0, h});
    t.routes.push_back(std::move(r));
  }

  if (signalized) {
    t.has_signals = true;
  } else {
    t.has_stop_signs = true;
  }
  fill_waypoint_lanes(t);
  // Ego stop line two meters before the intersection box on every route.
  double stop_y = -(w + 2.0);
  for (auto& route : t.routes) {
    auto proj = project_polyline(route.waypoints, {h, stop_y});
    t.stop_line_s.push_back(proj.s);
  }
  return t;
}

inline RoadTemplate build_t_intersection() {
  RoadTemplate t;
  t.spec.kind = dsl::RoadTemplateSpec::Kind::TIntersection;
  t.extent = 85.0;
  const double w = t.lane_width;
  const double h = 0.5 * w;
  const double arm = 80.0;

  auto add_lane = [&](Vec2 a, Vec2 b, bool ego_dir) {
    Lane ln;
    ln.id = static_cast<int>(t.lanes.size());
    ln.ego_direction = ego_dir;
    ln.centerline = straight_points(a, b);
    t.lanes.push_back(std::move(ln));
    return ln.id;
  };

  int eastbound = add_lane({-arm, -h}, {arm, -h}, true);
  add_lane({arm, h}, {-arm, h}, false);    // westbound
  add_lane({h, -arm}, {h, 0.0}, false);    // stem, toward the junction
  add_lane({-h, 0.0}, {-h, -arm}, false);  // stem, away from the junction
  t.ego_spawn_lane = eastbound;

  Route through;
  through.waypoints = straight_points({-60.0, -h}, {70.0, -h});
  t.routes.push_back(std::move(through));

  // Right turn into the stem, radius 8.
  {
    Route r;
    double radius = 8.0;
    double x0 = -h - radius;
    r.waypoints = straight_points({-60.0, -h}, {x0, -h});
    append_arc(r.waypoints, {x0, -h - radius}, radius, 0.5 * kPi, 0.0, 6);
    append_straight(r.waypoints, {-h, -60.0});
    t.routes.push_back(std::move(r));
  }

  fill_waypoint_lanes(t);
  return t;
}

}  // namespace detail

inline RoadTemplate build_template(const dsl::RoadTemplateSpec& spec) {
  switch (spec.kind) {
    case dsl::RoadTemplateSpec::Kind::StraightRoad:
      if (spec.lanes_per_direction < 1 || spec.lanes_per_direction > 3)
        throw std::invalid_argument("StraightRoad supports 1..3 lanes per direction");
      return detail::build_straight(spec.lanes_per_direction);
    case dsl::RoadTemplateSpec::Kind::FourWayIntersection:
      return detail::build_four_way(spec.signalized);
    case dsl::RoadTemplateSpec::Kind::TIntersection:
      return detail::build_t_intersection();
  }
  throw std::invalid_argument("unknown road template");
}

}  // namespace scenforge::road

#endif  // SCENFORGE_ROAD_HPP
