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

#ifndef SCENFORGE_SIM_HPP
#define SCENFORGE_SIM_HPP

// Deterministic fixed-step 2D kinematic simulator. A scene is one ego driving
// a route plus scripted adversaries; behavior programs advance one action per
// frame, every agent integrates synchronously, and per-frame flags (collision,
// lane invasion, out-of-road, signal/stop violations, route progress) are
// recorded into a SceneTrace. Runs are pure functions of (config, policy,
// seed); the sim itself draws no randomness, the seed is carried into the
// trace for provenance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenforge/dsl.hpp"
#include "scenforge/road.hpp"
#include "scenforge/sampler.hpp"
#include "scenforge/text.hpp"

namespace scenforge::sim {

using road::Vec2;

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RouteOutOfRangeError : public SimError {
 public:
  using SimError::SimError;
};

class PlacementError : public SimError {
 public:
  using SimError::SimError;
};

// ---------------------------------------------------------------------------
// Agents

enum class AgentClass { Car, Pedestrian, Cyclist, Motorcycle };

inline const char* to_string(AgentClass c) {
  switch (c) {
    case AgentClass::Car: return "car";
    case AgentClass::Pedestrian: return "pedestrian";
    case AgentClass::Cyclist: return "cyclist";
    case AgentClass::Motorcycle: return "motorcycle";
  }
  return "?";
}

inline std::optional<AgentClass> agent_class_from_string(std::string_view s) {
  if (s == "car") return AgentClass::Car;
  if (s == "pedestrian") return AgentClass::Pedestrian;
  if (s == "cyclist") return AgentClass::Cyclist;
  if (s == "motorcycle") return AgentClass::Motorcycle;
  return std::nullopt;
}

inline double footprint_radius(AgentClass c) {
  switch (c) {
    case AgentClass::Car: return 1.2;
    case AgentClass::Pedestrian: return 0.4;
    case AgentClass::Cyclist:
    case AgentClass::Motorcycle: return 0.6;
  }
  return 1.0;
}

// Longitudinal rate limit. Pedestrians change walking speed much faster than
// vehicles accelerate.
inline double accel_cap(AgentClass c) {
  return c == AgentClass::Pedestrian ? 10.0 : 6.0;
}

constexpr double kMaxSpeed = 20.0;
constexpr double kAdvYawRateCap = 1.0;

struct AgentSetup {
  AgentClass cls = AgentClass::Car;
  double radius = 1.2;
  Vec2 pos;
  double yaw = 0.0;
  double speed = 0.0;
  bool is_ego = false;
  // Resolved behavior program (every param reference replaced by its sampled
  // value). Empty for the ego.
  std::vector<dsl::Statement> program;
};

struct SceneConfig {
  road::RoadTemplate road;
  int route_id = 0;
  double dt = 0.1;
  int max_steps = 300;
  std::vector<AgentSetup> agents;  // agents[0] is the ego
  sampler::ParamAssignment assignment;

  const road::Route& route() const {
    return road.routes.at(static_cast<size_t>(route_id));
  }
};

struct AgentDyn {
  Vec2 pos;
  double yaw = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double yaw_rate = 0.0;
};

// Ego actuation command; bounds enforced by the simulator.
struct EgoCommand {
  double accel = 0.0;     // [-6, 3] m/s^2
  double yaw_rate = 0.0;  // [-0.6, 0.6] rad/s
};

struct EgoView {
  const SceneConfig* cfg = nullptr;
  const std::vector<AgentDyn>* agents = nullptr;  // index 0 = ego
  double t = 0.0;
};

using EgoPolicy = std::function<EgoCommand(const EgoView&)>;

// ---------------------------------------------------------------------------
// Scene construction from a validated script

namespace detail {

inline double eval_number(const dsl::Expr& e, const sampler::ParamAssignment& a) {
  switch (e.kind) {
    case dsl::Expr::Kind::Number: return e.number;
    case dsl::Expr::Kind::Param: {
      auto it = a.find(e.param);
      if (it == a.end()) throw SimError("assignment missing parameter: " + e.param);
      return it->second;
    }
    default: throw SimError("expression is not numeric");
  }
}

inline dsl::Expr resolve_expr(const dsl::Expr& e, const sampler::ParamAssignment& a) {
  if (e.kind == dsl::Expr::Kind::Param)
    return dsl::Expr::make_number(eval_number(e, a));
  return e;
}

inline std::vector<dsl::Statement> resolve_program(
    const std::vector<dsl::Statement>& stmts, const sampler::ParamAssignment& a) {
  std::vector<dsl::Statement> out;
  for (const auto& st : stmts) {
    dsl::Statement r;
    if (const auto* call = std::get_if<dsl::CallStmt>(&st.node)) {
      dsl::CallStmt c = *call;
      for (auto& arg : c.args) arg = resolve_expr(arg, a);
      r.node = std::move(c);
    } else if (const auto* ss = std::get_if<dsl::SetSpeedStmt>(&st.node)) {
      r.node = dsl::SetSpeedStmt{resolve_expr(ss->value, a)};
    } else if (const auto* tr = std::get_if<dsl::TryInterruptStmt>(&st.node)) {
      dsl::TryInterruptStmt t;
      t.body = resolve_program(tr->body, a);
      t.condition = tr->condition;
      t.condition.arg = resolve_expr(tr->condition.arg, a);
      t.handler = resolve_program(tr->handler, a);
      r.node = std::move(t);
    } else if (const auto* lp = std::get_if<dsl::LoopStmt>(&st.node)) {
      dsl::LoopStmt l;
      l.body = resolve_program(lp->body, a);
      r.node = std::move(l);
    } else {
      continue;  // param decls carry no runtime action
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline const dsl::CallStmt* first_call(const std::vector<dsl::Statement>& stmts) {
  for (const auto& st : stmts) {
    if (const auto* call = std::get_if<dsl::CallStmt>(&st.node)) return call;
    if (const auto* tr = std::get_if<dsl::TryInterruptStmt>(&st.node)) {
      if (const auto* c = first_call(tr->body)) return c;
      if (const auto* c = first_call(tr->handler)) return c;
    }
    if (const auto* lp = std::get_if<dsl::LoopStmt>(&st.node)) {
      if (const auto* c = first_call(lp->body)) return c;
    }
  }
  return nullptr;
}

// Opposite-direction lane closest to a query point.
inline const road::Lane* oncoming_lane_near(const road::RoadTemplate& t, Vec2 q,
                                            double ego_heading) {
  const road::Lane* best = nullptr;
  double best_lat = 1e18;
  for (const auto& ln : t.lanes) {
    auto proj = road::project_polyline(ln.centerline, q);
    double diff = road::wrap_angle(proj.heading - ego_heading - road::kPi);
    if (std::abs(diff) > 0.3) continue;
    if (proj.lateral < best_lat) {
      best_lat = proj.lateral;
      best = &ln;
    }
  }
  return best;
}

// Crossing-arm lane whose travel heading matches the requested crossing
// direction (from the left: heading ego_heading - pi/2; from the right: +).
inline const road::Lane* crossing_lane(const road::RoadTemplate& t, double want_heading) {
  for (const auto& ln : t.lanes) {
    double h = road::heading_of(ln.centerline[1] - ln.centerline[0]);
    if (std::abs(road::wrap_angle(h - want_heading)) < 0.2) return &ln;
  }
  return nullptr;
}

}  // namespace detail

inline AgentClass adversary_class(const dsl::SnippetAst& behavior) {
  const auto* call = detail::first_call(behavior.statements);
  if (call && call->primitive == "CrossingBehavior") return AgentClass::Pedestrian;
  return AgentClass::Car;
}

inline SceneConfig build_scene(const dsl::SceneScript& script,
                               const sampler::ParamAssignment& assignment,
                               int route_id) {
  auto report = dsl::validate(script);
  if (!report.ok())
    throw SimError("script failed validation: " + report.issues.front().message);
  for (const auto& p : script.params) {
    if (!assignment.count(p.name))
      throw SimError("assignment missing parameter: " + p.name);
  }

  SceneConfig cfg;
  cfg.road = road::build_template(dsl::road_template_of(script.geometry));
  if (route_id < 0 || route_id >= static_cast<int>(cfg.road.routes.size()))
    throw RouteOutOfRangeError("route " + std::to_string(route_id) + " not in [0, " +
                               std::to_string(cfg.road.routes.size()) + ")");
  cfg.route_id = route_id;
  cfg.assignment = assignment;

  const auto& route = cfg.route();
  Vec2 ego_pos = route.waypoints.front();
  double ego_yaw = road::heading_of(route.waypoints[1] - route.waypoints[0]);

  AgentSetup ego;
  ego.cls = AgentClass::Car;
  ego.radius = footprint_radius(AgentClass::Car);
  ego.pos = ego_pos;
  ego.yaw = ego_yaw;
  ego.speed = 6.0;
  ego.is_ego = true;
  cfg.agents.push_back(std::move(ego));

  const auto& spawn_call = std::get<dsl::CallStmt>(script.spawn.statements.at(0).node);
  double d = detail::eval_number(spawn_call.args.at(0), assignment);
  const double w = cfg.road.lane_width;
  Vec2 dir = road::unit(ego_yaw);
  Vec2 left = road::unit(ego_yaw + road::kPi / 2.0);
  Vec2 right = road::unit(ego_yaw - road::kPi / 2.0);

  AgentSetup adv;
  adv.cls = adversary_class(script.behavior);
  adv.radius = footprint_radius(adv.cls);
  adv.program = detail::resolve_program(script.behavior.statements, assignment);
  adv.yaw = ego_yaw;

  const std::string& prim = spawn_call.primitive;
  if (prim == "Ahead") {
    adv.pos = ego_pos + d * dir;
  } else if (prim == "Behind") {
    adv.pos = ego_pos - d * dir;
  } else if (prim == "LeftFront") {
    adv.pos = ego_pos + d * dir + w * left;
  } else if (prim == "RightFront") {
    adv.pos = ego_pos + d * dir + w * right;
  } else if (prim == "OncomingLane") {
    Vec2 q = ego_pos + d * dir;
    const road::Lane* lane = detail::oncoming_lane_near(cfg.road, q, ego_yaw);
    if (!lane) throw PlacementError("no oncoming lane on this template");
    auto proj = road::project_polyline(lane->centerline, q);
    adv.pos = proj.point;
    adv.yaw = proj.heading;
  } else if (prim == "CrossingFromLeft" || prim == "CrossingFromRight") {
    bool from_left = prim == "CrossingFromLeft";
    double cross_heading =
        road::wrap_angle(ego_yaw + (from_left ? -1.0 : 1.0) * road::kPi / 2.0);
    if (cfg.road.spec.kind == dsl::RoadTemplateSpec::Kind::StraightRoad) {
      // Road edges from the extreme lane centers (lanes run along +x, ego
      // heads +x, so "left" is +y).
      double y_min = 1e18, y_max = -1e18;
      for (const auto& ln : cfg.road.lanes) {
        y_min = std::min(y_min, ln.centerline.front().y);
        y_max = std::max(y_max, ln.centerline.front().y);
      }
      double edge_y = from_left ? y_max + 0.5 * w + 1.0 : y_min - 0.5 * w - 1.0;
      adv.pos = {ego_pos.x + d, edge_y};
      adv.yaw = cross_heading;
    } else {
      const road::Lane* lane = detail::crossing_lane(cfg.road, cross_heading);
      if (!lane) throw PlacementError("no crossing arm in that direction");
      auto center_proj = road::project_polyline(lane->centerline, {0.0, 0.0});
      double s = center_proj.s - d;
      if (s < 0.0) throw PlacementError("crossing spawn beyond the arm start");
      adv.pos = road::polyline_at(lane->centerline, s);
      adv.yaw = cross_heading;
    }
  } else {
    throw SimError("unknown spawn primitive: " + prim);
  }

  if (!cfg.road.on_road_vicinity(adv.pos)) {
    throw PlacementError("spawn pose is off the road");
  }
  cfg.agents.push_back(std::move(adv));
  return cfg;
}

// ---------------------------------------------------------------------------
// Behavior program execution

namespace detail {

struct Action {
  enum class Steer { Hold, FollowLane, FixedHeading };
  double target_speed = 0.0;
  double rate = 6.0;
  Steer steer = Steer::Hold;
  int lane_id = -1;
  double heading = 0.0;
};

struct World {
  const SceneConfig* cfg;
  const std::vector<AgentDyn>* agents;
  size_t self_index;

  const AgentDyn& self() const { return (*agents)[self_index]; }
  const AgentDyn& ego() const { return (*agents)[0]; }

  int ego_lane() const {
    int id = 0;
    cfg->road.nearest_lane(ego().pos, &id);
    return id;
  }

  double dist_to_ego_lane() const {
    int id = ego_lane();
    return road::project_polyline(cfg->road.lane(id).centerline, self().pos).lateral;
  }
};

inline bool eval_predicate(const dsl::Predicate& p, const World& w) {
  switch (p.kind) {
    case dsl::Predicate::Kind::WithinDistanceToAnyCars: {
      double d = p.arg.number;
      for (size_t i = 0; i < w.agents->size(); ++i) {
        if (i == w.self_index) continue;
        if (w.cfg->agents[i].cls != AgentClass::Car) continue;
        if (road::dist((*w.agents)[i].pos, w.self().pos) <= d) return true;
      }
      return false;
    }
    case dsl::Predicate::Kind::InSameLaneAsEgo: {
      int self_id = 0;
      w.cfg->road.nearest_lane(w.self().pos, &self_id);
      return self_id == w.ego_lane();
    }
    case dsl::Predicate::Kind::DistanceToEgoLaneLess:
      return w.dist_to_ego_lane() < p.arg.number;
  }
  return false;
}

class Node {
 public:
  virtual ~Node() = default;
  virtual void reset() = 0;
  virtual bool done(const World& w) const = 0;
  // Emits this frame's action; may be empty exactly when done.
  virtual std::optional<Action> tick(const World& w) = 0;
};

using NodePtr = std::unique_ptr<Node>;

class SeqNode final : public Node {
 public:
  explicit SeqNode(std::vector<NodePtr> children) : children_(std::move(children)) {}

  void reset() override {
    idx_ = 0;
    for (auto& c : children_) c->reset();
  }

  bool done(const World& w) const override {
    size_t i = idx_;
    while (i < children_.size() && children_[i]->done(w)) ++i;
    return i >= children_.size();
  }

  std::optional<Action> tick(const World& w) override {
    while (idx_ < children_.size()) {
      if (children_[idx_]->done(w)) {
        ++idx_;
        continue;
      }
      auto a = children_[idx_]->tick(w);
      if (a) return a;
      ++idx_;
    }
    return std::nullopt;
  }

 private:
  std::vector<NodePtr> children_;
  size_t idx_ = 0;
};

class CrossingNode final : public Node {
 public:
  CrossingNode(double speed, double trigger) : speed_(speed), trigger_(trigger) {}

  void reset() override { phase_ = Phase::Wait; traveled_from_ = Vec2{}; span_ = 0.0; }

  bool done(const World& w) const override {
    return phase_ == Phase::Cross && road::dist(w.self().pos, traveled_from_) >= span_;
  }

  std::optional<Action> tick(const World& w) override {
    if (phase_ == Phase::Wait) {
      if (road::dist(w.self().pos, w.ego().pos) <= trigger_) {
        start_crossing(w);
      } else {
        Action a;
        a.target_speed = 0.0;
        a.steer = Action::Steer::Hold;
        return a;
      }
    }
    if (done(w)) return std::nullopt;
    Action a;
    a.target_speed = speed_;
    a.steer = Action::Steer::FixedHeading;
    a.heading = heading_;
    return a;
  }

 private:
  enum class Phase { Wait, Cross };

  void start_crossing(const World& w) {
    phase_ = Phase::Cross;
    traveled_from_ = w.self().pos;
    const auto& route = w.cfg->route();
    auto proj = road::project_polyline(route.waypoints, w.self().pos);
    Vec2 to_path = proj.point - w.self().pos;
    double dist_to_path = road::norm(to_path);
    if (dist_to_path > 0.2) {
      heading_ = road::heading_of(to_path);
    } else {
      heading_ = road::wrap_angle(w.ego().yaw + road::kPi / 2.0);
    }
    span_ = 2.0 * dist_to_path + 4.0;
  }

  double speed_;
  double trigger_;
  Phase phase_ = Phase::Wait;
  Vec2 traveled_from_;
  double span_ = 0.0;
  double heading_ = 0.0;
};

class FollowLaneNode final : public Node {
 public:
  explicit FollowLaneNode(double target_speed) : target_(target_speed) {}

  void reset() override { lane_ = -1; }
  bool done(const World&) const override { return false; }

  std::optional<Action> tick(const World& w) override {
    if (lane_ < 0) w.cfg->road.nearest_lane(w.self().pos, &lane_);
    Action a;
    a.target_speed = target_;
    a.steer = Action::Steer::FollowLane;
    a.lane_id = lane_;
    return a;
  }

 private:
  double target_;
  int lane_ = -1;
};

class LaneChangeNode final : public Node {
 public:
  explicit LaneChangeNode(double target_speed) : target_speed_(target_speed) {}

  void reset() override { target_lane_ = -1; no_target_ = false; }

  bool done(const World& w) const override {
    if (no_target_) return true;
    if (target_lane_ < 0) return false;
    auto proj = road::project_polyline(w.cfg->road.lane(target_lane_).centerline,
                                       w.self().pos);
    double herr = road::wrap_angle(proj.heading - w.self().yaw);
    return proj.lateral < 0.15 && std::abs(herr) < 0.1;
  }

  std::optional<Action> tick(const World& w) override {
    if (target_lane_ < 0 && !no_target_) pick_target(w);
    if (no_target_ || done(w)) return std::nullopt;
    Action a;
    a.target_speed = target_speed_;
    a.steer = Action::Steer::FollowLane;
    a.lane_id = target_lane_;
    return a;
  }

 private:
  void pick_target(const World& w) {
    int cur = 0;
    w.cfg->road.nearest_lane(w.self().pos, &cur);
    bool group = w.cfg->road.lane(cur).ego_direction;
    int ego_lane = w.ego_lane();
    if (ego_lane != cur && w.cfg->road.lane(ego_lane).ego_direction == group) {
      target_lane_ = ego_lane;  // merge toward the ego's lane
      return;
    }
    double best = 1e18;
    int pick = -1;
    for (const auto& ln : w.cfg->road.lanes) {
      if (ln.id == cur || ln.ego_direction != group) continue;
      auto proj = road::project_polyline(ln.centerline, w.self().pos);
      if (proj.lateral < best) {
        best = proj.lateral;
        pick = ln.id;
      }
    }
    if (pick < 0) {
      no_target_ = true;
    } else {
      target_lane_ = pick;
    }
  }

  double target_speed_;
  int target_lane_ = -1;
  bool no_target_ = false;
};

class StopNode final : public Node {
 public:
  void reset() override {}
  bool done(const World& w) const override { return w.self().speed <= 1e-9; }
  std::optional<Action> tick(const World& w) override {
    if (done(w)) return std::nullopt;
    Action a;
    a.target_speed = 0.0;
    a.rate = 4.0;
    return a;
  }
};

class RampNode final : public Node {
 public:
  RampNode(double target, double rate) : target_(target), rate_(rate) {}
  void reset() override {}
  bool done(const World& w) const override {
    return std::abs(w.self().speed - target_) <= 1e-9;
  }
  std::optional<Action> tick(const World& w) override {
    if (done(w)) return std::nullopt;
    Action a;
    a.target_speed = target_;
    a.rate = rate_;
    return a;
  }

 private:
  double target_;
  double rate_;
};

class TryNode final : public Node {
 public:
  TryNode(NodePtr body, dsl::Predicate cond, NodePtr handler)
      : body_(std::move(body)), cond_(std::move(cond)), handler_(std::move(handler)) {}

  void reset() override {
    body_->reset();
    handler_->reset();
    in_handler_ = false;
  }

  bool done(const World& w) const override {
    return !eval_predicate(cond_, w) && body_->done(w);
  }

  std::optional<Action> tick(const World& w) override {
    if (eval_predicate(cond_, w)) {
      if (!in_handler_) {
        handler_->reset();  // fresh handler on each rising edge
        in_handler_ = true;
      }
      auto a = handler_->tick(w);
      if (a) return a;
      Action hold;  // handler finished but the condition still holds
      hold.target_speed = w.self().speed;
      return hold;
    }
    in_handler_ = false;
    return body_->tick(w);
  }

 private:
  NodePtr body_;
  dsl::Predicate cond_;
  NodePtr handler_;
  bool in_handler_ = false;
};

class LoopNode final : public Node {
 public:
  explicit LoopNode(NodePtr body) : body_(std::move(body)) {}

  void reset() override { body_->reset(); }
  bool done(const World&) const override { return false; }

  std::optional<Action> tick(const World& w) override {
    for (int round = 0; round < 4; ++round) {
      auto a = body_->tick(w);
      if (a) return a;
      body_->reset();
    }
    Action hold;
    hold.target_speed = w.self().speed;
    return hold;
  }

 private:
  NodePtr body_;
};

inline NodePtr compile_statements(const std::vector<dsl::Statement>& stmts);

inline NodePtr compile_statement(const dsl::Statement& st) {
  if (const auto* call = std::get_if<dsl::CallStmt>(&st.node)) {
    const auto& args = call->args;
    if (call->primitive == "CrossingBehavior")
      return std::make_unique<CrossingNode>(args[1].number, args[2].number);
    if (call->primitive == "FollowLaneBehavior")
      return std::make_unique<FollowLaneNode>(args[0].number);
    if (call->primitive == "LaneChangeBehavior")
      return std::make_unique<LaneChangeNode>(args[0].number);
    if (call->primitive == "StopBehavior") return std::make_unique<StopNode>();
    if (call->primitive == "AccelerateBehavior")
      return std::make_unique<RampNode>(args[0].number, std::abs(args[1].number));
    if (call->primitive == "BrakeBehavior")
      return std::make_unique<RampNode>(0.0, std::abs(args[0].number));
    throw SimError("behavior primitive not executable: " + call->primitive);
  }
  if (const auto* ss = std::get_if<dsl::SetSpeedStmt>(&st.node)) {
    return std::make_unique<RampNode>(ss->value.number, 1e9);
  }
  if (const auto* tr = std::get_if<dsl::TryInterruptStmt>(&st.node)) {
    return std::make_unique<TryNode>(compile_statements(tr->body), tr->condition,
                                     compile_statements(tr->handler));
  }
  if (const auto* lp = std::get_if<dsl::LoopStmt>(&st.node)) {
    return std::make_unique<LoopNode>(compile_statements(lp->body));
  }
  throw SimError("statement not executable");
}

inline NodePtr compile_statements(const std::vector<dsl::Statement>& stmts) {
  std::vector<NodePtr> children;
  for (const auto& st : stmts) {
    if (std::holds_alternative<dsl::ParamDeclStmt>(st.node)) continue;
    children.push_back(compile_statement(st));
  }
  return std::make_unique<SeqNode>(std::move(children));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Traces

struct AgentPose {
  double x = 0.0, y = 0.0, yaw = 0.0, speed = 0.0, accel = 0.0, yaw_rate = 0.0;
};

struct TraceFrame {
  double progress = 0.0;
  double lat_route = 0.0;  // ego lateral deviation from the route path
  double oor = 0.0;        // distance beyond the nearest lane edge
  bool collision = false;
  int lane_invasion = 0;  // events this frame
  int red_light = 0;
  int stop_sign = 0;
  std::vector<AgentPose> agents;
};

struct TraceAgentMeta {
  AgentClass cls = AgentClass::Car;
  double radius = 1.2;
  bool is_ego = false;
};

struct SceneTrace {
  double dt = 0.1;
  int max_steps = 300;
  double lane_width = 3.5;
  int route_id = 0;
  std::uint64_t seed = 0;
  std::vector<TraceAgentMeta> agents;
  std::vector<TraceFrame> frames;

  bool collided() const {
    return !frames.empty() && frames.back().collision;
  }
  double final_progress() const {
    return frames.empty() ? 0.0 : frames.back().progress;
  }
};

inline std::string serialize_trace(const SceneTrace& trace) {
  std::string out = "scenforge-trace v1\n";
  out += "seed\t" + std::to_string(trace.seed) + "\n";
  out += "dt\t" + text::fmt_double(trace.dt) + "\n";
  out += "max_steps\t" + std::to_string(trace.max_steps) + "\n";
  out += "lane_width\t" + text::fmt_double(trace.lane_width) + "\n";
  out += "route\t" + std::to_string(trace.route_id) + "\n";
  for (size_t i = 0; i < trace.agents.size(); ++i) {
    const auto& a = trace.agents[i];
    out += "agent\t" + std::to_string(i) + "\t" + to_string(a.cls) + "\t" +
           text::fmt_double(a.radius) + "\t" + (a.is_ego ? "ego" : "adv") + "\n";
  }
  for (size_t k = 0; k < trace.frames.size(); ++k) {
    const auto& f = trace.frames[k];
    out += "F\t" + std::to_string(k) + "\t" + text::fmt_double(f.progress) + "\t" +
           text::fmt_double(f.lat_route) + "\t" + text::fmt_double(f.oor) + "\t" +
           std::to_string(f.collision ? 1 : 0) + "\t" + std::to_string(f.lane_invasion) +
           "\t" + std::to_string(f.red_light) + "\t" + std::to_string(f.stop_sign);
    for (const auto& p : f.agents) {
      out += "\t|";
      out += "\t" + text::fmt_double(p.x) + "\t" + text::fmt_double(p.y) + "\t" +
             text::fmt_double(p.yaw) + "\t" + text::fmt_double(p.speed) + "\t" +
             text::fmt_double(p.accel) + "\t" + text::fmt_double(p.yaw_rate);
    }
    out += "\n";
  }
  return out;
}

inline SceneTrace parse_trace(std::string_view content) {
  auto lines = text::split_lines(content);
  if (lines.empty() || text::trim(lines[0]) != "scenforge-trace v1")
    throw SimError("not a scenforge-trace v1 file");
  SceneTrace trace;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    auto f = text::split(lines[i], '\t');
    if (f[0] == "seed") {
      trace.seed = std::strtoull(f.at(1).c_str(), nullptr, 10);
    } else if (f[0] == "dt") {
      trace.dt = std::strtod(f.at(1).c_str(), nullptr);
    } else if (f[0] == "max_steps") {
      trace.max_steps = std::atoi(f.at(1).c_str());
    } else if (f[0] == "lane_width") {
      trace.lane_width = std::strtod(f.at(1).c_str(), nullptr);
    } else if (f[0] == "route") {
      trace.route_id = std::atoi(f.at(1).c_str());
    } else if (f[0] == "agent") {
      TraceAgentMeta meta;
      auto cls = agent_class_from_string(f.at(2));
      if (!cls) throw SimError("bad agent class in trace");
      meta.cls = *cls;
      meta.radius = std::strtod(f.at(3).c_str(), nullptr);
      meta.is_ego = f.at(4) == "ego";
      trace.agents.push_back(meta);
    } else if (f[0] == "F") {
      TraceFrame frame;
      frame.progress = std::strtod(f.at(2).c_str(), nullptr);
      frame.lat_route = std::strtod(f.at(3).c_str(), nullptr);
      frame.oor = std::strtod(f.at(4).c_str(), nullptr);
      frame.collision = f.at(5) == "1";
      frame.lane_invasion = std::atoi(f.at(6).c_str());
      frame.red_light = std::atoi(f.at(7).c_str());
      frame.stop_sign = std::atoi(f.at(8).c_str());
      size_t idx = 9;
      while (idx < f.size()) {
        if (f[idx] != "|") throw SimError("bad frame record in trace");
        AgentPose p;
        p.x = std::strtod(f.at(idx + 1).c_str(), nullptr);
        p.y = std::strtod(f.at(idx + 2).c_str(), nullptr);
        p.yaw = std::strtod(f.at(idx + 3).c_str(), nullptr);
        p.speed = std::strtod(f.at(idx + 4).c_str(), nullptr);
        p.accel = std::strtod(f.at(idx + 5).c_str(), nullptr);
        p.yaw_rate = std::strtod(f.at(idx + 6).c_str(), nullptr);
        frame.agents.push_back(p);
        idx += 7;
      }
      trace.frames.push_back(std::move(frame));
    } else {
      throw SimError("unknown trace record: " + f[0]);
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Simulator

class Simulator {
 public:
  Simulator(const SceneConfig& cfg, EgoPolicy policy, std::uint64_t seed)
      : cfg_(&cfg), policy_(std::move(policy)) {
    if (cfg.agents.empty() || !cfg.agents[0].is_ego)
      throw SimError("agents[0] must be the ego");
    if (cfg.agents.size() < 2) throw SimError("need at least one adversary");
    trace_.dt = cfg.dt;
    trace_.max_steps = cfg.max_steps;
    trace_.lane_width = cfg.road.lane_width;
    trace_.route_id = cfg.route_id;
    trace_.seed = seed;
    for (const auto& a : cfg.agents) {
      state_.push_back({a.pos, a.yaw, a.speed, 0.0, 0.0});
      trace_.agents.push_back({a.cls, a.radius, a.is_ego});
      programs_.push_back(a.is_ego ? nullptr : detail::compile_statements(a.program));
    }
  }

  const std::vector<AgentDyn>& state() const { return state_; }
  const SceneTrace& trace() const { return trace_; }
  bool finished() const { return finished_; }

  // Advances one frame; returns false once the episode has ended.
  bool step() {
    if (finished_) return false;
    const double dt = cfg_->dt;

    // Phase 1: commands from the pre-step state.
    EgoView view{cfg_, &state_, t_};
    EgoCommand ego_cmd = policy_(view);
    ego_cmd.accel = std::clamp(ego_cmd.accel, -6.0, 3.0);
    ego_cmd.yaw_rate = std::clamp(ego_cmd.yaw_rate, -0.6, 0.6);

    std::vector<detail::Action> actions(state_.size());
    for (size_t i = 1; i < state_.size(); ++i) {
      detail::World w{cfg_, &state_, i};
      auto a = programs_[i]->tick(w);
      if (a) {
        actions[i] = *a;
      } else {
        actions[i].target_speed = state_[i].speed;  // program finished: hold
        actions[i].steer = detail::Action::Steer::Hold;
      }
    }

    // Phase 2: synchronous integration.
    for (size_t i = 0; i < state_.size(); ++i) {
      AgentDyn& s = state_[i];
      double v_prev = s.speed;
      double yaw_prev = s.yaw;
      if (i == 0) {
        s.speed = std::clamp(v_prev + ego_cmd.accel * dt, 0.0, kMaxSpeed);
        s.yaw = road::wrap_angle(s.yaw + ego_cmd.yaw_rate * dt);
      } else {
        const auto& a = actions[i];
        double cap = accel_cap(cfg_->agents[i].cls);
        double rate = std::min(a.rate, cap);
        double dv = std::clamp(a.target_speed - v_prev, -rate * dt, rate * dt);
        s.speed = std::clamp(v_prev + dv, 0.0, kMaxSpeed);
        switch (a.steer) {
          case detail::Action::Steer::Hold: break;
          case detail::Action::Steer::FixedHeading: s.yaw = a.heading; break;
          case detail::Action::Steer::FollowLane: {
            const auto& lane = cfg_->road.lane(a.lane_id);
            auto proj = road::project_polyline(lane.centerline, s.pos);
            Vec2 target = road::polyline_at(lane.centerline, proj.s + 5.0);
            double want = road::heading_of(target - s.pos);
            double err = road::wrap_angle(want - s.yaw);
            double yr = std::clamp(2.0 * err, -kAdvYawRateCap, kAdvYawRateCap);
            s.yaw = road::wrap_angle(s.yaw + yr * dt);
            break;
          }
        }
      }
      s.pos = s.pos + (s.speed * dt) * road::unit(s.yaw);
      s.accel = (s.speed - v_prev) / dt;
      s.yaw_rate = road::wrap_angle(s.yaw - yaw_prev) / dt;
      if (!std::isfinite(s.pos.x) || !std::isfinite(s.pos.y) ||
          !std::isfinite(s.speed) || !std::isfinite(s.yaw)) {
        throw SimError("non-finite agent state");
      }
    }
    t_ += dt;
    ++steps_;

    record_frame();
    const TraceFrame& f = trace_.frames.back();
    if (f.collision || f.progress >= 0.999 || steps_ >= cfg_->max_steps) {
      finished_ = true;
    }
    return !finished_;
  }

  SceneTrace run() {
    while (step()) {
    }
    return trace_;
  }

 private:
  void record_frame() {
    TraceFrame f;
    const auto& route = cfg_->route();
    const AgentDyn& ego = state_[0];

    auto route_proj = road::project_polyline(route.waypoints, ego.pos);
    double progress = route.total_length > 0.0 ? route_proj.s / route.total_length : 1.0;
    progress_ = std::max(progress_, progress);
    f.progress = progress_;
    f.lat_route = route_proj.lateral;

    int cur_lane = 0;
    auto lane_proj = cfg_->road.nearest_lane(ego.pos, &cur_lane);
    f.oor = std::max(0.0, lane_proj.lateral - cfg_->road.lane_width / 2.0);

    // Lane invasion: entering a lane the route does not prescribe here.
    int prescribed = route.lane_at(progress_ * route.total_length);
    if (prev_lane_ >= 0 && cur_lane != prev_lane_ && cur_lane != prescribed) {
      f.lane_invasion = 1;
    }
    prev_lane_ = cur_lane;

    // Signal / stop-sign checks at the stop line.
    if (!cfg_->road.stop_line_s.empty()) {
      double s_stop = cfg_->road.stop_line_s[static_cast<size_t>(cfg_->route_id)];
      double s_now = progress_ * route.total_length;
      if (s_now >= s_stop - 8.0 && s_now < s_stop) {
        window_min_speed_ = std::min(window_min_speed_, ego.speed);
      }
      if (prev_s_ < s_stop && s_now >= s_stop) {
        if (cfg_->road.has_signals && cfg_->road.signals.ego_red(t_)) {
          f.red_light = 1;
        }
        if (cfg_->road.has_stop_signs && window_min_speed_ > 0.15) {
          f.stop_sign = 1;
        }
      }
      prev_s_ = s_now;
    }

    // Collision: any footprint overlap.
    for (size_t i = 0; i < state_.size() && !f.collision; ++i) {
      for (size_t j = i + 1; j < state_.size(); ++j) {
        double r = cfg_->agents[i].radius + cfg_->agents[j].radius;
        if (road::dist(state_[i].pos, state_[j].pos) < r) {
          f.collision = true;
          break;
        }
      }
    }

    for (const auto& s : state_) {
      f.agents.push_back({s.pos.x, s.pos.y, s.yaw, s.speed, s.accel, s.yaw_rate});
    }
    trace_.frames.push_back(std::move(f));
  }

  const SceneConfig* cfg_;
  EgoPolicy policy_;
  std::vector<AgentDyn> state_;
  std::vector<detail::NodePtr> programs_;
  SceneTrace trace_;
  double t_ = 0.0;
  int steps_ = 0;
  bool finished_ = false;
  double progress_ = 0.0;
  int prev_lane_ = -1;
  double prev_s_ = 0.0;
  double window_min_speed_ = 1e18;
};

inline SceneTrace run(const SceneConfig& cfg, const EgoPolicy& policy,
                      std::uint64_t seed) {
  Simulator sim(cfg, policy, seed);
  return sim.run();
}

}  // namespace scenforge::sim

#endif  // SCENFORGE_SIM_HPP
