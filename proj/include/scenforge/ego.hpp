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

#ifndef SCENFORGE_EGO_HPP
#define SCENFORGE_EGO_HPP

// Rule-based ego controller over the 4-D observation (distance to next
// waypoint, longitudinal speed, angular speed, front detection), plus a
// derivative-free finetune: a cross-entropy search over the controller
// parameters that minimizes (collision rate, -overall score)
// lexicographically on a set of training scenes. Candidates whose mean route
// completion drops below 0.3 are rejected outright.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "scenforge/metrics.hpp"
#include "scenforge/rng.hpp"
#include "scenforge/sim.hpp"
#include "scenforge/text.hpp"

namespace scenforge::ego {

struct Observation {
  double dist_next_waypoint = 0.0;
  double longitudinal_speed = 0.0;
  double angular_speed = 0.0;
  double front_detection = 0.0;  // 1 when an agent sits in the forward sector

  std::array<double, 4> vector() const {
    return {dist_next_waypoint, longitudinal_speed, angular_speed, front_detection};
  }

  // Controller channels beyond the 4-D vector: bearing to the pursuit point
  // and range to the nearest detected obstacle. The rule-based controller
  // cannot steer or meter its braking from the 4-D vector alone.
  double pursuit_bearing_error = 0.0;
  double front_obstacle_distance = std::numeric_limits<double>::infinity();
};

struct Control {
  double accel = 0.0;     // [-6, 3]
  double yaw_rate = 0.0;  // [-0.6, 0.6]
};

struct PolicyParams {
  double target_speed = 8.0;
  double brake_trigger_distance = 10.0;
  double brake_decel = 5.0;
  double steering_gain = 2.0;
  double detection_range = 20.0;
  double detection_half_angle = 0.5235987755982988;  // 30 degrees

  std::array<double, 6> to_array() const {
    return {target_speed, brake_trigger_distance, brake_decel,
            steering_gain, detection_range, detection_half_angle};
  }

  static PolicyParams from_array(const std::array<double, 6>& a) {
    PolicyParams p;
    p.target_speed = a[0];
    p.brake_trigger_distance = a[1];
    p.brake_decel = a[2];
    p.steering_gain = a[3];
    p.detection_range = a[4];
    p.detection_half_angle = a[5];
    return p;
  }

  std::string save() const {
    std::string out;
    out += "target_speed " + text::fmt_number(target_speed) + "\n";
    out += "brake_trigger_distance " + text::fmt_number(brake_trigger_distance) + "\n";
    out += "brake_decel " + text::fmt_number(brake_decel) + "\n";
    out += "steering_gain " + text::fmt_number(steering_gain) + "\n";
    out += "detection_range " + text::fmt_number(detection_range) + "\n";
    out += "detection_half_angle " + text::fmt_number(detection_half_angle) + "\n";
    return out;
  }
};

// Search volume for the finetune; also the clamp box for observe/act inputs.
inline std::array<std::pair<double, double>, 6> param_bounds() {
  return {{{0.5, 15.0}, {1.0, 40.0}, {1.0, 6.0}, {0.1, 5.0}, {5.0, 50.0}, {0.1, 1.2}}};
}

// ---------------------------------------------------------------------------
// Observation and control

inline Observation observe(const sim::EgoView& view, const PolicyParams& params) {
  const auto& ego = (*view.agents)[0];
  const auto& route = view.cfg->route();
  Observation obs;
  obs.longitudinal_speed = ego.speed;
  obs.angular_speed = ego.yaw_rate;

  auto proj = road::project_polyline(route.waypoints, ego.pos);
  // next discrete waypoint strictly ahead of the projection
  double acc = 0.0;
  road::Vec2 next_wp = route.waypoints.back();
  for (size_t i = 0; i + 1 < route.waypoints.size(); ++i) {
    acc += road::dist(route.waypoints[i], route.waypoints[i + 1]);
    if (acc > proj.s + 1e-9) {
      next_wp = route.waypoints[i + 1];
      break;
    }
  }
  obs.dist_next_waypoint = road::dist(ego.pos, next_wp);

  // pursuit point a speed-scaled lookahead along the route
  double lookahead = std::max(4.0, 0.8 * ego.speed);
  road::Vec2 target = road::polyline_at(route.waypoints, proj.s + lookahead);
  double want = road::heading_of(target - ego.pos);
  obs.pursuit_bearing_error = road::wrap_angle(want - ego.yaw);

  // closed forward sector (range R, half-angle theta): boundary included
  for (size_t i = 1; i < view.agents->size(); ++i) {
    const auto& other = (*view.agents)[i];
    double d = road::dist(other.pos, ego.pos);
    if (d > params.detection_range) continue;
    double bearing = road::heading_of(other.pos - ego.pos);
    if (d < 1e-9 ||
        std::abs(road::wrap_angle(bearing - ego.yaw)) <= params.detection_half_angle) {
      obs.front_detection = 1.0;
      obs.front_obstacle_distance = std::min(obs.front_obstacle_distance, d);
    }
  }
  return obs;
}

inline Control act(const Observation& obs, const PolicyParams& params) {
  Control c;
  c.yaw_rate = std::clamp(params.steering_gain * obs.pursuit_bearing_error, -0.6, 0.6);
  if (obs.front_detection >= 0.5 &&
      obs.front_obstacle_distance < params.brake_trigger_distance) {
    c.accel = std::clamp(-params.brake_decel, -6.0, 3.0);
  } else {
    c.accel = std::clamp(params.target_speed - obs.longitudinal_speed, -6.0, 3.0);
  }
  return c;
}

inline sim::EgoPolicy make_policy(const PolicyParams& params) {
  return [params](const sim::EgoView& view) -> sim::EgoCommand {
    Observation obs = observe(view, params);
    Control c = act(obs, params);
    return {c.accel, c.yaw_rate};
  };
}

// ---------------------------------------------------------------------------
// Evaluation and cross-entropy finetune

struct EvalResult {
  double cr = 0.0;
  double os = 0.0;
  double comp = 0.0;
};

inline EvalResult evaluate_policy(const PolicyParams& params,
                                  const std::vector<sim::SceneConfig>& scenes,
                                  const metrics::MetricWeights& weights = {}) {
  EvalResult r;
  auto policy = make_policy(params);
  for (const auto& cfg : scenes) {
    auto trace = sim::run(cfg, policy, 0);
    auto m = metrics::score_trace(trace, weights);
    r.cr += m.cr;
    r.os += m.os;
    r.comp += m.comp;
  }
  double n = static_cast<double>(scenes.size());
  r.cr /= n;
  r.os /= n;
  r.comp /= n;
  return r;
}

struct FinetuneOptions {
  int population = 32;
  double elite_fraction = 0.25;
  int generations = 10;
  double min_completion = 0.3;
  metrics::MetricWeights weights;
};

struct FinetuneGeneration {
  int generation = 0;
  double best_cr = 0.0;
  double best_os = 0.0;
  double mean_cr = 0.0;
  int evals_used = 0;
};

struct FinetuneLog {
  std::vector<FinetuneGeneration> generations;
};

// Elitist CEM. eval_budget counts individual scene simulations; with a zero
// budget the incumbent params return unchanged.
inline PolicyParams finetune(const PolicyParams& params,
                             const std::vector<sim::SceneConfig>& training_scenes,
                             int eval_budget, std::uint64_t seed,
                             const FinetuneOptions& options = {},
                             FinetuneLog* log = nullptr) {
  if (training_scenes.empty()) throw sim::SimError("finetune needs training scenes");
  const int cost = static_cast<int>(training_scenes.size());
  if (eval_budget < cost) return params;

  rng::Stream stream(seed);
  auto bounds = param_bounds();
  auto clamp_vec = [&](std::array<double, 6> v) {
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = std::clamp(v[i], bounds[i].first, bounds[i].second);
    }
    return v;
  };

  int evals_used = 0;
  auto evaluate = [&](const PolicyParams& p) {
    evals_used += cost;
    return evaluate_policy(p, training_scenes, options.weights);
  };

  // The incumbent is the elitist fallback: it is never replaced by a
  // candidate with a higher training collision rate.
  PolicyParams best = params;
  EvalResult best_eval = evaluate(params);

  std::array<double, 6> mean = clamp_vec(params.to_array());
  std::array<double, 6> stddev;
  for (size_t i = 0; i < stddev.size(); ++i) {
    stddev[i] = (bounds[i].second - bounds[i].first) / 4.0;
  }

  struct Candidate {
    std::array<double, 6> x;
    EvalResult eval;
    bool feasible = false;
  };

  int n_elite = std::max(1, static_cast<int>(options.population * options.elite_fraction));
  for (int gen = 0; gen < options.generations; ++gen) {
    if (evals_used + cost > eval_budget) break;
    std::vector<Candidate> pop;
    for (int i = 0; i < options.population; ++i) {
      if (evals_used + cost > eval_budget) break;
      Candidate c;
      for (size_t d = 0; d < mean.size(); ++d) {
        c.x[d] = stream.normal(mean[d], stddev[d]);
      }
      c.x = clamp_vec(c.x);
      c.eval = evaluate(PolicyParams::from_array(c.x));
      c.feasible = c.eval.comp >= options.min_completion;
      pop.push_back(c);
    }
    if (pop.empty()) break;

    // Rank: feasible first, then collision rate, then overall score.
    std::stable_sort(pop.begin(), pop.end(), [](const Candidate& a, const Candidate& b) {
      if (a.feasible != b.feasible) return a.feasible;
      if (a.eval.cr != b.eval.cr) return a.eval.cr < b.eval.cr;
      if (a.eval.os != b.eval.os) return a.eval.os > b.eval.os;
      return a.eval.comp > b.eval.comp;
    });

    const Candidate& top = pop.front();
    if (top.feasible &&
        (top.eval.cr < best_eval.cr ||
         (top.eval.cr == best_eval.cr && top.eval.os > best_eval.os))) {
      best = PolicyParams::from_array(top.x);
      best_eval = top.eval;
    }

    int take = std::min<int>(n_elite, static_cast<int>(pop.size()));
    double mean_cr = 0.0;
    for (const auto& c : pop) mean_cr += c.eval.cr;
    mean_cr /= static_cast<double>(pop.size());
    for (size_t d = 0; d < mean.size(); ++d) {
      double mu = 0.0;
      for (int e = 0; e < take; ++e) mu += pop[static_cast<size_t>(e)].x[d];
      mu /= take;
      double var = 0.0;
      for (int e = 0; e < take; ++e) {
        double diff = pop[static_cast<size_t>(e)].x[d] - mu;
        var += diff * diff;
      }
      var /= take;
      double floor = 1e-3 * (bounds[d].second - bounds[d].first);
      mean[d] = mu;
      stddev[d] = std::max(std::sqrt(var), floor);
    }
    if (log) {
      log->generations.push_back(
          {gen, best_eval.cr, best_eval.os, mean_cr, evals_used});
    }
  }
  return best;
}

}  // namespace scenforge::ego

#endif  // SCENFORGE_EGO_HPP
