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

#ifndef SCENFORGE_METRICS_HPP
#define SCENFORGE_METRICS_HPP

// Per-scene sub-metrics, the weighted overall score, and scenario-level
// aggregates. Every sub-metric is mapped to a goodness value in [0, 1]
// (1 = flawless driving); the overall score is the weight-sum of those.
// Event counts saturate as 1/(1+count); unbounded means are normalized by
// fixed caps so the score stays in [0, 1] whatever the trace contains.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenforge/sim.hpp"
#include "scenforge/text.hpp"

namespace scenforge::metrics {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneMetrics {
  double cr = 0.0;    // collision, binary
  double rr = 0.0;    // red lights run, count
  double ss = 0.0;    // stop signs run, count
  double or_ = 0.0;   // integrated out-of-road distance, m*s
  double rf = 1.0;    // route-following stability, [0, 1]
  double comp = 1.0;  // route completion, [0, 1]
  double ts = 0.0;    // time used / horizon, [0, 1]
  double acc = 0.0;   // mean |longitudinal accel|, m/s^2
  double yv = 0.0;    // mean |yaw rate|, rad/s
  double li = 0.0;    // lane invasions, count
  double os = 0.0;    // overall score, [0, 1]
};

struct MetricWeights {
  double cr = 0.40;
  double rr = 0.10;
  double ss = 0.05;
  double or_ = 0.05;
  double rf = 0.10;
  double comp = 0.10;
  double ts = 0.05;
  double acc = 0.05;
  double yv = 0.05;
  double li = 0.05;
  // normalization caps for the unbounded metrics
  double acc_cap = 6.0;
  double yv_cap = 0.6;
  double or_cap = 10.0;

  double sum() const { return cr + rr + ss + or_ + rf + comp + ts + acc + yv + li; }

  void validate() const {
    for (double w : {cr, rr, ss, or_, rf, comp, ts, acc, yv, li}) {
      if (w < 0.0) throw MetricsError("metric weights must be non-negative");
    }
    if (std::abs(sum() - 1.0) > 1e-9)
      throw MetricsError("metric weights must sum to 1");
  }
};

inline SceneMetrics compute_scene_metrics(const sim::SceneTrace& trace) {
  if (trace.frames.empty()) throw MetricsError("empty trace");
  size_t ego = 0;
  for (size_t i = 0; i < trace.agents.size(); ++i) {
    if (trace.agents[i].is_ego) ego = i;
  }
  SceneMetrics m;
  double lat_sum = 0.0, acc_sum = 0.0, yv_sum = 0.0;
  for (const auto& f : trace.frames) {
    m.rr += f.red_light;
    m.ss += f.stop_sign;
    m.li += f.lane_invasion;
    m.or_ += f.oor * trace.dt;
    lat_sum += f.lat_route;
    acc_sum += std::abs(f.agents.at(ego).accel);
    yv_sum += std::abs(f.agents.at(ego).yaw_rate);
    if (f.collision) m.cr = 1.0;
  }
  double n = static_cast<double>(trace.frames.size());
  m.comp = std::clamp(trace.frames.back().progress, 0.0, 1.0);
  m.ts = n / static_cast<double>(trace.max_steps);
  m.acc = acc_sum / n;
  m.yv = yv_sum / n;
  double half_lane = trace.lane_width / 2.0;
  m.rf = std::clamp(1.0 - (lat_sum / n) / half_lane, 0.0, 1.0);
  return m;
}

inline double overall_score(const SceneMetrics& m, const MetricWeights& w = {}) {
  w.validate();
  auto count_g = [](double c) { return 1.0 / (1.0 + std::max(0.0, c)); };
  auto capped_g = [](double v, double cap) {
    return 1.0 - std::min(std::max(v, 0.0), cap) / cap;
  };
  double score = w.cr * (m.cr > 0.0 ? 0.0 : 1.0) + w.rr * count_g(m.rr) +
                 w.ss * count_g(m.ss) + w.or_ * capped_g(m.or_, w.or_cap) +
                 w.rf * std::clamp(m.rf, 0.0, 1.0) +
                 w.comp * std::clamp(m.comp, 0.0, 1.0) +
                 w.ts * (1.0 - std::clamp(m.ts, 0.0, 1.0)) +
                 w.acc * capped_g(m.acc, w.acc_cap) + w.yv * capped_g(m.yv, w.yv_cap) +
                 w.li * count_g(m.li);
  return std::clamp(score, 0.0, 1.0);
}

inline SceneMetrics score_trace(const sim::SceneTrace& trace,
                                const MetricWeights& w = {}) {
  SceneMetrics m = compute_scene_metrics(trace);
  m.os = overall_score(m, w);
  return m;
}

// ---------------------------------------------------------------------------
// Average displacement error: mean over unordered trajectory pairs of the
// mean per-timestep Euclidean distance, each pair truncated to its common
// prefix length.

using Trajectory = std::vector<road::Vec2>;

inline Trajectory adversary_trajectory(const sim::SceneTrace& trace) {
  size_t adv = trace.agents.size();
  for (size_t i = 0; i < trace.agents.size(); ++i) {
    if (!trace.agents[i].is_ego) {
      adv = i;
      break;
    }
  }
  if (adv == trace.agents.size()) throw MetricsError("trace has no adversary");
  Trajectory out;
  for (const auto& f : trace.frames) {
    out.push_back({f.agents.at(adv).x, f.agents.at(adv).y});
  }
  return out;
}

inline double ade(const std::vector<Trajectory>& trajectories) {
  if (trajectories.size() < 2)
    throw MetricsError("ade needs at least two trajectories");
  double pair_sum = 0.0;
  size_t pairs = 0;
  for (size_t i = 0; i < trajectories.size(); ++i) {
    for (size_t j = i + 1; j < trajectories.size(); ++j) {
      size_t common = std::min(trajectories[i].size(), trajectories[j].size());
      if (common == 0) throw MetricsError("ade trajectory is empty");
      double acc = 0.0;
      for (size_t t = 0; t < common; ++t) {
        acc += road::dist(trajectories[i][t], trajectories[j][t]);
      }
      pair_sum += acc / static_cast<double>(common);
      ++pairs;
    }
  }
  return pair_sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Scenario-level aggregation

struct SceneRecord {
  std::string base;
  int scenario_id = 0;
  int route_id = 0;
  std::string policy_id;
  SceneMetrics metrics;
  Trajectory adversary_path;
  bool padded = false;  // selected without a collision (selection fallback)
};

struct ReportRow {
  std::string base;
  int scenario_id = 0;
  std::string policy_id;
  int scenes = 0;
  double cr = 0.0;
  double os = 0.0;
  double ade_value = 0.0;
};

struct ScenarioReport {
  std::vector<ReportRow> rows;   // one per (base, scenario, policy)
  std::vector<ReportRow> totals; // one per (base, policy) plus a final average
};

inline ScenarioReport aggregate(const std::vector<SceneRecord>& records) {
  ScenarioReport report;
  std::map<std::tuple<std::string, int, std::string>, std::vector<const SceneRecord*>>
      groups;
  for (const auto& r : records) {
    groups[{r.base, r.scenario_id, r.policy_id}].push_back(&r);
  }
  for (const auto& [key, group] : groups) {
    ReportRow row;
    row.base = std::get<0>(key);
    row.scenario_id = std::get<1>(key);
    row.policy_id = std::get<2>(key);
    row.scenes = static_cast<int>(group.size());
    // ADE per scenario: mean over per-route pair sets (trajectories from
    // different routes are not comparable step-for-step).
    std::map<int, std::vector<Trajectory>> by_route;
    // Padded selections (kept without a collision) do not count toward the
    // collision-rate statistic unless the whole group is padded.
    double cr_unpadded = 0.0;
    int n_unpadded = 0;
    for (const auto* r : group) {
      row.cr += r->metrics.cr;
      row.os += r->metrics.os;
      if (!r->padded) {
        cr_unpadded += r->metrics.cr;
        ++n_unpadded;
      }
      by_route[r->route_id].push_back(r->adversary_path);
    }
    row.cr = n_unpadded > 0 ? cr_unpadded / n_unpadded
                            : row.cr / static_cast<double>(group.size());
    row.os /= group.size();
    double ade_sum = 0.0;
    int ade_groups = 0;
    for (const auto& [route, paths] : by_route) {
      if (paths.size() >= 2) {
        ade_sum += ade(paths);
        ++ade_groups;
      }
    }
    row.ade_value = ade_groups > 0 ? ade_sum / ade_groups : 0.0;
    report.rows.push_back(std::move(row));
  }

  std::map<std::pair<std::string, std::string>, std::vector<const ReportRow*>> by_base;
  for (const auto& row : report.rows) {
    by_base[{row.base, row.policy_id}].push_back(&row);
  }
  ReportRow avg;
  avg.base = "avg";
  int n_rows = 0;
  for (const auto& [key, rows] : by_base) {
    ReportRow total;
    total.base = key.first;
    total.scenario_id = -1;
    total.policy_id = key.second;
    for (const auto* r : rows) {
      total.scenes += r->scenes;
      total.cr += r->cr;
      total.os += r->os;
      total.ade_value += r->ade_value;
      avg.cr += r->cr;
      avg.os += r->os;
      avg.ade_value += r->ade_value;
      ++n_rows;
    }
    total.cr /= rows.size();
    total.os /= rows.size();
    total.ade_value /= rows.size();
    report.totals.push_back(std::move(total));
  }
  if (n_rows > 0) {
    avg.scenario_id = -1;
    avg.policy_id = "all";
    avg.cr /= n_rows;
    avg.os /= n_rows;
    avg.ade_value /= n_rows;
    report.totals.push_back(std::move(avg));
  }
  return report;
}

// Pivoted view: one row per metric, one column per base scenario plus the
// overall average, for side-by-side reading.
inline std::string render_pivot(const ScenarioReport& report) {
  std::vector<const ReportRow*> bases;
  const ReportRow* avg = nullptr;
  for (const auto& r : report.totals) {
    if (r.base == "avg") avg = &r;
    else bases.push_back(&r);
  }
  std::string header = "metric";
  for (const auto* b : bases) header += "\t" + b->base;
  header += "\tavg\n";
  auto line = [&](const char* name, auto pick) {
    std::string out = name;
    for (const auto* b : bases) out += "\t" + text::fmt_number(pick(*b));
    out += avg ? "\t" + text::fmt_number(pick(*avg)) : "\t-";
    return out + "\n";
  };
  return header + line("cr", [](const ReportRow& r) { return r.cr; }) +
         line("os", [](const ReportRow& r) { return r.os; }) +
         line("ade", [](const ReportRow& r) { return r.ade_value; });
}

// Per-row record form; the pivoted rendering above gives the side-by-side
// layout.
inline std::string render_report(const ScenarioReport& report) {
  std::string out = "scenforge-report v1\n";
  out += "base\tscenario\tpolicy\tscenes\tcr\tos\tade\n";
  auto line = [](const ReportRow& r) {
    return r.base + "\t" +
           (r.scenario_id >= 0 ? std::to_string(r.scenario_id) : std::string("-")) +
           "\t" + r.policy_id + "\t" + std::to_string(r.scenes) + "\t" +
           text::fmt_number(r.cr) + "\t" + text::fmt_number(r.os) + "\t" +
           text::fmt_number(r.ade_value) + "\n";
  };
  for (const auto& r : report.rows) out += line(r);
  for (const auto& r : report.totals) out += line(r);
  return out;
}

}  // namespace scenforge::metrics

#endif  // SCENFORGE_METRICS_HPP
