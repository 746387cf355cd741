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

#ifndef SCENFORGE_CONFIG_HPP
#define SCENFORGE_CONFIG_HPP

// Nested key-value configuration text:
//
//   # comment
//   run {
//     seed 42
//     bases straight_obstacle,red_light_running
//   }
//   weights { cr 0.4 }
//
// Blocks nest arbitrarily; values are whitespace-separated from their key and
// run to end of line. Schema for the run configuration is documented in
// docs/config-format.md.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenforge/ego.hpp"
#include "scenforge/metrics.hpp"
#include "scenforge/pipeline.hpp"
#include "scenforge/text.hpp"

namespace scenforge::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  std::map<std::string, std::string> values;
  std::map<std::string, Node> children;

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  double get_num(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str())
      throw ConfigError("value of '" + key + "' is not a number: " + it->second);
    return v;
  }

  int get_int(const std::string& key, int fallback) const {
    return static_cast<int>(get_num(key, fallback));
  }

  const Node* child(const std::string& name) const {
    auto it = children.find(name);
    return it == children.end() ? nullptr : &it->second;
  }
};

inline Node parse(std::string_view content) {
  Node root;
  std::vector<Node*> stack{&root};
  int line_no = 0;
  for (const auto& raw : text::split_lines(content)) {
    ++line_no;
    std::string_view line = text::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line == "}") {
      if (stack.size() == 1)
        throw ConfigError("unmatched '}' on line " + std::to_string(line_no));
      stack.pop_back();
      continue;
    }
    if (line.back() == '{') {
      std::string name(text::trim(line.substr(0, line.size() - 1)));
      if (name.empty())
        throw ConfigError("block without a name on line " + std::to_string(line_no));
      stack.push_back(&stack.back()->children[name]);
      continue;
    }
    size_t sep = line.find_first_of(" \t");
    if (sep == std::string_view::npos) {
      throw ConfigError("key without a value on line " + std::to_string(line_no));
    }
    std::string key(line.substr(0, sep));
    std::string value(text::trim(line.substr(sep + 1)));
    stack.back()->values[key] = value;
  }
  if (stack.size() != 1) throw ConfigError("unclosed block at end of config");
  return root;
}

inline Node parse_file(const std::string& path) { return parse(text::read_file(path)); }

// ---------------------------------------------------------------------------
// Typed views

inline metrics::MetricWeights weights_from(const Node* node) {
  metrics::MetricWeights w;
  if (node) {
    w.cr = node->get_num("cr", w.cr);
    w.rr = node->get_num("rr", w.rr);
    w.ss = node->get_num("ss", w.ss);
    w.or_ = node->get_num("or", w.or_);
    w.rf = node->get_num("rf", w.rf);
    w.comp = node->get_num("comp", w.comp);
    w.ts = node->get_num("ts", w.ts);
    w.acc = node->get_num("acc", w.acc);
    w.yv = node->get_num("yv", w.yv);
    w.li = node->get_num("li", w.li);
    w.acc_cap = node->get_num("acc_cap", w.acc_cap);
    w.yv_cap = node->get_num("yv_cap", w.yv_cap);
    w.or_cap = node->get_num("or_cap", w.or_cap);
  }
  w.validate();
  return w;
}

inline ego::PolicyParams policy_from(const Node* node) {
  ego::PolicyParams p;
  if (node) {
    p.target_speed = node->get_num("target_speed", p.target_speed);
    p.brake_trigger_distance =
        node->get_num("brake_trigger_distance", p.brake_trigger_distance);
    p.brake_decel = node->get_num("brake_decel", p.brake_decel);
    p.steering_gain = node->get_num("steering_gain", p.steering_gain);
    p.detection_range = node->get_num("detection_range", p.detection_range);
    p.detection_half_angle =
        node->get_num("detection_half_angle", p.detection_half_angle);
  }
  return p;
}

struct RunConfig {
  std::uint64_t seed = 1;
  std::vector<pipeline::BaseScenario> bases;
  int scenarios_per_base = 5;
  int routes_per_base = 2;
  int sims_per_cell = 50;
  int refine_every = 10;
  int select_per_cell = 2;
  int jobs = 1;
  int train_routes = 1;  // finetune split: routes < train_routes train, rest test
  double low_confidence_threshold = 0.2;
  metrics::MetricWeights weights;
  ego::PolicyParams surrogate;
  std::string data_dir;
  std::string out_dir = "out";

  void validate() const {
    if (bases.empty()) throw ConfigError("no base scenarios configured");
    if (scenarios_per_base < 1 || routes_per_base < 1 || sims_per_cell < 1 ||
        refine_every < 1 || select_per_cell < 1 || jobs < 1) {
      throw ConfigError("run counts must all be >= 1");
    }
    if (select_per_cell > sims_per_cell)
      throw ConfigError("cannot select more scenes than simulations");
    if (sims_per_cell < refine_every)
      throw ConfigError("sims_per_cell must be >= refine_every");
    if (train_routes < 0 || train_routes >= routes_per_base)
      throw ConfigError("train_routes must leave at least one test route");
  }
};

inline RunConfig run_config_from(const Node& root) {
  RunConfig rc;
  const Node* run = root.child("run");
  if (run) {
    rc.seed = static_cast<std::uint64_t>(run->get_num("seed", 1));
    rc.scenarios_per_base = run->get_int("scenarios_per_base", rc.scenarios_per_base);
    rc.routes_per_base = run->get_int("routes_per_base", rc.routes_per_base);
    rc.sims_per_cell = run->get_int("sims_per_cell", rc.sims_per_cell);
    rc.refine_every = run->get_int("refine_every", rc.refine_every);
    rc.select_per_cell = run->get_int("select_per_cell", rc.select_per_cell);
    rc.jobs = run->get_int("jobs", rc.jobs);
    rc.train_routes = run->get_int("train_routes", rc.train_routes);
    rc.low_confidence_threshold =
        run->get_num("low_confidence_threshold", rc.low_confidence_threshold);
    rc.out_dir = run->get("out", rc.out_dir);
    rc.data_dir = run->get("data", rc.data_dir);
    std::string bases = run->get("bases", "");
    if (!bases.empty()) {
      for (const auto& name : text::split(bases, ',')) {
        auto trimmed = std::string(text::trim(name));
        if (trimmed.empty()) continue;
        auto base = pipeline::base_from_string(trimmed);
        if (!base) throw ConfigError("unknown base scenario: " + trimmed);
        rc.bases.push_back(*base);
      }
    }
  }
  if (rc.bases.empty()) {
    for (auto b : pipeline::all_base_scenarios()) rc.bases.push_back(b);
  }
  rc.weights = weights_from(root.child("weights"));
  rc.surrogate = policy_from(root.child("policy"));
  rc.validate();
  return rc;
}

}  // namespace scenforge::config

#endif  // SCENFORGE_CONFIG_HPP
