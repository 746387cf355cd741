// Acceptance suite: one criterion per function, one PASS/FAIL line each,
// nonzero exit if anything fails. Each criterion carries its own runtime
// budget; exceeding it is a failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "scenforge/cli.hpp"
#include "scenforge/harness.hpp"
#include "support/dsl_gen.hpp"

using namespace scenforge;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  const char* name;
  double budget_seconds;
  std::function<bool(std::string&)> body;
};

std::string data_dir() { return cli::default_data_dir(); }

bool approx(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---------------------------------------------------------------------------
// 1. ADE oracle equivalence

// Brute force written independently of metrics::ade: ordered-pair loop,
// averaged the long way round.
double ade_oracle(const std::vector<metrics::Trajectory>& paths) {
  std::vector<double> pair_values;
  for (size_t i = 0; i < paths.size(); ++i) {
    for (size_t j = 0; j < paths.size(); ++j) {
      if (j <= i) continue;
      size_t n = paths[i].size() < paths[j].size() ? paths[i].size() : paths[j].size();
      double total = 0.0;
      for (size_t t = 0; t < n; ++t) {
        double dx = paths[i][t].x - paths[j][t].x;
        double dy = paths[i][t].y - paths[j][t].y;
        total += std::hypot(dx, dy);
      }
      pair_values.push_back(total / static_cast<double>(n));
    }
  }
  double s = 0.0;
  for (double v : pair_values) s += v;
  return s / static_cast<double>(pair_values.size());
}

bool criterion_ade(std::string& detail) {
  rng::Stream stream(101);
  for (int trial = 0; trial < 200; ++trial) {
    int n_paths = 2 + static_cast<int>(stream.uniform_index(4));
    std::vector<metrics::Trajectory> paths;
    for (int p = 0; p < n_paths; ++p) {
      int len = 5 + static_cast<int>(stream.uniform_index(46));
      metrics::Trajectory path;
      road::Vec2 pos{stream.uniform(-50, 50), stream.uniform(-50, 50)};
      for (int t = 0; t < len; ++t) {
        pos.x += stream.uniform(-2, 2);
        pos.y += stream.uniform(-2, 2);
        path.push_back(pos);
      }
      paths.push_back(std::move(path));
    }
    double got = metrics::ade(paths);
    double want = ade_oracle(paths);
    if (!approx(got, want, 1e-9)) {
      detail = "trial " + std::to_string(trial) + ": ade " + text::fmt_double(got) +
               " vs oracle " + text::fmt_double(want);
      return false;
    }
  }
  detail = "200 trajectory sets within 1e-9";
  return true;
}

// ---------------------------------------------------------------------------
// 2. Refinement concentration

bool criterion_refinement(std::string& detail) {
  const int seeds = 100;
  int contained = 0;
  double gain_sum = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    sampler::SampleState state({{"ADV_SPEED", 0.0, 10.0}}, 9000 + seed);
    auto results = sampler::run_batch_schedule(
        state, 50, 10, [](const sampler::ParamAssignment& a) {
          double v = a.at("ADV_SPEED");
          return v >= 4.0 && v <= 6.0;
        });
    int early = 0, late = 0;
    for (int i = 0; i < 10; ++i) early += results[i].collided ? 1 : 0;
    for (int i = 40; i < 50; ++i) late += results[i].collided ? 1 : 0;
    gain_sum += (late - early) / 10.0;
    const auto& p = state.param("ADV_SPEED");
    if (p.current_lo >= 2.5 && p.current_hi <= 7.5) ++contained;
  }
  double mean_gain = gain_sum / seeds;
  detail = "mean collision-frequency gain " + text::fmt_number(mean_gain) +
           ", contained ranges " + std::to_string(contained) + "/100";
  return mean_gain >= 0.25 && contained >= 95;
}

// ---------------------------------------------------------------------------
// 3. Retrieval fidelity

bool criterion_retrieval(std::string& detail) {
  auto full = kb::KnowledgeBase::load(text::read_file(data_dir() + "/kb_seed.txt"));
  if (full.entries().size() < 30) {
    detail = "seed KB has fewer than 30 entries";
    return false;
  }
  for (const auto& e : full.entries()) {
    if (e.rephrasings.size() < 3) {
      detail = "entry lacks 3 rephrasings: " + e.description;
      return false;
    }
  }
  int correct = 0, total = 0;
  for (size_t target = 0; target < full.entries().size(); ++target) {
    // rebuild the KB with the target's last rephrasing held out
    kb::KnowledgeBase held;
    std::vector<kb::EntryId> ids;
    std::string query;
    dsl::ComponentKind kind = full.entries()[target].kind;
    for (size_t i = 0; i < full.entries().size(); ++i) {
      const auto& e = full.entries()[i];
      auto reph = e.rephrasings;
      if (i == target) {
        query = reph.back();
        reph.pop_back();
      }
      ids.push_back(held.add_entry(e.kind, e.description, e.snippet_text, reph));
    }
    auto index = held.build_index(kind);
    auto q = held.encoder().embed(query);
    auto hits = index.retrieve(q, 3);

    // brute-force oracle over all variants of that component
    kb::EntryId best_id = 0;
    double best_score = -2.0;
    for (const auto& e : held.entries()) {
      if (e.kind != kind) continue;
      for (const auto& emb : e.embeddings) {
        double s = kb::cosine_similarity(emb, q);
        if (s > best_score) {
          best_score = s;
          best_id = e.id;
        }
      }
    }
    if (hits.empty() || hits[0].id != best_id ||
        !approx(hits[0].score, best_score, 1e-12)) {
      detail = "retrieve disagrees with the brute-force scan";
      return false;
    }
    ++total;
    if (hits[0].id == ids[target]) ++correct;
  }
  double accuracy = static_cast<double>(correct) / total;
  detail = "held-out top-1 " + std::to_string(correct) + "/" + std::to_string(total);
  return accuracy >= 0.9;
}

// ---------------------------------------------------------------------------
// 4. Pipeline determinism & scene arithmetic

std::map<std::string, std::string> read_tree(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), root).string()] =
        text::read_file(entry.path().string());
  }
  return out;
}

bool criterion_pipeline(std::string& detail) {
  auto assets = harness::Assets::load(data_dir());
  config::RunConfig rc;
  rc.seed = 2024;
  rc.bases = {pipeline::BaseScenario::StraightObstacle,
              pipeline::BaseScenario::RedLightRunning};
  rc.scenarios_per_base = 5;
  rc.routes_per_base = 2;
  rc.sims_per_cell = 50;
  rc.refine_every = 10;
  rc.select_per_cell = 2;
  rc.data_dir = data_dir();

  std::string dir_a = "/tmp/scenforge_accept_a";
  std::string dir_b = "/tmp/scenforge_accept_b";
  for (const auto& d : {dir_a, dir_b}) {
    fs::remove_all(d);
    rc.out_dir = d;
    auto out = harness::run_generation(rc, assets);
    if (out.error_count != 0) {
      detail = "generation reported cell errors";
      return false;
    }
    harness::write_artifacts(out, rc);
    // scene arithmetic: select_per_cell x routes x scenarios per base
    std::map<std::string, int> per_base;
    for (const auto& row : out.report.rows) per_base[row.base] += row.scenes;
    for (const auto& [base, count] : per_base) {
      if (count != 20) {
        detail = base + " selected " + std::to_string(count) + " scenes, want 20";
        return false;
      }
    }
    if (per_base.size() != 2) {
      detail = "expected 2 base scenarios in the report";
      return false;
    }
  }
  auto tree_a = read_tree(dir_a);
  auto tree_b = read_tree(dir_b);
  if (tree_a.size() != tree_b.size()) {
    detail = "artifact trees differ in file count";
    return false;
  }
  for (const auto& [path, content] : tree_a) {
    auto it = tree_b.find(path);
    if (it == tree_b.end() || it->second != content) {
      detail = "artifact differs: " + path;
      return false;
    }
  }
  detail = std::to_string(tree_a.size()) + " files byte-identical, 20 scenes per base";
  return true;
}

// ---------------------------------------------------------------------------
// 5. DSL round-trip

bool criterion_dsl(std::string& detail) {
  auto base = kb::KnowledgeBase::load(text::read_file(data_dir() + "/kb_seed.txt"));
  std::vector<const kb::SnippetEntry*> behaviors, geometries, spawns;
  for (const auto& e : base.entries()) {
    auto ast = dsl::parse_snippet(e.snippet_text, e.kind);
    if (dsl::serialize(ast) != e.snippet_text) {
      detail = "seed snippet not canonical: " + e.description;
      return false;
    }
    if (e.kind == dsl::ComponentKind::Behavior) behaviors.push_back(&e);
    if (e.kind == dsl::ComponentKind::Geometry) geometries.push_back(&e);
    if (e.kind == dsl::ComponentKind::SpawnPosition) spawns.push_back(&e);
  }
  int assembled = 0;
  for (const auto* b : behaviors) {
    for (const auto* g : geometries) {
      for (const auto* s : spawns) {
        auto behavior = dsl::parse_snippet(b->snippet_text, dsl::ComponentKind::Behavior);
        auto geometry = dsl::parse_snippet(g->snippet_text, dsl::ComponentKind::Geometry);
        auto spawn = dsl::parse_snippet(s->snippet_text, dsl::ComponentKind::SpawnPosition);
        if (!dsl::spawn_compatible(dsl::road_template_of(geometry),
                                   dsl::spawn_primitive_of(spawn)))
          continue;
        auto script = dsl::assemble_script(behavior, geometry, spawn);
        if (!dsl::validate(script).ok()) {
          detail = "admitted triple failed validation";
          return false;
        }
        ++assembled;
      }
    }
  }
  int round_tripped = 0;
  for (std::uint64_t seed = 0; round_tripped < 1000; ++seed) {
    testgen::SnippetGen gen(seed);
    for (auto kind : {dsl::ComponentKind::Behavior, dsl::ComponentKind::Geometry,
                      dsl::ComponentKind::SpawnPosition}) {
      dsl::SnippetAst ast;
      if (kind == dsl::ComponentKind::Behavior) ast = gen.behavior_snippet();
      else if (kind == dsl::ComponentKind::Geometry) ast = gen.geometry_snippet();
      else ast = gen.spawn_snippet();
      std::string once = dsl::serialize(ast);
      std::string twice = dsl::serialize(dsl::parse_snippet(once, kind));
      if (once != twice) {
        detail = "fuzzed snippet failed round-trip at seed " + std::to_string(seed);
        return false;
      }
      ++round_tripped;
    }
  }
  detail = std::to_string(assembled) + " admitted triples validate, " +
           std::to_string(round_tripped) + " fuzzed snippets round-trip";
  return true;
}

// ---------------------------------------------------------------------------
// 6. Simulator soundness

sim::SceneConfig random_scene(const kb::KnowledgeBase& base, rng::Stream& stream) {
  std::vector<const kb::SnippetEntry*> behaviors, geometries, spawns;
  for (const auto& e : base.entries()) {
    if (e.kind == dsl::ComponentKind::Behavior) behaviors.push_back(&e);
    if (e.kind == dsl::ComponentKind::Geometry) geometries.push_back(&e);
    if (e.kind == dsl::ComponentKind::SpawnPosition) spawns.push_back(&e);
  }
  while (true) {
    const auto* b = behaviors[stream.uniform_index(behaviors.size())];
    const auto* g = geometries[stream.uniform_index(geometries.size())];
    const auto* s = spawns[stream.uniform_index(spawns.size())];
    auto behavior = dsl::parse_snippet(b->snippet_text, dsl::ComponentKind::Behavior);
    auto geometry = dsl::parse_snippet(g->snippet_text, dsl::ComponentKind::Geometry);
    auto spawn = dsl::parse_snippet(s->snippet_text, dsl::ComponentKind::SpawnPosition);
    if (!dsl::spawn_compatible(dsl::road_template_of(geometry),
                               dsl::spawn_primitive_of(spawn)))
      continue;
    auto script = dsl::assemble_script(behavior, geometry, spawn);
    sampler::ParamAssignment a;
    for (const auto& p : dsl::list_params(script)) {
      a[p.name] = stream.uniform(p.lo, p.hi);
    }
    auto road = road::build_template(dsl::road_template_of(geometry));
    int route = static_cast<int>(stream.uniform_index(road.routes.size()));
    try {
      return sim::build_scene(script, a, route);
    } catch (const sim::PlacementError&) {
      continue;  // some sampled spawn distances fall past short arms
    }
  }
}

bool rescan_trace(const sim::SceneTrace& trace, const road::RoadTemplate& road_t,
                  std::string& detail) {
  const auto& route = road_t.routes.at(static_cast<size_t>(trace.route_id));
  int prev_lane = -1;
  for (size_t k = 0; k < trace.frames.size(); ++k) {
    const auto& f = trace.frames[k];
    // collision: overlap of any footprint pair
    bool overlap = false;
    for (size_t i = 0; i < f.agents.size(); ++i) {
      for (size_t j = i + 1; j < f.agents.size(); ++j) {
        double dx = f.agents[i].x - f.agents[j].x;
        double dy = f.agents[i].y - f.agents[j].y;
        double r = trace.agents[i].radius + trace.agents[j].radius;
        if (std::hypot(dx, dy) < r) overlap = true;
      }
    }
    if (overlap != f.collision) {
      detail = "collision flag mismatch at frame " + std::to_string(k);
      return false;
    }
    // out-of-road distance from the ego pose
    road::Vec2 ego{f.agents[0].x, f.agents[0].y};
    int lane_id = 0;
    auto proj = road_t.nearest_lane(ego, &lane_id);
    double oor = proj.lateral - road_t.lane_width / 2.0;
    if (oor < 0.0) oor = 0.0;
    if (!approx(oor, f.oor, 1e-9)) {
      detail = "out-of-road mismatch at frame " + std::to_string(k);
      return false;
    }
    // lane invasion events
    int expected = 0;
    if (prev_lane >= 0 && lane_id != prev_lane) {
      int prescribed = route.lane_at(f.progress * route.total_length);
      if (lane_id != prescribed) expected = 1;
    }
    if (expected != f.lane_invasion) {
      detail = "lane-invasion mismatch at frame " + std::to_string(k);
      return false;
    }
    prev_lane = lane_id;
  }
  // physicality bounds
  for (size_t k = 1; k < trace.frames.size(); ++k) {
    for (size_t i = 0; i < trace.agents.size(); ++i) {
      const auto& prev = trace.frames[k - 1].agents[i];
      const auto& cur = trace.frames[k].agents[i];
      if (std::abs(cur.speed - prev.speed) > std::abs(cur.accel) * trace.dt + 1e-9) {
        detail = "speed-change bound violated";
        return false;
      }
      if (std::hypot(cur.x - prev.x, cur.y - prev.y) > 20.0 * trace.dt + 1e-9) {
        detail = "displacement bound violated";
        return false;
      }
      for (double v : {cur.x, cur.y, cur.yaw, cur.speed, cur.accel, cur.yaw_rate}) {
        if (!std::isfinite(v)) {
          detail = "non-finite value in trace";
          return false;
        }
      }
    }
  }
  return true;
}

bool criterion_simulator(std::string& detail) {
  auto base = kb::KnowledgeBase::load(text::read_file(data_dir() + "/kb_seed.txt"));
  rng::Stream stream(31337);
  auto policy = ego::make_policy({});
  int collisions = 0;
  for (int i = 0; i < 500; ++i) {
    auto scene = random_scene(base, stream);
    auto trace = sim::run(scene, policy, rng::derive(99, i));
    if (!rescan_trace(trace, scene.road, detail)) {
      detail = "scene " + std::to_string(i) + ": " + detail;
      return false;
    }
    collisions += trace.collided() ? 1 : 0;
    if (i % 25 == 0) {
      auto again = sim::run(scene, policy, rng::derive(99, i));
      if (sim::serialize_trace(again) != sim::serialize_trace(trace)) {
        detail = "identical seeds produced different traces";
        return false;
      }
    }
  }
  detail = "500 random scenes re-scanned (" + std::to_string(collisions) +
           " collisions), bounds hold";
  return true;
}

// ---------------------------------------------------------------------------
// 7. Finetune directionality

bool criterion_finetune(std::string& detail) {
  auto script = dsl::assemble_script(
      dsl::parse_snippet("behavior AdvBehavior():\n"
                         "    do CrossingBehavior(ego, ADV_SPEED, ADV_DISTANCE)\n"
                         "param ADV_SPEED = Range(0, 5)\n"
                         "param ADV_DISTANCE = Range(0, 40)\n",
                         dsl::ComponentKind::Behavior),
      dsl::parse_snippet("StraightRoad(2)\n", dsl::ComponentKind::Geometry),
      dsl::parse_snippet("RightFront(D)\nparam D = Range(10, 60)\n",
                         dsl::ComponentKind::SpawnPosition));
  auto make = [&](double sp, double tr, double d) {
    return sim::build_scene(script, {{"ADV_SPEED", sp}, {"ADV_DISTANCE", tr}, {"D", d}}, 0);
  };
  std::vector<sim::SceneConfig> train{make(2, 8, 25), make(2, 8, 35), make(3, 8, 25),
                                      make(3, 8, 35), make(4, 8, 25), make(4, 8, 35),
                                      make(2, 8, 45), make(1, 12, 45)};
  std::vector<sim::SceneConfig> test{make(2.5, 8, 30), make(3.5, 8, 28),
                                     make(2, 8, 40),  make(3, 8, 30),
                                     make(2.5, 8, 45), make(4, 8, 30)};

  ego::PolicyParams incumbent;
  double train_base = ego::evaluate_policy(incumbent, train).cr;
  double test_base = ego::evaluate_policy(incumbent, test).cr;
  if (test_base <= 0.0) {
    detail = "pre-finetune policy already avoids the held-out scenes";
    return false;
  }

  // grid-search oracle: the training set is avoidable by some feasible params
  bool avoidable = false;
  for (double bt : {6.0, 10.0, 24.0}) {
    for (double th : {0.3, 0.6, 0.9}) {
      ego::PolicyParams p;
      p.brake_trigger_distance = bt;
      p.detection_half_angle = th;
      auto r = ego::evaluate_policy(p, train);
      if (r.cr == 0.0 && r.comp >= 0.3) avoidable = true;
    }
  }
  if (!avoidable) {
    detail = "grid search found no collision-free feasible params";
    return false;
  }

  ego::FinetuneOptions opts;
  opts.population = 16;
  opts.generations = 6;
  int budget = (opts.population * opts.generations + 1) * static_cast<int>(train.size());
  int reduced = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto tuned = ego::finetune(incumbent, train, budget, seed, opts);
    double train_cr = ego::evaluate_policy(tuned, train).cr;
    if (train_cr > train_base + 1e-12) {
      detail = "elitism violated at seed " + std::to_string(seed);
      return false;
    }
    double test_cr = ego::evaluate_policy(tuned, test).cr;
    if (test_cr < test_base - 1e-12) ++reduced;
  }
  detail = "held-out CR reduced in " + std::to_string(reduced) + "/20 trials (baseline " +
           text::fmt_number(test_base) + ")";
  return reduced >= 18;
}

// ---------------------------------------------------------------------------
// 8. Metrics contracts

bool criterion_metrics(std::string& detail) {
  rng::Stream stream(4242);
  for (int i = 0; i < 10000; ++i) {
    metrics::SceneMetrics m;
    m.cr = stream.uniform01() < 0.5 ? 0.0 : 1.0;
    m.rr = std::floor(stream.uniform(0, 4));
    m.ss = std::floor(stream.uniform(0, 4));
    m.li = std::floor(stream.uniform(0, 5));
    m.or_ = stream.uniform(0, 15);
    m.rf = stream.uniform01();
    m.comp = stream.uniform01();
    m.ts = stream.uniform01();
    m.acc = stream.uniform(0, 8);
    m.yv = stream.uniform(0, 1.2);
    double os = metrics::overall_score(m);
    if (os < 0.0 || os > 1.0) {
      detail = "os out of [0,1]";
      return false;
    }
    auto check_worse = [&](metrics::SceneMetrics worse) {
      return metrics::overall_score(worse) <= os + 1e-12;
    };
    auto w = m;
    w.cr = 1.0;
    if (!check_worse(w)) { detail = "os not monotone in cr"; return false; }
    w = m; w.rr += 1;
    if (!check_worse(w)) { detail = "os not monotone in rr"; return false; }
    w = m; w.ss += 1;
    if (!check_worse(w)) { detail = "os not monotone in ss"; return false; }
    w = m; w.li += 1;
    if (!check_worse(w)) { detail = "os not monotone in li"; return false; }
    w = m; w.or_ += 2.0;
    if (!check_worse(w)) { detail = "os not monotone in or"; return false; }
  }

  // constructed traces with hand-computed rf / comp / ts
  auto make_trace = [](int frames, double progress, double lat) {
    sim::SceneTrace t;
    t.dt = 0.1;
    t.max_steps = 300;
    t.lane_width = 3.5;
    t.agents.push_back({sim::AgentClass::Car, 1.2, true});
    t.agents.push_back({sim::AgentClass::Car, 1.2, false});
    for (int k = 0; k < frames; ++k) {
      sim::TraceFrame f;
      f.progress = progress * (k + 1) / frames;
      f.lat_route = lat;
      f.agents.push_back({0.5 * k, 0.0, 0.0, 5.0, 0.0, 0.0});
      f.agents.push_back({30.0, 3.0, 0.0, 0.0, 0.0, 0.0});
      t.frames.push_back(std::move(f));
    }
    return t;
  };
  struct Case {
    int frames;
    double progress, lat;
    double want_rf, want_comp, want_ts;
  };
  // lane_width 3.5: quarter-lane offset 0.875 -> rf 0.5; full offset 1.75 -> rf 0
  Case cases[] = {{300, 1.0, 0.0, 1.0, 1.0, 1.0},
                  {150, 0.5, 0.875, 0.5, 0.5, 0.5},
                  {60, 0.2, 1.75, 0.0, 0.2, 0.2}};
  for (const auto& c : cases) {
    auto m = metrics::compute_scene_metrics(make_trace(c.frames, c.progress, c.lat));
    if (!approx(m.rf, c.want_rf, 1e-9) || !approx(m.comp, c.want_comp, 1e-9) ||
        !approx(m.ts, c.want_ts, 1e-9)) {
      detail = "constructed trace mismatch: rf " + text::fmt_number(m.rf) + " comp " +
               text::fmt_number(m.comp) + " ts " + text::fmt_number(m.ts);
      return false;
    }
  }
  detail = "10000 random vectors in bounds and monotone, 3 constructed traces match";
  return true;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "ade oracle equivalence", 5.0, criterion_ade},
      {2, "refinement concentration", 10.0, criterion_refinement},
      {3, "retrieval fidelity", 5.0, criterion_retrieval},
      {4, "pipeline determinism & arithmetic", 120.0, criterion_pipeline},
      {5, "dsl round-trip", 10.0, criterion_dsl},
      {6, "simulator soundness", 120.0, criterion_simulator},
      {7, "finetune directionality", 180.0, criterion_finetune},
      {8, "metrics contracts", 30.0, criterion_metrics},
  };
  int failures = 0;
  for (auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > c.budget_seconds) {
      ok = false;
      detail += " [exceeded " + text::fmt_number(c.budget_seconds) + "s budget]";
    }
    std::printf("[%s] criterion %d: %s — %s (%.2fs)\n", ok ? "PASS" : "FAIL", c.number,
                c.name, detail.c_str(), elapsed);
    if (!ok) ++failures;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
