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

#ifndef SCENFORGE_HARNESS_HPP
#define SCENFORGE_HARNESS_HPP

// End-to-end orchestration: description -> decomposition -> retrieval ->
// script -> sampled simulations -> refinement -> scene selection -> reports,
// plus the finetune/eval experiment. Cells (base x scenario x route) are
// independent; a bounded worker pool runs them and results are collected by
// cell index, so artifacts are byte-identical regardless of thread count.

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "scenforge/config.hpp"
#include "scenforge/ego.hpp"
#include "scenforge/kb.hpp"
#include "scenforge/metrics.hpp"
#include "scenforge/pipeline.hpp"
#include "scenforge/rng.hpp"
#include "scenforge/sampler.hpp"
#include "scenforge/sim.hpp"

namespace scenforge::harness {

// ---------------------------------------------------------------------------
// Scene selection

struct ScoredResult {
  size_t index = 0;  // sample index within the batch
  sampler::ParamAssignment assignment;
  bool collided = false;
  metrics::SceneMetrics metrics;
};

struct Selection {
  size_t index = 0;  // into the results vector
  bool padded = false;
};

// The n collision results with the lowest overall score (ties by earlier
// sample). When collisions are scarce the list is padded with the lowest-os
// non-collisions, marked as such.
inline std::vector<Selection> select_adversarial_scenes(
    const std::vector<ScoredResult>& results, int n) {
  if (n < 1) throw std::invalid_argument("selection count must be >= 1");
  std::vector<size_t> collisions, others;
  for (size_t i = 0; i < results.size(); ++i) {
    (results[i].collided ? collisions : others).push_back(i);
  }
  auto by_os = [&](size_t a, size_t b) {
    if (results[a].metrics.os != results[b].metrics.os)
      return results[a].metrics.os < results[b].metrics.os;
    return results[a].index < results[b].index;
  };
  std::stable_sort(collisions.begin(), collisions.end(), by_os);
  std::stable_sort(others.begin(), others.end(), by_os);
  std::vector<Selection> out;
  for (size_t i = 0; i < collisions.size() && out.size() < static_cast<size_t>(n); ++i) {
    out.push_back({collisions[i], false});
  }
  for (size_t i = 0; i < others.size() && out.size() < static_cast<size_t>(n); ++i) {
    out.push_back({others[i], true});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assets

struct Assets {
  kb::KnowledgeBase base;
  std::optional<pipeline::ComponentIndices> indices;
  pipeline::FixtureClient fixtures;
  pipeline::PromptTemplates prompts;

  static Assets load(const std::string& data_dir) {
    Assets a;
    a.base = kb::KnowledgeBase::load(text::read_file(data_dir + "/kb_seed.txt"));
    a.indices = pipeline::ComponentIndices::build(a.base);
    a.fixtures = pipeline::FixtureClient::load_file(data_dir + "/fixtures.txt");
    a.prompts = pipeline::PromptTemplates::load_dir(data_dir);
    return a;
  }
};

// ---------------------------------------------------------------------------
// Generation

struct ScenarioPlan {
  pipeline::BaseScenario base;
  int scenario = 0;  // 1-based index within the base
  std::string description;
  pipeline::Decomposition decomp;
  pipeline::RetrievalTrace retrieval;
  dsl::SceneScript script;
  std::string error;  // set when the pipeline failed for this scenario
};

struct CellOutcome {
  pipeline::BaseScenario base;
  int scenario = 0;
  int route = 0;
  std::vector<ScoredResult> results;
  std::vector<Selection> selected;
  std::vector<sim::SceneTrace> selected_traces;  // parallel to selected
  std::string sampler_state;
  std::string error;
};

struct GenerationOutput {
  std::vector<ScenarioPlan> scenarios;
  std::vector<CellOutcome> cells;
  metrics::ScenarioReport report;
  int error_count = 0;
};

namespace detail {

inline std::string cell_stem(const CellOutcome& cell) {
  return std::string(pipeline::to_string(cell.base)) + "_s" +
         std::to_string(cell.scenario) + "_r" + std::to_string(cell.route);
}

inline std::string scenario_stem(const ScenarioPlan& plan) {
  return std::string(pipeline::to_string(plan.base)) + "_s" +
         std::to_string(plan.scenario);
}

inline void run_cell(CellOutcome& cell, const ScenarioPlan& plan,
                     const config::RunConfig& rc, std::uint64_t cell_seed) {
  sampler::SampleState state(dsl::list_params(plan.script), cell_seed);
  std::vector<sim::SceneTrace> traces;
  traces.reserve(static_cast<size_t>(rc.sims_per_cell));
  auto policy = ego::make_policy(rc.surrogate);
  size_t sample_index = 0;
  auto runner = [&](const sampler::ParamAssignment& assignment) {
    auto cfg = sim::build_scene(plan.script, assignment, cell.route);
    auto trace = sim::run(cfg, policy, rng::derive(cell_seed, sample_index));
    auto m = metrics::score_trace(trace, rc.weights);
    ScoredResult r;
    r.index = sample_index++;
    r.assignment = assignment;
    r.collided = m.cr > 0.0;
    r.metrics = m;
    cell.results.push_back(std::move(r));
    traces.push_back(std::move(trace));
    return cell.results.back().collided;
  };
  sampler::run_batch_schedule(state, rc.sims_per_cell, rc.refine_every, runner);
  cell.selected = select_adversarial_scenes(cell.results, rc.select_per_cell);
  for (const auto& sel : cell.selected) {
    cell.selected_traces.push_back(traces[sel.index]);
  }
  cell.sampler_state = state.save();
}

// Rebuilds a finished cell from its persisted artifacts (per-sample table,
// sampler snapshot, selected traces). Only the fields the reports need are
// recoverable; unselected traces are gone by design.
inline bool try_load_cell(CellOutcome& cell, const std::string& dir) {
  namespace fs = std::filesystem;
  std::string stem = cell_stem(cell);
  std::string tsv_path = dir + "/reports/cells/" + stem + ".tsv";
  std::string state_path = dir + "/state/" + stem + ".state";
  if (!fs::exists(tsv_path) || !fs::exists(state_path)) return false;
  CellOutcome loaded;
  loaded.base = cell.base;
  loaded.scenario = cell.scenario;
  loaded.route = cell.route;
  auto lines = text::split_lines(text::read_file(tsv_path));
  if (lines.size() < 2 || text::trim(lines[0]) != "scenforge-cell v1") return false;
  size_t n_selected = 0;
  for (size_t i = 2; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    auto f = text::split(lines[i], '\t');
    if (f.size() != 6) return false;
    ScoredResult r;
    r.index = std::strtoull(f[0].c_str(), nullptr, 10);
    r.collided = f[1] == "1";
    r.metrics.cr = r.collided ? 1.0 : 0.0;
    r.metrics.os = std::strtod(f[2].c_str(), nullptr);
    for (const auto& kv : text::split(f[5], ' ')) {
      auto eq = kv.find('=');
      if (eq != std::string::npos)
        r.assignment[kv.substr(0, eq)] = std::strtod(kv.c_str() + eq + 1, nullptr);
    }
    if (f[3] == "1") ++n_selected;
    loaded.results.push_back(std::move(r));
  }
  if (n_selected == 0) return false;
  // Re-derive the selection so its order matches the original computation.
  loaded.selected =
      select_adversarial_scenes(loaded.results, static_cast<int>(n_selected));
  for (const auto& sel : loaded.selected) {
    std::string trace_path =
        dir + "/traces/" + stem + "_i" + std::to_string(sel.index) + ".trc";
    if (!fs::exists(trace_path)) return false;
    loaded.selected_traces.push_back(sim::parse_trace(text::read_file(trace_path)));
  }
  loaded.sampler_state = text::read_file(state_path);
  cell = std::move(loaded);
  return true;
}

}  // namespace detail

// When resume_dir is non-empty, cells whose artifacts already exist there are
// reloaded instead of recomputed.
inline GenerationOutput run_generation(const config::RunConfig& rc, const Assets& assets,
                                       const std::string& resume_dir = "") {
  GenerationOutput out;

  // One plan per (base, scenario): description -> decomposition -> script.
  for (auto base : rc.bases) {
    for (int k = 1; k <= rc.scenarios_per_base; ++k) {
      ScenarioPlan plan;
      plan.base = base;
      plan.scenario = k;
      try {
        plan.description =
            pipeline::generate_description(base, assets.fixtures, assets.prompts, k);
        plan.decomp = pipeline::decompose(plan.description, assets.fixtures, assets.prompts);
        pipeline::ComposeOptions opts;
        opts.low_confidence_threshold = rc.low_confidence_threshold;
        auto [script, retrieval] =
            pipeline::compose_scene_script(plan.decomp, assets.base, *assets.indices, opts);
        plan.script = std::move(script);
        plan.retrieval = std::move(retrieval);
      } catch (const std::exception& e) {
        plan.error = e.what();
      }
      out.scenarios.push_back(std::move(plan));
    }
  }

  // One cell per (scenario plan, route).
  for (size_t p = 0; p < out.scenarios.size(); ++p) {
    for (int r = 0; r < rc.routes_per_base; ++r) {
      CellOutcome cell;
      cell.base = out.scenarios[p].base;
      cell.scenario = out.scenarios[p].scenario;
      cell.route = r;
      if (!out.scenarios[p].error.empty()) {
        cell.error = "scenario pipeline failed: " + out.scenarios[p].error;
      }
      out.cells.push_back(std::move(cell));
    }
  }

  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= out.cells.size()) break;
      CellOutcome& cell = out.cells[i];
      if (!cell.error.empty()) continue;
      if (!resume_dir.empty() && detail::try_load_cell(cell, resume_dir)) continue;
      const ScenarioPlan& plan = out.scenarios[i / rc.routes_per_base];
      try {
        detail::run_cell(cell, plan, rc, rng::derive(rc.seed, i));
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  int n_threads = std::max(1, std::min<int>(rc.jobs, static_cast<int>(out.cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<metrics::SceneRecord> records;
  for (const auto& cell : out.cells) {
    if (!cell.error.empty()) {
      ++out.error_count;
      continue;
    }
    for (size_t s = 0; s < cell.selected.size(); ++s) {
      metrics::SceneRecord rec;
      rec.base = pipeline::to_string(cell.base);
      rec.scenario_id = cell.scenario;
      rec.route_id = cell.route;
      rec.policy_id = "surrogate";
      rec.metrics = cell.results[cell.selected[s].index].metrics;
      rec.padded = cell.selected[s].padded;
      rec.adversary_path = metrics::adversary_trajectory(cell.selected_traces[s]);
      records.push_back(std::move(rec));
    }
  }
  out.report = metrics::aggregate(records);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact directory

namespace detail {

inline std::string render_cell_table(const CellOutcome& cell) {
  std::string out = "scenforge-cell v1\n";
  out += "sample\tcollided\tos\tselected\tpadded\tassignment\n";
  for (const auto& r : cell.results) {
    int sel = 0, padded = 0;
    for (const auto& s : cell.selected) {
      if (s.index == r.index) {
        sel = 1;
        padded = s.padded ? 1 : 0;
      }
    }
    std::string assign;
    for (const auto& [name, value] : r.assignment) {
      if (!assign.empty()) assign += ' ';
      assign += name + "=" + text::fmt_double(value);
    }
    out += std::to_string(r.index) + "\t" + (r.collided ? "1" : "0") + "\t" +
           text::fmt_double(r.metrics.os) + "\t" + std::to_string(sel) + "\t" +
           std::to_string(padded) + "\t" + assign + "\n";
  }
  return out;
}

inline std::string render_retrieval(const ScenarioPlan& plan) {
  std::string out = "scenforge-retrieval v1\n";
  out += "component\tquery\tentry\tscore\tlow_confidence\tties\n";
  for (const auto& c : plan.retrieval.choices) {
    std::string ties;
    for (auto id : c.tied_with) {
      if (!ties.empty()) ties += ',';
      ties += std::to_string(id);
    }
    out += std::string(dsl::to_string(c.kind)) + "\t" + text::escape_field(c.query) +
           "\t" + std::to_string(c.chosen) + "\t" + text::fmt_double(c.score) + "\t" +
           (c.low_confidence ? "1" : "0") + "\t" + ties + "\n";
  }
  return out;
}

}  // namespace detail

inline void write_artifacts(const GenerationOutput& out, const config::RunConfig& rc) {
  namespace fs = std::filesystem;
  fs::create_directories(rc.out_dir + "/scripts");
  fs::create_directories(rc.out_dir + "/traces");
  fs::create_directories(rc.out_dir + "/reports/cells");
  fs::create_directories(rc.out_dir + "/state");
  fs::create_directories(rc.out_dir + "/retrieval");

  for (const auto& plan : out.scenarios) {
    std::string stem = detail::scenario_stem(plan);
    if (plan.error.empty()) {
      text::write_file(rc.out_dir + "/scripts/" + stem + ".scn",
                       dsl::serialize_script(plan.script));
      text::write_file(rc.out_dir + "/retrieval/" + stem + ".tsv",
                       detail::render_retrieval(plan));
      text::write_file(rc.out_dir + "/scripts/" + stem + ".desc.txt",
                       plan.description + "\n\n" + pipeline::format(plan.decomp));
    }
  }
  std::string errors = "scenforge-errors v1\n";
  int n_errors = 0;
  for (const auto& cell : out.cells) {
    std::string stem = detail::cell_stem(cell);
    if (!cell.error.empty()) {
      errors += stem + "\t" + text::escape_field(cell.error) + "\n";
      ++n_errors;
      continue;
    }
    text::write_file(rc.out_dir + "/reports/cells/" + stem + ".tsv",
                     detail::render_cell_table(cell));
    text::write_file(rc.out_dir + "/state/" + stem + ".state", cell.sampler_state);
    for (size_t s = 0; s < cell.selected.size(); ++s) {
      text::write_file(rc.out_dir + "/traces/" + stem + "_i" +
                           std::to_string(cell.selected[s].index) + ".trc",
                       sim::serialize_trace(cell.selected_traces[s]));
    }
  }
  text::write_file(rc.out_dir + "/reports/summary.tsv",
                   metrics::render_report(out.report));
  if (n_errors > 0) {
    text::write_file(rc.out_dir + "/reports/errors.tsv", errors);
  }
}

// ---------------------------------------------------------------------------
// Finetune / eval experiment

struct FinetuneEvalOptions {
  ego::FinetuneOptions finetune;
  int eval_budget = 0;  // 0: derived from population * generations * scenes
};

struct FinetuneEvalReport {
  struct Row {
    std::string policy;  // "pp" (pre-finetune) or "finetuned"
    std::string base;
    double cr = 0.0;
    double os = 0.0;
    int scenes = 0;
  };
  std::vector<Row> rows;
  ego::PolicyParams tuned;
  ego::FinetuneLog log;
  int train_scenes = 0;
  int test_scenes = 0;
};

inline std::string render_finetune_log(const ego::FinetuneLog& log) {
  std::string out = "scenforge-finetune-log v1\n";
  out += "generation\tbest_cr\tbest_os\tmean_cr\tevals\n";
  for (const auto& g : log.generations) {
    out += std::to_string(g.generation) + "\t" + text::fmt_number(g.best_cr) + "\t" +
           text::fmt_number(g.best_os) + "\t" + text::fmt_number(g.mean_cr) + "\t" +
           std::to_string(g.evals_used) + "\n";
  }
  return out;
}

inline std::string render_finetune_report(const FinetuneEvalReport& report) {
  std::string out = "scenforge-finetune-report v1\n";
  out += "policy\tbase\tscenes\tcr\tos\n";
  for (const auto& r : report.rows) {
    out += r.policy + "\t" + r.base + "\t" + std::to_string(r.scenes) + "\t" +
           text::fmt_number(r.cr) + "\t" + text::fmt_number(r.os) + "\n";
  }
  return out;
}

inline FinetuneEvalReport run_finetune_eval(const config::RunConfig& rc,
                                            const Assets& assets,
                                            const FinetuneEvalOptions& options = {},
                                            const GenerationOutput* pregen = nullptr) {
  GenerationOutput local;
  const GenerationOutput* gen = pregen;
  if (!gen) {
    local = run_generation(rc, assets);
    gen = &local;
  }

  struct TaggedScene {
    pipeline::BaseScenario base;
    sim::SceneConfig cfg;
  };
  std::vector<TaggedScene> train, test;
  for (const auto& cell : gen->cells) {
    if (!cell.error.empty()) continue;
    const ScenarioPlan* plan = nullptr;
    for (const auto& p : gen->scenarios) {
      if (p.base == cell.base && p.scenario == cell.scenario) plan = &p;
    }
    if (!plan || !plan->error.empty()) continue;
    for (const auto& sel : cell.selected) {
      TaggedScene ts{cell.base,
                     sim::build_scene(plan->script, cell.results[sel.index].assignment,
                                      cell.route)};
      (cell.route < rc.train_routes ? train : test).push_back(std::move(ts));
    }
  }
  if (train.empty() || test.empty())
    throw config::ConfigError("finetune/eval split produced an empty partition");

  std::vector<sim::SceneConfig> train_cfgs;
  for (const auto& t : train) train_cfgs.push_back(t.cfg);

  ego::FinetuneOptions fopts = options.finetune;
  fopts.weights = rc.weights;
  int budget = options.eval_budget;
  if (budget <= 0) {
    budget = (fopts.population * fopts.generations + 1) *
             static_cast<int>(train_cfgs.size());
  }
  FinetuneEvalReport report;
  report.train_scenes = static_cast<int>(train.size());
  report.test_scenes = static_cast<int>(test.size());
  report.tuned = ego::finetune(rc.surrogate, train_cfgs, budget,
                               rng::derive(rc.seed, 0xf17e), fopts, &report.log);

  auto eval_rows = [&](const std::string& label, const ego::PolicyParams& params) {
    auto policy_eval = [&](const std::vector<const TaggedScene*>& scenes) {
      ego::EvalResult r;
      std::vector<sim::SceneConfig> cfgs;
      for (const auto* s : scenes) cfgs.push_back(s->cfg);
      return ego::evaluate_policy(params, cfgs, rc.weights);
    };
    std::map<pipeline::BaseScenario, std::vector<const TaggedScene*>> by_base;
    for (const auto& t : test) by_base[t.base].push_back(&t);
    double cr_sum = 0.0, os_sum = 0.0;
    for (const auto& [base, scenes] : by_base) {
      auto r = policy_eval(scenes);
      report.rows.push_back({label, pipeline::to_string(base), r.cr, r.os,
                             static_cast<int>(scenes.size())});
      cr_sum += r.cr;
      os_sum += r.os;
    }
    report.rows.push_back({label, "avg", cr_sum / static_cast<double>(by_base.size()),
                           os_sum / static_cast<double>(by_base.size()),
                           static_cast<int>(test.size())});
  };
  eval_rows("pp", rc.surrogate);
  eval_rows("finetuned", report.tuned);
  return report;
}

}  // namespace scenforge::harness

#endif  // SCENFORGE_HARNESS_HPP
