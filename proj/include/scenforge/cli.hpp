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

#ifndef SCENFORGE_CLI_HPP
#define SCENFORGE_CLI_HPP

// Command-line surface. Exit codes: 0 success, 1 runtime/cell errors,
// 2 configuration or usage errors.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scenforge/harness.hpp"

namespace scenforge::cli {

namespace fs = std::filesystem;

inline std::string default_data_dir() {
#ifdef SCENFORGE_DATA_DIR
  return SCENFORGE_DATA_DIR;
#else
  return "data";
#endif
}

namespace detail {

struct GlobalFlags {
  std::string config_path;
  std::string data_dir = default_data_dir();
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
};

inline config::RunConfig effective_config(const GlobalFlags& flags) {
  config::Node root;
  if (!flags.config_path.empty()) root = config::parse_file(flags.config_path);
  auto rc = config::run_config_from(root);
  if (flags.seed_set) rc.seed = flags.seed;
  if (!flags.out_dir.empty()) rc.out_dir = flags.out_dir;
  if (flags.jobs > 0) rc.jobs = flags.jobs;
  if (rc.data_dir.empty()) rc.data_dir = flags.data_dir;
  return rc;
}

inline sampler::ParamAssignment parse_assignment(const std::vector<std::string>& kvs) {
  sampler::ParamAssignment a;
  for (const auto& kv : kvs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw config::ConfigError("--param expects NAME=VALUE, got: " + kv);
    a[kv.substr(0, eq)] = std::strtod(kv.c_str() + eq + 1, nullptr);
  }
  return a;
}

// Selected scenes recorded in an artifact directory, rebuilt into runnable
// scene configs.
struct StoredScene {
  std::string base;
  int scenario = 0;
  int route = 0;
  size_t sample = 0;
  bool padded = false;
  double os = 0.0;
  sim::SceneConfig cfg;
};

inline std::vector<StoredScene> load_selected_scenes(const std::string& dir) {
  std::vector<StoredScene> out;
  fs::path cells = fs::path(dir) / "reports" / "cells";
  if (!fs::exists(cells))
    throw config::ConfigError("no cell reports under " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(cells)) {
    if (entry.path().extension() == ".tsv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    // stem: <base>_s<scenario>_r<route>
    std::string stem = file.stem().string();
    auto r_pos = stem.rfind("_r");
    auto s_pos = stem.rfind("_s", r_pos - 1);
    if (r_pos == std::string::npos || s_pos == std::string::npos)
      throw config::ConfigError("unrecognized cell file name: " + stem);
    StoredScene proto;
    proto.base = stem.substr(0, s_pos);
    proto.scenario = std::atoi(stem.c_str() + s_pos + 2);
    proto.route = std::atoi(stem.c_str() + r_pos + 2);
    std::string script_path =
        dir + "/scripts/" + proto.base + "_s" + std::to_string(proto.scenario) + ".scn";
    auto script = dsl::parse_script(text::read_file(script_path));

    auto lines = text::split_lines(text::read_file(file.string()));
    for (size_t i = 2; i < lines.size(); ++i) {  // skip version + column header
      auto f = text::split(lines[i], '\t');
      if (f.size() < 6 || f[3] != "1") continue;
      StoredScene scene = proto;
      scene.sample = std::strtoull(f[0].c_str(), nullptr, 10);
      scene.padded = f[4] == "1";
      scene.os = std::strtod(f[2].c_str(), nullptr);
      sampler::ParamAssignment a;
      for (const auto& kv : text::split(f[5], ' ')) {
        auto eq = kv.find('=');
        if (eq != std::string::npos)
          a[kv.substr(0, eq)] = std::strtod(kv.c_str() + eq + 1, nullptr);
      }
      scene.cfg = sim::build_scene(script, a, scene.route);
      out.push_back(std::move(scene));
    }
  }
  return out;
}

// Independent pose re-scan of a stored trace: does the recorded collision
// flag match footprint overlap?
inline bool rescan_collision(const sim::SceneTrace& trace) {
  bool any = false;
  for (const auto& f : trace.frames) {
    for (size_t i = 0; i < f.agents.size(); ++i) {
      for (size_t j = i + 1; j < f.agents.size(); ++j) {
        double dx = f.agents[i].x - f.agents[j].x;
        double dy = f.agents[i].y - f.agents[j].y;
        double r = trace.agents[i].radius + trace.agents[j].radius;
        if (dx * dx + dy * dy < r * r) any = true;
      }
    }
  }
  return any;
}

}  // namespace detail

inline int run(int argc, char** argv) {
  CLI::App app{"scenforge: scenario synthesis, simulation and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  detail::GlobalFlags flags;
  app.add_option("--config", flags.config_path, "run configuration file");
  app.add_option("--data", flags.data_dir, "data directory (kb seed, fixtures, prompts)");
  app.add_option("--out", flags.out_dir, "artifact output directory");
  auto* seed_opt = app.add_option("--seed", flags.seed, "master seed override");
  app.add_option("--jobs", flags.jobs, "worker threads for independent cells");

  auto* kb_cmd = app.add_subcommand("kb", "knowledge-base maintenance");
  kb_cmd->require_subcommand(1);
  std::string kb_save, kb_emb, kb_fixtures_out;
  auto* kb_build = kb_cmd->add_subcommand("build", "load the seed KB and freeze indices");
  kb_build->add_option("--save", kb_save, "write the canonical KB record file");
  kb_build->add_option("--export-embeddings", kb_emb, "write the embedding sidecar");
  kb_build->add_option("--compile-fixtures", kb_fixtures_out,
                       "render the scenario corpus into a hash-keyed fixture file");
  std::string query_kind = "behavior", query_text;
  int query_k = 1;
  auto* kb_query = kb_cmd->add_subcommand("query", "nearest-neighbor lookup");
  kb_query->add_option("--kind", query_kind, "behavior | geometry | spawn");
  kb_query->add_option("--text", query_text, "query description")->required();
  kb_query->add_option("-k", query_k, "results to return");

  auto* gen_cmd = app.add_subcommand("gen", "run the full generation pipeline");
  bool gen_resume = false;
  gen_cmd->add_flag("--resume", gen_resume,
                    "reuse finished cells already present in the output directory");

  std::string run_script, run_trace_out;
  int run_route = 0;
  std::vector<std::string> run_params;
  auto* run_cmd = app.add_subcommand("run", "simulate one scene from a script");
  run_cmd->add_option("--script", run_script, "scene script file")->required();
  run_cmd->add_option("--route", run_route, "route id");
  run_cmd->add_option("--param", run_params, "parameter NAME=VALUE (repeatable)");
  run_cmd->add_option("--trace", run_trace_out, "write the trace here");

  std::string eval_in;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy on stored scenes");
  eval_cmd->add_option("--in", eval_in, "artifact directory")->required();

  auto* finetune_cmd =
      app.add_subcommand("finetune", "finetune on train routes, evaluate on the rest");

  std::string report_in;
  auto* report_cmd = app.add_subcommand("report", "re-aggregate an artifact directory");
  report_cmd->add_option("--in", report_in, "artifact directory")->required();

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "re-scan and summarize a trace");
  replay_cmd->add_option("trace", replay_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  flags.seed_set = seed_opt->count() > 0;

  try {
    if (kb_build->parsed()) {
      auto base = kb::KnowledgeBase::load(text::read_file(flags.data_dir + "/kb_seed.txt"));
      pipeline::ComponentIndices::build(base);
      std::cout << "entries: " << base.entries().size() << "\n";
      for (auto kind : {dsl::ComponentKind::Behavior, dsl::ComponentKind::Geometry,
                        dsl::ComponentKind::SpawnPosition}) {
        std::cout << dsl::to_string(kind) << ": " << base.count(kind) << " entries\n";
      }
      if (!kb_save.empty()) text::write_file(kb_save, base.save());
      if (!kb_emb.empty()) text::write_file(kb_emb, base.export_embeddings());
      if (!kb_fixtures_out.empty()) {
        auto corpus = pipeline::load_corpus(
            text::read_file(flags.data_dir + "/scenario_corpus.txt"));
        auto templates = pipeline::PromptTemplates::load_dir(flags.data_dir);
        auto fixtures = pipeline::fixtures_from_corpus(corpus, templates);
        text::write_file(kb_fixtures_out, fixtures.save());
        std::cout << "fixtures: " << fixtures.size() << " records\n";
      }
      return 0;
    }
    if (kb_query->parsed()) {
      auto base = kb::KnowledgeBase::load(text::read_file(flags.data_dir + "/kb_seed.txt"));
      auto kind = dsl::component_from_string(query_kind);
      if (!kind) throw config::ConfigError("unknown component kind: " + query_kind);
      auto index = base.build_index(*kind);
      auto hits = index.retrieve(kb::embed(query_text, base.encoder()), query_k);
      for (const auto& h : hits) {
        std::cout << h.id << "\t" << text::fmt_number(h.score) << "\t"
                  << base.entry(h.id).description << "\n";
      }
      return 0;
    }
    if (gen_cmd->parsed()) {
      auto rc = detail::effective_config(flags);
      auto assets = harness::Assets::load(rc.data_dir);
      auto out = harness::run_generation(rc, assets, gen_resume ? rc.out_dir : "");
      harness::write_artifacts(out, rc);
      std::cout << metrics::render_report(out.report) << "\n"
                << metrics::render_pivot(out.report);
      if (out.error_count > 0) {
        std::cerr << out.error_count << " cell(s) failed; see reports/errors.tsv\n";
        return 1;
      }
      return 0;
    }
    if (run_cmd->parsed()) {
      auto rc = detail::effective_config(flags);
      auto script = dsl::parse_script(text::read_file(run_script));
      auto assignment = detail::parse_assignment(run_params);
      for (const auto& p : dsl::list_params(script)) {
        if (!assignment.count(p.name)) assignment[p.name] = (p.lo + p.hi) / 2.0;
      }
      auto cfg = sim::build_scene(script, assignment, run_route);
      auto trace = sim::run(cfg, ego::make_policy(rc.surrogate), rc.seed);
      auto m = metrics::score_trace(trace, rc.weights);
      std::cout << "frames " << trace.frames.size() << " collision " << m.cr
                << " comp " << text::fmt_number(m.comp) << " os "
                << text::fmt_number(m.os) << "\n";
      if (!run_trace_out.empty())
        text::write_file(run_trace_out, sim::serialize_trace(trace));
      return 0;
    }
    if (eval_cmd->parsed()) {
      auto rc = detail::effective_config(flags);
      auto scenes = detail::load_selected_scenes(eval_in);
      if (scenes.empty()) throw config::ConfigError("no selected scenes in " + eval_in);
      std::map<std::string, std::vector<sim::SceneConfig>> by_base;
      for (const auto& s : scenes) by_base[s.base].push_back(s.cfg);

      // Cross-policy evaluation: every named block under `eval`, or the
      // surrogate policy when none are configured.
      std::vector<std::pair<std::string, ego::PolicyParams>> policies;
      if (!flags.config_path.empty()) {
        auto root = config::parse_file(flags.config_path);
        if (const auto* eval_node = root.child("eval")) {
          for (const auto& [name, node] : eval_node->children) {
            policies.emplace_back(name, config::policy_from(&node));
          }
        }
      }
      if (policies.empty()) policies.emplace_back("surrogate", rc.surrogate);

      std::cout << "policy\tbase\tscenes\tcr\tos\n";
      for (const auto& [name, params] : policies) {
        double cr_sum = 0.0, os_sum = 0.0;
        for (const auto& [base, cfgs] : by_base) {
          auto r = ego::evaluate_policy(params, cfgs, rc.weights);
          std::cout << name << "\t" << base << "\t" << cfgs.size() << "\t"
                    << text::fmt_number(r.cr) << "\t" << text::fmt_number(r.os) << "\n";
          cr_sum += r.cr;
          os_sum += r.os;
        }
        std::cout << name << "\tavg\t" << scenes.size() << "\t"
                  << text::fmt_number(cr_sum / by_base.size()) << "\t"
                  << text::fmt_number(os_sum / by_base.size()) << "\n";
      }
      return 0;
    }
    if (finetune_cmd->parsed()) {
      auto rc = detail::effective_config(flags);
      auto assets = harness::Assets::load(rc.data_dir);
      auto report = harness::run_finetune_eval(rc, assets);
      std::cout << harness::render_finetune_report(report);
      fs::create_directories(rc.out_dir + "/reports");
      text::write_file(rc.out_dir + "/reports/finetune.tsv",
                       harness::render_finetune_report(report));
      text::write_file(rc.out_dir + "/reports/finetune_log.tsv",
                       harness::render_finetune_log(report.log));
      text::write_file(rc.out_dir + "/policy_tuned.cfg",
                       "policy {\n" + report.tuned.save() + "}\n");
      return 0;
    }
    if (report_cmd->parsed()) {
      auto scenes = detail::load_selected_scenes(report_in);
      std::vector<metrics::SceneRecord> records;
      for (const auto& s : scenes) {
        std::string trace_path = report_in + "/traces/" + s.base + "_s" +
                                 std::to_string(s.scenario) + "_r" +
                                 std::to_string(s.route) + "_i" +
                                 std::to_string(s.sample) + ".trc";
        auto trace = sim::parse_trace(text::read_file(trace_path));
        metrics::SceneRecord rec;
        rec.base = s.base;
        rec.scenario_id = s.scenario;
        rec.route_id = s.route;
        rec.policy_id = "surrogate";
        rec.metrics = metrics::score_trace(trace);
        rec.padded = s.padded;
        rec.adversary_path = metrics::adversary_trajectory(trace);
        records.push_back(std::move(rec));
      }
      auto report = metrics::aggregate(records);
      std::cout << metrics::render_report(report) << "\n"
                << metrics::render_pivot(report);
      return 0;
    }
    if (replay_cmd->parsed()) {
      auto trace = sim::parse_trace(text::read_file(replay_path));
      auto m = metrics::score_trace(trace);
      bool rescanned = detail::rescan_collision(trace);
      std::cout << "frames " << trace.frames.size() << " agents "
                << trace.agents.size() << " progress "
                << text::fmt_number(trace.final_progress()) << " os "
                << text::fmt_number(m.os) << "\n";
      if (rescanned != trace.collided()) {
        std::cerr << "collision flag mismatch: trace says " << trace.collided()
                  << ", pose re-scan says " << rescanned << "\n";
        return 1;
      }
      std::cout << "collision flag consistent: "
                << (rescanned ? "yes (collision)" : "yes (no collision)") << "\n";
      return 0;
    }
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace scenforge::cli

#endif  // SCENFORGE_CLI_HPP
