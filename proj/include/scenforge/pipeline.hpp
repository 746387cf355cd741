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

#ifndef SCENFORGE_PIPELINE_HPP
#define SCENFORGE_PIPELINE_HPP

// Description -> decomposition -> retrieval -> script. Text generation goes
// through a TextGenClient; the stock FixtureClient answers from canned
// prompt-keyed records so the whole pipeline runs offline and deterministic.

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scenforge/dsl.hpp"
#include "scenforge/kb.hpp"
#include "scenforge/text.hpp"

namespace scenforge::pipeline {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ClientError : public PipelineError {
 public:
  using PipelineError::PipelineError;
};

class MissingFixtureError : public ClientError {
 public:
  using ClientError::ClientError;
};

class ExtractionError : public PipelineError {
 public:
  ExtractionError(std::vector<std::string> missing)
      : PipelineError(render(missing)), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  static std::string render(const std::vector<std::string>& missing) {
    std::string msg = "missing component label(s):";
    for (const auto& m : missing) msg += " " + m;
    return msg;
  }
  std::vector<std::string> missing_;
};

// ---------------------------------------------------------------------------
// Base scenarios

enum class BaseScenario {
  StraightObstacle,
  TurningObstacle,
  LaneChanging,
  VehiclePassing,
  RedLightRunning,
  UnprotectedLeftTurn,
  RightTurn,
  CrossingNegotiation,
};

inline const std::array<BaseScenario, 8>& all_base_scenarios() {
  static const std::array<BaseScenario, 8> all = {
      BaseScenario::StraightObstacle,    BaseScenario::TurningObstacle,
      BaseScenario::LaneChanging,        BaseScenario::VehiclePassing,
      BaseScenario::RedLightRunning,     BaseScenario::UnprotectedLeftTurn,
      BaseScenario::RightTurn,           BaseScenario::CrossingNegotiation};
  return all;
}

inline const char* to_string(BaseScenario b) {
  switch (b) {
    case BaseScenario::StraightObstacle: return "straight_obstacle";
    case BaseScenario::TurningObstacle: return "turning_obstacle";
    case BaseScenario::LaneChanging: return "lane_changing";
    case BaseScenario::VehiclePassing: return "vehicle_passing";
    case BaseScenario::RedLightRunning: return "red_light_running";
    case BaseScenario::UnprotectedLeftTurn: return "unprotected_left_turn";
    case BaseScenario::RightTurn: return "right_turn";
    case BaseScenario::CrossingNegotiation: return "crossing_negotiation";
  }
  return "?";
}

inline std::optional<BaseScenario> base_from_string(std::string_view s) {
  for (auto b : all_base_scenarios()) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

// Situation phrase substituted into the generation prompt.
inline const char* base_context(BaseScenario b) {
  switch (b) {
    case BaseScenario::StraightObstacle:
      return "the ego vehicle is driving on a straight road";
    case BaseScenario::TurningObstacle:
      return "the ego vehicle is turning at an intersection";
    case BaseScenario::LaneChanging:
      return "the ego vehicle is changing lanes on a straight road";
    case BaseScenario::VehiclePassing:
      return "the ego vehicle must pass a vehicle blocking its lane";
    case BaseScenario::RedLightRunning:
      return "the ego vehicle crosses an intersection while another vehicle runs the red light";
    case BaseScenario::UnprotectedLeftTurn:
      return "the ego vehicle is making an unprotected left turn at an intersection";
    case BaseScenario::RightTurn:
      return "the ego vehicle is turning right at an intersection";
    case BaseScenario::CrossingNegotiation:
      return "the ego vehicle negotiates priority while crossing an intersection";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Text generation clients

class TextGenClient {
 public:
  virtual ~TextGenClient() = default;
  virtual std::string complete(const std::string& prompt) const = 0;
};

// Canned responses keyed by the FNV-1a hash of the rendered prompt. The file
// form accepts two record tags: `H <hex-hash> <TAB> <response>` and, as an
// authoring convenience, `P <prompt> <TAB> <response>` which is hashed at
// load time. save() always emits the canonical H form.
class FixtureClient final : public TextGenClient {
 public:
  FixtureClient() = default;

  void add(const std::string& prompt, const std::string& response) {
    responses_[text::fnv1a64(prompt)] = response;
  }

  void add_hashed(std::uint64_t key, const std::string& response) {
    responses_[key] = response;
  }

  std::string complete(const std::string& prompt) const override {
    auto it = responses_.find(text::fnv1a64(prompt));
    if (it == responses_.end()) {
      throw MissingFixtureError("no fixture for prompt hash " +
                                text::to_hex(text::fnv1a64(prompt)) +
                                " (prompt begins: " + prompt.substr(0, 60) + ")");
    }
    return it->second;
  }

  size_t size() const { return responses_.size(); }

  std::string save() const {
    std::string out = "scenforge-fixtures v1\n";
    for (const auto& [key, response] : responses_) {
      out += "H " + text::to_hex(key) + "\t" + text::escape_field(response) + "\n";
    }
    return out;
  }

  static FixtureClient load(std::string_view content) {
    auto lines = text::split_lines(content);
    if (lines.empty() || text::trim(lines[0]) != "scenforge-fixtures v1")
      throw ClientError("not a scenforge-fixtures v1 file");
    FixtureClient client;
    for (size_t i = 1; i < lines.size(); ++i) {
      const std::string& line = lines[i];
      if (text::trim(line).empty() || line[0] == '#') continue;
      if (line.size() < 2 || (line[0] != 'H' && line[0] != 'P') || line[1] != ' ')
        throw ClientError("bad fixture record on line " + std::to_string(i + 1));
      auto fields = text::split_record(line.substr(2));
      if (fields.size() != 2)
        throw ClientError("bad fixture record on line " + std::to_string(i + 1));
      std::string response = text::unescape_field(fields[1]);
      if (line[0] == 'H') {
        client.add_hashed(std::strtoull(fields[0].c_str(), nullptr, 16), response);
      } else {
        client.add(text::unescape_field(fields[0]), response);
      }
    }
    return client;
  }

  static FixtureClient load_file(const std::string& path) {
    return load(text::read_file(path));
  }

 private:
  std::map<std::uint64_t, std::string> responses_;
};

// ---------------------------------------------------------------------------
// Prompts

struct PromptTemplates {
  // generation: `{context}` and `{index}` placeholders
  std::string generation;
  // extraction: few-shot prefix; the scenario line is appended on render
  std::string extraction;

  static PromptTemplates defaults() {
    PromptTemplates t;
    t.generation =
        "Provide a description of a safety-critical scenario where {context}. "
        "(scenario {index})";
    t.extraction =
        "Decompose the scenario into Behavior, Geometry and Spawn Position lines.\n";
    return t;
  }

  static PromptTemplates load_dir(const std::string& dir) {
    PromptTemplates t;
    t.generation = text::read_file(dir + "/prompt_generation.txt");
    while (!t.generation.empty() && t.generation.back() == '\n') t.generation.pop_back();
    t.extraction = text::read_file(dir + "/prompt_extraction.txt");
    return t;
  }
};

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

inline std::string render_generation_prompt(const PromptTemplates& t, BaseScenario base,
                                            int index) {
  std::string s = replace_all(t.generation, "{context}", base_context(base));
  return replace_all(s, "{index}", std::to_string(index));
}

inline std::string render_extraction_prompt(const PromptTemplates& t,
                                            const std::string& description) {
  std::string s = t.extraction;
  if (!s.empty() && s.back() != '\n') s += '\n';
  return s + "Scenario: " + description + "\n";
}

// ---------------------------------------------------------------------------
// Decomposition

struct Decomposition {
  std::string behavior_desc;
  std::string geometry_desc;
  std::string spawn_desc;
};

inline std::string format(const Decomposition& d) {
  return "Behavior: " + d.behavior_desc + "\nGeometry: " + d.geometry_desc +
         "\nSpawn Position: " + d.spawn_desc + "\n";
}

// Pattern-matches the three labels case-insensitively, order-independent,
// first occurrence wins, value runs to end of line.
inline Decomposition extract_fields(std::string_view structured_text) {
  std::optional<std::string> behavior, geometry, spawn;
  for (const auto& raw : text::split_lines(structured_text)) {
    std::string_view line = text::trim(raw);
    std::string low = text::lower(line);
    auto value_after = [&](size_t label_len) {
      std::string_view rest = line.substr(label_len);
      rest = text::trim(rest);
      if (rest.empty() || rest[0] != ':') return std::optional<std::string>{};
      return std::optional<std::string>(std::string(text::trim(rest.substr(1))));
    };
    if (!behavior && low.rfind("behavior", 0) == 0) {
      auto v = value_after(8);
      if (v && !v->empty()) behavior = *v;
    } else if (!geometry && low.rfind("geometry", 0) == 0) {
      auto v = value_after(8);
      if (v && !v->empty()) geometry = *v;
    } else if (!spawn && low.rfind("spawn position", 0) == 0) {
      auto v = value_after(14);
      if (v && !v->empty()) spawn = *v;
    }
  }
  std::vector<std::string> missing;
  if (!behavior) missing.push_back("Behavior");
  if (!geometry) missing.push_back("Geometry");
  if (!spawn) missing.push_back("Spawn Position");
  if (!missing.empty()) throw ExtractionError(std::move(missing));
  return {*behavior, *geometry, *spawn};
}

// ---------------------------------------------------------------------------
// Pipeline steps

inline std::string generate_description(BaseScenario base, const TextGenClient& client,
                                        const PromptTemplates& templates,
                                        int index = 1) {
  std::string desc = client.complete(render_generation_prompt(templates, base, index));
  std::string trimmed(text::trim(desc));
  if (trimmed.empty()) throw ClientError("client returned an empty description");
  return trimmed;
}

inline Decomposition decompose(const std::string& full_description,
                               const TextGenClient& client,
                               const PromptTemplates& templates) {
  if (text::trim(full_description).empty())
    throw PipelineError("description must be non-empty");
  std::string structured =
      client.complete(render_extraction_prompt(templates, full_description));
  return extract_fields(structured);
}

// ---------------------------------------------------------------------------
// Seed corpus: scenario descriptions plus their reference decompositions.
// Compiling the corpus against the prompt templates yields the fixture file
// that backs the offline FixtureClient.

struct CorpusRow {
  BaseScenario base = BaseScenario::StraightObstacle;
  int index = 1;
  std::string description;
  Decomposition decomp;
};

inline std::vector<CorpusRow> load_corpus(std::string_view content) {
  auto lines = text::split_lines(content);
  if (lines.empty() || text::trim(lines[0]) != "scenforge-corpus v1")
    throw PipelineError("not a scenforge-corpus v1 file");
  std::vector<CorpusRow> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    auto f = text::split(lines[i], '\t');
    if (f.size() != 6)
      throw PipelineError("bad corpus record on line " + std::to_string(i + 1));
    auto base = base_from_string(f[0]);
    if (!base) throw PipelineError("unknown base scenario: " + f[0]);
    CorpusRow row;
    row.base = *base;
    row.index = std::atoi(f[1].c_str());
    row.description = f[2];
    row.decomp = {f[3], f[4], f[5]};
    rows.push_back(std::move(row));
  }
  return rows;
}

inline FixtureClient fixtures_from_corpus(const std::vector<CorpusRow>& rows,
                                          const PromptTemplates& templates) {
  FixtureClient client;
  for (const auto& row : rows) {
    client.add(render_generation_prompt(templates, row.base, row.index),
               row.description);
    client.add(render_extraction_prompt(templates, row.description),
               format(row.decomp));
  }
  return client;
}

// ---------------------------------------------------------------------------
// Retrieval + assembly

struct RetrievalChoice {
  dsl::ComponentKind kind = dsl::ComponentKind::Behavior;
  std::string query;
  kb::EntryId chosen = 0;
  double score = 0.0;
  bool low_confidence = false;
  std::vector<kb::EntryId> tied_with;  // same top score, later insertion order
};

struct RetrievalTrace {
  std::vector<RetrievalChoice> choices;
};

struct ComponentIndices {
  kb::Index behavior;
  kb::Index geometry;
  kb::Index spawn;

  static ComponentIndices build(const kb::KnowledgeBase& base) {
    return {base.build_index(dsl::ComponentKind::Behavior),
            base.build_index(dsl::ComponentKind::Geometry),
            base.build_index(dsl::ComponentKind::SpawnPosition)};
  }
};

struct ComposeOptions {
  double low_confidence_threshold = 0.2;
};

inline std::pair<dsl::SceneScript, RetrievalTrace> compose_scene_script(
    const Decomposition& decomp, const kb::KnowledgeBase& base,
    const ComponentIndices& indices, const ComposeOptions& options = {}) {
  RetrievalTrace trace;
  auto pick = [&](dsl::ComponentKind kind, const kb::Index& index,
                  const std::string& query) -> const kb::SnippetEntry& {
    auto q = kb::embed(query, base.encoder());
    auto hits = index.retrieve(q, 8);
    if (hits.empty()) throw PipelineError("retrieval returned no entries");
    RetrievalChoice choice;
    choice.kind = kind;
    choice.query = query;
    choice.chosen = hits[0].id;
    choice.score = hits[0].score;
    choice.low_confidence = hits[0].score < options.low_confidence_threshold;
    for (size_t i = 1; i < hits.size(); ++i) {
      if (hits[i].score >= hits[0].score - 1e-12) choice.tied_with.push_back(hits[i].id);
    }
    trace.choices.push_back(choice);
    return base.entry(hits[0].id);
  };

  const auto& be = pick(dsl::ComponentKind::Behavior, indices.behavior, decomp.behavior_desc);
  const auto& ge = pick(dsl::ComponentKind::Geometry, indices.geometry, decomp.geometry_desc);
  const auto& se = pick(dsl::ComponentKind::SpawnPosition, indices.spawn, decomp.spawn_desc);

  auto script = dsl::assemble_script(
      dsl::parse_snippet(be.snippet_text, dsl::ComponentKind::Behavior),
      dsl::parse_snippet(ge.snippet_text, dsl::ComponentKind::Geometry),
      dsl::parse_snippet(se.snippet_text, dsl::ComponentKind::SpawnPosition));
  auto report = dsl::validate(script);
  if (!report.ok()) {
    throw PipelineError("assembled script failed validation: " +
                        report.issues.front().message);
  }
  return {std::move(script), std::move(trace)};
}

}  // namespace scenforge::pipeline

#endif  // SCENFORGE_PIPELINE_HPP
