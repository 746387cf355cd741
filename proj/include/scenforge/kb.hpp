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

#ifndef SCENFORGE_KB_HPP
#define SCENFORGE_KB_HPP

// Description/snippet knowledge base with one flat-scan index per component.
// Each entry stores the original description plus rephrasings; retrieval
// scores an entry as the max cosine over its description variants. Entry
// counts are O(10^2), so the index is an exhaustive scan by construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scenforge/dsl.hpp"
#include "scenforge/text.hpp"

namespace scenforge::kb {

using EntryId = std::uint64_t;

class KbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EncoderError : public KbError {
 public:
  using KbError::KbError;
};

class DuplicateDescriptionError : public KbError {
 public:
  using KbError::KbError;
};

class EmptyComponentError : public KbError {
 public:
  using KbError::KbError;
};

struct Embedding {
  std::vector<double> values;

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size())
    throw KbError("embedding dimensions differ");
  double dot = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  return dot;
}

// ---------------------------------------------------------------------------
// Encoders

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int dim() const = 0;
  virtual Embedding embed(std::string_view text) const = 0;
};

// Offline default: feature hashing of lowercase word unigrams and bigrams,
// sublinear tf weighting (1 + ln tf), L2-normalized. Hash is FNV-1a, so the
// same text embeds identically on every platform and run.
class HashingEncoder final : public Encoder {
 public:
  explicit HashingEncoder(int dim = 256) : dim_(dim) {}

  int dim() const override { return dim_; }

  Embedding embed(std::string_view text) const override {
    if (text::trim(text).empty()) throw EncoderError("cannot embed empty text");
    std::vector<std::string> words = tokenize(text);
    std::map<std::uint64_t, int> tf;
    for (const auto& w : words) tf[text::fnv1a64(w)]++;
    for (size_t i = 0; i + 1 < words.size(); ++i) {
      tf[text::fnv1a64(words[i] + " " + words[i + 1])]++;
    }
    Embedding e;
    e.values.assign(static_cast<size_t>(dim_), 0.0);
    for (const auto& [h, count] : tf) {
      e.values[h % static_cast<std::uint64_t>(dim_)] += 1.0 + std::log(static_cast<double>(count));
    }
    normalize(e);
    return e;
  }

  static std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
      unsigned char c = static_cast<unsigned char>(ch);
      if (std::isalnum(c)) {
        cur += static_cast<char>(std::tolower(c));
      } else if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  static void normalize(Embedding& e) {
    double n = e.norm();
    if (n <= 0.0) throw EncoderError("text produced a zero embedding");
    for (double& v : e.values) v /= n;
  }

 private:
  int dim_;
};

inline Embedding embed(std::string_view text, const Encoder& encoder) {
  Embedding e = encoder.embed(text);
  if (static_cast<int>(e.values.size()) != encoder.dim())
    throw EncoderError("encoder returned wrong dimension");
  return e;
}

// ---------------------------------------------------------------------------
// Entries and indices

struct SnippetEntry {
  EntryId id = 0;
  dsl::ComponentKind kind = dsl::ComponentKind::Behavior;
  std::string description;
  std::vector<std::string> rephrasings;
  std::string snippet_text;
  std::vector<Embedding> embeddings;  // description first, then rephrasings

  size_t variant_count() const { return 1 + rephrasings.size(); }
  const std::string& variant(size_t i) const {
    return i == 0 ? description : rephrasings[i - 1];
  }
};

struct Hit {
  EntryId id = 0;
  double score = 0.0;
};

// Frozen flat index over all variants of one component.
class Index {
 public:
  struct Row {
    EntryId id;
    size_t variant;
    Embedding embedding;
  };

  Index(dsl::ComponentKind kind, std::vector<Row> rows)
      : kind_(kind), rows_(std::move(rows)) {}

  dsl::ComponentKind kind() const { return kind_; }
  bool frozen() const { return true; }
  size_t variant_count() const { return rows_.size(); }

  // Top-k entries by max-over-variants cosine, ties broken by insertion order.
  std::vector<Hit> retrieve(const Embedding& query, int k) const {
    if (k < 1) throw KbError("k must be >= 1");
    std::vector<Hit> best;  // per entry, insertion order
    std::vector<EntryId> order;
    std::map<EntryId, size_t> slot;
    for (const auto& row : rows_) {
      double score = cosine_similarity(row.embedding, query);
      auto it = slot.find(row.id);
      if (it == slot.end()) {
        slot[row.id] = best.size();
        best.push_back({row.id, score});
        order.push_back(row.id);
      } else if (score > best[it->second].score) {
        best[it->second].score = score;
      }
    }
    std::stable_sort(best.begin(), best.end(),
                     [](const Hit& a, const Hit& b) { return a.score > b.score; });
    if (best.size() > static_cast<size_t>(k)) best.resize(static_cast<size_t>(k));
    return best;
  }

 private:
  dsl::ComponentKind kind_;
  std::vector<Row> rows_;
};

// ---------------------------------------------------------------------------
// Knowledge base

class KnowledgeBase {
 public:
  explicit KnowledgeBase(std::shared_ptr<const Encoder> encoder =
                             std::make_shared<HashingEncoder>())
      : encoder_(std::move(encoder)) {}

  const Encoder& encoder() const { return *encoder_; }

  EntryId add_entry(dsl::ComponentKind kind, std::string description,
                    std::string snippet_text,
                    std::vector<std::string> rephrasings = {}) {
    dsl::parse_snippet(snippet_text, kind);  // must parse under its component
    for (const auto& e : entries_) {
      if (e.kind == kind && e.description == description) {
        throw DuplicateDescriptionError("duplicate description within component: " +
                                        description);
      }
    }
    for (size_t i = 0; i < rephrasings.size(); ++i) {
      for (size_t j = i + 1; j < rephrasings.size(); ++j) {
        if (rephrasings[i] == rephrasings[j])
          throw KbError("rephrasings must be pairwise distinct");
      }
    }
    SnippetEntry entry;
    entry.id = next_id_++;
    entry.kind = kind;
    entry.description = std::move(description);
    entry.rephrasings = std::move(rephrasings);
    entry.snippet_text = std::move(snippet_text);
    entry.embeddings.push_back(embed(entry.description, *encoder_));
    for (const auto& r : entry.rephrasings) {
      entry.embeddings.push_back(embed(r, *encoder_));
    }
    entries_.push_back(std::move(entry));
    return entries_.back().id;
  }

  const std::vector<SnippetEntry>& entries() const { return entries_; }

  const SnippetEntry& entry(EntryId id) const {
    for (const auto& e : entries_) {
      if (e.id == id) return e;
    }
    throw KbError("no such entry id: " + std::to_string(id));
  }

  size_t count(dsl::ComponentKind kind) const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.kind == kind ? 1 : 0;
    return n;
  }

  Index build_index(dsl::ComponentKind kind) const {
    std::vector<Index::Row> rows;
    for (const auto& e : entries_) {
      if (e.kind != kind) continue;
      for (size_t v = 0; v < e.variant_count(); ++v) {
        rows.push_back({e.id, v, e.embeddings[v]});
      }
    }
    if (rows.empty()) {
      throw EmptyComponentError(std::string("no entries for component ") +
                                dsl::to_string(kind));
    }
    return Index(kind, std::move(rows));
  }

  // -------------------------------------------------------------------------
  // Persistence: one record per line,
  //   id <TAB> kind <TAB> description <TAB> rephrasings (|-joined) <TAB> snippet

  std::string save() const {
    std::string out = "scenforge-kb v1\n";
    for (const auto& e : entries_) {
      out += std::to_string(e.id);
      out += '\t';
      out += dsl::to_string(e.kind);
      out += '\t';
      out += text::escape_field(e.description);
      out += '\t';
      for (size_t i = 0; i < e.rephrasings.size(); ++i) {
        if (i) out += '|';
        out += text::escape_field(e.rephrasings[i]);
      }
      out += '\t';
      out += text::escape_field(e.snippet_text);
      out += '\n';
    }
    return out;
  }

  static KnowledgeBase load(std::string_view content,
                            std::shared_ptr<const Encoder> encoder =
                                std::make_shared<HashingEncoder>()) {
    auto lines = text::split_lines(content);
    if (lines.empty() || text::trim(lines[0]) != "scenforge-kb v1")
      throw KbError("not a scenforge-kb v1 file");
    KnowledgeBase kb(std::move(encoder));
    for (size_t i = 1; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      auto fields = text::split_record(lines[i]);
      if (fields.size() != 5)
        throw KbError("bad kb record on line " + std::to_string(i + 1));
      auto kind = dsl::component_from_string(fields[1]);
      if (!kind) throw KbError("bad component kind on line " + std::to_string(i + 1));
      std::vector<std::string> rephrasings;
      for (auto& r : text::split_list_field(fields[3])) {
        if (!r.empty()) rephrasings.push_back(text::unescape_field(r));
      }
      kb.add_entry(*kind, text::unescape_field(fields[2]),
                   text::unescape_field(fields[4]), std::move(rephrasings));
    }
    return kb;
  }

  // Sidecar embedding import/export: id <TAB> variant <TAB> v0 v1 ... rows.
  // Import lets precomputed external-encoder vectors replace the stored ones.
  std::string export_embeddings() const {
    std::string out = "scenforge-emb v1\n";
    for (const auto& e : entries_) {
      for (size_t v = 0; v < e.embeddings.size(); ++v) {
        out += std::to_string(e.id);
        out += '\t';
        out += std::to_string(v);
        out += '\t';
        const auto& vals = e.embeddings[v].values;
        for (size_t i = 0; i < vals.size(); ++i) {
          if (i) out += ' ';
          out += text::fmt_double(vals[i]);
        }
        out += '\n';
      }
    }
    return out;
  }

  void import_embeddings(std::string_view content) {
    auto lines = text::split_lines(content);
    if (lines.empty() || text::trim(lines[0]) != "scenforge-emb v1")
      throw KbError("not a scenforge-emb v1 file");
    for (size_t i = 1; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      auto fields = text::split_record(lines[i]);
      if (fields.size() != 3)
        throw KbError("bad embedding record on line " + std::to_string(i + 1));
      EntryId id = std::strtoull(fields[0].c_str(), nullptr, 10);
      size_t variant = std::strtoull(fields[1].c_str(), nullptr, 10);
      Embedding emb;
      for (const auto& tok : text::split(fields[2], ' ')) {
        if (tok.empty()) continue;
        emb.values.push_back(std::strtod(tok.c_str(), nullptr));
      }
      double n = emb.norm();
      if (std::abs(n - 1.0) > 1e-9) {
        if (n <= 0.0) throw KbError("zero imported embedding");
        for (double& v : emb.values) v /= n;
      }
      bool placed = false;
      for (auto& e : entries_) {
        if (e.id == id) {
          if (variant >= e.embeddings.size())
            throw KbError("variant index out of range on line " + std::to_string(i + 1));
          e.embeddings[variant] = std::move(emb);
          placed = true;
          break;
        }
      }
      if (!placed) throw KbError("unknown entry id on line " + std::to_string(i + 1));
    }
  }

 private:
  std::shared_ptr<const Encoder> encoder_;
  std::vector<SnippetEntry> entries_;
  EntryId next_id_ = 1;
};

}  // namespace scenforge::kb

#endif  // SCENFORGE_KB_HPP
