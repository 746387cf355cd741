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

#ifndef SCENFORGE_SAMPLER_HPP
#define SCENFORGE_SAMPLER_HPP

// Uniform parameter sampling with adaptive range refinement. Values drawn in
// collision cases are recorded per parameter; once at least three exist, the
// sampling range shrinks to [mu - sigma, mu + sigma] fitted on all of them
// (clipped to the original range). Collision history is cumulative: each
// refinement refits on every collision seen so far.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenforge/dsl.hpp"
#include "scenforge/rng.hpp"
#include "scenforge/text.hpp"

namespace scenforge::sampler {

using ParamAssignment = std::map<std::string, double>;

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SampleState {
 public:
  struct ParamState {
    std::string name;
    double original_lo = 0.0, original_hi = 0.0;
    double current_lo = 0.0, current_hi = 0.0;
    std::vector<double> collision_values;
  };

  SampleState() = default;

  SampleState(const std::vector<dsl::ParamSpec>& specs, std::uint64_t seed)
      : seed_(seed), stream_(seed) {
    for (const auto& s : specs) {
      params_.push_back({s.name, s.lo, s.hi, s.lo, s.hi, {}});
    }
  }

  std::uint64_t seed() const { return seed_; }
  int samples_drawn() const { return samples_drawn_; }
  const std::vector<ParamState>& params() const { return params_; }

  const ParamState& param(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return p;
    }
    throw SamplerError("unknown parameter: " + name);
  }

  // One uniform draw per parameter from its current range, in spec order.
  ParamAssignment sample() {
    ParamAssignment out;
    for (const auto& p : params_) {
      out[p.name] = stream_.uniform(p.current_lo, p.current_hi);
    }
    ++samples_drawn_;
    return out;
  }

  void record_outcome(const ParamAssignment& assignment, bool collided) {
    if (!collided) return;
    for (auto& p : params_) {
      auto it = assignment.find(p.name);
      if (it == assignment.end())
        throw SamplerError("assignment missing parameter: " + p.name);
      p.collision_values.push_back(it->second);
    }
  }

  // Gaussian refit of every parameter with >= 3 recorded collision values.
  // Degenerate fits (empty or near-zero-width intersection with the original
  // range) fall back to the original range.
  void refine() {
    for (auto& p : params_) {
      if (p.collision_values.size() < 3) continue;
      double n = static_cast<double>(p.collision_values.size());
      double mean = 0.0;
      for (double v : p.collision_values) mean += v;
      mean /= n;
      double ss = 0.0;
      for (double v : p.collision_values) ss += (v - mean) * (v - mean);
      double sigma = std::sqrt(ss / (n - 1.0));  // Bessel-corrected
      double lo = std::max(mean - sigma, p.original_lo);
      double hi = std::min(mean + sigma, p.original_hi);
      double min_width = 1e-6 * (p.original_hi - p.original_lo);
      if (lo > hi || hi - lo < min_width) {
        p.current_lo = p.original_lo;
        p.current_hi = p.original_hi;
      } else {
        p.current_lo = lo;
        p.current_hi = hi;
      }
    }
  }

  // ------------------------------------------------------------------
  // Resumable snapshot. The generator state is reconstructed by discarding
  // exactly the raw draws consumed so far (one per parameter per sample).

  std::string save() const {
    std::string out = "scenforge-state v1\n";
    out += "seed\t" + std::to_string(seed_) + "\n";
    out += "drawn\t" + std::to_string(samples_drawn_) + "\n";
    for (const auto& p : params_) {
      out += "param\t" + p.name + "\t" + text::fmt_double(p.original_lo) + "\t" +
             text::fmt_double(p.original_hi) + "\t" + text::fmt_double(p.current_lo) +
             "\t" + text::fmt_double(p.current_hi) + "\t";
      for (size_t i = 0; i < p.collision_values.size(); ++i) {
        if (i) out += ' ';
        out += text::fmt_double(p.collision_values[i]);
      }
      out += "\n";
    }
    return out;
  }

  static SampleState load(std::string_view content) {
    auto lines = text::split_lines(content);
    if (lines.empty() || text::trim(lines[0]) != "scenforge-state v1")
      throw SamplerError("not a scenforge-state v1 file");
    SampleState st;
    for (size_t i = 1; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      auto fields = text::split(lines[i], '\t');
      if (fields[0] == "seed" && fields.size() == 2) {
        st.seed_ = std::strtoull(fields[1].c_str(), nullptr, 10);
      } else if (fields[0] == "drawn" && fields.size() == 2) {
        st.samples_drawn_ = std::atoi(fields[1].c_str());
      } else if (fields[0] == "param" && fields.size() == 7) {
        ParamState p;
        p.name = fields[1];
        p.original_lo = std::strtod(fields[2].c_str(), nullptr);
        p.original_hi = std::strtod(fields[3].c_str(), nullptr);
        p.current_lo = std::strtod(fields[4].c_str(), nullptr);
        p.current_hi = std::strtod(fields[5].c_str(), nullptr);
        for (const auto& tok : text::split(fields[6], ' ')) {
          if (!tok.empty()) p.collision_values.push_back(std::strtod(tok.c_str(), nullptr));
        }
        st.params_.push_back(std::move(p));
      } else {
        throw SamplerError("bad state record on line " + std::to_string(i + 1));
      }
    }
    st.stream_ = rng::Stream(st.seed_);
    st.stream_.discard(static_cast<std::uint64_t>(st.samples_drawn_) * st.params_.size());
    return st;
  }

 private:
  std::uint64_t seed_ = 0;
  int samples_drawn_ = 0;
  std::vector<ParamState> params_;
  rng::Stream stream_{0};
};

// Sample indices (1-based) after which refine() runs: every refine_every
// samples, except after the last sample of the batch where no draw consumes
// the update.
inline std::vector<int> refine_points(int n_total, int refine_every) {
  std::vector<int> points;
  for (int i = refine_every; i < n_total; i += refine_every) points.push_back(i);
  return points;
}

struct BatchResult {
  ParamAssignment assignment;
  bool collided = false;
};

// Draw/run/record loop with periodic refinement (defaults: 50 samples,
// refine every 10).
inline std::vector<BatchResult> run_batch_schedule(
    SampleState& state, int n_total, int refine_every,
    const std::function<bool(const ParamAssignment&)>& scene_runner) {
  if (refine_every < 1 || n_total < refine_every)
    throw SamplerError("need n_total >= refine_every >= 1");
  auto points = refine_points(n_total, refine_every);
  size_t next_point = 0;
  std::vector<BatchResult> results;
  results.reserve(static_cast<size_t>(n_total));
  for (int i = 1; i <= n_total; ++i) {
    BatchResult r;
    r.assignment = state.sample();
    r.collided = scene_runner(r.assignment);
    state.record_outcome(r.assignment, r.collided);
    results.push_back(std::move(r));
    if (next_point < points.size() && points[next_point] == i) {
      state.refine();
      ++next_point;
    }
  }
  return results;
}

}  // namespace scenforge::sampler

#endif  // SCENFORGE_SAMPLER_HPP
