// Copyright 2026 The vlmsim Authors. All Rights Reserved.
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

// Independent checkers shared by the test suites. Nothing here calls into the
// code under test beyond reading its data types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "vlmsim/arch.hpp"
#include "vlmsim/schedule.hpp"
#include "vlmsim/trace.hpp"

namespace vlmsim::testing {

inline std::string configs_dir() { return VLMSIM_CONFIG_DIR; }
inline std::string preset(const std::string& name) {
  return configs_dir() + "/" + name;
}
inline std::string oracle_dir() { return VLMSIM_ORACLE_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vlmsim-test-" + name);
  std::filesystem::remove_all(p);
  return p;
}

/// Returns a description of the first legality problem, or "".
/// Checks exactly-once per kind and forward-before-backward per stage.
inline std::string schedule_problem(const PipelineSchedule& s) {
  if (s.slots.size() != s.stages) return "stage count";
  for (std::size_t i = 0; i < s.slots.size(); ++i) {
    std::vector<int> fwd(s.microbatches, -1);
    std::vector<int> bwd(s.microbatches, -1);
    for (std::size_t k = 0; k < s.slots[i].size(); ++k) {
      const auto& slot = s.slots[i][k];
      if (slot.microbatch >= s.microbatches) return "microbatch id range";
      auto& seen = slot.pass == Pass::forward ? fwd : bwd;
      if (seen[slot.microbatch] != -1) return "duplicate slot";
      seen[slot.microbatch] = static_cast<int>(k);
    }
    for (std::uint64_t j = 0; j < s.microbatches; ++j) {
      if (fwd[j] < 0 || bwd[j] < 0) return "missing slot";
      if (bwd[j] < fwd[j]) return "backward before forward";
    }
  }
  return "";
}

/// Largest count of forwards awaiting their backward, stage by stage,
/// recomputed from scratch.
inline std::vector<std::uint64_t> live_activations(const PipelineSchedule& s) {
  std::vector<std::uint64_t> out;
  for (const auto& stage : s.slots) {
    std::set<std::uint64_t> live;
    std::uint64_t peak = 0;
    for (const auto& slot : stage) {
      if (slot.pass == Pass::forward) {
        live.insert(slot.microbatch);
      } else {
        live.erase(slot.microbatch);
      }
      peak = std::max<std::uint64_t>(peak, live.size());
    }
    out.push_back(peak);
  }
  return out;
}

/// Intervals on one (chip, resource) must not overlap and must be nonempty.
inline std::string exclusivity_problem(const Trace& t) {
  std::map<std::pair<std::uint32_t, Resource>, std::vector<Interval>> lanes;
  for (const auto& iv : t.intervals) {
    if (!(iv.end > iv.start)) return "empty interval";
    if (iv.start < 0) return "negative time";
    lanes[{iv.chip, iv.resource}].push_back(iv);
  }
  for (auto& [key, v] : lanes) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.start < b.start;
    });
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i].start < v[i - 1].end - 1e-12) {
        std::ostringstream os;
        os << "overlap on chip " << key.first << " "
           << to_string(key.second) << " at " << v[i].start;
        return os.str();
      }
    }
  }
  return "";
}

/// Microbatch causality across the pipeline:
/// fwd(s, j) ends before bwd(s, j) starts; fwd(s, j) starts after the
/// activation sent by stage s-1 landed; bwd(s, j) starts after the gradient
/// sent by stage s+1 landed.
inline std::string causality_problem(const Trace& t) {
  using Key = std::tuple<std::uint32_t, std::int64_t>;
  std::map<Key, double> fwd_start, fwd_end, bwd_start, bwd_end;
  std::map<Key, double> send_fwd_end, send_bwd_end;
  auto lo = [](std::map<Key, double>& m, Key k, double v) {
    auto [it, fresh] = m.emplace(k, v);
    if (!fresh) it->second = std::min(it->second, v);
  };
  auto hi = [](std::map<Key, double>& m, Key k, double v) {
    auto [it, fresh] = m.emplace(k, v);
    if (!fresh) it->second = std::max(it->second, v);
  };
  for (const auto& iv : t.intervals) {
    const Key k{iv.chip, iv.microbatch};
    switch (iv.kind) {
      case IntervalKind::fwd:
        lo(fwd_start, k, iv.start);
        hi(fwd_end, k, iv.end);
        break;
      case IntervalKind::bwd:
        lo(bwd_start, k, iv.start);
        hi(bwd_end, k, iv.end);
        break;
      case IntervalKind::p2p_fwd: hi(send_fwd_end, k, iv.end); break;
      case IntervalKind::p2p_bwd: hi(send_bwd_end, k, iv.end); break;
      default: break;
    }
  }
  const double eps = 1e-12;
  for (const auto& [k, start] : bwd_start) {
    if (!fwd_end.count(k) || start < fwd_end.at(k) - eps) {
      return "backward before forward";
    }
  }
  for (const auto& [k, start] : fwd_start) {
    const auto [chip, mb] = k;
    if (chip == 0) continue;
    const Key prev{chip - 1, mb};
    if (send_fwd_end.count(prev) && start < send_fwd_end.at(prev) - eps) {
      return "forward before activation arrived";
    }
  }
  for (const auto& [k, start] : bwd_start) {
    const auto [chip, mb] = k;
    const Key next{chip + 1, mb};
    if (send_bwd_end.count(next) && start < send_bwd_end.at(next) - eps) {
      return "backward before gradient arrived";
    }
  }
  return "";
}

// Per-chip length of compute time covered by at least one interval.
inline double compute_union(const Trace& t, std::uint32_t chip) {
  std::vector<std::pair<double, double>> v;
  for (const auto& iv : t.intervals) {
    if (iv.chip == chip && iv.resource == Resource::compute) {
      v.emplace_back(iv.start, iv.end);
    }
  }
  std::sort(v.begin(), v.end());
  double total = 0;
  double cur_s = -1;
  double cur_e = -1;
  for (const auto& [s, e] : v) {
    if (s > cur_e) {
      if (cur_e > cur_s) total += cur_e - cur_s;
      cur_s = s;
      cur_e = e;
    } else {
      cur_e = std::max(cur_e, e);
    }
  }
  if (cur_e > cur_s) total += cur_e - cur_s;
  return total;
}

/// Hand-arithmetic parameter sheet: model -> component -> summed terms.
inline std::map<std::string, std::map<std::string, std::uint64_t>>
param_sheet() {
  std::ifstream in(oracle_dir() + "/param_counts.csv");
  if (!in) throw std::runtime_error("missing param_counts.csv");
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, std::map<std::string, std::uint64_t>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, component, term, value;
    std::getline(ss, name, ',');
    std::getline(ss, component, ',');
    std::getline(ss, term, ',');
    std::getline(ss, value, ',');
    out[name][component] += std::stoull(value);
  }
  return out;
}

/// Exhaustive reference: minimal |log(c/r) - log(w/h)| by long double search,
/// reported as the set of grids within rounding of the optimum.
inline std::vector<TileGrid> best_grids(std::uint64_t w, std::uint64_t h,
                                        std::uint64_t max_tiles) {
  struct Cand {
    TileGrid g;
    long double err;
  };
  std::vector<Cand> all;
  long double best = 1e300L;
  for (std::uint64_t r = 1; r <= max_tiles; ++r) {
    for (std::uint64_t c = 1; r * c <= max_tiles; ++c) {
      const long double e = std::fabs(std::log(static_cast<long double>(c) / r) -
                                      std::log(static_cast<long double>(w) / h));
      all.push_back({{r, c}, e});
      best = std::min(best, e);
    }
  }
  std::vector<TileGrid> out;
  for (const auto& c : all) {
    if (c.err <= best + 1e-12L) out.push_back(c.g);
  }
  return out;
}

/// The grid enumeration picks among optimal grids: a larger grid only when
/// the image covers more than half of its pixels; equal sizes prefer columns.
inline TileGrid enumerated_grid(std::uint64_t w, std::uint64_t h,
                                const TilingPolicy& p) {
  const auto best = best_grids(w, h, p.max_tiles);
  std::uint64_t smallest = p.max_tiles;
  for (const auto& b : best) smallest = std::min(smallest, b.tiles());
  std::uint64_t chosen = smallest;
  for (const auto& b : best) {
    if (2 * w * h > p.tile_side * p.tile_side * b.tiles()) {
      chosen = std::max(chosen, b.tiles());
    }
  }
  TileGrid expect{0, 0};
  for (const auto& b : best) {
    if (b.tiles() == chosen && b.cols > expect.cols) expect = b;
  }
  return expect;
}

}  // namespace vlmsim::testing
