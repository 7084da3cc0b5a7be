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

// 1F1B pipeline schedules and bubble statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmsim/error.hpp"
#include "vlmsim/trace.hpp"

namespace vlmsim {

enum class Pass : std::uint8_t { forward, backward };

struct Slot {
  Pass pass = Pass::forward;
  std::uint64_t microbatch = 0;

  bool operator==(const Slot&) const = default;
};

struct PipelineSchedule {
  std::uint64_t stages = 0;
  std::uint64_t microbatches = 0;
  std::vector<std::vector<Slot>> slots;  // per stage, in execution order

  bool operator==(const PipelineSchedule&) const = default;
};

/// Stage i issues min(p - i, m) forwards before its first backward, then
/// alternates backward/forward, then drains the remaining backwards.
inline PipelineSchedule build_1f1b(std::uint64_t p, std::uint64_t m) {
  if (p == 0 || m == 0) throw Error("1F1B needs p >= 1 and m >= 1");
  PipelineSchedule s{p, m, std::vector<std::vector<Slot>>(p)};
  for (std::uint64_t i = 0; i < p; ++i) {
    auto& out = s.slots[i];
    out.reserve(2 * m);
    const auto warmup = std::min(p - i, m);
    std::uint64_t next_f = 0;
    std::uint64_t next_b = 0;
    for (; next_f < warmup; ++next_f) out.push_back({Pass::forward, next_f});
    while (next_b < m) {
      out.push_back({Pass::backward, next_b++});
      if (next_f < m) out.push_back({Pass::forward, next_f++});
    }
  }
  return s;
}

/// All forwards, then all backwards. Reference for the in-flight contrast.
inline PipelineSchedule build_gpipe(std::uint64_t p, std::uint64_t m) {
  if (p == 0 || m == 0) throw Error("GPipe needs p >= 1 and m >= 1");
  PipelineSchedule s{p, m, std::vector<std::vector<Slot>>(p)};
  for (auto& out : s.slots) {
    for (std::uint64_t j = 0; j < m; ++j) out.push_back({Pass::forward, j});
    for (std::uint64_t j = 0; j < m; ++j) out.push_back({Pass::backward, j});
  }
  return s;
}

/// Largest number of forwards awaiting their backward, per stage.
inline std::vector<std::uint64_t> peak_in_flight(const PipelineSchedule& s) {
  std::vector<std::uint64_t> out;
  for (const auto& stage : s.slots) {
    std::uint64_t live = 0;
    std::uint64_t peak = 0;
    for (const auto& slot : stage) {
      if (slot.pass == Pass::forward) {
        peak = std::max(peak, ++live);
      } else if (live > 0) {
        --live;
      }
    }
    out.push_back(peak);
  }
  return out;
}

inline nlohmann::ordered_json schedule_to_json(const PipelineSchedule& s) {
  nlohmann::ordered_json j;
  j["stages"] = s.stages;
  j["microbatches"] = s.microbatches;
  auto& arr = j["slots"] = nlohmann::ordered_json::array();
  for (const auto& stage : s.slots) {
    auto row = nlohmann::ordered_json::array();
    for (const auto& slot : stage) {
      row.push_back((slot.pass == Pass::forward ? "F" : "B") +
                    std::to_string(slot.microbatch));
    }
    arr.push_back(std::move(row));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Bubble statistics.

struct BubbleStats {
  double bubble_fraction = 0;
  std::vector<double> per_stage_idle;
  double makespan = 0;
};

/// Closed form for uniform per-microbatch stage times.
inline double analytic_bubble(std::uint64_t p, std::uint64_t m) {
  if (p == 0 || m == 0) throw Error("analytic_bubble needs p, m >= 1");
  return static_cast<double>(p - 1) / static_cast<double>(m + p - 1);
}

inline std::uint64_t min_microbatches_for_bubble(std::uint64_t p,
                                                 double target) {
  if (!(target > 0 && target < 1)) throw Error("target must be in (0, 1)");
  if (p <= 1) return 1;
  const double guess =
      std::ceil(static_cast<double>(p - 1) * (1.0 - target) / target);
  auto m = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(guess));
  // Correct for rounding in the closed form.
  while (m > 1 && analytic_bubble(p, m - 1) <= target) --m;
  while (analytic_bubble(p, m) > target) ++m;
  return m;
}

inline BubbleStats measured_bubble(const Trace& trace, std::uint64_t p) {
  if (trace.intervals.empty()) throw Error("measured_bubble: empty trace");
  if (p == 0) throw Error("measured_bubble: p must be >= 1");
  BubbleStats out;
  out.makespan = trace.makespan;
  double busy = 0;
  for (std::uint64_t s = 0; s < p; ++s) {
    const double b =
        busy_time(trace, static_cast<std::uint32_t>(s), Resource::compute);
    busy += b;
    out.per_stage_idle.push_back(trace.makespan - b);
  }
  out.bubble_fraction =
      1.0 - busy / (static_cast<double>(p) * trace.makespan);
  return out;
}

}  // namespace vlmsim
