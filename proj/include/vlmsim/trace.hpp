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

#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmsim/error.hpp"

namespace vlmsim {

enum class Resource : std::uint8_t { compute = 0, comm = 1 };

enum class IntervalKind : std::uint8_t {
  fwd,
  bwd,
  tp_comm,
  p2p_fwd,
  p2p_bwd,
  sync_bucket,
};

inline std::string_view to_string(Resource r) {
  return r == Resource::compute ? "compute" : "comm";
}

inline std::string_view to_string(IntervalKind k) {
  switch (k) {
    case IntervalKind::fwd: return "fwd";
    case IntervalKind::bwd: return "bwd";
    case IntervalKind::tp_comm: return "tp_comm";
    case IntervalKind::p2p_fwd: return "p2p_fwd";
    case IntervalKind::p2p_bwd: return "p2p_bwd";
    case IntervalKind::sync_bucket: return "sync_bucket";
  }
  return "?";
}

inline constexpr std::int64_t kNoMicrobatch = -1;

struct Interval {
  std::uint32_t chip = 0;
  Resource resource = Resource::compute;
  double start = 0;
  double end = 0;
  IntervalKind kind = IntervalKind::fwd;
  std::int64_t microbatch = kNoMicrobatch;

  double duration() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

/// Time-stamped record of one simulated step. Chip ids are the pipeline
/// stages of one representative data-parallel replica and tensor-parallel
/// rank; every other chip runs an identical timeline.
struct Trace {
  std::vector<Interval> intervals;
  double makespan = 0;
  std::uint64_t seed = 0;
  std::uint64_t chips = 0;
  std::uint64_t compute_events = 0;

  bool operator==(const Trace&) const = default;
};

inline void sort_intervals(std::vector<Interval>& v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) {
    return std::tie(a.chip, a.resource, a.start, a.end, a.kind, a.microbatch) <
           std::tie(b.chip, b.resource, b.start, b.end, b.kind, b.microbatch);
  });
}

inline double busy_time(const Trace& t, std::uint32_t chip, Resource r) {
  double total = 0;
  for (const auto& iv : t.intervals) {
    if (iv.chip == chip && iv.resource == r) total += iv.duration();
  }
  return total;
}

/// One JSON object per line: chip, resource, start, end, label, microbatch.
inline std::string trace_to_jsonl(const Trace& t) {
  std::string out;
  for (const auto& iv : t.intervals) {
    nlohmann::ordered_json j;
    j["chip"] = iv.chip;
    j["resource"] = to_string(iv.resource);
    j["start"] = iv.start;
    j["end"] = iv.end;
    j["label"] = to_string(iv.kind);
    if (iv.microbatch == kNoMicrobatch) {
      j["microbatch"] = nullptr;
    } else {
      j["microbatch"] = iv.microbatch;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline Trace trace_from_jsonl(std::string_view text) {
  Trace t;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Interval iv;
    iv.chip = j.at("chip").get<std::uint32_t>();
    iv.resource = j.at("resource").get<std::string>() == "compute"
                      ? Resource::compute
                      : Resource::comm;
    iv.start = j.at("start").get<double>();
    iv.end = j.at("end").get<double>();
    const auto label = j.at("label").get<std::string>();
    bool known = false;
    for (auto k : {IntervalKind::fwd, IntervalKind::bwd, IntervalKind::tp_comm,
                   IntervalKind::p2p_fwd, IntervalKind::p2p_bwd,
                   IntervalKind::sync_bucket}) {
      if (label == to_string(k)) {
        iv.kind = k;
        known = true;
      }
    }
    if (!known) throw Error("unknown trace label: " + label);
    iv.microbatch = j.at("microbatch").is_null()
                        ? kNoMicrobatch
                        : j.at("microbatch").get<std::int64_t>();
    t.intervals.push_back(iv);
    t.makespan = std::max(t.makespan, iv.end);
    t.chips = std::max<std::uint64_t>(t.chips, iv.chip + 1);
  }
  return t;
}

}  // namespace vlmsim
