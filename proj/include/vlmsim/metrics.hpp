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

// Step metrics derived from traces, scaling curves, and report emitters.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmsim/cluster.hpp"
#include "vlmsim/engine.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/schedule.hpp"
#include "vlmsim/trace.hpp"

namespace vlmsim {

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_digest(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

// ---------------------------------------------------------------------------

/// Achieved training FLOPs of one replica over the capacity of its chips.
/// Every replica runs the same timeline, so the dp factor cancels.
inline double mfu(const Trace& trace, double replica_flops,
                  const ParallelismPlan& plan, const ChipSpec& chip) {
  if (!(trace.makespan > 0)) throw Error("mfu: empty trace");
  const double chips = static_cast<double>(plan.tp * plan.pp);
  return replica_flops / (trace.makespan * chips * chip.peak_flops);
}

struct ScalingPoint {
  std::uint64_t chips = 0;
  double throughput = 0;  // tokens/s
  double efficiency = 0;

  bool operator==(const ScalingPoint&) const = default;
};

struct ScalingCurve {
  std::vector<ScalingPoint> points;
  std::uint64_t reference = 0;

  double at(std::uint64_t chips) const {
    for (const auto& p : points) {
      if (p.chips == chips) return p.efficiency;
    }
    throw Error("no scaling point at " + std::to_string(chips) + " chips");
  }
};

/// Per-chip throughput relative to the reference point.
inline ScalingCurve scaling_efficiency(
    const std::vector<std::pair<std::uint64_t, double>>& runs,
    std::uint64_t reference) {
  const auto ref = std::find_if(runs.begin(), runs.end(), [&](const auto& r) {
    return r.first == reference;
  });
  if (ref == runs.end()) {
    throw Error("scaling reference " + std::to_string(reference) +
                " chips missing from runs");
  }
  if (reference == 0 || !(ref->second > 0)) {
    throw Error("scaling reference needs chips > 0 and throughput > 0");
  }
  const double base = ref->second / static_cast<double>(reference);
  ScalingCurve c;
  c.reference = reference;
  for (const auto& [n, tput] : runs) {
    if (n == 0) throw Error("scaling point with 0 chips");
    const double e =
        n == reference ? 1.0 : (tput / static_cast<double>(n)) / base;
    c.points.push_back({n, tput, e});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Run report.

struct RunReport {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::uint64_t chips = 0;
  std::uint64_t dp = 1;
  std::uint64_t tp = 1;
  std::uint64_t pp = 1;
  std::uint64_t microbatches = 0;
  double step_time = 0;
  double tokens_per_step = 0;  // global
  double tokens_per_second = 0;
  double mfu = 0;
  double bubble = 0;
  double analytic_bubble = 0;
  double overlap_efficiency = 0;
  MemoryBreakdown memory;
  bool fits_memory = false;
  double grad_sync_bytes = 0;
  double grad_sync_time = 0;
  double fused_op_latency = 0;
  double sequential_op_latency = 0;
  std::optional<double> efficiency;  // at this run's chip count
};

inline constexpr int kReportSchema = 1;

struct RunInputs {
  const ModelSpec& model;
  const TrainingStage& stage;
  const ParallelismPlan& plan;
  const Topology& topology;
  const SimulationInput& sim;
};

/// Builds the report of one simulated step.
inline RunReport make_report(const Trace& trace, const RunInputs& in,
                             std::string digest) {
  RunReport r;
  r.config_digest = std::move(digest);
  r.seed = trace.seed;
  r.chips = in.plan.chips();
  r.dp = in.plan.dp;
  r.tp = in.plan.tp;
  r.pp = in.plan.pp;
  r.microbatches = in.sim.pipeline.microbatches;
  r.step_time = trace.makespan;
  r.tokens_per_step = in.sim.replica_tokens * static_cast<double>(in.plan.dp);
  r.tokens_per_second = r.tokens_per_step / r.step_time;
  r.mfu = mfu(trace, in.sim.replica_flops, in.plan, in.topology.chip);
  r.bubble = measured_bubble(trace, in.plan.pp).bubble_fraction;
  r.analytic_bubble = analytic_bubble(in.plan.pp, r.microbatches);
  r.overlap_efficiency = overlap_efficiency(trace);

  // Activations are sized by the longest and widest microbatch.
  std::uint64_t seq = 1;
  std::uint64_t mb = 1;
  for (const auto& sh : in.sim.shapes) {
    seq = std::max(seq, sh.max_length());
    mb = std::max(mb, sh.samples());
  }
  auto plan = in.plan;
  plan.microbatches_per_step = r.microbatches;
  r.memory = memory_per_chip(in.model, plan, in.stage, seq, mb,
                             in.sim.partition.visual_tokens, in.sim.partition);
  r.fits_memory = r.memory.total <= in.topology.chip.memory;
  r.grad_sync_bytes = in.sim.sync_bytes;
  r.grad_sync_time = in.sim.sync_seconds;

  // One representative op: the first forward of the busiest stage.
  const auto& fwd = in.sim.pipeline.fwd;
  std::size_t busiest = 0;
  for (std::size_t s = 1; s < fwd.size(); ++s) {
    if (fwd[s][0].compute > fwd[busiest][0].compute) busiest = s;
  }
  const OpCost op = fwd[busiest][0];
  r.fused_op_latency = in.topology.chip.has_independent_comm_unit
                           ? fused_allgather_gemm_time(op.tp_comm, op.compute,
                                                       in.plan.fusion_chunks)
                           : op.tp_comm + op.compute;
  r.sequential_op_latency = op.tp_comm + op.compute;
  return r;
}

inline nlohmann::ordered_json report_to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["config_digest"] = r.config_digest;
  j["seed"] = r.seed;
  j["chips"] = r.chips;
  j["dp"] = r.dp;
  j["tp"] = r.tp;
  j["pp"] = r.pp;
  j["microbatches"] = r.microbatches;
  j["step_time"] = r.step_time;
  j["tokens_per_step"] = r.tokens_per_step;
  j["tokens_per_second"] = r.tokens_per_second;
  j["mfu"] = r.mfu;
  j["bubble"] = r.bubble;
  j["analytic_bubble"] = r.analytic_bubble;
  j["overlap_efficiency"] = r.overlap_efficiency;
  j["memory"] = {{"weights", r.memory.weights},
                 {"grads", r.memory.grads},
                 {"optimizer", r.memory.optimizer},
                 {"activations", r.memory.activations},
                 {"total", r.memory.total},
                 {"dominant", r.memory.dominant()}};
  j["fits_memory"] = r.fits_memory;
  j["grad_sync_bytes"] = r.grad_sync_bytes;
  j["grad_sync_time"] = r.grad_sync_time;
  j["fused_op_latency"] = r.fused_op_latency;
  j["sequential_op_latency"] = r.sequential_op_latency;
  if (r.efficiency) {
    j["efficiency"] = *r.efficiency;
  } else {
    j["efficiency"] = nullptr;
  }
  return j;
}

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> cols = {
      "config_digest",     "seed",
      "chips",             "dp",
      "tp",                "pp",
      "microbatches",      "step_time",
      "tokens_per_step",   "tokens_per_second",
      "mfu",               "bubble",
      "analytic_bubble",   "overlap_efficiency",
      "mem_weights",       "mem_grads",
      "mem_optimizer",     "mem_activations",
      "mem_total",         "fits_memory",
      "grad_sync_bytes",   "grad_sync_time",
      "fused_op_latency",  "sequential_op_latency",
      "efficiency"};
  return cols;
}

inline std::vector<std::string> report_csv_values(const RunReport& r) {
  using detail::num;
  return {r.config_digest,
          std::to_string(r.seed),
          std::to_string(r.chips),
          std::to_string(r.dp),
          std::to_string(r.tp),
          std::to_string(r.pp),
          std::to_string(r.microbatches),
          num(r.step_time),
          num(r.tokens_per_step),
          num(r.tokens_per_second),
          num(r.mfu),
          num(r.bubble),
          num(r.analytic_bubble),
          num(r.overlap_efficiency),
          num(r.memory.weights),
          num(r.memory.grads),
          num(r.memory.optimizer),
          num(r.memory.activations),
          num(r.memory.total),
          r.fits_memory ? "true" : "false",
          num(r.grad_sync_bytes),
          num(r.grad_sync_time),
          num(r.fused_op_latency),
          num(r.sequential_op_latency),
          r.efficiency ? num(*r.efficiency) : ""};
}

inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out += '"';
      for (char c : f) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += f;
    }
  }
  out += '\n';
  return out;
}

enum class ReportFormat { json, csv };

inline std::string emit_report(const RunReport& r, ReportFormat format) {
  if (format == ReportFormat::json) return report_to_json(r).dump(2) + "\n";
  return csv_line(report_csv_columns()) + csv_line(report_csv_values(r));
}

inline std::string scaling_to_csv(const ScalingCurve& c) {
  std::string out = "chips,throughput,efficiency\n";
  for (const auto& p : c.points) {
    out += csv_line({std::to_string(p.chips), detail::num(p.throughput),
                     detail::num(p.efficiency)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gantt chart.

struct GanttLayout {
  double width = 1200;     // total px
  double label_width = 120;
  double lane_height = 18;
  double lane_gap = 4;
  double top = 24;
};

inline double gantt_x(const Trace& t, double time, const GanttLayout& g = {}) {
  return g.label_width + time / t.makespan * (g.width - g.label_width - 10);
}

inline std::size_t gantt_lane(const Interval& iv) {
  return static_cast<std::size_t>(iv.chip) * 2 +
         (iv.resource == Resource::comm ? 1 : 0);
}

/// One lane per (chip, resource); compute above comm for each chip.
inline std::string emit_gantt(const Trace& t, const GanttLayout& g = {}) {
  if (t.intervals.empty() || !(t.makespan > 0)) {
    throw Error("emit_gantt: empty trace");
  }
  static const std::map<IntervalKind, const char*> colors = {
      {IntervalKind::fwd, "#4c78a8"},    {IntervalKind::bwd, "#f58518"},
      {IntervalKind::tp_comm, "#54a24b"}, {IntervalKind::p2p_fwd, "#b279a2"},
      {IntervalKind::p2p_bwd, "#9d755d"}, {IntervalKind::sync_bucket, "#e45756"},
  };
  const auto lanes = t.chips * 2;
  const double pitch = g.lane_height + g.lane_gap;
  const double height = g.top + static_cast<double>(lanes) * pitch + 10;
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(g.width) +
         "\" height=\"" + f(height) + "\" font-family=\"monospace\" " +
         "font-size=\"11\">\n";
  out += "<text x=\"4\" y=\"14\">makespan " + detail::num(t.makespan) +
         " s</text>\n";
  for (std::uint64_t l = 0; l < lanes; ++l) {
    const double y = g.top + static_cast<double>(l) * pitch;
    out += "<text x=\"4\" y=\"" + f(y + g.lane_height - 5) + "\">chip " +
           std::to_string(l / 2) + (l % 2 ? " comm" : " compute") +
           "</text>\n";
    out += "<line x1=\"" + f(g.label_width) + "\" y1=\"" +
           f(y + g.lane_height + g.lane_gap / 2) + "\" x2=\"" +
           f(g.width - 10) + "\" y2=\"" +
           f(y + g.lane_height + g.lane_gap / 2) +
           "\" stroke=\"#ddd\"/>\n";
  }
  auto ordered = t.intervals;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Interval& a, const Interval& b) {
                     return gantt_lane(a) < gantt_lane(b);
                   });
  for (const auto& iv : ordered) {
    const double y =
        g.top + static_cast<double>(gantt_lane(iv)) * pitch;
    const double x0 = gantt_x(t, iv.start, g);
    const double x1 = gantt_x(t, iv.end, g);
    out += "<rect x=\"" + f(x0) + "\" y=\"" + f(y) + "\" width=\"" +
           f(x1 - x0) + "\" height=\"" + f(g.lane_height) + "\" fill=\"" +
           colors.at(iv.kind) + "\"><title>" + std::string(to_string(iv.kind));
    if (iv.microbatch != kNoMicrobatch) {
      out += " mb " + std::to_string(iv.microbatch);
    }
    out += "</title></rect>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace vlmsim
