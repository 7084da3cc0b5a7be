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

// Deterministic discrete-event simulation of one training step.
//
// Every chip owns two resources: a compute unit and a communication unit.
// With the bypass stream enabled the two run concurrently; tensor-parallel
// collectives are split into chunks that pipeline against the GEMM they feed.
// Without it, all communication is serialized onto the compute timeline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "vlmsim/arch.hpp"
#include "vlmsim/cluster.hpp"
#include "vlmsim/comm.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/schedule.hpp"
#include "vlmsim/trace.hpp"
#include "vlmsim/workload.hpp"

namespace vlmsim {

class PlanError : public Error {
 public:
  explicit PlanError(std::vector<Violation> v)
      : Error(format(v)), violations_(std::move(v)) {}

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string format(const std::vector<Violation>& v) {
    std::string out = "invalid plan:";
    for (const auto& x : v) out += " [" + x.path + "] " + x.message + ";";
    return out;
  }
  std::vector<Violation> violations_;
};

// ---------------------------------------------------------------------------
// Communication-computation fusion.

/// Completion time of an AllGather feeding a GEMM when both are split into
/// `chunks` equal blocks: the GEMM on block i starts once block i has landed
/// and block i-1 has been multiplied. Equals t_comm + t_gemm for one chunk.
inline double fused_allgather_gemm_time(double t_comm, double t_gemm,
                                        std::uint64_t chunks) {
  if (chunks == 0) throw Error("fusion needs chunks >= 1");
  if (t_comm < 0 || t_gemm < 0) throw Error("fusion times must be >= 0");
  // Closed form of the chunk recurrence: tc + (k-1) max(tc, tg) + tg.
  const double hi = std::max(t_comm, t_gemm);
  const double lo = std::min(t_comm, t_gemm);
  return hi + lo / static_cast<double>(chunks);
}

// ---------------------------------------------------------------------------
// Pipeline workload: everything the event loop needs, already in seconds.

struct OpCost {
  double compute = 0;  // GEMM time on one chip
  double tp_comm = 0;  // tensor-parallel collectives attached to the op
};

enum class ScheduleKind { one_f_one_b, gpipe };

struct PipelineWorkload {
  std::uint64_t stages = 1;
  std::uint64_t microbatches = 1;
  std::vector<std::vector<OpCost>> fwd;      // [stage][microbatch]
  std::vector<std::vector<OpCost>> bwd;      // [stage][microbatch]
  std::vector<std::vector<double>> p2p_fwd;  // stage -> stage+1
  std::vector<std::vector<double>> p2p_bwd;  // stage -> stage-1
  std::vector<std::vector<double>> sync_buckets;  // [stage] per sync
  SyncFrequency sync_frequency = SyncFrequency::per_step;
  bool overlap_grad_sync = true;
  bool bypass = true;
  std::uint64_t fusion_chunks = 1;
  ScheduleKind schedule = ScheduleKind::one_f_one_b;

  /// Equal costs everywhere; handy for schedule studies.
  static PipelineWorkload uniform(std::uint64_t p, std::uint64_t m,
                                  double fwd_time, double bwd_time) {
    PipelineWorkload w;
    w.stages = p;
    w.microbatches = m;
    w.fwd.assign(p, std::vector<OpCost>(m, {fwd_time, 0}));
    w.bwd.assign(p, std::vector<OpCost>(m, {bwd_time, 0}));
    w.p2p_fwd.assign(p, std::vector<double>(m, 0));
    w.p2p_bwd.assign(p, std::vector<double>(m, 0));
    w.sync_buckets.assign(p, {});
    return w;
  }
};

namespace detail {

enum class EventKind : std::uint8_t { op_done = 0, arrival_fwd, arrival_bwd };

struct Event {
  double time;
  std::uint32_t chip;
  Resource resource;
  std::int64_t microbatch;
  EventKind kind;

  // Ties at equal time resolve by (chip, resource, microbatch, kind).
  bool operator>(const Event& o) const {
    return std::tie(time, chip, resource, microbatch, kind) >
           std::tie(o.time, o.chip, o.resource, o.microbatch, o.kind);
  }
};

struct ChipState {
  double compute_busy_until = 0;
  double comm_busy_until = 0;
  std::size_t next_slot = 0;
  bool busy = false;
  std::vector<std::optional<double>> fwd_arrival;
  std::vector<std::optional<double>> bwd_arrival;
};

class Simulator {
 public:
  explicit Simulator(const PipelineWorkload& w)
      : w_(w),
        schedule_(w.schedule == ScheduleKind::gpipe
                      ? build_gpipe(w.stages, w.microbatches)
                      : build_1f1b(w.stages, w.microbatches)),
        chips_(w.stages) {
    for (auto& c : chips_) {
      c.fwd_arrival.assign(w.microbatches, std::nullopt);
      c.bwd_arrival.assign(w.microbatches, std::nullopt);
    }
  }

  Trace run(std::uint64_t seed) {
    for (std::uint32_t s = 0; s < w_.stages; ++s) try_dispatch(s);
    while (!queue_.empty()) {
      const Event ev = queue_.top();
      queue_.pop();
      auto& chip = chips_[ev.chip];
      switch (ev.kind) {
        case EventKind::op_done:
          chip.busy = false;
          break;
        case EventKind::arrival_fwd:
          chip.fwd_arrival[ev.microbatch] = ev.time;
          break;
        case EventKind::arrival_bwd:
          chip.bwd_arrival[ev.microbatch] = ev.time;
          break;
      }
      try_dispatch(ev.chip);
    }
    for (std::uint32_t s = 0; s < w_.stages; ++s) {
      if (chips_[s].next_slot != schedule_.slots[s].size()) {
        throw Error("simulation stalled on stage " + std::to_string(s));
      }
    }
    Trace t;
    t.seed = seed;
    t.chips = w_.stages;
    t.compute_events = compute_events_;
    t.intervals = std::move(intervals_);
    for (const auto& iv : t.intervals) t.makespan = std::max(t.makespan, iv.end);
    sort_intervals(t.intervals);
    return t;
  }

 private:
  void record(std::uint32_t chip, Resource r, double start, double end,
              IntervalKind kind, std::int64_t mb) {
    if (end > start) intervals_.push_back({chip, r, start, end, kind, mb});
  }

  void push(double time, std::uint32_t chip, std::int64_t mb, EventKind k) {
    queue_.push({time, chip, Resource::compute, mb, k});
  }

  void try_dispatch(std::uint32_t s) {
    auto& chip = chips_[s];
    const auto& slots = schedule_.slots[s];
    if (chip.busy || chip.next_slot >= slots.size()) return;
    const Slot slot = slots[chip.next_slot];
    const auto mb = slot.microbatch;
    const bool fwd = slot.pass == Pass::forward;
    const bool last_stage = s + 1 == w_.stages;

    double ready = 0;
    if (fwd && s > 0) {
      if (!chip.fwd_arrival[mb]) return;
      ready = *chip.fwd_arrival[mb];
    } else if (!fwd && !last_stage) {
      if (!chip.bwd_arrival[mb]) return;
      ready = *chip.bwd_arrival[mb];
    }
    ++chip.next_slot;
    chip.busy = true;
    ++compute_events_;
    execute(s, slot, std::max(ready, chip.compute_busy_until));
  }

  void execute(std::uint32_t s, const Slot& slot, double start) {
    auto& chip = chips_[s];
    const auto mb = static_cast<std::int64_t>(slot.microbatch);
    const bool fwd = slot.pass == Pass::forward;
    const OpCost cost = fwd ? w_.fwd[s][slot.microbatch]
                            : w_.bwd[s][slot.microbatch];
    const IntervalKind op_kind = fwd ? IntervalKind::fwd : IntervalKind::bwd;

    double compute_start = start;
    double end = start;
    if (w_.bypass) {
      const double cs = std::max(start, chip.comm_busy_until);
      if (cost.tp_comm > 0) {
        const auto k = static_cast<double>(w_.fusion_chunks);
        const double tc = cost.tp_comm / k;
        const double tg = cost.compute / k;
        record(s, Resource::comm, cs, cs + cost.tp_comm, IntervalKind::tp_comm,
               mb);
        chip.comm_busy_until = cs + cost.tp_comm;
        compute_start = cs + tc;
        if (tg >= tc) {
          end = compute_start + cost.compute;
          record(s, Resource::compute, compute_start, end, op_kind, mb);
        } else {
          // Comm-bound: each GEMM block waits for its block to land.
          for (std::uint64_t i = 1; i <= w_.fusion_chunks; ++i) {
            const double b = cs + static_cast<double>(i) * tc;
            record(s, Resource::compute, b, b + tg, op_kind, mb);
            end = b + tg;
          }
        }
      } else {
        end = start + cost.compute;
        record(s, Resource::compute, start, end, op_kind, mb);
      }
      chip.compute_busy_until = end;
    } else {
      double t = start;
      record(s, Resource::comm, t, t + cost.tp_comm, IntervalKind::tp_comm, mb);
      t += cost.tp_comm;
      compute_start = t;
      end = t + cost.compute;
      record(s, Resource::compute, t, end, op_kind, mb);
      chip.compute_busy_until = chip.comm_busy_until = end;
    }

    // Gradient sync is due after every backward, or after the final one.
    const bool sync_due =
        !fwd && !w_.sync_buckets[s].empty() &&
        (w_.sync_frequency == SyncFrequency::per_microbatch ||
         chip.next_slot == schedule_.slots[s].size());
    std::size_t bucket = 0;
    const auto& buckets = w_.sync_buckets[s];
    if (sync_due && w_.bypass && w_.overlap_grad_sync) {
      // Buckets that fit inside this backward run under its compute.
      double t = std::max(chip.comm_busy_until, compute_start);
      while (bucket < buckets.size() && t + buckets[bucket] <= end) {
        record(s, Resource::comm, t, t + buckets[bucket],
               IntervalKind::sync_bucket, mb);
        t += buckets[bucket++];
      }
      chip.comm_busy_until = std::max(chip.comm_busy_until, t);
    }

    // Activation / gradient hand-off to the pipeline neighbour.
    const bool sends = fwd ? s + 1 < w_.stages : s > 0;
    if (sends) {
      const double tp = fwd ? w_.p2p_fwd[s][slot.microbatch]
                            : w_.p2p_bwd[s][slot.microbatch];
      double send_start = 0;
      if (w_.bypass) {
        send_start = std::max(end, chip.comm_busy_until);
        chip.comm_busy_until = send_start + tp;
      } else {
        send_start = chip.compute_busy_until;
        chip.compute_busy_until = chip.comm_busy_until = send_start + tp;
      }
      record(s, Resource::comm, send_start, send_start + tp,
             fwd ? IntervalKind::p2p_fwd : IntervalKind::p2p_bwd, mb);
      push(send_start + tp, fwd ? s + 1 : s - 1, mb,
           fwd ? EventKind::arrival_fwd : EventKind::arrival_bwd);
    }

    if (sync_due && bucket < buckets.size()) {
      const bool blocking = !(w_.bypass && w_.overlap_grad_sync);
      double t = blocking ? std::max(chip.compute_busy_until,
                                     chip.comm_busy_until)
                          : chip.comm_busy_until;
      for (; bucket < buckets.size(); ++bucket) {
        record(s, Resource::comm, t, t + buckets[bucket],
               IntervalKind::sync_bucket, mb);
        t += buckets[bucket];
      }
      chip.comm_busy_until = t;
      if (blocking) chip.compute_busy_until = t;
    }

    push(end, s, mb, EventKind::op_done);
  }

  const PipelineWorkload& w_;
  PipelineSchedule schedule_;
  std::vector<ChipState> chips_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  std::vector<Interval> intervals_;
  std::uint64_t compute_events_ = 0;
};

}  // namespace detail

inline void check_workload(const PipelineWorkload& w) {
  if (w.stages == 0 || w.microbatches == 0) {
    throw Error("workload needs >= 1 stage and >= 1 microbatch");
  }
  if (w.fusion_chunks == 0) throw Error("fusion_chunks must be >= 1");
  auto shape_ok = [&](const auto& v) {
    if (v.size() != w.stages) return false;
    for (const auto& row : v) {
      if (row.size() != w.microbatches) return false;
    }
    return true;
  };
  if (!shape_ok(w.fwd) || !shape_ok(w.bwd) || !shape_ok(w.p2p_fwd) ||
      !shape_ok(w.p2p_bwd) || w.sync_buckets.size() != w.stages) {
    throw Error("workload tables do not match stages x microbatches");
  }
}

/// Executes one step of the pipeline workload.
inline Trace simulate(const PipelineWorkload& w, std::uint64_t seed = 0) {
  check_workload(w);
  return detail::Simulator(w).run(seed);
}

// ---------------------------------------------------------------------------
// From model + plan to a pipeline workload.

struct CostModelConfig {
  CollectiveAlgorithm algorithm = CollectiveAlgorithm::ring;
  GradSyncPolicy grad_sync;

  bool operator==(const CostModelConfig&) const = default;
};

struct SimulationInput {
  PipelineWorkload pipeline;
  std::vector<MicrobatchShape> shapes;
  std::vector<std::uint64_t> layers;  // per pipeline stage
  PartitionContext partition;
  double replica_flops = 0;   // training FLOPs of one replica per step
  double replica_tokens = 0;  // tokens of one replica per step
  double sync_bytes = 0;      // per chip per step, busiest stage
  double sync_seconds = 0;    // one sync occurrence, busiest stage
  GradSyncPolicy grad_sync;
};

/// Representative sequence length and image load for layer partitioning.
inline PartitionContext partition_context(
    const std::vector<MicrobatchShape>& shapes, std::uint64_t visual_tokens) {
  double tokens = 0;
  double samples = 0;
  for (const auto& sh : shapes) {
    tokens += static_cast<double>(sh.tokens());
    samples += static_cast<double>(sh.samples());
  }
  const auto seq = samples > 0
                       ? static_cast<std::uint64_t>(std::llround(tokens / samples))
                       : 1;
  return {std::max<std::uint64_t>(seq, 1), visual_tokens};
}

namespace detail {

// Tensor-parallel collectives of one layer's forward pass over `bytes` of
// activations: two allgather + two reduce-scatter with sequence parallelism,
// two allreduce without. The ring costs of the two are identical.
inline double tp_layer_comm(double bytes, const ParallelismPlan& plan,
                            const CollectiveCostModel& link) {
  if (plan.tp <= 1) return 0.0;
  if (plan.sequence_parallel) {
    return 2.0 * collective_time(CollectiveKind::allgather, bytes, plan.tp,
                                 link) +
           2.0 * collective_time(CollectiveKind::reducescatter, bytes, plan.tp,
                                 link);
  }
  return 2.0 * collective_time(CollectiveKind::allreduce, bytes, plan.tp, link);
}

}  // namespace detail

inline SimulationInput build_simulation(const ModelSpec& model,
                                        const TrainingStage& stage,
                                        const ParallelismPlan& plan,
                                        const Topology& topo,
                                        const CostModelConfig& costmodel,
                                        const WorkloadSpec& workload,
                                        std::uint64_t seed) {
  if (auto v = validate_plan(topo, plan, model); !v.empty()) {
    throw PlanError(std::move(v));
  }
  SimulationInput in;
  in.shapes = microbatch_shapes(workload, plan.microbatches_per_step, seed);
  for (const auto& sh : in.shapes) {
    if (sh.max_length() > model.lm.context_limit) {
      throw Error("sequence length exceeds model context limit");
    }
  }
  in.partition = partition_context(in.shapes, workload.visual_tokens);
  in.layers = partition_layers(model, plan.pp, plan.layer_balance, in.partition);
  in.grad_sync = costmodel.grad_sync;
  in.grad_sync.overlap = plan.overlap_grad_sync;

  const auto p = plan.pp;
  const auto m = in.shapes.size();
  auto& w = in.pipeline;
  w.stages = p;
  w.microbatches = m;
  w.fwd.assign(p, std::vector<OpCost>(m));
  w.bwd.assign(p, std::vector<OpCost>(m));
  w.p2p_fwd.assign(p, std::vector<double>(m, 0));
  w.p2p_bwd.assign(p, std::vector<double>(m, 0));
  w.sync_buckets.assign(p, {});
  w.sync_frequency = costmodel.grad_sync.frequency;
  w.overlap_grad_sync = plan.overlap_grad_sync;
  w.bypass = topo.chip.has_independent_comm_unit;
  w.fusion_chunks = plan.fusion_chunks;

  const double tp = static_cast<double>(plan.tp);
  const double peak = topo.chip.peak_flops;
  const double h = static_cast<double>(model.lm.hidden_size);
  const double vh = static_cast<double>(model.vision.hidden_size);
  const double bwd_comm_factor = plan.recompute == Recompute::full ? 2.0 : 1.0;

  for (std::uint64_t s = 0; s < p; ++s) {
    const auto tp_link = link_cost(topo, tp_group(plan, 0, s));
    const double layers = static_cast<double>(in.layers[s]);
    std::optional<CollectiveCostModel> p2p_next;
    std::optional<CollectiveCostModel> p2p_prev;
    if (s + 1 < p) {
      p2p_next = link_cost(topo, {global_rank(plan, 0, s, 0),
                                  global_rank(plan, 0, s + 1, 0)});
    }
    if (s > 0) {
      p2p_prev = link_cost(topo, {global_rank(plan, 0, s, 0),
                                  global_rank(plan, 0, s - 1, 0)});
    }
    for (std::size_t j = 0; j < m; ++j) {
      double fwd_flops = 0;
      double bwd_flops = 0;
      double fwd_comm = 0;
      double act_bytes = 0;
      for (const auto& [count, len] : in.shapes[j].rows) {
        const auto fb = flop_breakdown(model, count, len,
                                       workload.visual_tokens, plan.recompute);
        double f = fb.lm_layer_forward * layers;
        if (s == 0) f += fb.vision_forward + fb.adapter_forward;
        fwd_flops += f;
        bwd_flops += 2.0 * f + fb.lm_layer_recompute * layers;

        const double bytes = static_cast<double>(count * len) * h * 2.0;
        act_bytes += bytes;
        fwd_comm += layers * detail::tp_layer_comm(bytes, plan, tp_link);
        if (s == 0 && workload.visual_tokens > 0 && plan.tp > 1) {
          const auto& v = model.vision;
          const double tiles = std::ceil(
              static_cast<double>(workload.visual_tokens) /
              static_cast<double>(v.tokens_per_tile));
          const double vbytes = static_cast<double>(count) * tiles *
                                static_cast<double>(v.patches_per_tile()) * vh *
                                2.0;
          fwd_comm += static_cast<double>(v.layers) *
                      2.0 *
                      collective_time(CollectiveKind::allreduce, vbytes,
                                      plan.tp, tp_link);
        }
        in.replica_flops += s == 0 ? 3.0 * fb.forward_total() +
                                         fb.recompute_total()
                                   : 0.0;
        if (s == 0) in.replica_tokens += static_cast<double>(count * len);
      }
      w.fwd[s][j] = {fwd_flops / (tp * peak), fwd_comm};
      w.bwd[s][j] = {bwd_flops / (tp * peak), fwd_comm * bwd_comm_factor};
      // Each TP rank forwards its own shard of the boundary activation.
      if (p2p_next) {
        w.p2p_fwd[s][j] = collective_time(CollectiveKind::p2p, act_bytes / tp,
                                          2, *p2p_next);
      }
      if (p2p_prev) {
        w.p2p_bwd[s][j] = collective_time(CollectiveKind::p2p, act_bytes / tp,
                                          2, *p2p_prev);
      }
    }
  }

  // Gradient sync: one occurrence per step or per microbatch.
  GradSyncPolicy once = in.grad_sync;
  once.frequency = SyncFrequency::per_step;
  const auto per_stage =
      grad_sync_volume_per_stage(model, stage, plan, once, in.partition);
  for (std::uint64_t s = 0; s < p; ++s) {
    const auto link = link_cost(topo, dp_group(plan, s, 0));
    const auto st = sync_time(per_stage[s], plan.dp, in.grad_sync, link);
    w.sync_buckets[s] = st.bucket_seconds;
    if (st.seconds >= in.sync_seconds) in.sync_seconds = st.seconds;
  }
  in.sync_bytes = grad_sync_volume(model, stage, plan, in.grad_sync, in.partition);
  return in;
}

/// Simulates one optimizer step of one data-parallel replica.
inline Trace run(const ModelSpec& model, const TrainingStage& stage,
                 const ParallelismPlan& plan, const Topology& topo,
                 const CostModelConfig& costmodel, const WorkloadSpec& workload,
                 std::uint64_t seed) {
  const auto in =
      build_simulation(model, stage, plan, topo, costmodel, workload, seed);
  return simulate(in.pipeline, seed);
}

// ---------------------------------------------------------------------------
// Trace analysis.

/// Share of communication time that runs while the same chip computes.
inline double overlap_efficiency(const Trace& trace) {
  if (trace.intervals.empty()) throw Error("overlap_efficiency: empty trace");
  double total = 0;
  double hidden = 0;
  for (std::uint32_t c = 0; c < trace.chips; ++c) {
    std::vector<std::pair<double, double>> busy;
    for (const auto& iv : trace.intervals) {
      if (iv.chip == c && iv.resource == Resource::compute) {
        busy.emplace_back(iv.start, iv.end);
      }
    }
    std::sort(busy.begin(), busy.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& b : busy) {
      if (!merged.empty() && b.first <= merged.back().second) {
        merged.back().second = std::max(merged.back().second, b.second);
      } else {
        merged.push_back(b);
      }
    }
    for (const auto& iv : trace.intervals) {
      if (iv.chip != c || iv.resource != Resource::comm) continue;
      total += iv.duration();
      auto it = std::upper_bound(
          merged.begin(), merged.end(), std::make_pair(iv.start, iv.start),
          [](const auto& a, const auto& b) { return a.second < b.second; });
      for (; it != merged.end() && it->first < iv.end; ++it) {
        hidden += std::max(0.0, std::min(iv.end, it->second) -
                                    std::max(iv.start, it->first));
      }
    }
  }
  if (total <= 0) return 1.0;
  return std::clamp(hidden / total, 0.0, 1.0);
}

}  // namespace vlmsim
