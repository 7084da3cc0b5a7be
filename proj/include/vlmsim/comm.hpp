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

// Alpha-beta ring cost models for collectives and gradient synchronization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "vlmsim/cluster.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/workload.hpp"

namespace vlmsim {

enum class CollectiveKind { allreduce, allgather, reducescatter, p2p };
enum class CollectiveAlgorithm { ring };

struct CollectiveCostModel {
  CollectiveAlgorithm algorithm = CollectiveAlgorithm::ring;
  double latency_per_hop = 0;  // s
  double bandwidth = 1;        // bytes/s

  bool operator==(const CollectiveCostModel&) const = default;
};

enum class SyncFrequency { per_microbatch, per_step };

struct GradSyncPolicy {
  std::uint64_t precision_bytes = 2;
  SyncFrequency frequency = SyncFrequency::per_step;
  double bucket_bytes = 25.0 * (1 << 20);
  bool overlap = true;

  bool operator==(const GradSyncPolicy&) const = default;
};

/// Ring algebra: allreduce moves 2(n-1)/n of the payload in 2(n-1) steps,
/// allgather and reduce-scatter half of that each.
inline double collective_time(CollectiveKind kind, double payload,
                              std::uint64_t participants,
                              const CollectiveCostModel& model) {
  if (participants == 0) throw Error("collective needs >= 1 participant");
  if (!(model.bandwidth > 0)) throw Error("bandwidth must be > 0");
  if (kind == CollectiveKind::p2p) {
    return payload / model.bandwidth + model.latency_per_hop;
  }
  if (participants == 1) return 0.0;
  const double n = static_cast<double>(participants);
  const double steps = n - 1.0;
  const double frac = steps / n;
  switch (kind) {
    case CollectiveKind::allreduce:
      return 2.0 * frac * payload / model.bandwidth +
             2.0 * steps * model.latency_per_hop;
    case CollectiveKind::allgather:
    case CollectiveKind::reducescatter:
      return frac * payload / model.bandwidth + steps * model.latency_per_hop;
    case CollectiveKind::p2p:
      break;
  }
  return 0.0;
}

/// Flat link model: a group confined to one node uses the intra-node link,
/// otherwise every hop is charged at the inter-node link.
inline CollectiveCostModel link_cost(const Topology& topo,
                                     const std::vector<std::uint64_t>& ranks) {
  bool same_node = true;
  if (!ranks.empty()) {
    const auto n0 = node_of(topo, ranks.front());
    for (auto r : ranks) same_node = same_node && node_of(topo, r) == n0;
  }
  return same_node ? CollectiveCostModel{CollectiveAlgorithm::ring,
                                         topo.intra_latency, topo.intra_node_bw}
                   : CollectiveCostModel{CollectiveAlgorithm::ring,
                                         topo.inter_latency, topo.inter_node_bw};
}

inline std::vector<std::uint64_t> tp_group(const ParallelismPlan& plan,
                                           std::uint64_t replica,
                                           std::uint64_t stage) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t t = 0; t < plan.tp; ++t) {
    out.push_back(global_rank(plan, replica, stage, t));
  }
  return out;
}

inline std::vector<std::uint64_t> dp_group(const ParallelismPlan& plan,
                                           std::uint64_t stage,
                                           std::uint64_t tp_rank) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t d = 0; d < plan.dp; ++d) {
    out.push_back(global_rank(plan, d, stage, tp_rank));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient synchronization.

/// Gradient bytes each chip of every pipeline stage exchanges per step.
inline std::vector<double> grad_sync_volume_per_stage(
    const ModelSpec& model, const TrainingStage& stage,
    const ParallelismPlan& plan, const GradSyncPolicy& policy,
    const PartitionContext& ctx = {}) {
  const auto layers =
      partition_layers(model, plan.pp, plan.layer_balance, ctx);
  const auto params = stage_params(model, stage.trainable, layers);
  const double reps = policy.frequency == SyncFrequency::per_microbatch
                          ? static_cast<double>(plan.microbatches_per_step)
                          : 1.0;
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back(static_cast<double>(policy.precision_bytes) * p.trainable /
                  static_cast<double>(plan.tp) * reps);
  }
  return out;
}

/// Per-chip gradient sync bytes per optimizer step on the busiest stage.
inline double grad_sync_volume(const ModelSpec& model,
                               const TrainingStage& stage,
                               const ParallelismPlan& plan,
                               const GradSyncPolicy& policy,
                               const PartitionContext& ctx = {}) {
  const auto v = grad_sync_volume_per_stage(model, stage, plan, policy, ctx);
  return *std::max_element(v.begin(), v.end());
}

/// Splits a volume into full buckets plus one trailing partial bucket.
inline std::vector<double> bucket_sizes(double volume, double bucket_bytes) {
  if (!(bucket_bytes > 0)) throw Error("bucket_bytes must be > 0");
  std::vector<double> out;
  if (!(volume > 0)) return out;
  const auto full = static_cast<std::uint64_t>(std::floor(volume / bucket_bytes));
  out.assign(full, bucket_bytes);
  const double rest = volume - static_cast<double>(full) * bucket_bytes;
  if (rest > 0) out.push_back(rest);
  return out;
}

struct SyncTime {
  double seconds = 0;
  bool overlappable = false;
  std::vector<double> bucket_seconds;
};

inline SyncTime sync_time(double volume, std::uint64_t dp,
                          const GradSyncPolicy& policy,
                          const CollectiveCostModel& cost) {
  if (dp == 0) throw Error("dp must be >= 1");
  SyncTime out;
  out.overlappable = policy.overlap;
  if (dp == 1) return out;
  for (double b : bucket_sizes(volume, policy.bucket_bytes)) {
    const double t = collective_time(CollectiveKind::allreduce, b, dp, cost);
    out.bucket_seconds.push_back(t);
    out.seconds += t;
  }
  return out;
}

}  // namespace vlmsim
