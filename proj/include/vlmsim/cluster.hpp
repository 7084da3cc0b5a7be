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

// Chip/node topology, 3D parallelism plans, pipeline layer partitioning and
// the per-chip memory model.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vlmsim/arch.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/workload.hpp"

namespace vlmsim {

struct ChipSpec {
  double peak_flops = 0;  // flops/s
  double memory = 0;      // bytes
  bool has_independent_comm_unit = true;

  bool operator==(const ChipSpec&) const = default;
};

struct Topology {
  std::uint64_t nodes = 1;
  std::uint64_t chips_per_node = 1;
  double intra_node_bw = 0;  // bytes/s
  double inter_node_bw = 0;
  double intra_latency = 0;  // s
  double inter_latency = 0;
  ChipSpec chip;

  std::uint64_t total_chips() const { return nodes * chips_per_node; }
  bool operator==(const Topology&) const = default;
};

enum class LayerBalance { uniform, cost_balanced };

inline std::string_view to_string(LayerBalance b) {
  return b == LayerBalance::uniform ? "uniform" : "cost-balanced";
}

struct ParallelismPlan {
  std::uint64_t dp = 1;
  std::uint64_t tp = 1;
  std::uint64_t pp = 1;
  bool sequence_parallel = false;
  std::uint64_t microbatches_per_step = 1;
  Recompute recompute = Recompute::none;
  bool overlap_grad_sync = true;
  std::uint64_t fusion_chunks = 1;
  bool distributed_optimizer = false;
  LayerBalance layer_balance = LayerBalance::uniform;

  std::uint64_t chips() const { return dp * tp * pp; }
  bool operator==(const ParallelismPlan&) const = default;
};

struct MemoryBreakdown {
  double weights = 0;
  double grads = 0;
  double optimizer = 0;
  double activations = 0;
  double total = 0;

  // Largest single class, by name.
  std::string dominant() const {
    const char* name = "weights";
    double best = weights;
    if (grads > best) { best = grads; name = "grads"; }
    if (optimizer > best) { best = optimizer; name = "optimizer"; }
    if (activations > best) { best = activations; name = "activations"; }
    return name;
  }
  bool operator==(const MemoryBreakdown&) const = default;
};

struct Violation {
  std::string constraint;  // stable identifier
  std::string path;        // config key path, e.g. "$.plan.tp"
  std::string message;

  bool operator==(const Violation&) const = default;
};

// ---------------------------------------------------------------------------
// Rank placement. TP is innermost, then PP, then DP:
//   rank = ((replica * pp + stage) * tp + tp_rank)

inline std::uint64_t global_rank(const ParallelismPlan& plan,
                                 std::uint64_t replica, std::uint64_t stage,
                                 std::uint64_t tp_rank) {
  return (replica * plan.pp + stage) * plan.tp + tp_rank;
}

inline std::uint64_t node_of(const Topology& topo, std::uint64_t rank) {
  return rank / topo.chips_per_node;
}

// ---------------------------------------------------------------------------
// Layer partitioning.

/// Per-microbatch forward cost inputs for cost-balanced partitioning.
struct PartitionContext {
  std::uint64_t seq_len = 4096;
  std::uint64_t visual_tokens = 0;
};

// Forward FLOPs of each pipeline stage given its layer count. Vision encoder
// and adapter live on the first stage.
inline std::vector<double> stage_forward_costs(
    const ModelSpec& model, const std::vector<std::uint64_t>& layers,
    const PartitionContext& ctx) {
  const auto fb = flop_breakdown(model, 1, ctx.seq_len, ctx.visual_tokens,
                                 Recompute::none);
  std::vector<double> out(layers.size());
  for (std::size_t s = 0; s < layers.size(); ++s) {
    out[s] = fb.lm_layer_forward * static_cast<double>(layers[s]);
    if (s == 0) out[s] += fb.vision_forward + fb.adapter_forward;
  }
  return out;
}

inline std::vector<std::uint64_t> partition_layers(
    const ModelSpec& model, std::uint64_t pp, LayerBalance balance,
    const PartitionContext& ctx = {}) {
  const auto layers = model.lm.layers;
  if (pp == 0) throw Error("pp must be >= 1");
  if (pp > layers) {
    throw Error("pp " + std::to_string(pp) + " exceeds layer count " +
                std::to_string(layers));
  }
  std::vector<std::uint64_t> counts(pp, layers / pp);
  if (balance == LayerBalance::uniform) {
    // Remainder goes to the middle stages first.
    auto rem = layers % pp;
    for (std::uint64_t s = 1; s < pp && rem > 0; ++s, --rem) ++counts[s];
    if (rem > 0) ++counts[0];
    return counts;
  }

  // Cost-balanced: minimise the slowest stage, then among those optimal
  // partitions maximise the fastest stage (smallest spread).
  const auto fb = flop_breakdown(model, 1, ctx.seq_len, ctx.visual_tokens,
                                 Recompute::none);
  const double unit = fb.lm_layer_forward;
  const double first_extra = fb.vision_forward + fb.adapter_forward;
  auto cost = [&](std::uint64_t s, std::uint64_t n) {
    return unit * static_cast<double>(n) + (s == 0 ? first_extra : 0.0);
  };
  const auto L = layers;
  constexpr double inf = std::numeric_limits<double>::infinity();

  // best_max[s][l]: minimal bottleneck placing l layers on stages [0, s].
  std::vector<std::vector<double>> best_max(pp, std::vector<double>(L + 1, inf));
  for (std::uint64_t l = 1; l <= L; ++l) best_max[0][l] = cost(0, l);
  for (std::uint64_t s = 1; s < pp; ++s) {
    for (std::uint64_t l = s + 1; l <= L; ++l) {
      for (std::uint64_t n = 1; n + s <= l; ++n) {
        const double v = std::max(best_max[s - 1][l - n], cost(s, n));
        if (v < best_max[s][l]) best_max[s][l] = v;
      }
    }
  }
  const double cap = best_max[pp - 1][L] * (1.0 + 1e-12);

  // best_min[s][l]: largest achievable minimum stage cost under the cap.
  std::vector<std::vector<double>> best_min(pp,
                                            std::vector<double>(L + 1, -inf));
  std::vector<std::vector<std::uint64_t>> choice(
      pp, std::vector<std::uint64_t>(L + 1, 0));
  for (std::uint64_t l = 1; l <= L; ++l) {
    if (cost(0, l) <= cap) {
      best_min[0][l] = cost(0, l);
      choice[0][l] = l;
    }
  }
  for (std::uint64_t s = 1; s < pp; ++s) {
    for (std::uint64_t l = s + 1; l <= L; ++l) {
      for (std::uint64_t n = 1; n + s <= l; ++n) {
        if (cost(s, n) > cap || best_min[s - 1][l - n] == -inf) continue;
        const double v = std::min(best_min[s - 1][l - n], cost(s, n));
        if (v > best_min[s][l]) {
          best_min[s][l] = v;
          choice[s][l] = n;
        }
      }
    }
  }
  auto l = L;
  for (std::uint64_t s = pp; s-- > 0;) {
    counts[s] = choice[s][l];
    l -= counts[s];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Per-stage parameters.

struct StageParams {
  double total = 0;      // resident on the stage, before TP sharding
  double trainable = 0;  // subset receiving gradients
};

/// Parameters resident on each pipeline stage. Input embeddings, vision
/// encoder and adapter sit on the first stage; an untied output head sits on
/// the last stage. A tied head is stored once, on the first stage.
inline std::vector<StageParams> stage_params(
    const ModelSpec& model, const TrainableMask& mask,
    const std::vector<std::uint64_t>& layers) {
  const double layer = static_cast<double>(lm_layer_param_count(model.lm));
  const double table =
      static_cast<double>(model.lm.vocab_size * model.lm.hidden_size);
  const double vision = static_cast<double>(vision_param_count(model.vision));
  const double adapter = static_cast<double>(adapter_param_count(model.adapter));

  std::vector<StageParams> out(layers.size());
  for (std::size_t s = 0; s < layers.size(); ++s) {
    double lm = layer * static_cast<double>(layers[s]);
    if (s == 0) lm += table;
    if (s + 1 == layers.size() && !model.lm.embedding_tying) lm += table;
    double total = lm;
    double train = mask.lm ? lm : 0.0;
    if (s == 0) {
      total += vision + adapter;
      if (mask.vision) train += vision;
      if (mask.adapter) train += adapter;
    }
    out[s] = {total, train};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Memory model.

/// Bytes per token per decoder layer held for backward.
struct ActivationModel {
  double sharded_per_hidden = 24;     // scales 1/tp
  double replicated_per_hidden = 10;  // scales 1/tp only with SP
  double score_bytes_per_head = 2;    // * seq^2 per sample, scales 1/tp
  double checkpoint_per_hidden = 2;   // full recompute keeps layer input only
};

inline double activation_bytes_per_layer(const ModelSpec& model,
                                         const ParallelismPlan& plan,
                                         std::uint64_t seq_len,
                                         std::uint64_t microbatch,
                                         const ActivationModel& am = {}) {
  const double tp = static_cast<double>(plan.tp);
  const double h = static_cast<double>(model.lm.hidden_size);
  const double s = static_cast<double>(seq_len);
  const double tokens = s * static_cast<double>(microbatch);
  const double sp_div = plan.sequence_parallel ? tp : 1.0;
  if (plan.recompute == Recompute::full) {
    return tokens * am.checkpoint_per_hidden * h / sp_div;
  }
  double bytes = tokens * (am.sharded_per_hidden * h / tp +
                           am.replicated_per_hidden * h / sp_div);
  if (plan.recompute == Recompute::none) {
    const double heads = static_cast<double>(model.lm.query_heads());
    bytes += static_cast<double>(microbatch) * am.score_bytes_per_head * heads *
             s * s / tp;
  }
  return bytes;
}

/// Memory of every pipeline stage's chips.
inline std::vector<MemoryBreakdown> memory_per_stage(
    const ModelSpec& model, const ParallelismPlan& plan,
    const TrainingStage& stage, std::uint64_t seq_len,
    std::uint64_t microbatch, std::uint64_t visual_tokens = 0,
    const std::optional<PartitionContext>& partition = std::nullopt) {
  // The partition may be driven by a representative length different from
  // the longest sequence that sizes activations.
  const auto layers = partition_layers(
      model, plan.pp, plan.layer_balance,
      partition.value_or(PartitionContext{seq_len, visual_tokens}));
  const auto params = stage_params(model, stage.trainable, layers);
  const double tp = static_cast<double>(plan.tp);
  const double opt_div =
      plan.distributed_optimizer ? static_cast<double>(plan.dp) : 1.0;
  const double per_layer =
      activation_bytes_per_layer(model, plan, seq_len, microbatch);

  std::vector<MemoryBreakdown> out(plan.pp);
  for (std::uint64_t s = 0; s < plan.pp; ++s) {
    auto& m = out[s];
    m.weights = params[s].total * 2.0 / tp;
    m.grads = params[s].trainable * 2.0 / tp;
    m.optimizer = params[s].trainable * 12.0 / tp / opt_div;
    const auto in_flight =
        std::min<std::uint64_t>(plan.pp - s, plan.microbatches_per_step);
    m.activations = per_layer * static_cast<double>(layers[s]) *
                    static_cast<double>(in_flight);
    m.total = m.weights + m.grads + m.optimizer + m.activations;
  }
  return out;
}

/// Memory of the most loaded chip.
inline MemoryBreakdown memory_per_chip(const ModelSpec& model,
                                       const ParallelismPlan& plan,
                                       const TrainingStage& stage,
                                       std::uint64_t seq_len,
                                       std::uint64_t microbatch,
                                       std::uint64_t visual_tokens = 0,
                                       const std::optional<PartitionContext>&
                                           partition = std::nullopt) {
  const auto all = memory_per_stage(model, plan, stage, seq_len, microbatch,
                                    visual_tokens, partition);
  return *std::max_element(all.begin(), all.end(),
                           [](const auto& a, const auto& b) {
                             return a.total < b.total;
                           });
}

// ---------------------------------------------------------------------------
// Validation.

struct MemoryQuery {
  TrainingStage stage;
  std::uint64_t seq_len = 4096;
  std::uint64_t microbatch = 1;
  std::uint64_t visual_tokens = 0;
};

/// Structural checks always; memory fit when a query is given.
inline std::vector<Violation> validate_plan(
    const Topology& topo, const ParallelismPlan& plan, const ModelSpec& model,
    const std::optional<MemoryQuery>& memory = std::nullopt) {
  std::vector<Violation> out;
  auto fail = [&](std::string c, std::string p, std::string msg) {
    out.push_back({std::move(c), std::move(p), std::move(msg)});
  };
  if (topo.nodes == 0 || topo.chips_per_node == 0) {
    fail("topology", "$.topology", "nodes and chips_per_node must be >= 1");
  }
  if (!(topo.intra_node_bw > 0) || !(topo.inter_node_bw > 0)) {
    fail("topology", "$.topology", "bandwidths must be > 0");
  }
  if (topo.intra_latency < 0 || topo.inter_latency < 0) {
    fail("topology", "$.topology", "latencies must be >= 0");
  }
  if (!(topo.chip.peak_flops > 0) || !(topo.chip.memory > 0)) {
    fail("topology", "$.topology.chip", "peak_flops and memory must be > 0");
  }
  if (plan.dp == 0 || plan.tp == 0 || plan.pp == 0) {
    fail("product", "$.plan", "dp, tp and pp must be >= 1");
    return out;
  }
  if (plan.chips() != topo.total_chips()) {
    std::ostringstream os;
    os << "dp·tp·pp ≠ chips: " << plan.dp << "·" << plan.tp << "·" << plan.pp
       << " = " << plan.chips() << " but topology has " << topo.total_chips();
    fail("product", "$.plan", os.str());
  }
  if (plan.tp > topo.chips_per_node) {
    fail("tp_within_node", "$.plan.tp",
         "tp exceeds node: tp=" + std::to_string(plan.tp) + " > " +
             std::to_string(topo.chips_per_node) + " chips per node");
  }
  if (plan.pp > model.lm.layers) {
    fail("pp_layers", "$.plan.pp",
         "pp=" + std::to_string(plan.pp) + " exceeds lm layers " +
             std::to_string(model.lm.layers));
  }
  if (plan.microbatches_per_step == 0) {
    fail("microbatches", "$.plan.microbatches_per_step",
         "microbatches_per_step must be >= 1");
  }
  if (plan.fusion_chunks == 0) {
    fail("fusion_chunks", "$.plan.fusion_chunks", "fusion_chunks must be >= 1");
  }
  if (memory && out.empty()) {
    const auto m = memory_per_chip(model, plan, memory->stage, memory->seq_len,
                                   memory->microbatch, memory->visual_tokens);
    if (m.total > topo.chip.memory) {
      std::ostringstream os;
      os.precision(4);
      os << "memory " << m.total / 1e9 << " GB exceeds chip memory "
         << topo.chip.memory / 1e9 << " GB (weights " << m.weights / 1e9
         << ", grads " << m.grads / 1e9 << ", optimizer " << m.optimizer / 1e9
         << ", activations " << m.activations / 1e9
         << "); dominant term: " << m.dominant();
      fail("memory", "$.topology.chip.memory", os.str());
    }
  }
  return out;
}

}  // namespace vlmsim
