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

// Training stages as simulatable workloads: token budgets, trainable masks,
// data mixtures, sequence-length sampling and dynamic batching.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vlmsim/arch.hpp"
#include "vlmsim/error.hpp"

namespace vlmsim {

struct TrainableMask {
  bool vision = false;
  bool adapter = false;
  bool lm = false;

  static TrainableMask all() { return {true, true, true}; }
  bool any() const { return vision || adapter || lm; }
  bool operator==(const TrainableMask&) const = default;
};

struct SequenceLengthModel {
  enum class Kind { fixed, lognormal };

  Kind kind = Kind::fixed;
  std::uint64_t value = 4096;  // fixed
  double mean = 8.0;           // lognormal, log-space location
  double sigma = 0.7;          // lognormal, log-space scale
  std::uint64_t cap = 32768;

  static SequenceLengthModel fixed(std::uint64_t len) {
    SequenceLengthModel m;
    m.kind = Kind::fixed;
    m.value = len;
    m.cap = std::max<std::uint64_t>(len, 1);
    return m;
  }
  static SequenceLengthModel lognormal(double mean, double sigma,
                                       std::uint64_t cap) {
    SequenceLengthModel m;
    m.kind = Kind::lognormal;
    m.mean = mean;
    m.sigma = sigma;
    m.cap = cap;
    return m;
  }

  // Upper bound of any sampled length.
  std::uint64_t max_length() const {
    return kind == Kind::fixed ? value : cap;
  }

  bool operator==(const SequenceLengthModel&) const = default;
};

using Mixture = std::vector<std::pair<std::string, double>>;

struct TrainingStage {
  std::string name;
  double token_budget = 0;
  TrainableMask trainable;
  Mixture mixture;
  SequenceLengthModel seq_len_model;

  double weight(std::string_view category) const {
    for (const auto& [k, w] : mixture) {
      if (k == category) return w;
    }
    return 0.0;
  }

  bool operator==(const TrainingStage&) const = default;
};

inline constexpr std::uint64_t kMaxContext = 32768;

inline std::vector<std::string> check_invariants(const SequenceLengthModel& m) {
  std::vector<std::string> out;
  if (m.cap > kMaxContext) out.push_back("seq_len_model.cap must be <= 32768");
  if (m.cap < 1) out.push_back("seq_len_model.cap must be >= 1");
  if (m.kind == SequenceLengthModel::Kind::fixed) {
    if (m.value < 1 || m.value > m.cap) {
      out.push_back("seq_len_model.value must be in [1, cap]");
    }
  } else if (!(m.sigma >= 0) || !std::isfinite(m.mean)) {
    out.push_back("seq_len_model lognormal parameters are invalid");
  }
  return out;
}

inline std::vector<std::string> check_invariants(const TrainingStage& s) {
  std::vector<std::string> out;
  if (!(s.token_budget > 0)) out.push_back("stage.token_budget must be > 0");
  double sum = 0;
  for (const auto& [k, w] : s.mixture) {
    if (w < 0) out.push_back("stage.mixture weight for " + k + " is negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    out.push_back("stage.mixture weights must sum to 1");
  }
  auto seq = check_invariants(s.seq_len_model);
  out.insert(out.end(), seq.begin(), seq.end());
  return out;
}

inline SequenceLengthModel default_seq_len_model() {
  return SequenceLengthModel::lognormal(8.0, 0.7, kMaxContext);
}

/// The four progressive training stages. Published category shares that do
/// not add up to 100% carry the rounding residue in "Unattributed".
inline std::vector<TrainingStage> stage_catalog() {
  return {
      TrainingStage{.name = "cross_modal_alignment",
                    .token_budget = 100e9,
                    .trainable = {.vision = false, .adapter = true, .lm = false},
                    .mixture = {{"Caption&BasicVQA", 1.0}},
                    .seq_len_model = default_seq_len_model()},
      TrainingStage{.name = "general_knowledge",
                    .token_budget = 2.66e12,
                    .trainable = TrainableMask::all(),
                    .mixture = {{"OCR&OCRQA&KIE", 0.438},
                                {"Caption", 0.411},
                                {"VideoUnderstanding", 0.107},
                                {"Others", 0.043},
                                {"Unattributed", 0.001}},
                    .seq_len_model = default_seq_len_model()},
      TrainingStage{.name = "domain_enhancement",
                    .token_budget = 0.32e12,
                    .trainable = TrainableMask::all(),
                    .mixture = {{"DomainSpecific", 0.7}, {"General", 0.3}},
                    .seq_len_model = default_seq_len_model()},
      TrainingStage{.name = "instruction_tuning",
                    .token_budget = 1e9,
                    .trainable = TrainableMask::all(),
                    .mixture = {{"InstructionTuning", 1.0}},
                    .seq_len_model = default_seq_len_model()},
  };
}

/// Category shares of the domain-specific portion of the domain enhancement
/// stage.
inline Mixture domain_dataset_composition() {
  return {{"DocUnderstanding", 0.274}, {"OCR", 0.243},
          {"Caption", 0.176},          {"Math", 0.116},
          {"PureText", 0.094},         {"VideoUnderstanding", 0.043},
          {"ChartUnderstanding", 0.018}, {"GUI", 0.018},
          {"Unattributed", 0.018}};
}

inline const TrainingStage* find_stage(const std::vector<TrainingStage>& stages,
                                       std::string_view name) {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

inline std::uint64_t trainable_param_count(const ModelSpec& model,
                                           const TrainingStage& stage) {
  std::uint64_t total = 0;
  if (stage.trainable.vision) {
    total = detail::checked_add(total, vision_param_count(model.vision));
  }
  if (stage.trainable.adapter) {
    total = detail::checked_add(total, adapter_param_count(model.adapter));
  }
  if (stage.trainable.lm) {
    total = detail::checked_add(total, lm_param_count(model.lm));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Sequence lengths and dynamic batching.

inline std::vector<std::uint64_t> sample_lengths(const SequenceLengthModel& m,
                                                 std::uint64_t seed,
                                                 std::size_t n) {
  std::vector<std::uint64_t> out;
  out.reserve(n);
  if (m.kind == SequenceLengthModel::Kind::fixed) {
    out.assign(n, m.value);
    return out;
  }
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> dist(m.mean, m.sigma);
  const double cap = static_cast<double>(m.cap);
  while (out.size() < n) {
    const double x = std::round(dist(rng));
    // Truncated: out-of-range draws are rejected, not clamped.
    if (x >= 1.0 && x <= cap) out.push_back(static_cast<std::uint64_t>(x));
  }
  return out;
}

struct Microbatch {
  std::vector<std::size_t> samples;   // indices into the input lengths
  std::vector<std::uint64_t> lengths;

  std::uint64_t size() const { return lengths.size(); }
  std::uint64_t max_length() const {
    return lengths.empty() ? 0
                           : *std::max_element(lengths.begin(), lengths.end());
  }
  std::uint64_t padded_tokens() const { return size() * max_length(); }
  std::uint64_t tokens() const {
    return std::accumulate(lengths.begin(), lengths.end(), std::uint64_t{0});
  }
  bool operator==(const Microbatch&) const = default;
};

struct MicrobatchPlan {
  std::vector<Microbatch> batches;
  std::uint64_t token_budget_per_batch = 0;
  bool padded = true;

  bool operator==(const MicrobatchPlan&) const = default;
};

enum class PackingCost { padded, unpadded };

/// First-fit-decreasing packing. Padded cost of a batch is
/// size * longest member; unpadded cost is the plain token sum.
inline MicrobatchPlan pack_dynamic_batches(
    const std::vector<std::uint64_t>& lengths, std::uint64_t token_budget,
    PackingCost cost = PackingCost::padded) {
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] > token_budget) {
      throw Error("sample " + std::to_string(i) + " has length " +
                  std::to_string(lengths[i]) + " > token budget " +
                  std::to_string(token_budget));
    }
  }
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return lengths[a] > lengths[b];
  });

  MicrobatchPlan plan;
  plan.token_budget_per_batch = token_budget;
  plan.padded = cost == PackingCost::padded;
  // Running cost per open batch; the first member is always the longest.
  std::vector<std::uint64_t> used;
  for (auto idx : order) {
    const auto len = lengths[idx];
    bool placed = false;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      auto& batch = plan.batches[b];
      const std::uint64_t next =
          plan.padded ? (batch.size() + 1) * std::max(batch.lengths.front(), len)
                      : used[b] + len;
      if (next <= token_budget) {
        batch.samples.push_back(idx);
        batch.lengths.push_back(len);
        used[b] = next;
        placed = true;
        break;
      }
    }
    if (!placed) {
      plan.batches.push_back({{idx}, {len}});
      used.push_back(len);
    }
  }
  return plan;
}


// ---------------------------------------------------------------------------
// Per-step microbatch shapes fed to the engine.

struct WorkloadSpec {
  SequenceLengthModel seq_len_model = SequenceLengthModel::fixed(4096);
  std::uint64_t microbatch_size = 1;     // samples per microbatch
  std::uint64_t token_budget = 0;        // > 0 enables dynamic batching
  PackingCost packing = PackingCost::padded;
  std::uint64_t visual_tokens = 0;       // per sample

  bool operator==(const WorkloadSpec&) const = default;
};

/// (samples, sequence length) rows making up one microbatch. Padded batches
/// have one row; unpadded packed batches have one row per sample.
struct MicrobatchShape {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> rows;

  std::uint64_t samples() const {
    std::uint64_t n = 0;
    for (const auto& r : rows) n += r.first;
    return n;
  }
  std::uint64_t tokens() const {
    std::uint64_t n = 0;
    for (const auto& r : rows) n += r.first * r.second;
    return n;
  }
  std::uint64_t max_length() const {
    std::uint64_t n = 0;
    for (const auto& r : rows) n = std::max(n, r.second);
    return n;
  }
  bool operator==(const MicrobatchShape&) const = default;
};

/// Draws `microbatches * microbatch_size` samples for one data-parallel
/// replica and groups them. With a token budget the samples are packed
/// dynamically and the number of microbatches follows from the packing.
inline std::vector<MicrobatchShape> microbatch_shapes(const WorkloadSpec& w,
                                                      std::uint64_t microbatches,
                                                      std::uint64_t seed) {
  if (w.microbatch_size == 0) throw Error("microbatch_size must be >= 1");
  const auto n = microbatches * w.microbatch_size;
  const auto lengths = sample_lengths(w.seq_len_model, seed, n);
  std::vector<MicrobatchShape> out;
  if (w.token_budget > 0) {
    const auto plan = pack_dynamic_batches(lengths, w.token_budget, w.packing);
    for (const auto& b : plan.batches) {
      MicrobatchShape shape;
      if (plan.padded) {
        shape.rows.push_back({b.size(), b.max_length()});
      } else {
        for (auto len : b.lengths) shape.rows.push_back({1, len});
      }
      out.push_back(std::move(shape));
    }
    return out;
  }
  for (std::uint64_t j = 0; j < microbatches; ++j) {
    std::uint64_t longest = 0;
    for (std::uint64_t i = 0; i < w.microbatch_size; ++i) {
      longest = std::max(longest, lengths[j * w.microbatch_size + i]);
    }
    out.push_back({{{w.microbatch_size, longest}}});
  }
  return out;
}

}  // namespace vlmsim
