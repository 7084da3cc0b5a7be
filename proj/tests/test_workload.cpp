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

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vlmsim/arch.hpp"
#include "vlmsim/workload.hpp"

namespace vlmsim {
namespace {

const TrainingStage& stage(std::size_t i) {
  static const auto catalog = stage_catalog();
  return catalog.at(i);
}

const ModelSpec& model(const std::string& name) {
  static const auto catalog = builtin_model_catalog();
  return *find_model(catalog, name);
}

double weight(const TrainingStage& s, const std::string& category) {
  for (const auto& [k, v] : s.mixture) {
    if (k == category) return v;
  }
  return -1;
}

TEST(Stages, CatalogValues) {
  ASSERT_EQ(stage_catalog().size(), 4u);
  EXPECT_EQ(stage(0).token_budget, 1.0e11);
  EXPECT_EQ(stage(1).token_budget, 2.66e12);
  EXPECT_EQ(stage(2).token_budget, 0.32e12);
  EXPECT_EQ(stage(3).token_budget, 1e9);
  EXPECT_EQ(weight(stage(1), "Caption"), 0.411);
  EXPECT_EQ(weight(stage(1), "OCR&OCRQA&KIE"), 0.438);
  EXPECT_EQ(weight(stage(1), "VideoUnderstanding"), 0.107);
  EXPECT_EQ(weight(stage(2), "DomainSpecific"), 0.7);
  EXPECT_EQ(weight(stage(2), "General"), 0.3);
  EXPECT_EQ(stage(0).trainable,
            (TrainableMask{.vision = false, .adapter = true, .lm = false}));
  EXPECT_EQ(stage(1).trainable, TrainableMask::all());
  EXPECT_GT(stage(1).token_budget, 25.0 * stage(0).token_budget);
}

TEST(Stages, InvariantsHold) {
  for (const auto& s : stage_catalog()) {
    EXPECT_TRUE(check_invariants(s).empty()) << s.name;
    double sum = 0;
    for (const auto& [k, v] : s.mixture) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-9) << s.name;
  }
  double sum = 0;
  for (const auto& [k, v] : domain_dataset_composition()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);

  auto bad = stage(1);
  bad.mixture.emplace_back("Extra", 0.01);
  EXPECT_FALSE(check_invariants(bad).empty());
  bad = stage(1);
  bad.token_budget = 0;
  EXPECT_FALSE(check_invariants(bad).empty());
  bad = stage(1);
  bad.seq_len_model.cap = 65536;
  EXPECT_FALSE(check_invariants(bad).empty());
}

TEST(Stages, TrainableParamCount) {
  const auto& m = model("70B");
  EXPECT_EQ(trainable_param_count(m, stage(0)), 100'679'680u);
  EXPECT_EQ(trainable_param_count(m, stage(1)), total_param_count(m));
  auto frozen = stage(0);
  frozen.trainable = {};
  EXPECT_EQ(trainable_param_count(m, frozen), 0u);
}

TEST(Lengths, FixedAndDeterministic) {
  EXPECT_EQ(sample_lengths(SequenceLengthModel::fixed(4096), 7, 3),
            (std::vector<std::uint64_t>{4096, 4096, 4096}));
  const auto ln = default_seq_len_model();
  EXPECT_EQ(sample_lengths(ln, 42, 1000), sample_lengths(ln, 42, 1000));
  EXPECT_NE(sample_lengths(ln, 42, 1000), sample_lengths(ln, 43, 1000));
  EXPECT_TRUE(sample_lengths(ln, 1, 0).empty());
}

TEST(Lengths, LognormalStaysInBounds) {
  const auto m = SequenceLengthModel::lognormal(8.0, 0.7, 32768);
  const auto v = sample_lengths(m, 2024, 100000);
  ASSERT_EQ(v.size(), 100000u);
  EXPECT_LE(*std::max_element(v.begin(), v.end()), 32768u);
  EXPECT_GE(*std::min_element(v.begin(), v.end()), 1u);
  // Heavy tail: a tight cap is actually hit by rejection, never exceeded.
  const auto tight = sample_lengths(SequenceLengthModel::lognormal(8, 0.7, 4000),
                                    5, 10000);
  EXPECT_LE(*std::max_element(tight.begin(), tight.end()), 4000u);
}

// ---------------------------------------------------------------------------
// Packing.

std::uint64_t padded_cost(const std::vector<std::uint64_t>& batch) {
  return batch.size() * *std::max_element(batch.begin(), batch.end());
}

// Fewest padded-feasible batches over every set partition.
std::size_t optimal_batches(const std::vector<std::uint64_t>& lengths,
                            std::uint64_t budget) {
  std::size_t best = lengths.size();
  std::vector<std::vector<std::uint64_t>> groups;
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (groups.size() >= best) return;
    if (i == lengths.size()) {
      best = groups.size();
      return;
    }
    for (auto& g : groups) {
      g.push_back(lengths[i]);
      if (padded_cost(g) <= budget) go(i + 1);
      g.pop_back();
    }
    groups.push_back({lengths[i]});
    go(i + 1);
    groups.pop_back();
  };
  go(0);
  return best;
}

void expect_valid(const MicrobatchPlan& plan,
                  const std::vector<std::uint64_t>& lengths,
                  std::uint64_t budget) {
  std::vector<std::size_t> seen;
  std::vector<std::uint64_t> packed;
  for (const auto& b : plan.batches) {
    ASSERT_FALSE(b.lengths.empty());
    if (plan.padded) {
      EXPECT_LE(b.padded_tokens(), budget);
    } else {
      EXPECT_LE(b.tokens(), budget);
    }
    for (std::size_t k = 0; k < b.samples.size(); ++k) {
      seen.push_back(b.samples[k]);
      EXPECT_EQ(lengths[b.samples[k]], b.lengths[k]);
      packed.push_back(b.lengths[k]);
    }
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(lengths.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(seen, all);
  auto in = lengths;
  std::sort(in.begin(), in.end());
  std::sort(packed.begin(), packed.end());
  EXPECT_EQ(in, packed);
}

TEST(Packing, Examples) {
  const auto one = pack_dynamic_batches({32768}, 32768);
  ASSERT_EQ(one.batches.size(), 1u);
  EXPECT_EQ(one.batches[0].size(), 1u);

  const std::vector<std::uint64_t> eight(8, 100);
  const auto two = pack_dynamic_batches(eight, 400);
  ASSERT_EQ(two.batches.size(), 2u);
  EXPECT_EQ(two.batches[0].size(), 4u);
  EXPECT_EQ(two.batches[1].size(), 4u);
  expect_valid(two, eight, 400);

  const std::vector<std::uint64_t> mixed = {300, 200, 200, 100};
  const auto p = pack_dynamic_batches(mixed, 600);
  expect_valid(p, mixed, 600);
  EXPECT_LE(p.batches.size(), optimal_batches(mixed, 600) + 1);
}

TEST(Packing, OversizedSampleIsNamed) {
  try {
    pack_dynamic_batches({10, 20, 700, 5}, 600);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("sample 2"), std::string::npos);
  }
}

TEST(Packing, RandomizedAgainstBruteForce) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const std::uint64_t budget = 200 + rng() % 1000;
    std::vector<std::uint64_t> lengths(n);
    for (auto& l : lengths) l = 1 + rng() % budget;
    const auto plan = pack_dynamic_batches(lengths, budget);
    expect_valid(plan, lengths, budget);
    EXPECT_LE(plan.batches.size(), optimal_batches(lengths, budget) + 1)
        << "trial " << trial;
    EXPECT_EQ(plan, pack_dynamic_batches(lengths, budget));
    const auto unpadded =
        pack_dynamic_batches(lengths, budget, PackingCost::unpadded);
    expect_valid(unpadded, lengths, budget);
    EXPECT_LE(unpadded.batches.size(), plan.batches.size());
  }
}

TEST(Shapes, StaticAndDynamic) {
  WorkloadSpec w;
  w.seq_len_model = SequenceLengthModel::fixed(2048);
  w.microbatch_size = 2;
  const auto s = microbatch_shapes(w, 4, 0);
  ASSERT_EQ(s.size(), 4u);
  for (const auto& sh : s) {
    EXPECT_EQ(sh.samples(), 2u);
    EXPECT_EQ(sh.tokens(), 4096u);
    EXPECT_EQ(sh.max_length(), 2048u);
  }

  w.seq_len_model = default_seq_len_model();
  w.microbatch_size = 1;
  w.token_budget = 32768;
  const auto d = microbatch_shapes(w, 64, 3);
  std::uint64_t samples = 0;
  for (const auto& sh : d) {
    samples += sh.samples();
    EXPECT_LE(sh.samples() * sh.max_length(), 32768u);
  }
  EXPECT_EQ(samples, 64u);
  EXPECT_LT(d.size(), 64u);
  EXPECT_EQ(d, microbatch_shapes(w, 64, 3));
}

}  // namespace
}  // namespace vlmsim
