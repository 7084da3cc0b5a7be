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

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "vlmsim/arch.hpp"

namespace vlmsim {
namespace {

const ModelSpec& model(const std::string& name) {
  static const auto catalog = builtin_model_catalog();
  const auto* m = find_model(catalog, name);
  if (!m) throw std::runtime_error("no model " + name);
  return *m;
}

TEST(Catalog, ThreeVariantsWithPublishedFields) {
  const auto c = builtin_model_catalog();
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].name, "3B");
  EXPECT_EQ(c[1].name, "8B");
  EXPECT_EQ(c[2].name, "70B");
  EXPECT_EQ(model("70B").lm.hidden_size, 8192u);
  EXPECT_TRUE(model("3B").lm.embedding_tying);
  EXPECT_FALSE(model("8B").lm.embedding_tying);
  EXPECT_EQ(model("8B").lm.vocab_size, 182025u);
  EXPECT_EQ(model("3B").lm.vocab_size, 151673u);
  EXPECT_EQ(model("3B").lm.kv_heads, 2u);
  EXPECT_EQ(model("70B").lm.layers, 80u);
  EXPECT_EQ(model("70B").lm.intermediate_size, 28672u);
  EXPECT_EQ(model("3B").adapter.out_channels, 2048u);
  for (const auto& m : c) {
    EXPECT_TRUE(check_invariants(m).empty()) << m.name;
    EXPECT_EQ(m.vision.tokens_per_tile, 256u);
    EXPECT_EQ(m.vision.tile_side, 448u);
    EXPECT_EQ(m.vision.max_tiles, 12u);
    EXPECT_EQ(m.vision.patch_size, 14u);
    EXPECT_EQ(m.adapter.in_channels, 4096u);
    EXPECT_EQ(m.lm.context_limit, 32768u);
  }
}

TEST(Catalog, InvariantsRejectBrokenSpecs) {
  auto m = model("8B");
  m.lm.kv_heads = 3;  // 32 query heads do not group into 3
  EXPECT_FALSE(check_invariants(m).empty());
  m = model("8B");
  m.vision.heads = 7;
  EXPECT_FALSE(check_invariants(m).empty());
  m = model("8B");
  m.vision.tokens_per_tile = 300;
  EXPECT_FALSE(check_invariants(m).empty());
  m = model("8B");
  m.nominal_params = 0;
  EXPECT_FALSE(check_invariants(m).empty());
  m = model("8B");
  m.adapter.in_channels = 0;
  EXPECT_FALSE(check_invariants(m).empty());
}

// ---------------------------------------------------------------------------
// Parameter counts against the committed spreadsheet.

TEST(ParamCounts, MatchSpreadsheetExactly) {
  const auto sheet = testing::param_sheet();
  ASSERT_EQ(sheet.size(), 3u);
  for (const auto& [name, parts] : sheet) {
    const auto& m = model(name);
    EXPECT_EQ(lm_param_count(m.lm), parts.at("lm")) << name;
    EXPECT_EQ(vision_param_count(m.vision), parts.at("vision")) << name;
    EXPECT_EQ(adapter_param_count(m.adapter), parts.at("adapter")) << name;
  }
}

TEST(ParamCounts, FrozenValues) {
  EXPECT_EQ(vision_param_count(model("8B").vision), 302'592'000u);
  EXPECT_EQ(lm_param_count(model("3B").lm), 3'085'158'400u);
  EXPECT_EQ(lm_param_count(model("8B").lm), 8'470'470'656u);
  EXPECT_EQ(lm_param_count(model("70B").lm), 71'433'338'880u);
  EXPECT_EQ(total_param_count(model("3B")), 3'400'337'408u);
  EXPECT_EQ(total_param_count(model("8B")), 8'806'625'280u);
  EXPECT_EQ(total_param_count(model("70B")), 71'836'610'560u);
}

TEST(ParamCounts, LanguageModelNearNominal) {
  const double l70 = static_cast<double>(lm_param_count(model("70B").lm));
  const double l8 = static_cast<double>(lm_param_count(model("8B").lm));
  EXPECT_NEAR(l70, 7.14e10, 0.01e10);
  EXPECT_LE(std::abs(l70 / 7.0e10 - 1.0), 0.05);
  EXPECT_NEAR(l8, 8.47e9, 0.01e9);
  EXPECT_LE(std::abs(l8 / 8.0e9 - 1.0), 0.10);
}

TEST(ParamCounts, DegenerateLanguageModelIsEmbeddingOnly) {
  LanguageModelSpec lm{.hidden_size = 1,
                       .layers = 0,
                       .kv_heads = 1,
                       .head_size = 1,
                       .intermediate_size = 1,
                       .vocab_size = 1,
                       .embedding_tying = true};
  EXPECT_EQ(lm_param_count(lm), 1u);
  lm.embedding_tying = false;
  EXPECT_EQ(lm_param_count(lm), 2u);
}

TEST(ParamCounts, VisionNearThreeHundredMillion) {
  const auto& v = model("3B").vision;
  const double n = static_cast<double>(vision_param_count(v));
  EXPECT_NEAR(n, 3.03e8, 0.01e8);
  EXPECT_LE(std::abs(n / 3.0e8 - 1.0), 0.05);

  auto zero = v;
  zero.layers = 0;
  EXPECT_EQ(vision_param_count(zero), 3u * 14 * 14 * 1024);

  auto twice = v;
  twice.layers = 2 * v.layers;
  const auto patch = vision_patch_embed_param_count(v);
  EXPECT_EQ(vision_param_count(twice) - patch,
            2 * (vision_param_count(v) - patch));
}

TEST(ParamCounts, Adapter) {
  EXPECT_EQ(adapter_param_count(model("70B").adapter), 100'679'680u);
  EXPECT_EQ(adapter_param_count(model("3B").adapter), 12'587'008u);
  EXPECT_EQ(adapter_param_count({.in_channels = 1, .out_channels = 1}), 4u);
  EXPECT_THROW(
      adapter_param_count({.in_channels = 1, .out_channels = 1, .layers = 3}),
      Error);
}

TEST(ParamCounts, OverflowIsAnError) {
  LanguageModelSpec lm = model("70B").lm;
  lm.hidden_size = 1ULL << 40;
  lm.head_size = 1;
  EXPECT_THROW(lm_param_count(lm), OverflowError);
  VisionEncoderSpec v = model("70B").vision;
  v.layers = 1ULL << 62;
  EXPECT_THROW(vision_param_count(v), OverflowError);
}

TEST(ParamCounts, GqaReducesToMultiHead) {
  auto lm = model("8B").lm;
  lm.kv_heads = lm.query_heads();
  const auto h = lm.hidden_size;
  EXPECT_EQ(lm_layer_param_count(lm), 4 * h * h + 3 * h * lm.intermediate_size);
}

TEST(ParamCounts, StrictlyMonotoneInSizeFields) {
  const auto base = model("8B");
  const auto p0 = total_param_count(base);
  const auto f0 = step_flops(base, 1, 2048, 256, Recompute::none);
  auto bump = [&](auto mutate) {
    auto m = base;
    mutate(m);
    EXPECT_GT(total_param_count(m), p0);
    EXPECT_GT(step_flops(m, 1, 2048, 256, Recompute::none), f0);
  };
  bump([](ModelSpec& m) { m.lm.hidden_size += 128; });
  bump([](ModelSpec& m) { m.lm.layers += 1; });
  bump([](ModelSpec& m) { m.lm.kv_heads *= 2; });
  bump([](ModelSpec& m) { m.lm.intermediate_size += 1; });
  bump([](ModelSpec& m) { m.vision.hidden_size += 64; });
  bump([](ModelSpec& m) { m.vision.layers += 1; });
  bump([](ModelSpec& m) { m.vision.intermediate_size += 1; });
  bump([](ModelSpec& m) { m.adapter.out_channels += 1; });
  // Vocabulary and patch size change parameters but not decoder FLOPs.
  auto m = base;
  m.lm.vocab_size += 1;
  EXPECT_GT(total_param_count(m), p0);
  m = base;
  m.vision.patch_size += 1;
  EXPECT_GT(vision_patch_embed_param_count(m.vision),
            vision_patch_embed_param_count(base.vision));
}

// ---------------------------------------------------------------------------
// Tiling.

TEST(Tiling, Examples) {
  const auto p = tiling_policy(model("8B").vision);
  EXPECT_EQ(tile_grid(448, 448, p), (TileGrid{1, 1}));
  EXPECT_EQ(tile_grid(896, 448, p), (TileGrid{1, 2}));
  EXPECT_EQ(tile_grid(4032, 448, p), (TileGrid{1, 9}));
  EXPECT_EQ(tile_grid(448, 896, p), (TileGrid{2, 1}));
  EXPECT_EQ(tile_grid(1344, 1344, p), (TileGrid{3, 3}));
  EXPECT_THROW(tile_grid(0, 448, p), Error);
}

TEST(Tiling, VisualTokens) {
  const auto& v = model("8B").vision;
  const auto p = tiling_policy(v);
  EXPECT_EQ(visual_token_count(448, 448, p, v), 256u);
  EXPECT_EQ(visual_token_count(896, 448, p, v), 768u);
  EXPECT_EQ(visual_token_count(5376, 448, p, v), 3328u);  // 1x12 + thumbnail
  EXPECT_EQ(visual_token_count(1344, 1792, p, v), 3328u);  // 4x3
  auto no_thumb = p;
  no_thumb.add_thumbnail_when_multitile = false;
  EXPECT_EQ(visual_token_count(896, 448, no_thumb, v), 512u);
  EXPECT_EQ((v.max_tiles + 1) * v.tokens_per_tile, 3328u);
}

TEST(Tiling, AgreesWithExhaustiveEnumeration) {
  const auto& v = model("8B").vision;
  const auto p = tiling_policy(v);
  std::uint64_t worst = 0;
  for (std::uint64_t w = 224; w <= 4480; w += 112) {
    for (std::uint64_t h = 224; h <= 4480; h += 112) {
      const auto g = tile_grid(w, h, p);
      ASSERT_LE(g.tiles(), p.max_tiles);
      const auto best = testing::best_grids(w, h, p.max_tiles);
      // The returned grid attains the optimum.
      bool optimal = false;
      for (const auto& b : best) optimal = optimal || b == g;
      ASSERT_TRUE(optimal) << w << "x" << h;
      const auto expect = testing::enumerated_grid(w, h, p);
      ASSERT_EQ(g, expect) << w << "x" << h;
      worst = std::max(worst, visual_token_count(w, h, p, v));
    }
  }
  EXPECT_LE(worst, (p.max_tiles + 1) * v.tokens_per_tile);
  EXPECT_EQ(worst, 3328u);
}

// ---------------------------------------------------------------------------
// FLOPs.

// Every matmul of one decoder layer as (rows of weight, cols of weight).
double spreadsheet_forward(const LanguageModelSpec& lm, double tokens,
                           double seq) {
  const double h = static_cast<double>(lm.hidden_size);
  const double kv = static_cast<double>(lm.kv_heads * lm.head_size);
  const double ffn = static_cast<double>(lm.intermediate_size);
  const std::vector<std::pair<double, double>> matmuls = {
      {h, h},     // q
      {h, kv},    // k
      {h, kv},    // v
      {h, h},     // o
      {h, ffn},   // gate
      {h, ffn},   // up
      {ffn, h},   // down
  };
  double per_layer = 0;
  for (const auto& [a, b] : matmuls) per_layer += 2.0 * a * b * tokens;
  per_layer += 2.0 * seq * seq * h;  // Q K^T
  per_layer += 2.0 * seq * seq * h;  // scores V
  return per_layer * static_cast<double>(lm.layers);
}

TEST(Flops, EightBillionMatchesSpreadsheet) {
  const auto& m = model("8B");
  const double f = spreadsheet_forward(m.lm, 4096, 4096);
  EXPECT_EQ(f, 65'970'697'666'560.0);
  const auto fb = flop_breakdown(m, 1, 4096, 0, Recompute::none);
  EXPECT_EQ(fb.forward_total(), f);
  EXPECT_EQ(step_flops(m, 1, 4096, 0, Recompute::none), 3.0 * f);
  EXPECT_EQ(step_flops(m, 1, 4096, 0, Recompute::none),
            197'912'092'999'680.0);
}

TEST(Flops, ZeroAndLinearInMicrobatch) {
  const auto& m = model("70B");
  EXPECT_EQ(step_flops(m, 0, 4096, 256, Recompute::selective), 0.0);
  for (auto rc : {Recompute::none, Recompute::selective, Recompute::full}) {
    const double one = step_flops(m, 1, 4096, 768, rc);
    EXPECT_EQ(step_flops(m, 2, 4096, 768, rc), 2.0 * one);
  }
}

TEST(Flops, RecomputeAddsCheckpointedForward) {
  const auto& m = model("8B");
  const double none = step_flops(m, 1, 4096, 0, Recompute::none);
  const double sel = step_flops(m, 1, 4096, 0, Recompute::selective);
  const double full = step_flops(m, 1, 4096, 0, Recompute::full);
  const double attention = 4.0 * 4096.0 * 4096.0 * 4096.0 * 32.0;
  EXPECT_EQ(sel - none, attention);
  EXPECT_EQ(full, 4.0 * none / 3.0);
}

TEST(Flops, VisionPerTile) {
  const auto& m = model("8B");
  const auto& v = m.vision;
  const auto one = flop_breakdown(m, 1, 4096, 256, Recompute::none);
  const auto three = flop_breakdown(m, 1, 4096, 768, Recompute::none);
  EXPECT_EQ(three.vision_forward, 3.0 * one.vision_forward);
  // Hand arithmetic for one tile of 1024 patches.
  const double n = 1024;
  const double per_patch =
      3.0 * 14 * 14 * 1024 + 24.0 * (4.0 * 1024 * 1024 + 2.0 * 1024 * 4096);
  const double attn = 24.0 * 4.0 * n * n * 1024;
  EXPECT_EQ(one.vision_forward, 2.0 * per_patch * n + attn);
  EXPECT_EQ(v.patches_per_tile(), 1024u);
  EXPECT_EQ(one.adapter_forward, 2.0 * (4096.0 * 4096 + 4096.0 * 4096) * 256);
}

TEST(Flops, SequenceOverContextLimitThrows) {
  EXPECT_THROW(step_flops(model("8B"), 1, 32769, 0, Recompute::none), Error);
  EXPECT_NO_THROW(step_flops(model("8B"), 1, 32768, 0, Recompute::none));
}

}  // namespace
}  // namespace vlmsim
