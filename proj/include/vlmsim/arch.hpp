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

// Model data sheets and the parameter / FLOP / visual-token arithmetic that
// the rest of the simulator is driven by.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vlmsim/error.hpp"

namespace vlmsim {

struct VisionEncoderSpec {
  std::uint64_t hidden_size = 0;
  std::uint64_t layers = 0;
  std::uint64_t heads = 0;
  std::uint64_t intermediate_size = 0;
  std::uint64_t patch_size = 0;
  std::uint64_t tile_side = 0;
  std::uint64_t tokens_per_tile = 0;
  std::uint64_t max_tiles = 0;

  std::uint64_t patches_per_tile() const {
    const auto side = tile_side / patch_size;
    return side * side;
  }

  bool operator==(const VisionEncoderSpec&) const = default;
};

struct AdapterSpec {
  std::uint64_t in_channels = 0;
  std::uint64_t out_channels = 0;
  std::uint64_t layers = 2;
  std::string activation = "gelu";

  bool operator==(const AdapterSpec&) const = default;
};

struct LanguageModelSpec {
  std::uint64_t hidden_size = 0;
  std::uint64_t layers = 0;
  std::uint64_t kv_heads = 0;
  std::uint64_t head_size = 0;
  std::uint64_t intermediate_size = 0;
  std::uint64_t vocab_size = 0;
  bool embedding_tying = false;
  std::uint64_t context_limit = 32768;

  std::uint64_t query_heads() const { return hidden_size / head_size; }

  bool operator==(const LanguageModelSpec&) const = default;
};

struct ModelSpec {
  std::string name;
  VisionEncoderSpec vision;
  AdapterSpec adapter;
  LanguageModelSpec lm;
  std::uint64_t nominal_params = 0;

  bool operator==(const ModelSpec&) const = default;
};

struct TilingPolicy {
  std::uint64_t max_tiles = 12;
  std::uint64_t tile_side = 448;
  bool add_thumbnail_when_multitile = true;

  bool operator==(const TilingPolicy&) const = default;
};

enum class Recompute { none, selective, full };

inline std::string_view to_string(Recompute r) {
  switch (r) {
    case Recompute::none: return "none";
    case Recompute::selective: return "selective";
    case Recompute::full: return "full";
  }
  return "none";
}

// Returns human-readable invariant violations; empty when the spec is sound.
inline std::vector<std::string> check_invariants(const VisionEncoderSpec& v) {
  std::vector<std::string> out;
  if (v.heads == 0 || v.hidden_size % v.heads != 0) {
    out.push_back("vision.hidden_size must be divisible by vision.heads");
  }
  if (v.patch_size == 0 || v.tile_side % v.patch_size != 0) {
    out.push_back("vision.tile_side must be divisible by vision.patch_size");
  } else if (v.tokens_per_tile == 0 ||
             v.patches_per_tile() % v.tokens_per_tile != 0) {
    out.push_back("vision.tokens_per_tile must divide the patch grid size");
  }
  if (v.max_tiles == 0) out.push_back("vision.max_tiles must be >= 1");
  return out;
}

inline std::vector<std::string> check_invariants(const AdapterSpec& a) {
  std::vector<std::string> out;
  if (a.in_channels == 0) out.push_back("adapter.in_channels must be > 0");
  if (a.out_channels == 0) out.push_back("adapter.out_channels must be > 0");
  if (a.layers != 2) out.push_back("adapter.layers must be 2");
  return out;
}

inline std::vector<std::string> check_invariants(const LanguageModelSpec& lm) {
  std::vector<std::string> out;
  if (lm.head_size == 0 || lm.hidden_size % lm.head_size != 0) {
    out.push_back("lm.hidden_size must be divisible by lm.head_size");
    return out;
  }
  const auto q = lm.query_heads();
  if (lm.kv_heads == 0 || q < lm.kv_heads || q % lm.kv_heads != 0) {
    out.push_back("lm query heads must be a multiple of lm.kv_heads");
  }
  if (lm.context_limit == 0) out.push_back("lm.context_limit must be > 0");
  return out;
}

inline std::vector<std::string> check_invariants(const ModelSpec& m) {
  std::vector<std::string> out;
  for (auto&& v : {check_invariants(m.vision), check_invariants(m.adapter),
                   check_invariants(m.lm)}) {
    out.insert(out.end(), v.begin(), v.end());
  }
  if (m.nominal_params == 0) out.push_back("nominal_params must be > 0");
  return out;
}

namespace detail {

inline VisionEncoderSpec internvit_300m() {
  return VisionEncoderSpec{.hidden_size = 1024,
                           .layers = 24,
                           .heads = 16,
                           .intermediate_size = 4096,
                           .patch_size = 14,
                           .tile_side = 448,
                           .tokens_per_tile = 256,
                           .max_tiles = 12};
}

}  // namespace detail

/// The three published variants. Field values are copied from the
/// architecture tables; nothing here is derived.
inline std::vector<ModelSpec> builtin_model_catalog() {
  using detail::internvit_300m;
  return {
      ModelSpec{.name = "3B",
                .vision = internvit_300m(),
                .adapter = {.in_channels = 4096, .out_channels = 2048},
                .lm = {.hidden_size = 2048,
                       .layers = 36,
                       .kv_heads = 2,
                       .head_size = 128,
                       .intermediate_size = 11008,
                       .vocab_size = 151673,
                       .embedding_tying = true},
                .nominal_params = 3'000'000'000ULL},
      ModelSpec{.name = "8B",
                .vision = internvit_300m(),
                .adapter = {.in_channels = 4096, .out_channels = 4096},
                .lm = {.hidden_size = 4096,
                       .layers = 32,
                       .kv_heads = 8,
                       .head_size = 128,
                       .intermediate_size = 14336,
                       .vocab_size = 182025,
                       .embedding_tying = false},
                .nominal_params = 8'000'000'000ULL},
      ModelSpec{.name = "70B",
                .vision = internvit_300m(),
                .adapter = {.in_channels = 4096, .out_channels = 8192},
                .lm = {.hidden_size = 8192,
                       .layers = 80,
                       .kv_heads = 8,
                       .head_size = 128,
                       .intermediate_size = 28672,
                       .vocab_size = 182025,
                       .embedding_tying = false},
                .nominal_params = 70'000'000'000ULL},
  };
}

inline const ModelSpec* find_model(const std::vector<ModelSpec>& catalog,
                                   std::string_view name) {
  for (const auto& m : catalog) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

inline TilingPolicy tiling_policy(const VisionEncoderSpec& v) {
  return TilingPolicy{.max_tiles = v.max_tiles, .tile_side = v.tile_side};
}

// ---------------------------------------------------------------------------
// Parameter counts. Norm and positional parameters are not counted.

/// Parameters of one decoder layer: Q/O, grouped K/V, and a gated MLP.
inline std::uint64_t lm_layer_param_count(const LanguageModelSpec& s) {
  using detail::checked_add;
  using detail::checked_mul;
  const auto h = s.hidden_size;
  const auto qo = checked_mul(2, checked_mul(h, h));
  const auto kv = checked_mul(2, checked_mul(h, checked_mul(s.kv_heads,
                                                             s.head_size)));
  const auto mlp = checked_mul(3, checked_mul(h, s.intermediate_size));
  return checked_add(checked_add(qo, kv), mlp);
}

inline std::uint64_t lm_embedding_param_count(const LanguageModelSpec& s) {
  const auto table = detail::checked_mul(s.vocab_size, s.hidden_size);
  return s.embedding_tying ? table : detail::checked_mul(2, table);
}

inline std::uint64_t lm_param_count(const LanguageModelSpec& s) {
  return detail::checked_add(
      lm_embedding_param_count(s),
      detail::checked_mul(s.layers, lm_layer_param_count(s)));
}

inline std::uint64_t vision_patch_embed_param_count(const VisionEncoderSpec& s) {
  return detail::checked_mul(
      3, detail::checked_mul(detail::checked_mul(s.patch_size, s.patch_size),
                             s.hidden_size));
}

inline std::uint64_t vision_layer_param_count(const VisionEncoderSpec& s) {
  using detail::checked_add;
  using detail::checked_mul;
  const auto h = s.hidden_size;
  return checked_add(checked_mul(4, checked_mul(h, h)),
                     checked_mul(2, checked_mul(h, s.intermediate_size)));
}

inline std::uint64_t vision_param_count(const VisionEncoderSpec& s) {
  return detail::checked_add(
      vision_patch_embed_param_count(s),
      detail::checked_mul(s.layers, vision_layer_param_count(s)));
}

/// Layer 1 maps in->out, layer 2 maps out->out, both with bias.
inline std::uint64_t adapter_param_count(const AdapterSpec& s) {
  using detail::checked_add;
  using detail::checked_mul;
  if (s.layers != 2) throw Error("adapter must have exactly 2 layers");
  const auto in = s.in_channels;
  const auto out = s.out_channels;
  return checked_add(checked_add(checked_mul(in, out), checked_mul(out, out)),
                     checked_mul(2, out));
}

inline std::uint64_t total_param_count(const ModelSpec& m) {
  return detail::checked_add(
      detail::checked_add(lm_param_count(m.lm), vision_param_count(m.vision)),
      adapter_param_count(m.adapter));
}

// ---------------------------------------------------------------------------
// Dynamic tiling.

struct TileGrid {
  std::uint64_t rows = 1;
  std::uint64_t cols = 1;

  std::uint64_t tiles() const { return rows * cols; }
  bool operator==(const TileGrid&) const = default;
};

namespace detail {

// |log(cols/rows) - log(w/h)| represented exactly as the ratio
// max(a,b) : min(a,b) with a = cols*h, b = rows*w.
struct AspectError {
  unsigned __int128 num;
  unsigned __int128 den;
};

inline AspectError aspect_error(std::uint64_t rows, std::uint64_t cols,
                                std::uint64_t w, std::uint64_t h) {
  const unsigned __int128 a = static_cast<unsigned __int128>(cols) * h;
  const unsigned __int128 b = static_cast<unsigned __int128>(rows) * w;
  return a >= b ? AspectError{a, b} : AspectError{b, a};
}

// -1, 0, 1 for lhs <, ==, > rhs.
inline int compare(const AspectError& lhs, const AspectError& rhs) {
  const auto l = lhs.num * rhs.den;
  const auto r = rhs.num * lhs.den;
  return l < r ? -1 : (l > r ? 1 : 0);
}

}  // namespace detail

/// Picks the rows x cols grid (rows*cols <= max_tiles) whose aspect ratio is
/// closest to the image's in log space. When two grids match equally well,
/// the larger grid wins only if the image carries more than half the pixels
/// that grid would sample; otherwise the smaller grid is kept. Remaining ties
/// go to more columns.
inline TileGrid tile_grid(std::uint64_t width, std::uint64_t height,
                          const TilingPolicy& policy) {
  if (width == 0 || height == 0) throw Error("image dimensions must be >= 1");
  if (policy.max_tiles == 0) throw Error("max_tiles must be >= 1");

  std::vector<TileGrid> grids;
  for (std::uint64_t r = 1; r <= policy.max_tiles; ++r) {
    for (std::uint64_t c = 1; r * c <= policy.max_tiles; ++c) {
      grids.push_back({r, c});
    }
  }
  // Visit small grids first so a tie can only be won by growing.
  std::stable_sort(grids.begin(), grids.end(),
                   [](const TileGrid& a, const TileGrid& b) {
                     if (a.tiles() != b.tiles()) return a.tiles() < b.tiles();
                     return a.cols < b.cols;
                   });

  const unsigned __int128 area =
      static_cast<unsigned __int128>(width) * height;
  const unsigned __int128 tile_area =
      static_cast<unsigned __int128>(policy.tile_side) * policy.tile_side;

  TileGrid best = grids.front();
  auto best_err = detail::aspect_error(best.rows, best.cols, width, height);
  for (const auto& g : grids) {
    const auto err = detail::aspect_error(g.rows, g.cols, width, height);
    const int cmp = detail::compare(err, best_err);
    if (cmp < 0) {
      best = g;
      best_err = err;
    } else if (cmp == 0) {
      if (g.tiles() > best.tiles()) {
        if (2 * area > tile_area * g.tiles()) {
          best = g;
          best_err = err;
        }
      } else if (g.tiles() == best.tiles() && g.cols > best.cols) {
        best = g;
        best_err = err;
      }
    }
  }
  return best;
}

inline std::uint64_t visual_token_count(std::uint64_t width,
                                        std::uint64_t height,
                                        const TilingPolicy& policy,
                                        const VisionEncoderSpec& vision) {
  const auto tiles = tile_grid(width, height, policy).tiles();
  const bool thumbnail = tiles > 1 && policy.add_thumbnail_when_multitile;
  return (tiles + (thumbnail ? 1 : 0)) * vision.tokens_per_tile;
}

// ---------------------------------------------------------------------------
// Training FLOPs.

/// Forward-pass FLOPs of one microbatch, split by where the work lives so the
/// pipeline partitioner and the engine charge the same numbers.
struct FlopBreakdown {
  double lm_layer_forward = 0;     // one decoder layer
  double lm_layer_recompute = 0;   // extra forward work redone in backward
  double vision_forward = 0;       // all tiles through the encoder
  double adapter_forward = 0;
  std::uint64_t lm_layers = 0;

  double forward_total() const {
    return lm_layer_forward * static_cast<double>(lm_layers) + vision_forward +
           adapter_forward;
  }
  double recompute_total() const {
    return lm_layer_recompute * static_cast<double>(lm_layers);
  }
  // Backward is twice forward; recompute is charged to backward.
  double step_total() const {
    return 3.0 * forward_total() + recompute_total();
  }
};

/// MACs per token of one decoder layer (q, k, v, o, gate, up, down).
inline std::uint64_t lm_layer_macs_per_token(const LanguageModelSpec& lm) {
  return lm_layer_param_count(lm);
}

inline FlopBreakdown flop_breakdown(const ModelSpec& model,
                                    std::uint64_t microbatch,
                                    std::uint64_t seq_len,
                                    std::uint64_t visual_tokens,
                                    Recompute recompute) {
  if (seq_len > model.lm.context_limit) {
    throw Error("seq_len " + std::to_string(seq_len) +
                " exceeds context limit " +
                std::to_string(model.lm.context_limit));
  }
  FlopBreakdown out;
  out.lm_layers = model.lm.layers;
  const double b = static_cast<double>(microbatch);
  const double s = static_cast<double>(seq_len);
  const double h = static_cast<double>(model.lm.hidden_size);

  const double matmul =
      2.0 * static_cast<double>(lm_layer_macs_per_token(model.lm)) * s * b;
  const double attention = 4.0 * s * h * s * b;
  out.lm_layer_forward = matmul + attention;
  switch (recompute) {
    case Recompute::none: break;
    case Recompute::selective: out.lm_layer_recompute = attention; break;
    case Recompute::full: out.lm_layer_recompute = out.lm_layer_forward; break;
  }

  const auto& v = model.vision;
  if (visual_tokens > 0 && v.tokens_per_tile > 0) {
    const auto tiles =
        (visual_tokens + v.tokens_per_tile - 1) / v.tokens_per_tile;
    const double n = static_cast<double>(v.patches_per_tile());
    const double vh = static_cast<double>(v.hidden_size);
    const double per_patch_macs =
        static_cast<double>(vision_patch_embed_param_count(v)) +
        static_cast<double>(v.layers) *
            static_cast<double>(vision_layer_param_count(v));
    const double per_tile = 2.0 * per_patch_macs * n +
                            static_cast<double>(v.layers) * 4.0 * n * vh * n;
    out.vision_forward = per_tile * static_cast<double>(tiles) * b;

    const auto& a = model.adapter;
    const double adapter_macs = static_cast<double>(
        a.in_channels * a.out_channels + a.out_channels * a.out_channels);
    out.adapter_forward =
        2.0 * adapter_macs * static_cast<double>(visual_tokens) * b;
  }
  return out;
}

/// Training FLOPs (forward + backward + recompute) of one microbatch.
inline double step_flops(const ModelSpec& model, std::uint64_t microbatch,
                         std::uint64_t seq_len, std::uint64_t visual_tokens,
                         Recompute recompute) {
  return flop_breakdown(model, microbatch, seq_len, visual_tokens, recompute)
      .step_total();
}

}  // namespace vlmsim
