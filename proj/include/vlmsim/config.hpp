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

// Strict JSON configuration: every key is known, every error names its path.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmsim/arch.hpp"
#include "vlmsim/cluster.hpp"
#include "vlmsim/comm.hpp"
#include "vlmsim/engine.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/workload.hpp"

namespace vlmsim {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
  explicit ConfigError(std::vector<Violation> v)
      : Error(format(v)), violations_(std::move(v)) {}

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string format(const std::vector<Violation>& v) {
    std::string out;
    for (const auto& x : v) {
      if (!out.empty()) out += '\n';
      out += x.message + " (at " + x.path + ")";
    }
    return out;
  }
  std::vector<Violation> violations_;
};

enum class ScalingMode { weak, strong };

struct ScalingConfig {
  std::uint64_t reference_chips = 0;
  std::vector<std::uint64_t> points;
  ScalingMode mode = ScalingMode::weak;

  bool operator==(const ScalingConfig&) const = default;
};

struct OutputConfig {
  std::string dir;  // empty: not set
  std::vector<std::string> formats = {"json", "csv"};

  bool operator==(const OutputConfig&) const = default;
};

struct SimConfig {
  ModelSpec model;
  TrainingStage stage;
  Topology topology;
  ParallelismPlan plan;
  CostModelConfig costmodel;
  WorkloadSpec workload;
  std::optional<ScalingConfig> scaling;
  OutputConfig output;
  std::uint64_t seed = 0;
  bool dp_auto = false;  // plan.dp was "auto": chips / (tp * pp)

  bool operator==(const SimConfig&) const = default;
};

inline constexpr int kConfigSchema = 1;

namespace detail {

using json = nlohmann::ordered_json;  // keeps mixture order

// Reads one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected object at " + path_);
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing key at " + at(key));
    seen_.insert(key);
    return j_.at(key);
  }

  std::uint64_t u64(const std::string& key) {
    const auto& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0 && d == std::floor(d) && d < 1.8e19) {
        return static_cast<std::uint64_t>(d);
      }
    }
    throw ConfigError("expected non-negative integer at " + at(key));
  }
  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    return has(key) ? u64(key) : def;
  }

  double num(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError("expected number at " + at(key));
    return v.get<double>();
  }
  double num(const std::string& key, double def) {
    return has(key) ? num(key) : def;
  }

  bool flag(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError("expected boolean at " + at(key));
    return v.get<bool>();
  }
  bool flag(const std::string& key, bool def) {
    return has(key) ? flag(key) : def;
  }

  std::string str(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError("expected string at " + at(key));
    return v.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& def) {
    return has(key) ? str(key) : def;
  }

  template <class E>
  E choice(const std::string& key,
           const std::vector<std::pair<std::string, E>>& options, E def) {
    if (!has(key)) return def;
    const auto s = str(key);
    std::string names;
    for (const auto& [n, e] : options) {
      if (n == s) return e;
      names += (names.empty() ? "" : ", ") + n;
    }
    throw ConfigError("invalid value \"" + s + "\" at " + at(key) +
                      " (expected one of: " + names + ")");
  }

  void reject_unknown(std::initializer_list<std::string_view> allowed) const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
        throw ConfigError("unknown key at " + at(k));
      }
    }
  }

  /// Rejects keys nobody asked for.
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key at " + at(k));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline const std::vector<std::pair<std::string, Recompute>> kRecompute = {
    {"none", Recompute::none},
    {"selective", Recompute::selective},
    {"full", Recompute::full}};
inline const std::vector<std::pair<std::string, LayerBalance>> kBalance = {
    {"uniform", LayerBalance::uniform},
    {"cost-balanced", LayerBalance::cost_balanced}};
inline const std::vector<std::pair<std::string, SyncFrequency>> kFrequency = {
    {"per_step", SyncFrequency::per_step},
    {"per_microbatch", SyncFrequency::per_microbatch}};
inline const std::vector<std::pair<std::string, PackingCost>> kPacking = {
    {"padded", PackingCost::padded}, {"unpadded", PackingCost::unpadded}};
inline const std::vector<std::pair<std::string, ScalingMode>> kScaling = {
    {"weak", ScalingMode::weak}, {"strong", ScalingMode::strong}};

template <class E>
std::string name_of(const std::vector<std::pair<std::string, E>>& options,
                    E e) {
  for (const auto& [n, v] : options) {
    if (v == e) return n;
  }
  return "?";
}

inline VisionEncoderSpec parse_vision(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  VisionEncoderSpec v;
  v.hidden_size = r.u64("hidden_size");
  v.layers = r.u64("layers");
  v.heads = r.u64("heads");
  v.intermediate_size = r.u64("intermediate_size");
  v.patch_size = r.u64("patch_size");
  v.tile_side = r.u64("tile_side");
  v.tokens_per_tile = r.u64("tokens_per_tile");
  v.max_tiles = r.u64("max_tiles");
  r.finish();
  return v;
}

inline AdapterSpec parse_adapter(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  AdapterSpec a;
  a.in_channels = r.u64("in_channels");
  a.out_channels = r.u64("out_channels");
  a.layers = r.u64("layers", a.layers);
  a.activation = r.str("activation", a.activation);
  r.finish();
  return a;
}

inline LanguageModelSpec parse_lm(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  LanguageModelSpec lm;
  lm.hidden_size = r.u64("hidden_size");
  lm.layers = r.u64("layers");
  lm.kv_heads = r.u64("kv_heads");
  lm.head_size = r.u64("head_size");
  lm.intermediate_size = r.u64("intermediate_size");
  lm.vocab_size = r.u64("vocab_size");
  lm.embedding_tying = r.flag("embedding_tying", lm.embedding_tying);
  lm.context_limit = r.u64("context_limit", lm.context_limit);
  r.finish();
  return lm;
}

inline void require_clean(const std::vector<std::string>& problems,
                          const std::string& path) {
  if (!problems.empty()) {
    throw ConfigError("invalid value at " + path + ": " + problems.front());
  }
}

inline ModelSpec parse_model(const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto catalog = builtin_model_catalog();
    const auto* m = find_model(catalog, j.get<std::string>());
    if (!m) {
      throw ConfigError("unknown model \"" + j.get<std::string>() + "\" at " +
                        path);
    }
    return *m;
  }
  ObjectReader r(j, path);
  ModelSpec m;
  m.name = r.str("name", "custom");
  m.vision = parse_vision(r.raw("vision"), r.at("vision"));
  m.adapter = parse_adapter(r.raw("adapter"), r.at("adapter"));
  m.lm = parse_lm(r.raw("lm"), r.at("lm"));
  m.nominal_params = r.u64("nominal_params", 0);
  r.finish();
  require_clean(check_invariants(m), path);
  return m;
}

inline SequenceLengthModel parse_seq_len(const json& j,
                                         const std::string& path) {
  ObjectReader r(j, path);
  const auto kind = r.str("kind");
  SequenceLengthModel m;
  if (kind == "fixed") {
    m = SequenceLengthModel::fixed(r.u64("value"));
    m.cap = r.u64("cap", m.cap);
  } else if (kind == "lognormal") {
    m = SequenceLengthModel::lognormal(r.num("mean"), r.num("sigma"),
                                       r.u64("cap", kMaxContext));
  } else {
    throw ConfigError("invalid value \"" + kind + "\" at " + r.at("kind") +
                      " (expected one of: fixed, lognormal)");
  }
  r.finish();
  require_clean(check_invariants(m), path);
  return m;
}

inline TrainingStage parse_stage(const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto catalog = stage_catalog();
    const auto* s = find_stage(catalog, j.get<std::string>());
    if (!s) {
      throw ConfigError("unknown stage \"" + j.get<std::string>() + "\" at " +
                        path);
    }
    return *s;
  }
  ObjectReader r(j, path);
  TrainingStage s;
  s.name = r.str("name", "custom");
  s.token_budget = r.num("token_budget", 0);
  {
    ObjectReader t(r.raw("trainable"), r.at("trainable"));
    s.trainable.vision = t.flag("vision");
    s.trainable.adapter = t.flag("adapter");
    s.trainable.lm = t.flag("lm");
    t.finish();
  }
  const auto& mix = r.raw("mixture");
  if (!mix.is_object()) {
    throw ConfigError("expected object at " + r.at("mixture"));
  }
  for (const auto& [k, v] : mix.items()) {
    if (!v.is_number()) {
      throw ConfigError("expected number at " + r.at("mixture") + "." + k);
    }
    s.mixture.emplace_back(k, v.get<double>());
  }
  s.seq_len_model = r.has("seq_len_model")
                        ? parse_seq_len(r.raw("seq_len_model"),
                                        r.at("seq_len_model"))
                        : default_seq_len_model();
  r.finish();
  require_clean(check_invariants(s), path);
  return s;
}

inline Topology parse_topology(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  Topology t;
  t.nodes = r.u64("nodes");
  t.chips_per_node = r.u64("chips_per_node");
  t.intra_node_bw = r.num("intra_node_bw");
  t.inter_node_bw = r.num("inter_node_bw");
  t.intra_latency = r.num("intra_latency");
  t.inter_latency = r.num("inter_latency");
  ObjectReader c(r.raw("chip"), r.at("chip"));
  t.chip.peak_flops = c.num("peak_flops");
  t.chip.memory = c.num("memory");
  t.chip.has_independent_comm_unit =
      c.flag("has_independent_comm_unit", t.chip.has_independent_comm_unit);
  c.finish();
  r.finish();
  return t;
}

inline ParallelismPlan parse_plan(const json& j, const std::string& path,
                                  const Topology& topo, bool& dp_auto) {
  ObjectReader r(j, path);
  ParallelismPlan p;
  dp_auto = r.has("dp") && r.raw("dp") == "auto";
  if (!dp_auto) p.dp = r.u64("dp");
  p.tp = r.u64("tp");
  p.pp = r.u64("pp");
  if (dp_auto) {
    // Left at 0 when it does not divide; validation reports the product.
    const auto chips = topo.total_chips();
    const auto inner = p.tp * p.pp;
    p.dp = inner > 0 && chips % inner == 0 ? chips / inner : 0;
  }
  p.sequence_parallel = r.flag("sequence_parallel", p.sequence_parallel);
  p.microbatches_per_step =
      r.u64("microbatches_per_step", p.microbatches_per_step);
  p.recompute = r.choice("recompute", kRecompute, p.recompute);
  p.overlap_grad_sync = r.flag("overlap_grad_sync", p.overlap_grad_sync);
  p.fusion_chunks = r.u64("fusion_chunks", p.fusion_chunks);
  p.distributed_optimizer =
      r.flag("distributed_optimizer", p.distributed_optimizer);
  p.layer_balance = r.choice("layer_balance", kBalance, p.layer_balance);
  r.finish();
  return p;
}

inline CostModelConfig parse_costmodel(const json& j,
                                       const std::string& path) {
  ObjectReader r(j, path);
  CostModelConfig c;
  c.algorithm = r.choice<CollectiveAlgorithm>(
      "algorithm", {{"ring", CollectiveAlgorithm::ring}}, c.algorithm);
  if (r.has("grad_sync")) {
    ObjectReader g(r.raw("grad_sync"), r.at("grad_sync"));
    auto& s = c.grad_sync;
    s.precision_bytes = g.u64("precision_bytes", s.precision_bytes);
    s.frequency = g.choice("frequency", kFrequency, s.frequency);
    s.bucket_bytes = g.num("bucket_bytes", s.bucket_bytes);
    g.finish();
    if (s.precision_bytes == 0) {
      throw ConfigError("precision_bytes must be >= 1 at " +
                        g.at("precision_bytes"));
    }
    if (!(s.bucket_bytes > 0)) {
      throw ConfigError("bucket_bytes must be > 0 at " + g.at("bucket_bytes"));
    }
  }
  r.finish();
  return c;
}

inline WorkloadSpec parse_workload(const json& j, const std::string& path,
                                   const ModelSpec& model) {
  ObjectReader r(j, path);
  WorkloadSpec w;
  if (r.has("seq_len_model")) {
    w.seq_len_model = parse_seq_len(r.raw("seq_len_model"),
                                    r.at("seq_len_model"));
  }
  w.microbatch_size = r.u64("microbatch_size", w.microbatch_size);
  if (w.microbatch_size == 0) {
    throw ConfigError("microbatch_size must be >= 1 at " +
                      r.at("microbatch_size"));
  }
  w.token_budget = r.u64("token_budget", w.token_budget);
  w.packing = r.choice("packing", kPacking, w.packing);
  if (r.has("image") && r.has("visual_tokens")) {
    throw ConfigError("give either image or visual_tokens at " + path);
  }
  if (r.has("image")) {
    ObjectReader im(r.raw("image"), r.at("image"));
    const auto width = im.u64("width");
    const auto height = im.u64("height");
    im.finish();
    w.visual_tokens = visual_token_count(width, height, tiling_policy(model.vision),
                                         model.vision);
  } else {
    w.visual_tokens = r.u64("visual_tokens", 0);
  }
  r.finish();
  return w;
}

inline ScalingConfig parse_scaling(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ScalingConfig s;
  s.reference_chips = r.u64("reference_chips");
  const auto& pts = r.raw("points");
  if (!pts.is_array()) throw ConfigError("expected array at " + r.at("points"));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].is_number_unsigned() || pts[i].get<std::uint64_t>() == 0) {
      throw ConfigError("expected positive integer at " + r.at("points") +
                        "[" + std::to_string(i) + "]");
    }
    s.points.push_back(pts[i].get<std::uint64_t>());
  }
  s.mode = r.choice("mode", kScaling, s.mode);
  r.finish();
  if (std::find(s.points.begin(), s.points.end(), s.reference_chips) ==
      s.points.end()) {
    throw ConfigError("reference_chips missing from points at " +
                      r.at("reference_chips"));
  }
  return s;
}

inline OutputConfig parse_output(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  OutputConfig o;
  o.dir = r.str("dir", "");
  if (r.has("formats")) {
    const auto& f = r.raw("formats");
    if (!f.is_array()) {
      throw ConfigError("expected array at " + r.at("formats"));
    }
    o.formats.clear();
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto at = r.at("formats") + "[" + std::to_string(i) + "]";
      if (!f[i].is_string() ||
          (f[i] != "json" && f[i] != "csv")) {
        throw ConfigError("invalid value at " + at +
                          " (expected one of: json, csv)");
      }
      o.formats.push_back(f[i].get<std::string>());
    }
  }
  r.finish();
  return o;
}

}  // namespace detail

/// Strict parse of a configuration document. Does not validate the plan.
inline SimConfig parse_config(const nlohmann::ordered_json& doc) {
  detail::ObjectReader r(doc, "$");
  // A misspelt top-level key reads better than the missing key it hides.
  r.reject_unknown({"schema", "model", "stage", "topology", "plan",
                    "costmodel", "workload", "scaling", "output", "seed"});
  SimConfig c;
  if (r.has("schema") && r.u64("schema") != kConfigSchema) {
    throw ConfigError("unsupported schema at $.schema (expected " +
                      std::to_string(kConfigSchema) + ")");
  }
  c.model = detail::parse_model(r.raw("model"), "$.model");
  c.stage = r.has("stage") ? detail::parse_stage(r.raw("stage"), "$.stage")
                           : *find_stage(stage_catalog(), "general_knowledge");
  c.topology = detail::parse_topology(r.raw("topology"), "$.topology");
  c.plan =
      detail::parse_plan(r.raw("plan"), "$.plan", c.topology, c.dp_auto);
  if (r.has("costmodel")) {
    c.costmodel = detail::parse_costmodel(r.raw("costmodel"), "$.costmodel");
  }
  if (r.has("workload")) {
    c.workload =
        detail::parse_workload(r.raw("workload"), "$.workload", c.model);
  }
  if (r.has("scaling")) {
    c.scaling = detail::parse_scaling(r.raw("scaling"), "$.scaling");
  }
  if (r.has("output")) c.output = detail::parse_output(r.raw("output"), "$.output");
  c.seed = r.u64("seed", 0);
  r.finish();
  return c;
}

inline SimConfig parse_config(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::ordered_json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path);
  return os.str();
}

/// Structural plan checks, with key paths.
inline std::vector<Violation> structural_violations(const SimConfig& c) {
  return validate_plan(c.topology, c.plan, c.model);
}

/// Adds the memory fit check for the configured workload.
inline std::vector<Violation> all_violations(const SimConfig& c) {
  auto v = structural_violations(c);
  if (!v.empty()) return v;
  // Same shapes the engine will see.
  const auto shapes =
      microbatch_shapes(c.workload, c.plan.microbatches_per_step, c.seed);
  std::uint64_t seq = 1;
  std::uint64_t mb = 1;
  for (const auto& sh : shapes) {
    seq = std::max(seq, sh.max_length());
    mb = std::max(mb, sh.samples());
  }
  auto plan = c.plan;
  plan.microbatches_per_step = shapes.size();
  const auto ctx = partition_context(shapes, c.workload.visual_tokens);
  const auto m = memory_per_chip(c.model, plan, c.stage, seq, mb,
                                 c.workload.visual_tokens, ctx);
  if (m.total > c.topology.chip.memory) {
    std::ostringstream os;
    os.precision(4);
    os << "memory " << m.total / 1e9 << " GB exceeds chip memory "
       << c.topology.chip.memory / 1e9 << " GB (weights " << m.weights / 1e9
       << ", grads " << m.grads / 1e9 << ", optimizer " << m.optimizer / 1e9
       << ", activations " << m.activations / 1e9
       << "); dominant term: " << m.dominant();
    v.push_back({"memory", "$.topology.chip.memory", os.str()});
  }
  return v;
}

/// Reads, parses and structurally validates a configuration file.
inline SimConfig load_config(const std::string& path) {
  const auto c = parse_config(read_file(path));
  if (auto v = structural_violations(c); !v.empty()) throw ConfigError(v);
  return c;
}

// ---------------------------------------------------------------------------
// Resolved form: every default explicit, catalog entries inlined.

inline nlohmann::ordered_json seq_len_to_json(const SequenceLengthModel& m) {
  nlohmann::ordered_json j;
  if (m.kind == SequenceLengthModel::Kind::fixed) {
    j["kind"] = "fixed";
    j["value"] = m.value;
  } else {
    j["kind"] = "lognormal";
    j["mean"] = m.mean;
    j["sigma"] = m.sigma;
  }
  j["cap"] = m.cap;
  return j;
}

inline nlohmann::ordered_json to_json(const SimConfig& c) {
  using nlohmann::ordered_json;
  using detail::name_of;
  ordered_json j;
  j["schema"] = kConfigSchema;
  const auto& m = c.model;
  j["model"] = {
      {"name", m.name},
      {"vision",
       {{"hidden_size", m.vision.hidden_size},
        {"layers", m.vision.layers},
        {"heads", m.vision.heads},
        {"intermediate_size", m.vision.intermediate_size},
        {"patch_size", m.vision.patch_size},
        {"tile_side", m.vision.tile_side},
        {"tokens_per_tile", m.vision.tokens_per_tile},
        {"max_tiles", m.vision.max_tiles}}},
      {"adapter",
       {{"in_channels", m.adapter.in_channels},
        {"out_channels", m.adapter.out_channels},
        {"layers", m.adapter.layers},
        {"activation", m.adapter.activation}}},
      {"lm",
       {{"hidden_size", m.lm.hidden_size},
        {"layers", m.lm.layers},
        {"kv_heads", m.lm.kv_heads},
        {"head_size", m.lm.head_size},
        {"intermediate_size", m.lm.intermediate_size},
        {"vocab_size", m.lm.vocab_size},
        {"embedding_tying", m.lm.embedding_tying},
        {"context_limit", m.lm.context_limit}}},
      {"nominal_params", m.nominal_params}};
  ordered_json mix = ordered_json::object();
  for (const auto& [k, v] : c.stage.mixture) mix[k] = v;
  j["stage"] = {{"name", c.stage.name},
                {"token_budget", c.stage.token_budget},
                {"trainable",
                 {{"vision", c.stage.trainable.vision},
                  {"adapter", c.stage.trainable.adapter},
                  {"lm", c.stage.trainable.lm}}},
                {"mixture", mix},
                {"seq_len_model", seq_len_to_json(c.stage.seq_len_model)}};
  const auto& t = c.topology;
  j["topology"] = {{"nodes", t.nodes},
                   {"chips_per_node", t.chips_per_node},
                   {"intra_node_bw", t.intra_node_bw},
                   {"inter_node_bw", t.inter_node_bw},
                   {"intra_latency", t.intra_latency},
                   {"inter_latency", t.inter_latency},
                   {"chip",
                    {{"peak_flops", t.chip.peak_flops},
                     {"memory", t.chip.memory},
                     {"has_independent_comm_unit",
                      t.chip.has_independent_comm_unit}}}};
  const auto& p = c.plan;
  j["plan"] = {{"dp", c.dp_auto ? ordered_json("auto") : ordered_json(p.dp)},
               {"tp", p.tp},
               {"pp", p.pp},
               {"sequence_parallel", p.sequence_parallel},
               {"microbatches_per_step", p.microbatches_per_step},
               {"recompute", name_of(detail::kRecompute, p.recompute)},
               {"overlap_grad_sync", p.overlap_grad_sync},
               {"fusion_chunks", p.fusion_chunks},
               {"distributed_optimizer", p.distributed_optimizer},
               {"layer_balance", name_of(detail::kBalance, p.layer_balance)}};
  const auto& g = c.costmodel.grad_sync;
  j["costmodel"] = {
      {"algorithm", "ring"},
      {"grad_sync",
       {{"precision_bytes", g.precision_bytes},
        {"frequency", name_of(detail::kFrequency, g.frequency)},
        {"bucket_bytes", g.bucket_bytes}}}};
  const auto& w = c.workload;
  j["workload"] = {{"seq_len_model", seq_len_to_json(w.seq_len_model)},
                   {"microbatch_size", w.microbatch_size},
                   {"token_budget", w.token_budget},
                   {"packing", name_of(detail::kPacking, w.packing)},
                   {"visual_tokens", w.visual_tokens}};
  if (c.scaling) {
    j["scaling"] = {{"reference_chips", c.scaling->reference_chips},
                    {"points", c.scaling->points},
                    {"mode", name_of(detail::kScaling, c.scaling->mode)}};
  }
  j["output"] = {{"dir", c.output.dir}, {"formats", c.output.formats}};
  j["seed"] = c.seed;
  return j;
}

inline std::string dump_resolved(const SimConfig& c) {
  return to_json(c).dump(2) + "\n";
}

}  // namespace vlmsim
