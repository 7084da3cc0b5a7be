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

// Command implementations behind the vlmsim tool.
//
// Exit codes: 0 ok, 1 validation failure, 2 I/O, 3 internal.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmsim/config.hpp"
#include "vlmsim/engine.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/metrics.hpp"

namespace vlmsim {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kInternal = 3 };

inline constexpr const char* kDefaultOutDir = "vlmsim-out";

struct RunResult {
  RunReport report;
  Trace trace;
  std::optional<ScalingCurve> scaling;
};

/// The configuration of one point on a scaling curve: tensor parallelism
/// is kept, pipeline depth is capped by the chips available, and data
/// parallelism absorbs the rest.
inline SimConfig scaling_point_config(const SimConfig& base,
                                      std::uint64_t chips) {
  const auto& p = base.plan;
  if (chips % p.tp != 0) {
    throw ConfigError("scaling point " + std::to_string(chips) +
                      " chips is not a multiple of tp=" + std::to_string(p.tp));
  }
  SimConfig c = base;
  c.scaling.reset();
  c.plan.pp = std::min(p.pp, chips / p.tp);
  if (chips % (p.tp * c.plan.pp) != 0) {
    throw ConfigError("scaling point " + std::to_string(chips) +
                      " chips is not a multiple of tp*pp");
  }
  c.plan.dp = chips / (p.tp * c.plan.pp);
  c.dp_auto = false;
  const auto cpn = base.topology.chips_per_node;
  if (chips < cpn) {
    c.topology.nodes = 1;
    c.topology.chips_per_node = chips;
  } else {
    if (chips % cpn != 0) {
      throw ConfigError("scaling point " + std::to_string(chips) +
                        " chips does not fill whole nodes");
    }
    c.topology.nodes = chips / cpn;
  }
  if (base.scaling && base.scaling->mode == ScalingMode::strong) {
    // Global batch fixed at the base configuration's.
    const auto global = p.microbatches_per_step * p.dp;
    if (global % c.plan.dp != 0) {
      throw ConfigError("strong scaling: global microbatches " +
                        std::to_string(global) + " do not divide by dp=" +
                        std::to_string(c.plan.dp));
    }
    c.plan.microbatches_per_step = global / c.plan.dp;
  }
  return c;
}

/// Simulates one configuration, without scaling points.
inline std::pair<RunReport, Trace> simulate_config(const SimConfig& c,
                                                   const std::string& digest) {
  const auto sim = build_simulation(c.model, c.stage, c.plan, c.topology,
                                    c.costmodel, c.workload, c.seed);
  auto trace = simulate(sim.pipeline, c.seed);
  auto report =
      make_report(trace, {c.model, c.stage, c.plan, c.topology, sim}, digest);
  return {std::move(report), std::move(trace)};
}

/// Simulates a configuration and, when configured, its scaling curve.
inline RunResult run_config(const SimConfig& c, const std::string& digest) {
  RunResult out;
  std::tie(out.report, out.trace) = simulate_config(c, digest);
  if (c.scaling) {
    std::vector<std::pair<std::uint64_t, double>> runs;
    for (auto n : c.scaling->points) {
      const auto pc = scaling_point_config(c, n);
      if (auto v = structural_violations(pc); !v.empty()) {
        throw ConfigError(v);
      }
      runs.emplace_back(n, simulate_config(pc, digest).first.tokens_per_second);
    }
    const auto own = c.plan.chips();
    if (std::none_of(runs.begin(), runs.end(),
                     [&](const auto& r) { return r.first == own; })) {
      runs.emplace_back(own, out.report.tokens_per_second);
    }
    out.scaling = scaling_efficiency(runs, c.scaling->reference_chips);
    out.report.efficiency = out.scaling->at(own);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output.

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << s;
  f.close();
  if (!f) throw IoError("error writing " + p.string());
}

// Writes every file or none of them.
inline void write_all(
    const std::filesystem::path& dir,
    const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  try {
    for (const auto& [name, body] : files) {
      write_file(dir / name, body);
      written.push_back(dir / name);
    }
  } catch (...) {
    for (const auto& p : written) std::filesystem::remove(p, ec);
    throw;
  }
}

inline std::vector<std::pair<std::string, std::string>> artifacts(
    const SimConfig& c, const RunResult& r) {
  std::vector<std::pair<std::string, std::string>> files;
  const auto want = [&](const char* f) {
    return std::find(c.output.formats.begin(), c.output.formats.end(), f) !=
           c.output.formats.end();
  };
  if (want("json")) {
    files.emplace_back("report.json", emit_report(r.report, ReportFormat::json));
  }
  if (want("csv")) {
    files.emplace_back("report.csv", emit_report(r.report, ReportFormat::csv));
  }
  files.emplace_back("trace.jsonl", trace_to_jsonl(r.trace));
  files.emplace_back("gantt.svg", emit_gantt(r.trace));
  files.emplace_back("resolved_config.json", dump_resolved(c));
  if (r.scaling) files.emplace_back("scaling.csv", scaling_to_csv(*r.scaling));
  return files;
}

inline std::string resolve_out_dir(const std::optional<std::string>& flag,
                                   const SimConfig& c) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("VLMSIM_OUT"); env && *env) return env;
  if (!c.output.dir.empty()) return c.output.dir;
  return kDefaultOutDir;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const PlanError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands.

struct SimulateOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

inline int cmd_simulate(const SimulateOptions& opt, std::ostream& out,
                        std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto bytes = read_file(opt.config);
    auto c = parse_config(bytes);
    if (auto v = structural_violations(c); !v.empty()) throw ConfigError(v);
    if (opt.seed) c.seed = *opt.seed;
    const auto dir = detail::resolve_out_dir(opt.out, c);
    const auto result = run_config(c, config_digest(bytes));
    detail::write_all(dir, detail::artifacts(c, result));
    out << "wrote " << dir << " (step_time " << result.report.step_time
        << " s, mfu " << result.report.mfu << ")\n";
    return static_cast<int>(kOk);
  });
}

struct SweepAxis {
  std::vector<std::string> path;  // object keys below the root
  std::string key;                // as given
  std::vector<nlohmann::ordered_json> values;
};

/// Parses "plan.pp=2,4,8". Values are JSON literals; anything else is taken
/// as a string.
inline SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("axis must look like key=v1,v2: " + spec);
  }
  SweepAxis a;
  a.key = spec.substr(0, eq);
  std::string key = a.key;
  if (key.rfind("$.", 0) == 0) key = key.substr(2);
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    a.path.push_back(key.substr(pos, dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  const auto values = spec.substr(eq + 1);
  pos = 0;
  while (true) {
    const auto comma = values.find(',', pos);
    const auto v = values.substr(pos, comma - pos);
    if (v.empty()) throw ConfigError("empty value in axis " + a.key);
    auto parsed = nlohmann::ordered_json::parse(v, nullptr, false);
    a.values.push_back(parsed.is_discarded() ? nlohmann::ordered_json(v)
                                             : parsed);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return a;
}

inline nlohmann::ordered_json* find_key(nlohmann::ordered_json& doc,
                                        const std::vector<std::string>& path) {
  auto* node = &doc;
  for (const auto& k : path) {
    if (!node->is_object() || !node->contains(k)) return nullptr;
    node = &(*node)[k];
  }
  return node;
}

struct SweepOptions {
  std::string config;
  std::vector<std::string> axes;
  std::optional<std::string> out;
  unsigned parallel = 1;
};

inline int cmd_sweep(const SweepOptions& opt, std::ostream& out,
                     std::ostream& err) {
  if (opt.axes.empty()) {
    return cmd_simulate({opt.config, std::nullopt, opt.out}, out, err);
  }
  return detail::guarded(err, [&] {
    const auto base = parse_config(read_file(opt.config));
    if (auto v = structural_violations(base); !v.empty()) throw ConfigError(v);
    const auto resolved = to_json(base);

    std::vector<SweepAxis> axes;
    for (const auto& s : opt.axes) {
      auto a = parse_axis(s);
      auto copy = resolved;
      if (!find_key(copy, a.path)) {
        throw ConfigError("sweep axis key not in config: " + a.key);
      }
      axes.push_back(std::move(a));
    }

    // Cartesian product, first axis slowest. Every point is validated before
    // any of them runs.
    struct Point {
      std::vector<std::string> labels;
      std::string bytes;
      SimConfig config;
    };
    std::vector<Point> points;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
      auto doc = resolved;
      Point p;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        *find_key(doc, axes[a].path) = axes[a].values[idx[a]];
        const auto& v = axes[a].values[idx[a]];
        p.labels.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      p.bytes = doc.dump(2) + "\n";
      try {
        p.config = parse_config(p.bytes);
        if (auto v = structural_violations(p.config); !v.empty()) {
          throw ConfigError(v);
        }
      } catch (const ConfigError& e) {
        throw ConfigError("sweep point " + std::to_string(points.size()) +
                          ": " + e.what());
      }
      points.push_back(std::move(p));
      std::size_t a = axes.size();
      while (a > 0 && ++idx[a - 1] == axes[a - 1].values.size()) {
        idx[--a] = 0;
      }
      if (a == 0) break;
    }

    const std::filesystem::path dir = detail::resolve_out_dir(opt.out, base);
    std::vector<std::optional<RunReport>> reports(points.size());
    std::vector<std::exception_ptr> failures(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next++) < points.size();) {
        try {
          char name[32];
          std::snprintf(name, sizeof name, "point-%03zu", i);
          const auto& p = points[i];
          const auto result = run_config(p.config, config_digest(p.bytes));
          auto files = detail::artifacts(p.config, result);
          files.emplace(files.begin(), "config.json", p.bytes);
          detail::write_all(dir / "points" / name, files);
          reports[i] = result.report;
        } catch (...) {
          failures[i] = std::current_exception();
        }
      }
    };
    const auto threads = std::clamp<unsigned>(
        opt.parallel, 1, static_cast<unsigned>(points.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }

    std::vector<std::string> header = {"point"};
    for (const auto& a : axes) header.push_back(a.key);
    for (const auto& c : report_csv_columns()) header.push_back(c);
    std::string csv = csv_line(header);
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::vector<std::string> row = {std::to_string(i)};
      for (const auto& l : points[i].labels) row.push_back(l);
      for (const auto& v : report_csv_values(*reports[i])) row.push_back(v);
      csv += csv_line(row);
    }
    detail::write_all(dir, {{"sweep.csv", csv}});
    out << "wrote " << points.size() << " points to " << dir.string() << "\n";
    return static_cast<int>(kOk);
  });
}

inline int cmd_validate(const std::string& config, std::ostream& out,
                        std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto c = parse_config(read_file(config));
    const auto v = all_violations(c);
    if (v.empty()) {
      out << "ok\n";
      return static_cast<int>(kOk);
    }
    for (const auto& x : v) {
      out << x.constraint << " at " << x.path << ": " << x.message << "\n";
    }
    return static_cast<int>(kValidation);
  });
}

}  // namespace vlmsim
