#include "coldisturb/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "coldisturb/random.hpp"

namespace coldisturb {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kDefaults = R"({
  "seed": 1,
  "threads": 1,
  "out": "out",
  "geometry": {
    "banks": 1,
    "subarrays_per_bank": 3,
    "rows_per_subarray": 1024,
    "columns_per_row": 64,
    "vdd": 1.0,
    "subarray_rows": []
  },
  "profiles": {
    "t_flip_gnd": {"kind": "lognormal", "median_ns": 2e9, "sigma": 0.5, "floor_ns": 0, "value_ns": null},
    "t_flip_half": {"kind": "lognormal", "median_ns": 2e10, "sigma": 0.5, "floor_ns": 0, "value_ns": null},
    "t_flip_vdd": {"kind": "infinite", "median_ns": null, "sigma": null, "floor_ns": 0, "value_ns": null},
    "rh_threshold": {"kind": "infinite", "median_ns": null, "sigma": null, "floor_ns": 0, "value_ns": null},
    "anti_cell_fraction": 0.0,
    "hammer_charge_fraction": 0.0
  },
  "timings": {
    "t_ras_ns": 36,
    "t_rp_ns": 14,
    "t_agg_on_ns": 70200,
    "t_refw_ms": 64,
    "t_rfc_ns": 410,
    "t_row_refresh_ns": 70
  },
  "temperature": {"celsius": 85, "profile": "flat"},
  "characterize": {
    "bank": 0,
    "aggressor_subarray": 1,
    "explicit_row": 0,
    "victim_pattern": null,
    "hammer_radius": 1,
    "repeats": 5,
    "exclusion": 8,
    "retention_runs": 50,
    "metrics": ["time_to_first_flip", "blast_radius", "fraction_cells"],
    "sweep": {
      "temperatures_c": [85],
      "t_agg_on_ns": [70200],
      "patterns": ["0x00"],
      "access": ["single"],
      "locations": ["middle"],
      "refresh_intervals_ms": [512]
    }
  },
  "reverse_subarrays": {"bank": 0, "mode": "adjacent"},
  "mitigate": {
    "bank": 0,
    "aggressor_subarray": 1,
    "location": "middle",
    "explicit_row": 0,
    "access": "single",
    "aggressor_pattern": "0x00",
    "duration_ms": 512,
    "periodic_windows_ms": [8, 32],
    "prvr": {
      "victims": 0,
      "t_first_ms": null,
      "t_first_margin": 0.9,
      "trigger_fraction": 0.5,
      "background_window_ms": 32
    },
    "raidr": {
      "t_weak_ms": 64,
      "t_strong_ms": 1024,
      "condition": "column-disturb-inclusive",
      "bloom_bits": 8192,
      "bloom_hashes": 6
    }
  },
  "analytics": {
    "weak_fractions": [0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
    "t_strong_ms": [128, 256, 512, 1024],
    "t_weak_ms": 64,
    "count_rows": 16384,
    "count_span_ms": 1024,
    "prvr": {
      "banks": 32,
      "rows_per_bank": 131072,
      "victims": 3072,
      "t_first_ms": 8,
      "default_window_ms": 32,
      "fast_window_ms": 8,
      "commands_per_window": 8192,
      "count_span_ms": 1000
    },
    "energy": {"ref_row_nj": 1.0, "ref_all_nj": null, "idle_mw": 0.0},
    "target_reduction": 0.431
  },
  "ecc": {
    "codes": ["sec-136-128", "secded-72-64", "hamming-7-4"],
    "custom_h": null,
    "weights": [1, 2, 3],
    "trials": 10000,
    "exhaustive_cap": 50000000,
    "histogram": {
      "enabled": true,
      "aggressor_subarray": 1,
      "refresh_interval_ms": 512,
      "chunk_bits": 64,
      "retention_runs": 10
    }
  }
})";

constexpr const char* kPresetRefreshOps = R"({
  "geometry": {"subarrays_per_bank": 3, "rows_per_subarray": 512, "columns_per_row": 64},
  "analytics": {
    "weak_fractions": [0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
    "t_strong_ms": [128, 256, 512, 1024],
    "t_weak_ms": 64,
    "count_rows": 16384,
    "count_span_ms": 1024
  }
})";

constexpr const char* kPresetQuick = R"({
  "geometry": {"subarrays_per_bank": 3, "rows_per_subarray": 32, "columns_per_row": 16},
  "profiles": {
    "t_flip_gnd": {"kind": "lognormal", "median_ns": 8e7, "sigma": 0.5, "floor_ns": 4e7},
    "t_flip_half": {"kind": "lognormal", "median_ns": 3e9, "sigma": 0.8, "floor_ns": 7e7}
  },
  "characterize": {
    "repeats": 1,
    "retention_runs": 10,
    "sweep": {"temperatures_c": [45, 65, 85, 95], "t_agg_on_ns": [36, 70200]}
  },
  "temperature": {"celsius": 85, "profile": "sk-hynix"},
  "mitigate": {"duration_ms": 256, "raidr": {"t_weak_ms": 16, "t_strong_ms": 256}},
  "analytics": {"count_rows": 4096},
  "ecc": {"trials": 10000, "histogram": {"refresh_interval_ms": 256}}
})";

struct Origin {
  std::string source;
  int line = 1;
};

struct ParsedLayer {
  const ConfigSource* source;
  json doc;
  KeyLines lines;
};

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const char* type_name(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "a boolean";
  if (j.is_number()) return "a number";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  return "an object";
}

bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return !v.is_object();
  if (def.is_number()) return v.is_number();
  if (def.is_object()) return v.is_object();
  if (def.is_array()) return v.is_array();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  return false;
}

/// A ConfigError that already carries its source and line.
class AnchoredError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

[[noreturn]] void fail_at(const Origin& o, const std::string& message) {
  throw AnchoredError(fmt::format("{}:{}: {}", o.source, o.line, message));
}

class Merger {
 public:
  void apply(const ParsedLayer& layer) {
    if (!layer.doc.is_object())
      fail_at({layer.source->name, 1}, fmt::format("top level must be an object, got {}", type_name(layer.doc)));
    merge(resolved, layer.doc, "", layer);
  }

  Origin origin(const std::string& path) const {
    std::string p = path;
    while (true) {
      if (auto it = origins.find(p); it != origins.end()) return it->second;
      if (p.empty()) return {"defaults", 1};
      const auto cut = p.find_last_of(".[");
      p = cut == std::string::npos ? "" : p.substr(0, cut);
    }
  }

  json resolved = json::parse(kDefaults);
  std::map<std::string, Origin> origins;

 private:
  void record(const std::string& path, const json& value, const ParsedLayer& layer) {
    origins[path] = {layer.source->name, layer.lines.line(path)};
    if (value.is_array())
      for (std::size_t i = 0; i < value.size(); ++i)
        record(fmt::format("{}[{}]", path, i), value[i], layer);
    if (value.is_object())
      for (auto it = value.begin(); it != value.end(); ++it) record(join(path, it.key()), it.value(), layer);
  }

  void merge(json& dst, const json& src, const std::string& path, const ParsedLayer& layer) {
    for (auto it = src.begin(); it != src.end(); ++it) {
      const std::string key_path = join(path, it.key());
      const Origin here{layer.source->name, layer.lines.line(key_path)};
      if (!dst.contains(it.key()))
        fail_at(here, path.empty() ? fmt::format("unknown key '{}'", it.key())
                                   : fmt::format("unknown key '{}' in '{}'", it.key(), path));
      json& target = dst[it.key()];
      if (!same_kind(target, it.value()))
        fail_at(here, fmt::format("'{}' must be {}, got {}", key_path, type_name(target), type_name(it.value())));
      if (target.is_object()) {
        origins[key_path] = here;
        merge(target, it.value(), key_path, layer);
      } else {
        target = it.value();
        record(key_path, it.value(), layer);
      }
    }
  }
};

/// Typed view of one resolved value.
class Node {
 public:
  Node(const json& j, std::string path, const Merger& m) : j_(j), path_(std::move(path)), m_(m) {}

  Node operator[](const char* key) const { return Node(j_.at(key), join(path_, key), m_); }

  [[noreturn]] void fail(const std::string& message) const { fail_at(m_.origin(path_), message); }

  bool is_null() const { return j_.is_null(); }

  double number() const {
    if (!j_.is_number()) fail(fmt::format("'{}' must be a number", path_));
    return j_.get<double>();
  }
  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail(fmt::format("'{}' must be positive", path_));
    return v;
  }
  double non_negative() const {
    const double v = number();
    if (!(v >= 0.0)) fail(fmt::format("'{}' must be non-negative", path_));
    return v;
  }
  double fraction() const {
    const double v = number();
    if (!(v >= 0.0 && v <= 1.0)) fail(fmt::format("'{}' must be in [0, 1]", path_));
    return v;
  }
  std::uint64_t uinteger() const {
    if (!j_.is_number_integer() || (j_.is_number_integer() && !j_.is_number_unsigned() && j_.get<std::int64_t>() < 0))
      fail(fmt::format("'{}' must be a non-negative integer", path_));
    return j_.get<std::uint64_t>();
  }
  std::uint32_t u32() const {
    const auto v = uinteger();
    if (v > 0xffffffffULL) fail(fmt::format("'{}' is too large", path_));
    return static_cast<std::uint32_t>(v);
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail(fmt::format("'{}' must be a boolean", path_));
    return j_.get<bool>();
  }
  std::string text() const {
    if (!j_.is_string()) fail(fmt::format("'{}' must be a string", path_));
    return j_.get<std::string>();
  }
  std::vector<Node> items() const {
    if (!j_.is_array()) fail(fmt::format("'{}' must be an array", path_));
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], fmt::format("{}[{}]", path_, i), m_);
    return out;
  }
  std::vector<Node> non_empty_items() const {
    auto v = items();
    if (v.empty()) fail(fmt::format("'{}' must not be empty", path_));
    return v;
  }

  /// Runs `f`, re-anchoring library errors at this node.
  template <class F>
  auto guard(F&& f) const {
    try {
      return f();
    } catch (const AnchoredError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  const Merger& m_;
};

AnchorDistribution anchor(const Node& n) {
  const auto kind = n["kind"].text();
  if (kind == "infinite") return AnchorDistribution::infinite();
  if (kind == "constant") return AnchorDistribution::constant(n["value_ns"].positive());
  if (kind == "lognormal")
    return AnchorDistribution::lognormal(n["median_ns"].positive(), n["sigma"].non_negative(),
                                         n["floor_ns"].non_negative());
  n["kind"].fail(fmt::format("unknown distribution kind '{}' (expected lognormal, constant or infinite)", kind));
}

DataPattern pattern(const Node& n) {
  return n.guard([&] { return DataPattern::parse(n.text()); });
}

AccessKind access(const Node& n) {
  return n.guard([&] { return parse_access_kind(n.text()); });
}

AggressorLocation location(const Node& n) {
  return n.guard([&] { return parse_aggressor_location(n.text()); });
}

void fill(RunConfig& cfg, const Merger& m) {
  const Node root(m.resolved, "", m);
  cfg.seed = root["seed"].uinteger();
  cfg.threads = root["threads"].u32();
  if (cfg.threads == 0) root["threads"].fail("'threads' must be at least 1");
  cfg.out_dir = root["out"].text();
  if (cfg.out_dir.empty()) root["out"].fail("'out' must not be empty");

  const auto g = root["geometry"];
  cfg.geometry.banks = g["banks"].u32();
  cfg.geometry.subarrays_per_bank = g["subarrays_per_bank"].u32();
  cfg.geometry.rows_per_subarray = g["rows_per_subarray"].u32();
  cfg.geometry.columns_per_row = g["columns_per_row"].u32();
  cfg.geometry.vdd = g["vdd"].positive();
  for (const auto& r : g["subarray_rows"].items()) cfg.geometry.subarray_rows.push_back(r.u32());
  g.guard([&] {
    cfg.geometry.validate();
    return 0;
  });

  const auto p = root["profiles"];
  cfg.profiles.t_flip_gnd = anchor(p["t_flip_gnd"]);
  cfg.profiles.t_flip_half = anchor(p["t_flip_half"]);
  cfg.profiles.t_flip_vdd = anchor(p["t_flip_vdd"]);
  cfg.profiles.rh_threshold = anchor(p["rh_threshold"]);
  cfg.profiles.anti_cell_fraction = p["anti_cell_fraction"].fraction();
  cfg.profiles.hammer_charge_fraction = p["hammer_charge_fraction"].fraction();
  p.guard([&] {
    cfg.profiles.validate();
    return 0;
  });

  const auto t = root["timings"];
  cfg.timings.t_ras = nanoseconds(t["t_ras_ns"].positive());
  cfg.timings.t_rp = nanoseconds(t["t_rp_ns"].positive());
  cfg.timings.t_agg_on = nanoseconds(t["t_agg_on_ns"].positive());
  cfg.timings.t_refw = milliseconds(t["t_refw_ms"].positive());
  cfg.timings.t_refi = cfg.timings.t_refw / 8192.0;
  cfg.timings.t_rfc = nanoseconds(t["t_rfc_ns"].positive());
  cfg.timings.t_row_refresh = nanoseconds(t["t_row_refresh_ns"].positive());
  t.guard([&] {
    cfg.timings.validate();
    return 0;
  });

  const auto temp = root["temperature"];
  cfg.temperature.celsius = temp["celsius"].number();
  cfg.temperature.profile = temp["profile"].guard([&] { return TemperatureProfile::preset(temp["profile"].text()); });

  // characterize
  {
    const auto c = root["characterize"];
    auto& cc = cfg.characterize;
    cc.base.bank = c["bank"].u32();
    cc.base.aggressor_subarray = c["aggressor_subarray"].u32();
    cc.base.explicit_row = c["explicit_row"].u32();
    if (!c["victim_pattern"].is_null()) cc.base.victim_pattern = pattern(c["victim_pattern"]);
    cc.base.hammer_radius = c["hammer_radius"].u32();
    cc.base.repeats = c["repeats"].u32();
    if (cc.base.repeats == 0) c["repeats"].fail("'characterize.repeats' must be at least 1");
    cc.base.timings = cfg.timings;
    cc.base.temperature = cfg.temperature;
    cc.exclusion = c["exclusion"].u32();
    cc.retention_runs = c["retention_runs"].u32();
    cc.metrics.clear();
    for (const auto& m : c["metrics"].non_empty_items()) cc.metrics.push_back(m.guard([&] { return parse_metric(m.text()); }));
    const auto s = c["sweep"];
    auto& grid = cc.grid;
    grid.temperatures.clear();
    for (const auto& v : s["temperatures_c"].non_empty_items()) grid.temperatures.push_back(v.number());
    grid.t_agg_on.clear();
    for (const auto& v : s["t_agg_on_ns"].non_empty_items()) grid.t_agg_on.push_back(nanoseconds(v.positive()));
    grid.patterns.clear();
    for (const auto& v : s["patterns"].non_empty_items()) grid.patterns.push_back(pattern(v));
    grid.access.clear();
    for (const auto& v : s["access"].non_empty_items()) grid.access.push_back(access(v));
    grid.locations.clear();
    for (const auto& v : s["locations"].non_empty_items()) grid.locations.push_back(location(v));
    grid.refresh_intervals.clear();
    for (const auto& v : s["refresh_intervals_ms"].non_empty_items())
      grid.refresh_intervals.push_back(milliseconds(v.positive()));
    if (cc.base.bank >= cfg.geometry.banks) c["bank"].fail("'characterize.bank' is outside the geometry");
    if (cc.base.aggressor_subarray >= cfg.geometry.subarrays_per_bank)
      c["aggressor_subarray"].fail("'characterize.aggressor_subarray' is outside the geometry");
  }

  {
    const auto r = root["reverse_subarrays"];
    cfg.reverse.bank = r["bank"].u32();
    if (cfg.reverse.bank >= cfg.geometry.banks) r["bank"].fail("'reverse_subarrays.bank' is outside the geometry");
    const auto mode = r["mode"].text();
    if (mode == "adjacent")
      cfg.reverse.mode = ProbeMode::adjacent_pairs;
    else if (mode == "all-pairs")
      cfg.reverse.mode = ProbeMode::all_pairs;
    else
      r["mode"].fail(fmt::format("unknown probe mode '{}' (expected adjacent or all-pairs)", mode));
  }

  {
    const auto mi = root["mitigate"];
    auto& mc = cfg.mitigate;
    mc.aggression.bank = mi["bank"].u32();
    mc.aggression.aggressor_subarray = mi["aggressor_subarray"].u32();
    mc.aggression.location = location(mi["location"]);
    mc.aggression.explicit_row = mi["explicit_row"].u32();
    mc.aggression.access = access(mi["access"]);
    mc.aggression.aggressor_pattern = pattern(mi["aggressor_pattern"]);
    mc.aggression.timings = cfg.timings;
    mc.aggression.temperature = cfg.temperature;
    mc.duration = milliseconds(mi["duration_ms"].positive());
    mc.aggression.refresh_interval = mc.duration;
    mc.aggression.repeats = 1;
    if (mc.aggression.bank >= cfg.geometry.banks) mi["bank"].fail("'mitigate.bank' is outside the geometry");
    if (mc.aggression.aggressor_subarray >= cfg.geometry.subarrays_per_bank)
      mi["aggressor_subarray"].fail("'mitigate.aggressor_subarray' is outside the geometry");
    mc.periodic_windows.clear();
    for (const auto& v : mi["periodic_windows_ms"].items()) mc.periodic_windows.push_back(milliseconds(v.positive()));
    const auto pr = mi["prvr"];
    mc.prvr_victims = pr["victims"].u32();
    if (!pr["t_first_ms"].is_null()) mc.prvr_t_first = milliseconds(pr["t_first_ms"].positive());
    mc.prvr_t_first_margin = pr["t_first_margin"].positive();
    mc.prvr_trigger_fraction = pr["trigger_fraction"].fraction();
    mc.prvr_background_window = milliseconds(pr["background_window_ms"].positive());
    const auto ra = mi["raidr"];
    mc.raidr_t_weak = milliseconds(ra["t_weak_ms"].positive());
    mc.raidr_t_strong = milliseconds(ra["t_strong_ms"].positive());
    if (mc.raidr_t_strong < mc.raidr_t_weak) ra["t_strong_ms"].fail("'mitigate.raidr.t_strong_ms' must be >= t_weak_ms");
    const auto cond = ra["condition"].text();
    if (cond == "retention-only")
      mc.raidr_condition = ProfilingCondition::retention_only;
    else if (cond == "column-disturb-inclusive")
      mc.raidr_condition = ProfilingCondition::column_disturb_inclusive;
    else
      ra["condition"].fail(
          fmt::format("unknown profiling condition '{}' (expected retention-only or column-disturb-inclusive)", cond));
    mc.bloom_bits = ra["bloom_bits"].u32();
    mc.bloom_hashes = ra["bloom_hashes"].u32();
    ra.guard([&] { return WeakRowSet::bloom(mc.bloom_bits, mc.bloom_hashes).size_bits(); });
  }

  {
    const auto a = root["analytics"];
    auto& ac = cfg.analytics;
    ac.weak_fractions.clear();
    for (const auto& v : a["weak_fractions"].non_empty_items()) ac.weak_fractions.push_back(v.fraction());
    ac.t_weak = milliseconds(a["t_weak_ms"].positive());
    ac.t_strong.clear();
    for (const auto& v : a["t_strong_ms"].non_empty_items()) {
      ac.t_strong.push_back(milliseconds(v.positive()));
      if (ac.t_strong.back() < ac.t_weak) v.fail("strong retention times must be >= t_weak_ms");
    }
    ac.count_rows = a["count_rows"].u32();
    if (ac.count_rows == 0) a["count_rows"].fail("'analytics.count_rows' must be at least 1");
    ac.count_span = milliseconds(a["count_span_ms"].positive());
    const auto pr = a["prvr"];
    ac.prvr.banks = pr["banks"].u32();
    ac.prvr.rows_per_bank = pr["rows_per_bank"].u32();
    ac.prvr.victims = pr["victims"].u32();
    ac.prvr.t_first = milliseconds(pr["t_first_ms"].positive());
    ac.prvr.default_window = milliseconds(pr["default_window_ms"].positive());
    ac.prvr.fast_window = milliseconds(pr["fast_window_ms"].positive());
    ac.prvr.commands_per_window = pr["commands_per_window"].u32();
    ac.prvr_count_span = milliseconds(pr["count_span_ms"].positive());
    pr.guard([&] {
      ac.prvr.validate();
      return 0;
    });
    const auto e = a["energy"];
    ac.energy.ref_row_joules = e["ref_row_nj"].non_negative() * 1e-9;
    if (!e["ref_all_nj"].is_null()) ac.energy.ref_all_joules = e["ref_all_nj"].non_negative() * 1e-9;
    ac.energy.idle_watts = e["idle_mw"].non_negative() * 1e-3;
    ac.target_reduction = a["target_reduction"].fraction();
  }

  {
    const auto e = root["ecc"];
    auto& ec = cfg.ecc;
    ec.codes.clear();
    for (const auto& v : e["codes"].items()) {
      const auto name = v.text();
      if (name != "sec-136-128" && name != "secded-72-64" && name != "hamming-7-4")
        v.fail(fmt::format("unknown code '{}' (expected sec-136-128, secded-72-64 or hamming-7-4)", name));
      ec.codes.push_back(name);
    }
    if (!e["custom_h"].is_null()) ec.custom_h = e["custom_h"].text();
    ec.weights.clear();
    for (const auto& v : e["weights"].non_empty_items()) {
      ec.weights.push_back(v.u32());
      if (ec.weights.back() == 0) v.fail("error weights must be at least 1");
    }
    ec.trials = e["trials"].uinteger();
    ec.exhaustive_cap = e["exhaustive_cap"].uinteger();
    const auto h = e["histogram"];
    ec.histogram = h["enabled"].boolean();
    ec.histogram_experiment.aggressor_subarray = h["aggressor_subarray"].u32();
    if (ec.histogram_experiment.aggressor_subarray >= cfg.geometry.subarrays_per_bank)
      h["aggressor_subarray"].fail("'ecc.histogram.aggressor_subarray' is outside the geometry");
    ec.histogram_experiment.refresh_interval = milliseconds(h["refresh_interval_ms"].positive());
    ec.histogram_experiment.timings = cfg.timings;
    ec.histogram_experiment.temperature = cfg.temperature;
    ec.chunk_bits = h["chunk_bits"].u32();
    if (ec.chunk_bits == 0) h["chunk_bits"].fail("'ecc.histogram.chunk_bits' must be at least 1");
    ec.retention_runs = h["retention_runs"].u32();
  }
}

int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < text.size() && i < byte; ++i) line += text[i] == '\n';
  return line;
}

}  // namespace

KeyLines::KeyLines(const std::string& text) {
  struct Frame {
    bool object;
    std::string path;
    std::size_t index = 0;
    bool expect_key = true;
    std::string child;
  };
  std::vector<Frame> stack;
  int line = 1;
  std::string root_child;
  auto value_path = [&]() -> std::string {
    if (stack.empty()) return "";
    auto& f = stack.back();
    return f.object ? f.child : fmt::format("{}[{}]", f.path, f.index);
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == ':') continue;
    if (c == ',') {
      if (!stack.empty()) {
        if (stack.back().object)
          stack.back().expect_key = true;
        else
          ++stack.back().index;
      }
      continue;
    }
    if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
      continue;
    }
    if (c == '"') {
      std::string s;
      const int start_line = line;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        if (text[i] == '\n') ++line;
        s += text[i];
      }
      if (!stack.empty() && stack.back().object && stack.back().expect_key) {
        auto& f = stack.back();
        f.child = join(f.path, s);
        f.expect_key = false;
        lines_.emplace(f.child, start_line);
        continue;
      }
      lines_.emplace(value_path(), start_line);
      continue;
    }
    const std::string here = value_path();
    lines_.emplace(here, line);
    if (c == '{' || c == '[') {
      stack.push_back(Frame{c == '{', here, 0, true, {}});
      continue;
    }
    while (i + 1 < text.size() && std::string_view(",]}\n \t\r").find(text[i + 1]) == std::string_view::npos) ++i;
  }
}

int KeyLines::line(const std::string& path) const {
  std::string p = path;
  while (true) {
    if (auto it = lines_.find(p); it != lines_.end()) return it->second;
    if (p.empty()) return 1;
    const auto cut = p.find_last_of(".[");
    p = cut == std::string::npos ? "" : p.substr(0, cut);
  }
}

const nlohmann::ordered_json& default_config() {
  static const json d = json::parse(kDefaults);
  return d;
}

std::vector<std::string> preset_names() { return {"paper-fig-refresh-ops", "quick"}; }

ConfigSource preset(const std::string& name) {
  if (name == "paper-fig-refresh-ops") return {"preset:" + name, kPresetRefreshOps};
  if (name == "quick") return {"preset:" + name, kPresetQuick};
  throw ConfigError(fmt::format("unknown preset '{}' (available: paper-fig-refresh-ops, quick)", name));
}

ConfigSource read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open config file", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return {path, ss.str()};
}

RunConfig load_config(const std::vector<ConfigSource>& layers) {
  std::vector<ParsedLayer> parsed;
  for (const auto& src : layers) {
    ParsedLayer p{&src, {}, {}};
    try {
      p.doc = json::parse(src.text);
    } catch (const json::parse_error& e) {
      const std::string what = e.what();
      const auto colon = what.find("syntax error");
      throw ConfigError(fmt::format("{}:{}: {}", src.name, line_of_byte(src.text, e.byte > 0 ? e.byte - 1 : 0),
                                    colon == std::string::npos ? what : what.substr(colon)));
    }
    p.lines = KeyLines(src.text);
    parsed.push_back(std::move(p));
  }
  bool has_geometry = false;
  for (const auto& p : parsed) has_geometry = has_geometry || (p.doc.is_object() && p.doc.contains("geometry"));
  if (!has_geometry)
    throw ConfigError(fmt::format("{}:1: missing required key 'geometry'", layers.empty() ? "config" : layers.back().name));

  Merger m;
  for (const auto& p : parsed) m.apply(p);
  RunConfig cfg;
  fill(cfg, m);
  cfg.resolved = m.resolved;
  return cfg;
}

std::string config_hash(const nlohmann::ordered_json& resolved) {
  return fmt::format("{:016x}", fnv1a(resolved.dump()));
}

}  // namespace coldisturb
