#pragma once

// Run configuration: JSON documents merged over built-in defaults, with
// unknown keys and type errors reported against the line they came from.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldisturb/analytics.hpp"
#include "coldisturb/characterization.hpp"
#include "coldisturb/ecc.hpp"
#include "coldisturb/mitigation.hpp"

namespace coldisturb {

/// Line of every key and array element in a JSON text, by dotted path
/// ("mitigate.prvr.victims", "ecc.weights[1]").
class KeyLines {
 public:
  KeyLines() = default;
  explicit KeyLines(const std::string& text);

  /// Line of `path`, or of its closest recorded ancestor; 1 when unknown.
  int line(const std::string& path) const;
  bool contains(const std::string& path) const { return lines_.count(path) > 0; }

 private:
  std::map<std::string, int> lines_;
};

/// One JSON layer of configuration (preset or user file).
struct ConfigSource {
  std::string name;  ///< shown in messages, e.g. the file path
  std::string text;
};

struct CharacterizeConfig {
  ExperimentSpec base;
  SweepGrid grid;
  std::vector<Metric> metrics;
  std::uint32_t exclusion = 8;
  std::uint32_t retention_runs = 50;
};

struct ReverseConfig {
  std::uint32_t bank = 0;
  ProbeMode mode = ProbeMode::adjacent_pairs;
};

struct MitigateConfig {
  ExperimentSpec aggression;
  Duration duration = milliseconds(512);
  std::vector<Duration> periodic_windows;
  std::uint32_t prvr_victims = 0;
  std::optional<Duration> prvr_t_first;  ///< unset: derived from the measured time to first flip
  double prvr_t_first_margin = 0.9;
  double prvr_trigger_fraction = 0.5;
  Duration prvr_background_window = milliseconds(32);
  Duration raidr_t_weak = milliseconds(64);
  Duration raidr_t_strong = milliseconds(1024);
  ProfilingCondition raidr_condition = ProfilingCondition::column_disturb_inclusive;
  std::uint32_t bloom_bits = WeakRowSet::kBloomBits;
  std::uint32_t bloom_hashes = WeakRowSet::kBloomHashes;
};

struct AnalyticsConfig {
  std::vector<double> weak_fractions;
  std::vector<Duration> t_strong;
  Duration t_weak = milliseconds(64);
  std::uint32_t count_rows = 16384;
  Duration count_span = milliseconds(1024);
  PrvrAssumptions prvr;
  Duration prvr_count_span = seconds(1);
  EnergyParams energy;
  double target_reduction = 0.431;
};

struct EccConfig {
  std::vector<std::string> codes;
  std::optional<std::string> custom_h;
  std::vector<std::uint32_t> weights;
  std::uint64_t trials = 10000;
  std::uint64_t exhaustive_cap = kExhaustiveCap;
  bool histogram = true;
  ExperimentSpec histogram_experiment;
  std::uint32_t chunk_bits = 64;
  std::uint32_t retention_runs = 10;
};

struct RunConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out_dir = "out";
  DramGeometry geometry;
  ProfileDistribution profiles;
  TimingParams timings;
  Temperature temperature;
  CharacterizeConfig characterize;
  ReverseConfig reverse;
  MitigateConfig mitigate;
  AnalyticsConfig analytics;
  EccConfig ecc;

  /// Defaults with every layer applied; echoed into run manifests.
  nlohmann::ordered_json resolved;
};

/// Built-in defaults as a JSON document; its key set is the schema.
const nlohmann::ordered_json& default_config();

/// Names of bundled presets.
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
ConfigSource preset(const std::string& name);

/// Applies `layers` in order over the defaults. Throws ConfigError with a
/// "source:line: message" text on syntax errors, unknown keys, wrong
/// types, bad values, or when no layer provides `geometry`.
RunConfig load_config(const std::vector<ConfigSource>& layers);

/// Reads a file as a config layer; ConfigError when unreadable.
ConfigSource read_config_file(const std::string& path);

/// FNV-1a of the compact dump of `resolved`, as 16 hex digits.
std::string config_hash(const nlohmann::ordered_json& resolved);

}  // namespace coldisturb
