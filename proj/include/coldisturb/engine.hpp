#pragma once

// Command-level disturbance engine. Executes command streams against a
// DramArray and resolves column-disturb, retention and RowHammer/RowPress
// bitflips under a single damage-accrual model.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coldisturb/array.hpp"
#include "coldisturb/commands.hpp"
#include "coldisturb/units.hpp"

namespace coldisturb {

/// Maps a temperature to a multiplicative flip-time scale s(T), with
/// s(85 C) = 1 and s strictly decreasing (cells fail sooner when hot).
class TemperatureProfile {
 public:
  /// s(T) = exp(-a (T - 85)), with `a` chosen so s(45) / s(95) = speedup.
  static TemperatureProfile exponential(double speedup_45_to_95);
  /// Log-linear interpolation between (celsius, scale) points; the table
  /// must be strictly decreasing and is renormalized so that s(85) = 1.
  static TemperatureProfile table(std::vector<std::pair<double, double>> points);
  /// "sk-hynix", "micron", "samsung" or "flat".
  static TemperatureProfile preset(const std::string& name);

  double scale(double celsius) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "flat";
  double alpha_ = 0.0;
  std::vector<std::pair<double, double>> points_;  // (celsius, ln scale)
};

struct Temperature {
  double celsius = 85.0;
  TemperatureProfile profile = TemperatureProfile::preset("flat");

  double scale() const { return profile.scale(celsius); }
};

enum class FlipDirection : std::uint8_t { one_to_zero, zero_to_one };
enum class FlipCause : std::uint8_t { column_disturb, retention_baseline, rowhammer_rowpress };

const char* to_string(FlipDirection d);
const char* to_string(FlipCause c);

struct BitflipRecord {
  CellCoord where;
  Duration time{0};  ///< relative to the start of the executed stream
  FlipDirection direction = FlipDirection::one_to_zero;
  FlipCause cause = FlipCause::retention_baseline;

  bool operator==(const BitflipRecord&) const = default;
};

struct BitflipReport {
  std::vector<BitflipRecord> flips;

  std::size_t size() const { return flips.size(); }
  bool empty() const { return flips.empty(); }
  std::size_t count(FlipCause cause) const;
  /// Sorts by (time, coordinate).
  void sort();
};

struct EngineOptions {
  /// RowHammer/RowPress reach: rows at distance 1..radius in the same subarray.
  std::uint32_t hammer_radius = 1;
  /// REF_all commands per refresh window; command i refreshes rows
  /// [i*R/n, (i+1)*R/n) of every bank.
  std::uint32_t refresh_commands_per_window = 8192;
};

/// Time-weighted mean bitline voltage of a single-aggressor loop:
/// (t_agg_on * dp_col + vdd/2 * t_rp) / (t_agg_on + t_rp).
double avg_column_voltage(Duration t_agg_on, Duration t_rp, double dp_col, double vdd);

/// Runs `stream` on `array`. Stream timestamps are relative to the call.
/// Every cell's damage is materialized at the end of the stream, so
/// successive calls compose. Throws ProtocolError on illegal ordering.
BitflipReport execute(DramArray& array, const CommandStream& stream, const TimingParams& timings,
                      const Temperature& temperature, const EngineOptions& options = {});

struct RowCloneOutcome {
  bool copied = false;
};

/// In-DRAM copy by back-to-back activation: succeeds only when both rows
/// share the subarray's sense amplifiers.
RowCloneOutcome rowclone(DramArray& array, std::uint32_t bank, std::uint32_t src, std::uint32_t dst);

enum class AccessKind : std::uint8_t { single_aggressor, two_aggressor };

const char* to_string(AccessKind kind);
AccessKind parse_access_kind(const std::string& text);

struct AccessPattern {
  AccessKind kind = AccessKind::single_aggressor;
  std::uint32_t bank = 0;
  std::vector<std::uint32_t> aggressors;  ///< one row, or two rows of one subarray

  /// Time of one aggressor activation: t_agg_on + t_rp.
  static Duration activation_period(const TimingParams& timings);
};

/// ACT/PRE loop of the requested shape repeated for as many whole
/// activations as fit in `total_duration`, padded with IDLE to the end.
/// Two-aggressor loops alternate the two rows.
CommandStream build_access_pattern(const DramArray& array, const AccessPattern& pattern,
                                   const TimingParams& timings, Duration total_duration);

/// Same loop truncated to exactly `activations` aggressor activations.
CommandStream build_access_pattern_by_count(const DramArray& array, const AccessPattern& pattern,
                                            const TimingParams& timings, std::uint64_t activations);

}  // namespace coldisturb
