#pragma once

// Measurement algorithms run on top of the engine: time-to-first-flip
// bisection, blast radius, fraction of flipped cells, subarray reverse
// engineering, retention profiling and known-failure filtering, and
// parameter sweeps.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coldisturb/array.hpp"
#include "coldisturb/csv.hpp"
#include "coldisturb/engine.hpp"

namespace coldisturb {

enum class AggressorLocation : std::uint8_t { beginning, middle, end, explicit_row };

const char* to_string(AggressorLocation loc);
AggressorLocation parse_aggressor_location(const std::string& text);

/// Observation cap: flips after this are not searched for.
inline constexpr Duration kSearchCap = milliseconds(512);

struct ExperimentSpec {
  std::uint32_t bank = 0;
  std::uint32_t aggressor_subarray = 0;
  AggressorLocation location = AggressorLocation::middle;
  std::uint32_t explicit_row = 0;  ///< bank-relative, used with explicit_row
  AccessKind access = AccessKind::single_aggressor;
  DataPattern aggressor_pattern{0x00};
  /// Victim rows hold the negated aggressor pattern unless set.
  std::optional<DataPattern> victim_pattern;
  TimingParams timings;
  Temperature temperature;
  /// Experiment length and the retention guard for filtering.
  Duration refresh_interval = kSearchCap;
  std::uint32_t repeats = 5;
  std::uint32_t hammer_radius = 1;

  DataPattern victims() const { return victim_pattern.value_or(aggressor_pattern.negated()); }
  void validate(const DramArray& array) const;
};

/// Aggressor rows of the experiment: one row, or two rows two apart in the
/// same subarray (the second one below the first unless that leaves the subarray).
std::vector<std::uint32_t> aggressor_rows(const DramArray& array, const ExperimentSpec& spec);

/// Loads victims into every row of the bank and the aggressor pattern(s)
/// into the aggressor rows; the second aggressor gets the complement.
void prepare_experiment(DramArray& array, const ExperimentSpec& spec);

struct SearchResult {
  std::uint32_t subarray = 0;
  /// Empty when no flip shows up within the cap.
  std::optional<Duration> time_to_first_flip;
  std::uint32_t iterations = 0;

  bool sentinel() const { return !time_to_first_flip.has_value(); }
};

/// Bisection over aggressor activations for the first non-hammer flip in
/// `subarray` outside the aggressor rows. Stops once the bracket is below 1%
/// of its upper end and returns that upper end converted to time; repeated
/// spec.repeats times, keeping the minimum. `array` is left untouched.
SearchResult bisect_time_to_first_flip(const DramArray& array, const ExperimentSpec& spec, std::uint32_t subarray,
                                       Duration cap = kSearchCap);

std::uint32_t blast_radius(const BitflipReport& report, std::uint32_t subarray, std::uint32_t bank = 0);

double fraction_cells_with_flips(const BitflipReport& report, const DramArray& array, std::uint32_t subarray,
                                 std::uint32_t bank = 0);

enum class ProbeMode : std::uint8_t { adjacent_pairs, all_pairs };

/// Recovers subarray boundaries from RowClone success alone: a copy lands
/// only between rows sharing sense amplifiers. Works on a private copy.
std::vector<RowRange> reverse_engineer_subarrays(const DramArray& array, std::uint32_t bank = 0,
                                                 ProbeMode mode = ProbeMode::adjacent_pairs);

/// Worst observed retention time per cell (infinite when never observed).
class RetentionProfile {
 public:
  RetentionProfile() = default;
  RetentionProfile(std::uint32_t banks, std::uint32_t rows, std::uint32_t columns);

  Duration at(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const;
  void observe(std::uint32_t bank, std::uint32_t row, std::uint32_t column, Duration t);
  std::size_t finite_count() const;

  /// Text format: a "# banks rows columns" header, then one
  /// "bank subarray row column retention_ns" line per finite cell.
  void save(const std::string& path, const DramArray& array) const;
  static RetentionProfile load(const std::string& path);

  bool operator==(const RetentionProfile&) const = default;

 private:
  std::uint32_t banks_ = 0, rows_ = 0, columns_ = 0;
  std::vector<double> ns_;
};

inline const std::vector<DataPattern>& profiling_patterns() {
  static const std::vector<DataPattern> p{DataPattern(0x00), DataPattern(0xAA), DataPattern(0x11),
                                          DataPattern(0x33), DataPattern(0x77)};
  return p;
}

/// Idle-bank retention runs of length `window`, cycling through the five
/// profiling patterns and their complements, keeping each cell's minimum.
RetentionProfile profile_retention(const DramArray& array, Duration window, const Temperature& temperature,
                                   std::uint32_t runs = 50);

/// Drops flips in the `exclusion` nearest rows around each aggressor
/// (exclusion / 2 on each side, same bank) and flips at cells whose
/// profiled retention is within `refresh_interval`.
BitflipReport filter_known_failures(const BitflipReport& report, const RetentionProfile& retention,
                                    const std::vector<std::uint32_t>& aggressors, Duration refresh_interval,
                                    std::uint32_t exclusion = 8, std::uint32_t bank = 0);

/// Runs the experiment for its whole refresh interval and returns the
/// filtered flips.
BitflipReport run_experiment(const DramArray& array, const ExperimentSpec& spec, const RetentionProfile* retention,
                             std::uint32_t exclusion = 8);

enum class Metric : std::uint8_t { time_to_first_flip, blast_radius, fraction_cells };

const char* to_string(Metric m);
Metric parse_metric(const std::string& text);

struct SweepGrid {
  std::vector<double> temperatures{85.0};
  std::vector<Duration> t_agg_on{microseconds(70.2)};
  std::vector<DataPattern> patterns{DataPattern(0x00)};
  std::vector<AccessKind> access{AccessKind::single_aggressor};
  std::vector<AggressorLocation> locations{AggressorLocation::middle};
  std::vector<Duration> refresh_intervals{kSearchCap};

  std::size_t size() const;
};

struct SweepPoint {
  double temperature = 85.0;
  Duration t_agg_on{};
  DataPattern pattern;
  AccessKind access = AccessKind::single_aggressor;
  AggressorLocation location = AggressorLocation::middle;
  Duration refresh_interval{};
};

struct SweepRow {
  SweepPoint point;
  std::uint32_t aggressor_subarray = 0;
  /// Per observed subarray (aggressor-1, aggressor, aggressor+1; absent neighbors skipped).
  std::vector<std::uint32_t> subarrays;
  std::vector<SearchResult> first_flip;
  std::vector<std::uint32_t> blast;
  std::vector<double> fraction;
};

struct SweepOptions {
  std::vector<Metric> metrics{Metric::time_to_first_flip};
  ExperimentSpec base;  ///< fields not swept come from here
  TemperatureProfile temperature_profile = TemperatureProfile::preset("flat");
  std::uint32_t exclusion = 8;
  std::uint32_t retention_runs = 50;
  unsigned threads = 1;
};

/// Cartesian product of the grid, one row per point in grid order (last
/// axis fastest). Deterministic regardless of thread count.
std::vector<SweepRow> run_sweep(const DramArray& array, const SweepGrid& grid, const SweepOptions& options);

/// Fixed point columns followed by one column per metric and observed
/// subarray offset (-1, 0, +1); empty cells for absent neighbors, "none"
/// for a search that hit the cap.
CsvTable sweep_table(const std::vector<SweepRow>& rows, const std::vector<Metric>& metrics);

}  // namespace coldisturb
