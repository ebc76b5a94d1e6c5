#pragma once

// DRAM array model: bank geometry, open-bitline column sharing between
// adjacent subarrays, per-cell fault profiles and data-pattern init.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coldisturb/units.hpp"

namespace coldisturb {

struct DramGeometry {
  std::uint32_t banks = 1;
  std::uint32_t subarrays_per_bank = 3;
  std::uint32_t rows_per_subarray = 1024;
  std::uint32_t columns_per_row = 64;
  double vdd = 1.0;
  /// Optional per-subarray row counts. When non-empty it overrides
  /// rows_per_subarray and must hold subarrays_per_bank entries.
  std::vector<std::uint32_t> subarray_rows;

  /// Throws ConfigError on zero/odd counts or a mismatched size list.
  void validate() const;

  std::uint32_t subarray_size(std::uint32_t subarray) const;
  std::uint32_t rows_per_bank() const;

  bool operator==(const DramGeometry&) const = default;
};

/// A physical column as seen from one subarray.
struct ColumnRef {
  std::uint32_t subarray = 0;
  std::uint32_t local_column = 0;
  auto operator<=>(const ColumnRef&) const = default;
};

/// A physical bitline. Gap g lies between subarray g-1 (above) and
/// subarray g (below); gaps 0 and S are the bank edges.
struct Bitline {
  std::uint32_t gap = 0;
  std::uint32_t index = 0;
  auto operator<=>(const Bitline&) const = default;
};

/// Even local columns of subarray s sit on gap s and pair with the odd
/// columns of subarray s-1; odd columns sit on gap s+1 and pair with the
/// even columns of subarray s+1.
Bitline bitline_of(ColumnRef column);

/// The same physical bitline seen from the neighboring subarray, if any.
/// Edge halves of the first and last subarray have no partner.
std::optional<ColumnRef> shared_partner(const DramGeometry& geometry, ColumnRef column);

enum class Polarity : std::uint8_t { true_cell, anti_cell };

struct CellProfile {
  Duration t_flip_gnd = infinite_duration();   ///< bitline held at GND
  Duration t_flip_half = infinite_duration();  ///< bitline at VDD/2, i.e. retention time
  Duration t_flip_vdd = infinite_duration();   ///< bitline held at VDD
  Polarity polarity = Polarity::true_cell;
  /// Activation-weight budget before a RowHammer/RowPress flip.
  double rh_threshold = kInfinity;
  /// Hammer flips charge a discharged cell when set, discharge otherwise.
  bool hammer_charges = false;

  void validate() const;

  /// Piecewise-linear interpolation of the three anchors over [0, vdd].
  Duration flip_time_at(double voltage, double vdd) const;

  /// Shortest of the three anchors.
  Duration min_flip_time() const;

  bool operator==(const CellProfile&) const = default;
};

struct CellState {
  std::uint8_t stored_bit = 0;
  bool flipped = false;
  bool driven = false;  ///< bitline left VDD/2 since the last restore
  double damage = 0.0;
  double hammer_damage = 0.0;
  std::optional<Duration> flipped_at;

  bool operator==(const CellState&) const = default;
};

/// A byte repeated across a row; bit i of the byte (MSB first) lands on
/// every column c with c % 8 == i.
class DataPattern {
 public:
  constexpr DataPattern() = default;
  constexpr explicit DataPattern(std::uint8_t byte) : byte_(byte) {}

  /// Accepts "0x00".."0xFF" (case-insensitive) or decimal.
  static DataPattern parse(const std::string& text);

  constexpr std::uint8_t byte() const { return byte_; }
  constexpr std::uint8_t bit(std::uint32_t column) const {
    return static_cast<std::uint8_t>((byte_ >> (7 - column % 8)) & 1u);
  }
  constexpr DataPattern negated() const { return DataPattern(static_cast<std::uint8_t>(~byte_)); }
  std::string name() const;

  bool operator==(const DataPattern&) const = default;

 private:
  std::uint8_t byte_ = 0;
};

/// Sampling rule for one flip-time anchor (or the hammer threshold).
struct AnchorDistribution {
  enum class Kind : std::uint8_t { constant, lognormal, infinite };

  Kind kind = Kind::infinite;
  double median = kInfinity;  ///< ns for time anchors, activations for rh_threshold
  double sigma = 0.0;         ///< log-space standard deviation
  double floor = 0.0;         ///< samples are clamped to at least this value

  static AnchorDistribution constant(double value);
  static AnchorDistribution lognormal(double median, double sigma, double floor = 0.0);
  static AnchorDistribution infinite();

  void validate(const char* what) const;
  double sample(double standard_normal) const;
};

struct ProfileDistribution {
  AnchorDistribution t_flip_gnd = AnchorDistribution::lognormal(2e9, 0.5);
  AnchorDistribution t_flip_half = AnchorDistribution::lognormal(20e9, 0.5);
  AnchorDistribution t_flip_vdd = AnchorDistribution::infinite();
  AnchorDistribution rh_threshold = AnchorDistribution::infinite();
  double anti_cell_fraction = 0.0;
  double hammer_charge_fraction = 0.0;

  void validate() const;

  /// Deterministic profile for one coordinate.
  CellProfile sample(std::uint64_t seed, std::uint32_t bank, std::uint32_t subarray,
                     std::uint32_t row, std::uint32_t column) const;
};

/// Half-open row range [first, last) within a bank.
struct RowRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;
  std::uint32_t size() const { return last - first; }
  bool contains(std::uint32_t row) const { return row >= first && row < last; }
  bool operator==(const RowRange&) const = default;
};

struct CellCoord {
  std::uint32_t bank = 0;
  std::uint32_t subarray = 0;
  std::uint32_t row = 0;  ///< row index within the bank
  std::uint32_t column = 0;
  auto operator<=>(const CellCoord&) const = default;
};

class DramArray {
 public:
  /// Builds an array whose every cell profile is sampled from
  /// `distribution` with a stream keyed by (seed, bank, subarray, row, column).
  static DramArray build(const DramGeometry& geometry, const ProfileDistribution& distribution,
                         std::uint64_t seed);

  const DramGeometry& geometry() const { return geometry_; }
  std::uint32_t banks() const { return geometry_.banks; }
  std::uint32_t subarrays() const { return geometry_.subarrays_per_bank; }
  std::uint32_t columns() const { return geometry_.columns_per_row; }
  std::uint32_t rows_per_bank() const { return rows_per_bank_; }

  std::uint32_t subarray_of(std::uint32_t row) const;
  RowRange subarray_rows(std::uint32_t subarray) const;
  CellCoord coord(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const;

  const CellProfile& profile(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const {
    return profiles_[index(bank, row, column)];
  }
  void set_profile(std::uint32_t bank, std::uint32_t row, std::uint32_t column, const CellProfile& p);
  /// Applies `p` to every cell of the array.
  void fill_profiles(const CellProfile& p);

  const CellState& state(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const {
    return states_[index(bank, row, column)];
  }
  CellState& state(std::uint32_t bank, std::uint32_t row, std::uint32_t column) {
    return states_[index(bank, row, column)];
  }

  /// True when the cell holds charge: a 1 in a true-cell, a 0 in an anti-cell.
  bool charged(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const;

  /// Writes `pattern` into rows of every bank (or one bank) and clears
  /// damage and flip markers.
  void init_region(RowRange rows, DataPattern pattern, std::optional<std::uint32_t> bank = std::nullopt);
  void init_all(DataPattern pattern);

  std::vector<std::uint8_t> read_row(std::uint32_t bank, std::uint32_t row) const;
  void write_row(std::uint32_t bank, std::uint32_t row, std::span<const std::uint8_t> bits);

  void check_row(std::uint32_t bank, std::uint32_t row) const;

  bool operator==(const DramArray&) const = default;

 private:
  DramArray() = default;

  std::size_t index(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const {
    return (static_cast<std::size_t>(bank) * rows_per_bank_ + row) * geometry_.columns_per_row + column;
  }
  void restore_cell(CellState& s, std::uint8_t bit);

  DramGeometry geometry_;
  std::uint32_t rows_per_bank_ = 0;
  std::vector<std::uint32_t> first_rows_;  ///< subarray start rows plus a final sentinel
  std::vector<CellProfile> profiles_;
  std::vector<CellState> states_;
};

/// Every column driven by activating `aggressor_row`: all columns of its
/// subarray k, the odd columns of k-1 and the even columns of k+1.
std::vector<ColumnRef> perturbed_columns(const DramArray& array, std::uint32_t aggressor_row);

}  // namespace coldisturb
