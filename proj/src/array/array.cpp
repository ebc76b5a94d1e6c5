#include "coldisturb/array.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>

#include "coldisturb/random.hpp"

namespace coldisturb {

void DramGeometry::validate() const {
  if (banks == 0) throw ConfigError("geometry.banks must be >= 1");
  if (subarrays_per_bank == 0) throw ConfigError("geometry.subarrays_per_bank must be >= 1");
  if (columns_per_row == 0 || columns_per_row % 2 != 0)
    throw ConfigError(fmt::format("geometry.columns_per_row must be even and >= 2 (got {})", columns_per_row));
  if (!(vdd > 0.0) || !std::isfinite(vdd)) throw ConfigError("geometry.vdd must be positive");
  if (subarray_rows.empty()) {
    if (rows_per_subarray == 0 || rows_per_subarray % 2 != 0)
      throw ConfigError(
          fmt::format("geometry.rows_per_subarray must be even and >= 2 (got {})", rows_per_subarray));
  } else {
    if (subarray_rows.size() != subarrays_per_bank)
      throw ConfigError(fmt::format("geometry.subarray_rows has {} entries, expected {}",
                                    subarray_rows.size(), subarrays_per_bank));
    for (auto n : subarray_rows)
      if (n == 0 || n % 2 != 0)
        throw ConfigError(fmt::format("geometry.subarray_rows entries must be even and >= 2 (got {})", n));
  }
}

std::uint32_t DramGeometry::subarray_size(std::uint32_t subarray) const {
  return subarray_rows.empty() ? rows_per_subarray : subarray_rows.at(subarray);
}

std::uint32_t DramGeometry::rows_per_bank() const {
  if (subarray_rows.empty()) return subarrays_per_bank * rows_per_subarray;
  std::uint32_t n = 0;
  for (auto r : subarray_rows) n += r;
  return n;
}

Bitline bitline_of(ColumnRef column) {
  return Bitline{column.subarray + (column.local_column & 1u), column.local_column / 2};
}

std::optional<ColumnRef> shared_partner(const DramGeometry& geometry, ColumnRef column) {
  if (column.local_column % 2 == 0) {
    if (column.subarray == 0) return std::nullopt;
    return ColumnRef{column.subarray - 1, column.local_column + 1};
  }
  if (column.subarray + 1 >= geometry.subarrays_per_bank) return std::nullopt;
  return ColumnRef{column.subarray + 1, column.local_column - 1};
}

// ---------------------------------------------------------------------------

void CellProfile::validate() const {
  const double g = t_flip_gnd.count(), h = t_flip_half.count(), v = t_flip_vdd.count();
  if (!(g > 0.0) || !(h > 0.0) || !(v > 0.0)) throw ConfigError("cell flip times must be positive");
  if (!(g <= h && h <= v)) throw ConfigError("cell flip times must satisfy t_gnd <= t_half <= t_vdd");
  if (!(rh_threshold > 0.0)) throw ConfigError("rh_threshold must be positive");
}

namespace {

double lerp_anchor(double a, double b, double x) {
  if (x <= 0.0) return a;
  if (x >= 1.0) return b;
  if (std::isinf(a) || std::isinf(b)) return kInfinity;
  return a + x * (b - a);
}

}  // namespace

Duration CellProfile::flip_time_at(double voltage, double vdd) const {
  const double half = vdd / 2.0;
  const double v = std::clamp(voltage, 0.0, vdd);
  if (v <= half) return Duration{lerp_anchor(t_flip_gnd.count(), t_flip_half.count(), v / half)};
  return Duration{lerp_anchor(t_flip_half.count(), t_flip_vdd.count(), (v - half) / half)};
}

Duration CellProfile::min_flip_time() const {
  return std::min({t_flip_gnd, t_flip_half, t_flip_vdd});
}

// ---------------------------------------------------------------------------

DataPattern DataPattern::parse(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  try {
    std::size_t used = 0;
    unsigned long v = 0;
    if (t.rfind("0x", 0) == 0) {
      v = std::stoul(t.substr(2), &used, 16);
      used += 2;
    } else {
      v = std::stoul(t, &used, 10);
    }
    if (used != t.size() || v > 0xFF) throw InputError("");
    return DataPattern(static_cast<std::uint8_t>(v));
  } catch (const std::exception&) {
    throw InputError(fmt::format("invalid data pattern '{}' (expected a byte such as 0xAA)", text));
  }
}

std::string DataPattern::name() const { return fmt::format("0x{:02X}", byte_); }

// ---------------------------------------------------------------------------

AnchorDistribution AnchorDistribution::constant(double value) {
  return AnchorDistribution{Kind::constant, value, 0.0, 0.0};
}

AnchorDistribution AnchorDistribution::lognormal(double median, double sigma, double floor) {
  return AnchorDistribution{Kind::lognormal, median, sigma, floor};
}

AnchorDistribution AnchorDistribution::infinite() { return AnchorDistribution{}; }

void AnchorDistribution::validate(const char* what) const {
  switch (kind) {
    case Kind::infinite:
      return;
    case Kind::constant:
      if (!(median > 0.0)) throw ConfigError(fmt::format("{}: constant value must be positive", what));
      return;
    case Kind::lognormal:
      if (!(median > 0.0) || std::isinf(median))
        throw ConfigError(fmt::format("{}: lognormal median must be positive and finite", what));
      if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw ConfigError(fmt::format("{}: lognormal sigma must be >= 0", what));
      if (!(floor >= 0.0)) throw ConfigError(fmt::format("{}: floor must be >= 0", what));
      return;
  }
}

double AnchorDistribution::sample(double z) const {
  switch (kind) {
    case Kind::infinite:
      return kInfinity;
    case Kind::constant:
      return median;
    case Kind::lognormal:
      return std::max(floor, median * std::exp(sigma * z));
  }
  return kInfinity;
}

void ProfileDistribution::validate() const {
  t_flip_gnd.validate("t_flip_gnd");
  t_flip_half.validate("t_flip_half");
  t_flip_vdd.validate("t_flip_vdd");
  rh_threshold.validate("rh_threshold");
  if (!(anti_cell_fraction >= 0.0 && anti_cell_fraction <= 1.0))
    throw ConfigError("anti_cell_fraction must lie in [0, 1]");
  if (!(hammer_charge_fraction >= 0.0 && hammer_charge_fraction <= 1.0))
    throw ConfigError("hammer_charge_fraction must lie in [0, 1]");
}

CellProfile ProfileDistribution::sample(std::uint64_t seed, std::uint32_t bank, std::uint32_t subarray,
                                        std::uint32_t row, std::uint32_t column) const {
  SplitMix rng(mix_keys(seed, {bank, subarray, row, column}));
  // Fixed draw order keeps every coordinate's profile stable.
  const double half = t_flip_half.sample(rng.normal());
  const double gnd = t_flip_gnd.sample(rng.normal());
  const double vdd = t_flip_vdd.sample(rng.normal());
  const double rh = rh_threshold.sample(rng.normal());
  const double u_polarity = rng.uniform();
  const double u_hammer = rng.uniform();

  CellProfile p;
  p.t_flip_half = Duration{half};
  p.t_flip_gnd = Duration{std::min(gnd, half)};
  p.t_flip_vdd = Duration{std::max(vdd, half)};
  p.rh_threshold = rh;
  p.polarity = u_polarity < anti_cell_fraction ? Polarity::anti_cell : Polarity::true_cell;
  p.hammer_charges = u_hammer < hammer_charge_fraction;
  return p;
}

// ---------------------------------------------------------------------------

DramArray DramArray::build(const DramGeometry& geometry, const ProfileDistribution& distribution,
                           std::uint64_t seed) {
  geometry.validate();
  distribution.validate();

  DramArray a;
  a.geometry_ = geometry;
  a.rows_per_bank_ = geometry.rows_per_bank();
  a.first_rows_.reserve(geometry.subarrays_per_bank + 1);
  std::uint32_t row = 0;
  for (std::uint32_t s = 0; s < geometry.subarrays_per_bank; ++s) {
    a.first_rows_.push_back(row);
    row += geometry.subarray_size(s);
  }
  a.first_rows_.push_back(row);

  const std::size_t cells =
      static_cast<std::size_t>(geometry.banks) * a.rows_per_bank_ * geometry.columns_per_row;
  a.profiles_.resize(cells);
  a.states_.resize(cells);
  for (std::uint32_t b = 0; b < geometry.banks; ++b)
    for (std::uint32_t s = 0; s < geometry.subarrays_per_bank; ++s)
      for (std::uint32_t r = a.first_rows_[s]; r < a.first_rows_[s + 1]; ++r)
        for (std::uint32_t c = 0; c < geometry.columns_per_row; ++c)
          a.profiles_[a.index(b, r, c)] = distribution.sample(seed, b, s, r, c);
  return a;
}

std::uint32_t DramArray::subarray_of(std::uint32_t row) const {
  if (row >= rows_per_bank_) throw InputError(fmt::format("row {} out of range ({} rows)", row, rows_per_bank_));
  auto it = std::upper_bound(first_rows_.begin(), first_rows_.end(), row);
  return static_cast<std::uint32_t>(it - first_rows_.begin() - 1);
}

RowRange DramArray::subarray_rows(std::uint32_t subarray) const {
  if (subarray >= geometry_.subarrays_per_bank)
    throw InputError(fmt::format("subarray {} out of range", subarray));
  return RowRange{first_rows_[subarray], first_rows_[subarray + 1]};
}

CellCoord DramArray::coord(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const {
  return CellCoord{bank, subarray_of(row), row, column};
}

void DramArray::check_row(std::uint32_t bank, std::uint32_t row) const {
  if (bank >= geometry_.banks) throw InputError(fmt::format("bank {} out of range", bank));
  if (row >= rows_per_bank_) throw InputError(fmt::format("row {} out of range ({} rows)", row, rows_per_bank_));
}

void DramArray::set_profile(std::uint32_t bank, std::uint32_t row, std::uint32_t column, const CellProfile& p) {
  check_row(bank, row);
  if (column >= geometry_.columns_per_row) throw InputError("column out of range");
  p.validate();
  profiles_[index(bank, row, column)] = p;
}

void DramArray::fill_profiles(const CellProfile& p) {
  p.validate();
  std::fill(profiles_.begin(), profiles_.end(), p);
}

bool DramArray::charged(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const {
  const auto i = index(bank, row, column);
  return (states_[i].stored_bit != 0) != (profiles_[i].polarity == Polarity::anti_cell);
}

void DramArray::restore_cell(CellState& s, std::uint8_t bit) {
  s = CellState{};
  s.stored_bit = bit;
}

void DramArray::init_region(RowRange rows, DataPattern pattern, std::optional<std::uint32_t> bank) {
  if (rows.first > rows.last || rows.last > rows_per_bank_)
    throw InputError(fmt::format("row range [{}, {}) out of range", rows.first, rows.last));
  const std::uint32_t b0 = bank.value_or(0);
  const std::uint32_t b1 = bank ? *bank + 1 : geometry_.banks;
  if (b0 >= geometry_.banks) throw InputError("bank out of range");
  for (std::uint32_t b = b0; b < b1; ++b)
    for (std::uint32_t r = rows.first; r < rows.last; ++r)
      for (std::uint32_t c = 0; c < geometry_.columns_per_row; ++c)
        restore_cell(states_[index(b, r, c)], pattern.bit(c));
}

void DramArray::init_all(DataPattern pattern) { init_region(RowRange{0, rows_per_bank_}, pattern); }

std::vector<std::uint8_t> DramArray::read_row(std::uint32_t bank, std::uint32_t row) const {
  check_row(bank, row);
  std::vector<std::uint8_t> bits(geometry_.columns_per_row);
  for (std::uint32_t c = 0; c < geometry_.columns_per_row; ++c) bits[c] = states_[index(bank, row, c)].stored_bit;
  return bits;
}

void DramArray::write_row(std::uint32_t bank, std::uint32_t row, std::span<const std::uint8_t> bits) {
  check_row(bank, row);
  if (bits.size() != geometry_.columns_per_row) throw InputError("row width mismatch");
  for (std::uint32_t c = 0; c < geometry_.columns_per_row; ++c)
    restore_cell(states_[index(bank, row, c)], bits[c] ? 1 : 0);
}

std::vector<ColumnRef> perturbed_columns(const DramArray& array, std::uint32_t aggressor_row) {
  const std::uint32_t k = array.subarray_of(aggressor_row);
  const std::uint32_t cols = array.columns();
  std::vector<ColumnRef> out;
  out.reserve(cols * 2);
  if (k > 0)
    for (std::uint32_t c = 1; c < cols; c += 2) out.push_back(ColumnRef{k - 1, c});
  for (std::uint32_t c = 0; c < cols; ++c) out.push_back(ColumnRef{k, c});
  if (k + 1 < array.subarrays())
    for (std::uint32_t c = 0; c < cols; c += 2) out.push_back(ColumnRef{k + 1, c});
  return out;
}

}  // namespace coldisturb
