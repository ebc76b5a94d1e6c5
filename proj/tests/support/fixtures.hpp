#pragma once

#include "coldisturb/array.hpp"
#include "coldisturb/engine.hpp"

namespace coldisturb::testing {

/// Array with every flip time infinite: nothing flips unless a test says so.
inline DramArray quiet_array(std::uint32_t subarrays, std::uint32_t rows, std::uint32_t cols,
                             std::uint32_t banks = 1) {
  DramGeometry g;
  g.banks = banks;
  g.subarrays_per_bank = subarrays;
  g.rows_per_subarray = rows;
  g.columns_per_row = cols;
  ProfileDistribution d;
  d.t_flip_gnd = AnchorDistribution::infinite();
  d.t_flip_half = AnchorDistribution::infinite();
  return DramArray::build(g, d, 1);
}

inline CellProfile profile(double gnd_ns, double half_ns, double vdd_ns = kInfinity) {
  CellProfile p;
  p.t_flip_gnd = Duration{gnd_ns};
  p.t_flip_half = Duration{half_ns};
  p.t_flip_vdd = Duration{vdd_ns};
  return p;
}

inline bool close_rel(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace coldisturb::testing
