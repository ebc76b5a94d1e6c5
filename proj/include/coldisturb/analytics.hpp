#pragma once

// Closed-form refresh cost models and their discrete-event counterparts.

#include <cstdint>
#include <optional>

#include "coldisturb/commands.hpp"
#include "coldisturb/units.hpp"

namespace coldisturb {

/// Per-operation refresh energies. Defaults are illustrative placeholders;
/// only ratios between policies are meaningful with them.
struct EnergyParams {
  double ref_row_joules = 1.0e-9;
  /// Energy of one REF_all; when unset it is the energy of the rows it
  /// refreshes (rows per command times ref_row_joules).
  std::optional<double> ref_all_joules;
  double idle_watts = 0.0;

  void validate() const;
};

/// Fraction of time a rank is blocked by REF_all: t_rfc / t_refi.
/// Throws ModelDomainError unless t_refi > t_rfc (t_rfc = 0 gives 0).
double throughput_loss(Duration t_rfc, Duration t_refi);

/// Row refreshes relative to refreshing every row at t_weak:
/// f + (1 - f) * t_weak / t_strong.
double normalized_refresh_ops(double weak_fraction, Duration t_strong, Duration t_weak = milliseconds(64));

/// Weak fraction f at which going from t_short to t_long cuts row
/// refreshes by `reduction`. Throws ModelDomainError when no f in [0, 1] does.
double weak_fraction_for_reduction(double reduction, Duration t_long = milliseconds(1024),
                                   Duration t_short = milliseconds(128), Duration t_weak = milliseconds(64));

struct RefreshCount {
  std::uint64_t row_refreshes = 0;
  std::uint64_t baseline = 0;  ///< every row at t_weak over the same span
  double normalized() const { return static_cast<double>(row_refreshes) / static_cast<double>(baseline); }
};

/// Counts REF_row events of a two-class schedule over `span`: rows spread
/// weak at fraction f, weak rows every t_weak, others every t_strong, row i
/// of n phased at ((i + 1) / n) of its period.
RefreshCount count_refresh_ops(double weak_fraction, Duration t_strong, std::uint32_t rows, Duration span,
                               Duration t_weak = milliseconds(64));

struct PrvrAssumptions {
  std::uint32_t banks = 32;
  std::uint32_t rows_per_bank = 131072;
  std::uint32_t victims = 3072;
  Duration t_first = milliseconds(8);
  Duration default_window = milliseconds(32);
  Duration fast_window = milliseconds(8);
  std::uint32_t commands_per_window = 8192;

  void validate() const;
};

struct PrvrComparison {
  double fixed_loss = 0.0;
  double prvr_loss = 0.0;
  double throughput_reduction = 0.0;  ///< 1 - prvr_loss / fixed_loss; negative when PRVR costs more
  double fixed_refresh_watts = 0.0;
  double prvr_refresh_watts = 0.0;
  double energy_reduction = 0.0;
  double idle_watts = 0.0;
};

/// Fixed-rate refresh at the fast window against PRVR on top of refresh at
/// the default window, with one continuously hammered row per bank.
/// Loss: t_rfc / t_refi(fast) versus t_rfc / t_refi(default) + N t_row / t_first.
/// Energy: row refreshes per second times their per-op energies.
PrvrComparison prvr_vs_fixed_rate(const PrvrAssumptions& a, const TimingParams& timings,
                                  const EnergyParams& energy = {});

/// Same comparison from command counts over `span` of simulated time.
PrvrComparison prvr_vs_fixed_rate_counted(const PrvrAssumptions& a, const TimingParams& timings,
                                          const EnergyParams& energy = {}, Duration span = seconds(1));

/// Latency of refreshing `rows` rows back to back.
Duration row_refresh_latency(std::uint64_t rows, Duration per_row = nanoseconds(70));

/// DRFMab latency for a +-radius neighborhood: 280 ns at 2, 560 ns at 4,
/// 70 ns per refreshed row otherwise.
Duration drfm_latency(std::uint32_t radius);

}  // namespace coldisturb
