#pragma once

// Refresh-based mitigations: fixed-rate refresh, proactive victim-row
// refresh (PRVR) and retention-aware refresh with weak-row sets, plus an
// end-to-end check that runs a policy against an aggression stream.

#include <array>
#include <memory>
#include <vector>

#include "coldisturb/array.hpp"
#include "coldisturb/characterization.hpp"
#include "coldisturb/engine.hpp"

namespace coldisturb {

/// Weak-row membership. The bitmap is exact; the Bloom filter never
/// reports a false negative but may report false positives.
class WeakRowSet {
 public:
  enum class Kind : std::uint8_t { bitmap, bloom };

  static constexpr std::uint32_t kBloomBits = 8192;
  static constexpr std::uint32_t kBloomHashes = 6;
  /// Per-hash seeds: hash i of row key x is mix64(x ^ seed[i]) mod m.
  static constexpr std::array<std::uint64_t, kBloomHashes> kBloomSeeds{
      0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL,
      0x082efa98ec4e6c89ULL, 0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL};

  static WeakRowSet bitmap(std::uint32_t banks, std::uint32_t rows_per_bank);
  static WeakRowSet bloom(std::uint32_t bits = kBloomBits, std::uint32_t hashes = kBloomHashes);

  void insert(std::uint32_t bank, std::uint32_t row);
  bool contains(std::uint32_t bank, std::uint32_t row) const;

  Kind kind() const { return kind_; }
  std::size_t inserted() const { return inserted_; }
  std::size_t size_bits() const { return bits_.size(); }

  /// (1 - e^(-k n / m))^k.
  static double expected_false_positive_rate(std::size_t n, std::uint32_t bits = kBloomBits,
                                             std::uint32_t hashes = kBloomHashes);

 private:
  WeakRowSet() = default;
  std::size_t bit_index(std::uint64_t key, std::uint32_t i) const;

  Kind kind_ = Kind::bitmap;
  std::uint32_t banks_ = 0, rows_ = 0, hashes_ = 0;
  std::size_t inserted_ = 0;
  std::vector<bool> bits_;
};

struct RefreshPolicy {
  enum class Kind : std::uint8_t { periodic, prvr, raidr };

  Kind kind = Kind::periodic;
  /// Refresh window of fixed-rate refresh; also the background window under PRVR.
  Duration window = milliseconds(64);
  std::uint32_t commands_per_window = 8192;

  std::uint32_t prvr_victims = 0;  ///< 0: every row of the three subarrays
  Duration t_first = milliseconds(8);
  double trigger_fraction = 0.5;

  std::shared_ptr<const WeakRowSet> weak;
  Duration t_weak = milliseconds(64);
  Duration t_strong = milliseconds(1024);

  static RefreshPolicy periodic(Duration window);
  static RefreshPolicy prvr(std::uint32_t victims, Duration t_first, Duration background_window = milliseconds(32));
  static RefreshPolicy raidr(std::shared_ptr<const WeakRowSet> weak, Duration t_weak, Duration t_strong);

  Duration t_refi() const { return window / static_cast<double>(commands_per_window); }
  void validate() const;
};

/// REF_all at k * t_refi for k = 1, 2, ... while within `duration`.
CommandStream periodic_refresh_stream(const RefreshPolicy& policy, Duration duration);

/// Rows PRVR refreshes for an aggressor: all rows of its subarray and both
/// neighbors, or the `victims` nearest of them.
std::vector<std::uint32_t> prvr_victim_rows(const DramArray& array, std::uint32_t aggressor, std::uint32_t victims);

/// Once an aggressor row's accumulated open time reaches
/// trigger_fraction * t_first, refreshes its victims round-robin, one
/// REF_row every t_first / N, until t_first after its last precharge (or
/// `duration`). Throws InputError when N exceeds the available rows.
CommandStream prvr_stream(const DramArray& array, const CommandStream& aggression, const RefreshPolicy& policy,
                          Duration duration);

enum class ProfilingCondition : std::uint8_t { retention_only, column_disturb_inclusive };

/// Shortest failure time per row.
struct RowFailureProfile {
  std::uint32_t banks = 0, rows = 0;
  std::vector<double> ns;

  Duration at(std::uint32_t bank, std::uint32_t row) const {
    return Duration{ns[static_cast<std::size_t>(bank) * rows + row]};
  }
};

/// Worst case per row from the cell profiles: retention time, or the
/// fastest flip under any bitline voltage, scaled by temperature.
RowFailureProfile worst_case_profile(const DramArray& array, ProfilingCondition condition,
                                     const Temperature& temperature);
/// Per-row minimum of a measured retention profile.
RowFailureProfile worst_case_profile(const RetentionProfile& retention, std::uint32_t banks, std::uint32_t rows,
                                     std::uint32_t columns);

/// Marks every row whose shortest failure time is within `t_strong`.
void classify_weak_rows(const RowFailureProfile& profile, Duration t_strong, WeakRowSet& into);

/// Row index i of n (bank-major) is refreshed at ((i + 1) / n) * T + k * T,
/// with T = t_weak for members of the weak set and t_strong otherwise.
CommandStream raidr_stream(const DramArray& array, const RefreshPolicy& policy, Duration duration);

struct PolicyVerification {
  BitflipReport flips;
  std::uint64_t ref_all = 0;
  std::uint64_t ref_row = 0;
  double row_refreshes = 0.0;  ///< rows refreshed per bank-row, summed over the device
  std::uint64_t conflicts = 0;  ///< refreshes that preempted an open row
};

/// Refresh commands preempt open rows: the bank is precharged at the
/// refresh time and the row re-opened t_rp later unless its own PRE comes
/// first (then that PRE is dropped).
CommandStream merge_with_refresh(const CommandStream& aggression, const CommandStream& refresh,
                                 const TimingParams& timings, std::uint64_t* conflicts = nullptr);

/// Builds the policy's refresh stream (PRVR also gets fixed-rate refresh at
/// its background window), merges it with `aggression`, runs the engine on a
/// copy of `array` up to `duration` and reports every flip.
PolicyVerification verify_policy(const DramArray& array, const CommandStream& aggression, const RefreshPolicy& policy,
                                 Duration duration, const TimingParams& timings = {},
                                 const Temperature& temperature = {});

}  // namespace coldisturb
