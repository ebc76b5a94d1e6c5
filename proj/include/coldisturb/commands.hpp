#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "coldisturb/units.hpp"

namespace coldisturb {

struct TimingParams {
  Duration t_ras = nanoseconds(36);
  Duration t_rp = nanoseconds(14);
  Duration t_agg_on = microseconds(70.2);
  Duration t_refw = milliseconds(64);
  Duration t_refi = milliseconds(64) / 8192.0;
  Duration t_rfc = nanoseconds(410);
  Duration t_row_refresh = nanoseconds(70);

  /// Throws ConfigError unless every duration is positive and t_agg_on >= t_ras.
  void validate() const;
};

enum class CommandKind : std::uint8_t { act, pre, ref_all, ref_row, idle };

const char* to_string(CommandKind kind);

struct Command {
  CommandKind kind = CommandKind::idle;
  Duration at{0};
  std::uint32_t bank = 0;
  std::uint32_t row = 0;   ///< ACT and REF_row only
  Duration length{0};      ///< IDLE only

  static Command act(Duration at, std::uint32_t row, std::uint32_t bank = 0) {
    return {CommandKind::act, at, bank, row, {}};
  }
  static Command pre(Duration at, std::uint32_t bank = 0) { return {CommandKind::pre, at, bank, 0, {}}; }
  static Command ref_all(Duration at) { return {CommandKind::ref_all, at, 0, 0, {}}; }
  static Command ref_row(Duration at, std::uint32_t row, std::uint32_t bank = 0) {
    return {CommandKind::ref_row, at, bank, row, {}};
  }
  static Command idle(Duration at, Duration length) { return {CommandKind::idle, at, 0, 0, length}; }

  Duration end() const { return at + length; }
  bool operator==(const Command&) const = default;
};

/// `count` repetitions of `body`, iteration i starting at start + i*period.
/// Body timestamps are offsets into the iteration, inside [0, period).
struct CommandLoop {
  Duration start{0};
  Duration period{0};
  std::uint64_t count = 0;
  std::vector<Command> body;

  Duration end() const { return start + period * static_cast<double>(count); }
};

/// Time-ordered sequence of single commands and run-length encoded loops.
/// Loops keep multi-million-command access patterns compact; consumers that
/// need every command call for_each().
class CommandStream {
 public:
  using Segment = std::variant<Command, CommandLoop>;

  void push(const Command& c);
  void push_loop(CommandLoop loop);
  void append(const CommandStream& other);

  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

  /// End of the last segment (last timestamp plus any IDLE length).
  Duration end() const { return end_; }

  /// Number of commands after loop expansion.
  std::uint64_t size() const;
  std::uint64_t count(CommandKind kind) const;
  /// Commands of `kind` with timestamp strictly below `horizon`.
  std::uint64_t count_before(CommandKind kind, Duration horizon) const;

  /// Visits every command in timestamp order.
  void for_each(const std::function<void(const Command&)>& visit) const;
  std::vector<Command> expand() const;

  /// True when every segment starts at or after the end of the previous one
  /// and timestamps never decrease.
  bool time_ordered() const { return ordered_; }

 private:
  std::vector<Segment> segments_;
  Duration end_{0};
  Duration last_at_{0};
  bool ordered_ = true;
};

/// Merges streams into one explicit, time-sorted stream. Ties keep refresh
/// commands ahead of ACT/PRE, then input order.
CommandStream merge_streams(const std::vector<const CommandStream*>& streams);

}  // namespace coldisturb
