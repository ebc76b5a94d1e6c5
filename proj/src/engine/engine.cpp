#include "coldisturb/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <unordered_map>

namespace coldisturb {

const char* to_string(FlipDirection d) { return d == FlipDirection::one_to_zero ? "1->0" : "0->1"; }

const char* to_string(FlipCause c) {
  switch (c) {
    case FlipCause::column_disturb: return "column-disturb";
    case FlipCause::retention_baseline: return "retention-baseline";
    case FlipCause::rowhammer_rowpress: return "rowhammer-rowpress";
  }
  return "?";
}

std::size_t BitflipReport::count(FlipCause cause) const {
  return static_cast<std::size_t>(
      std::count_if(flips.begin(), flips.end(), [&](const BitflipRecord& r) { return r.cause == cause; }));
}

void BitflipReport::sort() {
  std::sort(flips.begin(), flips.end(), [](const BitflipRecord& a, const BitflipRecord& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.where < b.where;
  });
}

double avg_column_voltage(Duration t_agg_on, Duration t_rp, double dp_col, double vdd) {
  const double denom = (t_agg_on + t_rp).count();
  if (!(denom > 0.0)) throw InputError("t_agg_on + t_rp must be positive");
  if (!(dp_col >= 0.0 && dp_col <= vdd)) throw InputError("dp_col must lie in [0, vdd]");
  return (t_agg_on.count() * dp_col + (vdd / 2.0) * t_rp.count()) / denom;
}

namespace {

constexpr std::int8_t kGnd = 0, kHalf = 1, kVdd = 2;

/// Cumulative measure over time built from blocks of periodic pieces.
/// Interval tracks accumulate open time; step tracks accumulate weights at
/// discrete instants (activations); value(t) counts steps strictly before t.
class ActivityTrack {
 public:
  struct Piece {
    double offset;
    double amount;  // interval width or step weight
  };

  explicit ActivityTrack(bool steps) : steps_(steps) {}

  void add_block(double start, double period, std::uint64_t count, std::vector<Piece> pieces) {
    if (count == 0 || pieces.empty()) return;
    std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.offset < b.offset; });
    Block b;
    b.start = start;
    b.period = period;
    b.count = count;
    b.first = static_cast<std::uint32_t>(pieces_.size());
    b.n = static_cast<std::uint32_t>(pieces.size());
    b.per_iter = 0.0;
    for (const auto& p : pieces) b.per_iter += p.amount;
    b.prefix = blocks_.empty() ? 0.0 : blocks_.back().prefix + blocks_.back().total();
    pieces_.insert(pieces_.end(), pieces.begin(), pieces.end());
    blocks_.push_back(b);
  }

  void add_interval(double from, double to) {
    if (to > from) add_block(from, to - from, 1, {{0.0, to - from}});
  }

  void add_step(double at, double weight) { add_block(at, 1.0, 1, {{0.0, weight}}); }

  bool empty() const { return blocks_.empty(); }

  double value(double t) const {
    auto it = std::upper_bound(blocks_.begin(), blocks_.end(), t,
                               [](double x, const Block& b) { return x < b.start; });
    if (it == blocks_.begin()) return 0.0;
    const Block& b = *(it - 1);
    const double rel = t - b.start;
    const double kf = std::floor(rel / b.period);
    if (kf >= static_cast<double>(b.count)) return b.prefix + b.total();
    auto k = static_cast<std::uint64_t>(std::max(0.0, kf));
    double within = rel - static_cast<double>(k) * b.period;
    if (within < 0.0) within = 0.0;
    const double eps = 1e-9 * std::max(1.0, std::fabs(t));
    double partial = 0.0;
    for (std::uint32_t i = b.first; i < b.first + b.n; ++i) {
      const Piece& p = pieces_[i];
      if (steps_) {
        if (p.offset < within - eps) partial += p.amount;
      } else {
        partial += std::clamp(within - p.offset, 0.0, p.amount);
      }
    }
    return b.prefix + static_cast<double>(k) * b.per_iter + partial;
  }

  /// Earliest instant at which a step track reaches `target`; +inf if never.
  double time_reaching(double target) const {
    if (blocks_.empty()) return kInfinity;
    const double tol = 1e-12 * std::max(1.0, std::fabs(target));
    auto it = std::lower_bound(blocks_.begin(), blocks_.end(), target - tol,
                               [](const Block& b, double x) { return b.prefix + b.total() < x; });
    if (it == blocks_.end()) return kInfinity;
    const Block& b = *it;
    const double rem = target - b.prefix;
    double kf = b.per_iter > 0.0 ? std::floor(rem / b.per_iter) - 1.0 : 0.0;
    auto k = static_cast<std::uint64_t>(std::clamp(kf, 0.0, static_cast<double>(b.count - 1)));
    for (; k < b.count; ++k) {
      double acc = b.prefix + static_cast<double>(k) * b.per_iter;
      for (std::uint32_t i = b.first; i < b.first + b.n; ++i) {
        acc += pieces_[i].amount;
        if (acc >= target - tol) return b.start + static_cast<double>(k) * b.period + pieces_[i].offset;
      }
    }
    return kInfinity;
  }

 private:
  struct Block {
    double start, period;
    std::uint64_t count;
    std::uint32_t first, n;
    double per_iter, prefix;
    double total() const { return per_iter * static_cast<double>(count); }
  };

  bool steps_;
  std::vector<Block> blocks_;
  std::vector<Piece> pieces_;
};

/// Content of a row as it drives the bitlines while open.
struct RowVersion {
  std::uint32_t row;
  std::uint32_t subarray;
  std::vector<std::int8_t> level;  // per local column
  ActivityTrack open{false};
};

struct BankSim {
  std::vector<double> reset;  // per row: last restore/materialization time
  std::vector<RowVersion> versions;
  std::vector<std::vector<std::uint32_t>> by_subarray;
  std::unordered_map<std::uint32_t, std::uint32_t> live_version;
  std::unordered_map<std::uint32_t, ActivityTrack> hammer;
  bool open = false;
  std::uint32_t open_row = 0;
  std::uint32_t open_version = 0;
  double open_at = 0.0;
  std::uint64_t ref_counter = 0;
};

/// How a version in a nearby subarray drives a victim column.
struct Driver {
  const RowVersion* version;
  int relation;  // -1: version one subarray above, 0: same, +1: one below
  double base;   // open time at the victim row's last restore
};

class Simulator {
 public:
  Simulator(DramArray& array, const TimingParams& timings, double scale, const EngineOptions& options)
      : array_(array), timings_(timings), scale_(scale), options_(options), banks_(array.banks()) {
    for (auto& b : banks_) {
      b.reset.assign(array.rows_per_bank(), 0.0);
      b.by_subarray.resize(array.subarrays());
    }
  }

  void handle(const Command& c) {
    const double t = c.at.count();
    if (t < now_) throw ProtocolError(fmt::format("{} at {} ns precedes earlier command at {} ns",
                                                  to_string(c.kind), t, now_));
    now_ = t;
    switch (c.kind) {
      case CommandKind::act: activate(c.bank, c.row, t); break;
      case CommandKind::pre: precharge(c.bank, t); break;
      case CommandKind::ref_row: refresh_row(c.bank, c.row, t); break;
      case CommandKind::ref_all: refresh_all(t); break;
      case CommandKind::idle:
        if (c.length.count() < 0.0) throw ProtocolError("IDLE length must be non-negative");
        break;
    }
  }

  void run_loop(const CommandLoop& loop) {
    if (loop.count == 0) return;
    if (!fast_forwardable(loop)) {
      expand(loop, 0, loop.count);
      return;
    }
    // First iteration runs explicitly; it materializes the aggressors and
    // fixes the row versions every later iteration drives.
    std::vector<std::uint32_t> act_versions;
    for (const auto& c : loop.body) {
      Command abs = c;
      abs.at = loop.start + c.at;
      handle(abs);
      if (c.kind == CommandKind::act) act_versions.push_back(banks_[c.bank].open_version);
    }
    if (loop.count == 1) return;

    const double base = (loop.start + loop.period).count();
    const double period = loop.period.count();
    const std::uint64_t reps = loop.count - 1;

    struct Pending {
      std::uint32_t bank, row, version;
      double act, pre;
    };
    std::vector<Pending> pairs;
    {
      std::size_t vi = 0;
      std::map<std::uint32_t, Pending> opened;
      for (const auto& c : loop.body) {
        if (c.kind == CommandKind::act) {
          opened[c.bank] = Pending{c.bank, c.row, act_versions[vi++], c.at.count(), 0.0};
        } else if (c.kind == CommandKind::pre) {
          auto p = opened.at(c.bank);
          p.pre = c.at.count();
          pairs.push_back(p);
          opened.erase(c.bank);
        }
      }
    }

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<ActivityTrack::Piece>> open_pieces;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<ActivityTrack::Piece>> hammer_pieces;
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> last_pre;
    for (const auto& p : pairs) {
      const double width = p.pre - p.act;
      if (width > 0.0) open_pieces[{p.bank, p.version}].push_back({p.act, width});
      const double weight = 1.0 + width / timings_.t_ras.count();
      for (auto nb : hammer_neighbors(p.row)) hammer_pieces[{p.bank, nb}].push_back({p.act, weight});
      auto& lp = last_pre[{p.bank, p.row}];
      lp = std::max(lp, p.pre);
    }
    for (auto& [key, pieces] : open_pieces)
      banks_[key.first].versions[key.second].open.add_block(base, period, reps, pieces);
    for (auto& [key, pieces] : hammer_pieces)
      hammer_track(key.first, key.second).add_block(base, period, reps, pieces);
    const double last_base = base + period * static_cast<double>(reps - 1);
    for (const auto& [key, pre] : last_pre) banks_[key.first].reset[key.second] = last_base + pre;
    now_ = std::max(now_, last_base + loop.body.back().end().count());
  }

  void finish(double t_end) {
    for (std::uint32_t b = 0; b < banks_.size(); ++b)
      if (banks_[b].open)
        throw ProtocolError(fmt::format("stream ends with row {} open in bank {}", banks_[b].open_row, b));
    const double t = std::max(t_end, now_);
    for (std::uint32_t b = 0; b < banks_.size(); ++b)
      for (std::uint32_t r = 0; r < array_.rows_per_bank(); ++r) materialize(b, r, t);
  }

  BitflipReport take_report() { return std::move(report_); }

 private:
  void check_bank(std::uint32_t bank) const {
    if (bank >= banks_.size()) throw ProtocolError(fmt::format("bank {} out of range", bank));
  }

  void check_row(std::uint32_t row) const {
    if (row >= array_.rows_per_bank())
      throw ProtocolError(fmt::format("row {} out of range ({} rows)", row, array_.rows_per_bank()));
  }

  std::vector<std::uint32_t> hammer_neighbors(std::uint32_t row) const {
    std::vector<std::uint32_t> out;
    const RowRange sub = array_.subarray_rows(array_.subarray_of(row));
    for (std::uint32_t d = 1; d <= options_.hammer_radius; ++d) {
      if (row >= sub.first + d) out.push_back(row - d);
      if (row + d < sub.last) out.push_back(row + d);
    }
    return out;
  }

  ActivityTrack& hammer_track(std::uint32_t bank, std::uint32_t row) {
    return banks_[bank].hammer.try_emplace(row, true).first->second;
  }

  void activate(std::uint32_t bank, std::uint32_t row, double t) {
    check_bank(bank);
    check_row(row);
    auto& b = banks_[bank];
    if (b.open)
      throw ProtocolError(fmt::format("ACT row {} at {} ns while row {} is open in bank {}", row, t, b.open_row, bank));
    materialize(bank, row, t);
    b.open = true;
    b.open_row = row;
    b.open_version = version_for(bank, row);
    b.open_at = t;
  }

  void precharge(std::uint32_t bank, double t) {
    check_bank(bank);
    auto& b = banks_[bank];
    if (!b.open) throw ProtocolError(fmt::format("PRE at {} ns to bank {} with no open row", t, bank));
    const double width = t - b.open_at;
    b.versions[b.open_version].open.add_interval(b.open_at, t);
    const double weight = 1.0 + width / timings_.t_ras.count();
    for (auto nb : hammer_neighbors(b.open_row)) hammer_track(bank, nb).add_step(b.open_at, weight);
    b.open = false;
    // The row was connected to its own restored values while open; it
    // leaves the precharge fully restored.
    restore_states(bank, b.open_row);
    b.reset[b.open_row] = t;
  }

  void refresh_row(std::uint32_t bank, std::uint32_t row, double t) {
    check_bank(bank);
    check_row(row);
    if (banks_[bank].open)
      throw ProtocolError(fmt::format("REF_ROW at {} ns to bank {} with row {} open", t, bank, banks_[bank].open_row));
    materialize(bank, row, t);
    restore_states(bank, row);
  }

  void refresh_all(double t) {
    for (std::uint32_t b = 0; b < banks_.size(); ++b)
      if (banks_[b].open) throw ProtocolError(fmt::format("REF at {} ns with row open in bank {}", t, b));
    const std::uint64_t n = options_.refresh_commands_per_window;
    const std::uint64_t rows = array_.rows_per_bank();
    for (std::uint32_t b = 0; b < banks_.size(); ++b) {
      auto& bank = banks_[b];
      const std::uint64_t i = bank.ref_counter++ % n;
      const auto first = static_cast<std::uint32_t>(i * rows / n);
      const auto last = static_cast<std::uint32_t>((i + 1) * rows / n);
      for (std::uint32_t r = first; r < last; ++r) {
        materialize(b, r, t);
        restore_states(b, r);
      }
    }
  }

  void restore_states(std::uint32_t bank, std::uint32_t row) {
    for (std::uint32_t c = 0; c < array_.columns(); ++c) {
      auto& s = array_.state(bank, row, c);
      if (s.flipped) continue;
      s.damage = 0.0;
      s.hammer_damage = 0.0;
      s.driven = false;
    }
  }

  std::uint32_t version_for(std::uint32_t bank, std::uint32_t row) {
    auto& b = banks_[bank];
    if (auto it = b.live_version.find(row); it != b.live_version.end()) return it->second;
    RowVersion v;
    v.row = row;
    v.subarray = array_.subarray_of(row);
    v.level.resize(array_.columns());
    for (std::uint32_t c = 0; c < array_.columns(); ++c)
      v.level[c] = array_.charged(bank, row, c) ? kVdd : kGnd;
    // Anti-cells hold charge for a logical 0, so "charged" maps to VDD
    // on the bitline for either polarity.
    const auto id = static_cast<std::uint32_t>(b.versions.size());
    b.by_subarray[v.subarray].push_back(id);
    b.versions.push_back(std::move(v));
    b.live_version[row] = id;
    return id;
  }

  /// Brings every cell of `row` to time t, resolving flips in between.
  void materialize(std::uint32_t bank, std::uint32_t row, double t) {
    auto& b = banks_[bank];
    const double tr = b.reset[row];
    if (!(t > tr)) return;
    const std::uint32_t s = array_.subarray_of(row);

    // Rounding in periodic blocks can leave sub-femtosecond residues; real
    // open intervals are at least t_ras long.
    const double eps = 1e-9 * std::max(1.0, t);
    std::vector<Driver> drivers;
    std::vector<double> delta;  // open time of each driver within [tr, t]
    auto gather = [&](std::uint32_t sub, int relation) {
      for (auto id : b.by_subarray[sub]) {
        const RowVersion& v = b.versions[id];
        if (v.open.empty()) continue;
        const double a0 = v.open.value(tr);
        const double d = v.open.value(t) - a0;
        if (d > eps) {
          drivers.push_back(Driver{&v, relation, a0});
          delta.push_back(d);
        }
      }
    };
    if (s > 0) gather(s - 1, -1);
    gather(s, 0);
    if (s + 1 < array_.subarrays()) gather(s + 1, +1);

    const ActivityTrack* hammer = nullptr;
    double h0 = 0.0, dh = 0.0;
    if (auto it = b.hammer.find(row); it != b.hammer.end()) {
      hammer = &it->second;
      h0 = hammer->value(tr);
      dh = hammer->value(t) - h0;
    }

    const double elapsed = t - tr;
    for (std::uint32_t c = 0; c < array_.columns(); ++c) {
      auto& st = array_.state(bank, row, c);
      if (st.flipped) continue;
      const auto& pf = array_.profile(bank, row, c);

      double tg = 0.0, tv = 0.0;
      for (std::size_t i = 0; i < drivers.size(); ++i) {
        const int lvl = driven_level(drivers[i], c);
        if (lvl == kGnd) tg += delta[i];
        else if (lvl == kVdd) tv += delta[i];
      }
      const double th = std::max(0.0, elapsed - tg - tv);
      const bool charged = (st.stored_bit != 0) != (pf.polarity == Polarity::anti_cell);
      const double d_new = charged ? st.damage + accrual(pf, tg, th, tv) : st.damage;
      const double h_new = std::isinf(pf.rh_threshold) ? st.hammer_damage : st.hammer_damage + dh / pf.rh_threshold;

      const bool column_event = charged && d_new >= 1.0;
      const bool hammer_event = h_new >= 1.0 && (pf.hammer_charges ? !charged : charged);
      if (!column_event && !hammer_event) {
        st.damage = d_new;
        st.hammer_damage = h_new;
        st.driven = st.driven || (tg + tv > 0.0);
        continue;
      }

      double t_ham = kInfinity;
      if (hammer_event)
        t_ham = hammer->time_reaching(h0 + (1.0 - st.hammer_damage) * pf.rh_threshold);
      double t_col = kInfinity;
      if (column_event) t_col = solve_column_flip(drivers, c, pf, st.damage, tr, t);

      FlipCause cause;
      double tf;
      if (t_ham <= t_col) {
        cause = FlipCause::rowhammer_rowpress;
        tf = t_ham;
      } else {
        tf = t_col;
        bool driven = st.driven;
        if (!driven) {
          for (const auto& d : drivers) {
            const int lvl = driven_level(d, c);
            if (lvl != kHalf && d.version->open.value(tf) - d.base > eps) driven = true;
          }
        }
        cause = driven ? FlipCause::column_disturb : FlipCause::retention_baseline;
      }
      const bool to_zero = st.stored_bit == 1;
      st.stored_bit ^= 1u;
      st.flipped = true;
      st.flipped_at = Duration{tf};
      st.damage = std::min(d_new, 1.0);
      st.hammer_damage = h_new;
      report_.flips.push_back(BitflipRecord{CellCoord{bank, s, row, c}, Duration{tf},
                                            to_zero ? FlipDirection::one_to_zero : FlipDirection::zero_to_one,
                                            cause});
      b.live_version.erase(row);
    }
    b.reset[row] = t;
  }

  static int driven_level(const Driver& d, std::uint32_t c) {
    switch (d.relation) {
      case 0: return d.version->level[c];
      case -1: return (c % 2 == 0) ? d.version->level[c + 1] : kHalf;
      default: return (c % 2 == 1) ? d.version->level[c - 1] : kHalf;
    }
  }

  double accrual(const CellProfile& pf, double tg, double th, double tv) const {
    double d = 0.0;
    if (tg > 0.0) d += tg / pf.t_flip_gnd.count();
    if (th > 0.0) d += th / pf.t_flip_half.count();
    if (tv > 0.0) d += tv / pf.t_flip_vdd.count();
    return d / scale_;
  }

  double solve_column_flip(const std::vector<Driver>& drivers, std::uint32_t c, const CellProfile& pf,
                           double d0, double tr, double t) const {
    auto damage_at = [&](double tp) {
      double tg = 0.0, tv = 0.0;
      for (const auto& d : drivers) {
        const int lvl = driven_level(d, c);
        if (lvl == kHalf) continue;
        const double a = d.version->open.value(tp) - d.base;
        if (lvl == kGnd) tg += a;
        else tv += a;
      }
      const double th = std::max(0.0, (tp - tr) - tg - tv);
      return d0 + accrual(pf, tg, th, tv);
    };
    double lo = tr, hi = t;
    for (int i = 0; i < 200; ++i) {
      const double mid = lo + (hi - lo) / 2.0;
      if (!(mid > lo && mid < hi)) break;
      if (damage_at(mid) >= 1.0) hi = mid;
      else lo = mid;
    }
    return hi;
  }

  bool fast_forwardable(const CommandLoop& loop) const {
    if (loop.count < 2) return false;
    for (const auto& b : banks_)
      if (b.open) return false;
    std::map<std::uint32_t, std::uint32_t> open;  // bank -> row
    struct Span {
      double act, pre;
    };
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<Span>> spans;
    std::map<std::uint32_t, double> act_at;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> acts;  // (bank,row)
    for (const auto& c : loop.body) {
      switch (c.kind) {
        case CommandKind::act:
          if (c.bank >= banks_.size() || c.row >= array_.rows_per_bank() || open.count(c.bank)) return false;
          open[c.bank] = c.row;
          act_at[c.bank] = c.at.count();
          acts.emplace_back(c.bank, c.row);
          break;
        case CommandKind::pre:
          if (c.bank >= banks_.size() || !open.count(c.bank)) return false;
          spans[{c.bank, open[c.bank]}].push_back({act_at[c.bank], c.at.count()});
          open.erase(c.bank);
          break;
        case CommandKind::idle:
          break;
        default:
          return false;
      }
    }
    if (!open.empty()) return false;

    const double period = loop.period.count();
    for (const auto& [key, sp] : spans) {
      const auto [bank, row] = key;
      // Longest stretch the aggressor spends closed, wrapping into the next iteration.
      double gap = 0.0;
      for (std::size_t i = 0; i < sp.size(); ++i) {
        const double next_act = (i + 1 < sp.size()) ? sp[i + 1].act : sp[0].act + period;
        gap = std::max(gap, next_act - sp[i].pre);
      }
      double hammer_weight = 0.0;
      const RowRange sub = array_.subarray_rows(array_.subarray_of(row));
      for (const auto& [okey, osp] : spans) {
        if (okey.first != bank || okey.second == row || !sub.contains(okey.second)) continue;
        const auto dist = okey.second > row ? okey.second - row : row - okey.second;
        if (dist > options_.hammer_radius) continue;
        for (const auto& s2 : osp) hammer_weight += 1.0 + (s2.pre - s2.act) / timings_.t_ras.count();
      }
      for (std::uint32_t c = 0; c < array_.columns(); ++c) {
        const auto& pf = array_.profile(bank, row, c);
        if (gap / (pf.min_flip_time().count() * scale_) >= 1.0) return false;
        if (hammer_weight > 0.0 && hammer_weight / pf.rh_threshold >= 1.0) return false;
      }
    }
    return true;
  }

  void expand(const CommandLoop& loop, std::uint64_t from, std::uint64_t to) {
    for (std::uint64_t i = from; i < to; ++i) {
      const Duration base = loop.start + loop.period * static_cast<double>(i);
      for (Command c : loop.body) {
        c.at = base + c.at;
        handle(c);
      }
    }
  }

  DramArray& array_;
  TimingParams timings_;
  double scale_;
  EngineOptions options_;
  std::vector<BankSim> banks_;
  BitflipReport report_;
  double now_ = 0.0;
};

}  // namespace

BitflipReport execute(DramArray& array, const CommandStream& stream, const TimingParams& timings,
                      const Temperature& temperature, const EngineOptions& options) {
  timings.validate();
  if (options.refresh_commands_per_window == 0) throw ConfigError("refresh_commands_per_window must be >= 1");
  if (!stream.time_ordered())
    throw ProtocolError("command stream is not time-ordered; merge overlapping streams first");
  const double scale = temperature.scale();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("temperature scale must be positive");

  Simulator sim(array, timings, scale, options);
  for (const auto& seg : stream.segments()) {
    if (const auto* c = std::get_if<Command>(&seg))
      sim.handle(*c);
    else
      sim.run_loop(std::get<CommandLoop>(seg));
  }
  sim.finish(stream.end().count());
  auto report = sim.take_report();
  report.sort();
  return report;
}

RowCloneOutcome rowclone(DramArray& array, std::uint32_t bank, std::uint32_t src, std::uint32_t dst) {
  array.check_row(bank, src);
  array.check_row(bank, dst);
  if (array.subarray_of(src) != array.subarray_of(dst)) return RowCloneOutcome{false};
  if (src != dst) {
    const auto bits = array.read_row(bank, src);
    array.write_row(bank, dst, bits);
  }
  return RowCloneOutcome{true};
}

}  // namespace coldisturb
