#include "coldisturb/mitigation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

#include <fmt/format.h>

#include "coldisturb/random.hpp"

namespace coldisturb {

namespace {

std::uint64_t row_key(std::uint32_t bank, std::uint32_t row) {
  return (static_cast<std::uint64_t>(bank) << 32) | row;
}

bool within(Duration t, Duration limit) { return t.count() <= limit.count() * (1.0 + 1e-12); }

}  // namespace

WeakRowSet WeakRowSet::bitmap(std::uint32_t banks, std::uint32_t rows_per_bank) {
  if (banks == 0 || rows_per_bank == 0) throw ConfigError("weak-row bitmap needs at least one bank and one row");
  WeakRowSet s;
  s.kind_ = Kind::bitmap;
  s.banks_ = banks;
  s.rows_ = rows_per_bank;
  s.bits_.assign(static_cast<std::size_t>(banks) * rows_per_bank, false);
  return s;
}

WeakRowSet WeakRowSet::bloom(std::uint32_t bits, std::uint32_t hashes) {
  if (bits == 0) throw ConfigError("bloom filter needs at least one bit");
  if (hashes == 0 || hashes > kBloomHashes)
    throw ConfigError(fmt::format("bloom filter hash count must be in 1..{}", kBloomHashes));
  WeakRowSet s;
  s.kind_ = Kind::bloom;
  s.hashes_ = hashes;
  s.bits_.assign(bits, false);
  return s;
}

std::size_t WeakRowSet::bit_index(std::uint64_t key, std::uint32_t i) const {
  return static_cast<std::size_t>(mix64(key ^ kBloomSeeds[i]) % bits_.size());
}

void WeakRowSet::insert(std::uint32_t bank, std::uint32_t row) {
  if (kind_ == Kind::bitmap) {
    if (bank >= banks_ || row >= rows_)
      throw InputError(fmt::format("row ({}, {}) outside the weak-row bitmap", bank, row));
    const std::size_t i = static_cast<std::size_t>(bank) * rows_ + row;
    if (!bits_[i]) ++inserted_;
    bits_[i] = true;
    return;
  }
  const auto key = row_key(bank, row);
  for (std::uint32_t i = 0; i < hashes_; ++i) bits_[bit_index(key, i)] = true;
  ++inserted_;
}

bool WeakRowSet::contains(std::uint32_t bank, std::uint32_t row) const {
  if (kind_ == Kind::bitmap) {
    if (bank >= banks_ || row >= rows_) return false;
    return bits_[static_cast<std::size_t>(bank) * rows_ + row];
  }
  const auto key = row_key(bank, row);
  for (std::uint32_t i = 0; i < hashes_; ++i)
    if (!bits_[bit_index(key, i)]) return false;
  return true;
}

double WeakRowSet::expected_false_positive_rate(std::size_t n, std::uint32_t bits, std::uint32_t hashes) {
  const double k = hashes;
  return std::pow(1.0 - std::exp(-k * static_cast<double>(n) / bits), k);
}

RefreshPolicy RefreshPolicy::periodic(Duration window) {
  RefreshPolicy p;
  p.kind = Kind::periodic;
  p.window = window;
  return p;
}

RefreshPolicy RefreshPolicy::prvr(std::uint32_t victims, Duration t_first, Duration background_window) {
  RefreshPolicy p;
  p.kind = Kind::prvr;
  p.prvr_victims = victims;
  p.t_first = t_first;
  p.window = background_window;
  return p;
}

RefreshPolicy RefreshPolicy::raidr(std::shared_ptr<const WeakRowSet> weak, Duration t_weak, Duration t_strong) {
  RefreshPolicy p;
  p.kind = Kind::raidr;
  p.weak = std::move(weak);
  p.t_weak = t_weak;
  p.t_strong = t_strong;
  return p;
}

void RefreshPolicy::validate() const {
  if (!(window.count() > 0.0) || !is_finite(window)) throw ConfigError("refresh window must be positive and finite");
  if (commands_per_window == 0) throw ConfigError("commands_per_window must be >= 1");
  if (kind == Kind::prvr) {
    if (!(t_first.count() > 0.0) || !is_finite(t_first)) throw ConfigError("t_first must be positive and finite");
    if (!(trigger_fraction >= 0.0 && trigger_fraction <= 1.0))
      throw ConfigError("trigger_fraction must be in [0, 1]");
  }
  if (kind == Kind::raidr) {
    if (!weak) throw ConfigError("retention-aware refresh needs a weak-row set");
    if (!(t_weak.count() > 0.0) || !is_finite(t_weak)) throw ConfigError("t_weak must be positive and finite");
    if (!(t_strong >= t_weak) || !is_finite(t_strong)) throw ConfigError("t_strong must be finite and >= t_weak");
  }
}

CommandStream periodic_refresh_stream(const RefreshPolicy& policy, Duration duration) {
  policy.validate();
  CommandStream out;
  const Duration t_refi = policy.t_refi();
  const auto n = static_cast<std::uint64_t>(std::floor(duration / t_refi * (1.0 + 1e-12)));
  if (n == 0) return out;
  CommandLoop loop;
  loop.start = t_refi;
  loop.period = t_refi;
  loop.count = n;
  loop.body = {Command::ref_all(Duration{0})};
  out.push_loop(std::move(loop));
  return out;
}

std::vector<std::uint32_t> prvr_victim_rows(const DramArray& array, std::uint32_t aggressor, std::uint32_t victims) {
  const std::uint32_t s = array.subarray_of(aggressor);
  const std::uint32_t lo = array.subarray_rows(s == 0 ? 0 : s - 1).first;
  const std::uint32_t hi = array.subarray_rows(std::min(s + 1, array.subarrays() - 1)).last;
  const std::uint32_t available = hi - lo;
  if (victims > available)
    throw InputError(fmt::format("{} victim rows requested but only {} rows share bitlines with row {}", victims,
                                 available, aggressor));
  std::vector<std::uint32_t> rows(available);
  for (std::uint32_t i = 0; i < available; ++i) rows[i] = lo + i;
  if (victims == 0 || victims == available) return rows;
  auto dist = [aggressor](std::uint32_t r) { return r > aggressor ? r - aggressor : aggressor - r; };
  std::stable_sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) { return dist(a) < dist(b); });
  rows.resize(victims);
  std::sort(rows.begin(), rows.end());
  return rows;
}

namespace {

struct AggressorTrace {
  double cum_open = 0.0;
  double first_act = kInfinity;
  double trigger = kInfinity;
  double last_pre = 0.0;
};

using TraceMap = std::map<std::pair<std::uint32_t, std::uint32_t>, AggressorTrace>;

struct Piece {
  double act, pre;
};

class TraceBuilder {
 public:
  explicit TraceBuilder(double target) : target_(target) {}

  void command(const Command& c) {
    if (c.kind == CommandKind::act) {
      open_[c.bank] = {c.row, c.at.count()};
    } else if (c.kind == CommandKind::pre) {
      auto it = open_.find(c.bank);
      if (it == open_.end()) return;
      piece(c.bank, it->second.first, {it->second.second, c.at.count()});
      open_.erase(it);
    }
  }

  void loop(const CommandLoop& l) {
    if (l.count == 0) return;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<Piece>> pieces;
    std::map<std::uint32_t, std::pair<std::uint32_t, double>> open;
    bool contained = open_.empty();
    for (const auto& c : l.body) {
      if (c.kind == CommandKind::act) {
        open[c.bank] = {c.row, c.at.count()};
      } else if (c.kind == CommandKind::pre) {
        auto it = open.find(c.bank);
        if (it == open.end()) {
          contained = false;
          break;
        }
        pieces[{c.bank, it->second.first}].push_back({it->second.second, c.at.count()});
        open.erase(it);
      }
    }
    if (!contained || !open.empty()) {
      for (std::uint64_t i = 0; i < l.count; ++i)
        for (auto c : l.body) {
          c.at += l.start + l.period * static_cast<double>(i);
          command(c);
        }
      return;
    }
    const double start = l.start.count(), period = l.period.count();
    for (const auto& [key, ps] : pieces) {
      auto& tr = trace_[key];
      double per_iter = 0.0;
      for (const auto& p : ps) per_iter += p.pre - p.act;
      if (!std::isfinite(tr.first_act)) {
        tr.first_act = start + ps.front().act;
        if (target_ <= 0.0) tr.trigger = tr.first_act;
      }
      const double total = per_iter * static_cast<double>(l.count);
      if (!std::isfinite(tr.trigger) && per_iter > 0.0 && tr.cum_open + total >= target_) {
        const double need = target_ - tr.cum_open;
        auto k = static_cast<std::uint64_t>(std::floor(need / per_iter));
        if (k >= l.count) k = l.count - 1;
        double rem = need - static_cast<double>(k) * per_iter;
        for (std::uint64_t kk = k; kk < l.count && !std::isfinite(tr.trigger); ++kk) {
          for (const auto& p : ps) {
            const double w = p.pre - p.act;
            if (rem <= w) {
              tr.trigger = start + period * static_cast<double>(kk) + p.act + std::max(rem, 0.0);
              break;
            }
            rem -= w;
          }
        }
        if (!std::isfinite(tr.trigger))
          tr.trigger = start + period * static_cast<double>(l.count - 1) + ps.back().pre;
      }
      tr.cum_open += total;
      tr.last_pre = std::max(tr.last_pre, start + period * static_cast<double>(l.count - 1) + ps.back().pre);
    }
  }

  const TraceMap& trace() const { return trace_; }

 private:
  void piece(std::uint32_t bank, std::uint32_t row, Piece p) {
    auto& tr = trace_[{bank, row}];
    if (!std::isfinite(tr.first_act)) {
      tr.first_act = p.act;
      if (target_ <= 0.0) tr.trigger = p.act;
    }
    const double w = p.pre - p.act;
    if (!std::isfinite(tr.trigger) && tr.cum_open + w >= target_)
      tr.trigger = p.act + std::max(target_ - tr.cum_open, 0.0);
    tr.cum_open += w;
    tr.last_pre = std::max(tr.last_pre, p.pre);
  }

  double target_;
  TraceMap trace_;
  std::map<std::uint32_t, std::pair<std::uint32_t, double>> open_;
};

}  // namespace

CommandStream prvr_stream(const DramArray& array, const CommandStream& aggression, const RefreshPolicy& policy,
                          Duration duration) {
  policy.validate();
  TraceBuilder builder(policy.trigger_fraction * policy.t_first.count());
  for (const auto& seg : aggression.segments()) {
    if (const auto* c = std::get_if<Command>(&seg))
      builder.command(*c);
    else
      builder.loop(std::get<CommandLoop>(seg));
  }

  std::vector<CommandStream> parts;
  for (const auto& [key, tr] : builder.trace()) {
    const auto [bank, row] = key;
    const auto victims = prvr_victim_rows(array, row, policy.prvr_victims);
    if (!std::isfinite(tr.trigger)) continue;
    const double end = std::min(duration.count(), tr.last_pre + policy.t_first.count());
    if (tr.trigger >= end) continue;
    const double span = end - tr.trigger;
    const Duration step = policy.t_first / static_cast<double>(victims.size());

    CommandStream s;
    const auto passes = static_cast<std::uint64_t>(std::floor(span / policy.t_first.count()));
    if (passes > 0) {
      CommandLoop loop;
      loop.start = Duration{tr.trigger};
      loop.period = policy.t_first;
      loop.count = passes;
      for (std::size_t i = 0; i < victims.size(); ++i)
        loop.body.push_back(Command::ref_row(step * static_cast<double>(i), victims[i], bank));
      s.push_loop(std::move(loop));
    }
    const double tail = tr.trigger + policy.t_first.count() * static_cast<double>(passes);
    for (std::size_t i = 0; i < victims.size(); ++i) {
      const Duration t = Duration{tail} + step * static_cast<double>(i);
      if (t.count() >= end) break;
      s.push(Command::ref_row(t, victims[i], bank));
    }
    parts.push_back(std::move(s));
  }
  if (parts.size() == 1) return std::move(parts.front());
  std::vector<const CommandStream*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return merge_streams(ptrs);
}

RowFailureProfile worst_case_profile(const DramArray& array, ProfilingCondition condition,
                                     const Temperature& temperature) {
  const double scale = temperature.scale();
  RowFailureProfile out;
  out.banks = array.banks();
  out.rows = array.rows_per_bank();
  out.ns.assign(static_cast<std::size_t>(out.banks) * out.rows, kInfinity);
  for (std::uint32_t b = 0; b < out.banks; ++b)
    for (std::uint32_t r = 0; r < out.rows; ++r) {
      double m = kInfinity;
      for (std::uint32_t c = 0; c < array.columns(); ++c) {
        const auto& p = array.profile(b, r, c);
        const Duration t = condition == ProfilingCondition::retention_only ? p.t_flip_half : p.min_flip_time();
        m = std::min(m, t.count() * scale);
      }
      out.ns[static_cast<std::size_t>(b) * out.rows + r] = m;
    }
  return out;
}

RowFailureProfile worst_case_profile(const RetentionProfile& retention, std::uint32_t banks, std::uint32_t rows,
                                     std::uint32_t columns) {
  RowFailureProfile out;
  out.banks = banks;
  out.rows = rows;
  out.ns.assign(static_cast<std::size_t>(banks) * rows, kInfinity);
  for (std::uint32_t b = 0; b < banks; ++b)
    for (std::uint32_t r = 0; r < rows; ++r) {
      double m = kInfinity;
      for (std::uint32_t c = 0; c < columns; ++c) m = std::min(m, retention.at(b, r, c).count());
      out.ns[static_cast<std::size_t>(b) * rows + r] = m;
    }
  return out;
}

void classify_weak_rows(const RowFailureProfile& profile, Duration t_strong, WeakRowSet& into) {
  for (std::uint32_t b = 0; b < profile.banks; ++b)
    for (std::uint32_t r = 0; r < profile.rows; ++r)
      if (profile.at(b, r) <= t_strong) into.insert(b, r);
}

CommandStream raidr_stream(const DramArray& array, const RefreshPolicy& policy, Duration duration) {
  if (policy.kind != RefreshPolicy::Kind::raidr) throw ConfigError("raidr_stream needs a retention-aware policy");
  policy.validate();
  const std::uint64_t total = static_cast<std::uint64_t>(array.banks()) * array.rows_per_bank();
  std::vector<Command> cmds;
  for (std::uint32_t b = 0; b < array.banks(); ++b)
    for (std::uint32_t r = 0; r < array.rows_per_bank(); ++r) {
      const std::uint64_t idx = static_cast<std::uint64_t>(b) * array.rows_per_bank() + r;
      const Duration period = policy.weak->contains(b, r) ? policy.t_weak : policy.t_strong;
      const double phase = static_cast<double>(idx + 1) / static_cast<double>(total);
      for (std::uint64_t k = 0;; ++k) {
        const Duration t = period * (phase + static_cast<double>(k));
        if (!within(t, duration)) break;
        cmds.push_back(Command::ref_row(t, r, b));
      }
    }
  std::stable_sort(cmds.begin(), cmds.end(), [](const Command& a, const Command& b) { return a.at < b.at; });
  CommandStream out;
  for (const auto& c : cmds) out.push(c);
  return out;
}

namespace {

int merge_rank(CommandKind k) {
  switch (k) {
    case CommandKind::ref_all:
    case CommandKind::ref_row:
      return 0;
    case CommandKind::pre:
      return 1;
    case CommandKind::act:
      return 2;
    case CommandKind::idle:
      return 3;
  }
  return 3;
}

struct Pending {
  Command c;
  std::uint64_t order;

  bool before(const Pending& o) const {
    if (c.at != o.c.at) return c.at < o.c.at;
    const int ra = merge_rank(c.kind), rb = merge_rank(o.c.kind);
    if (ra != rb) return ra < rb;
    return order < o.order;
  }
};

}  // namespace

CommandStream merge_with_refresh(const CommandStream& aggression, const CommandStream& refresh,
                                 const TimingParams& timings, std::uint64_t* conflicts) {
  std::vector<Pending> input;
  std::uint64_t order = 0;
  refresh.for_each([&](const Command& c) { input.push_back({c, order++}); });
  aggression.for_each([&](const Command& c) { input.push_back({c, order++}); });
  std::stable_sort(input.begin(), input.end(), [](const Pending& a, const Pending& b) { return a.before(b); });

  struct BankState {
    bool open = false;
    std::uint32_t row = 0;
    bool reopen_pending = false;
  };
  std::map<std::uint32_t, BankState> banks;
  auto cmp = [](const Pending& a, const Pending& b) { return b.before(a); };
  std::priority_queue<Pending, std::vector<Pending>, decltype(cmp)> reopen(cmp);

  CommandStream out;
  std::uint64_t preempted = 0;
  auto preempt = [&](std::uint32_t bank, Duration t) {
    auto& st = banks[bank];
    if (!st.open) return;
    out.push(Command::pre(t, bank));
    st.open = false;
    st.reopen_pending = true;
    reopen.push({Command::act(t + timings.t_rp, st.row, bank), order++});
    ++preempted;
  };

  std::size_t next = 0;
  while (next < input.size() || !reopen.empty()) {
    Pending p;
    bool from_queue = false;
    if (next < input.size() && (reopen.empty() || input[next].before(reopen.top()))) {
      p = input[next++];
    } else {
      p = reopen.top();
      reopen.pop();
      from_queue = true;
    }
    const Command& c = p.c;
    if (from_queue) {
      auto& st = banks[c.bank];
      if (!st.reopen_pending) continue;
      st.reopen_pending = false;
      st.open = true;
      out.push(c);
      continue;
    }
    switch (c.kind) {
      case CommandKind::ref_all:
        for (auto& [b, st] : banks) preempt(b, c.at);
        out.push(c);
        break;
      case CommandKind::ref_row:
        preempt(c.bank, c.at);
        out.push(c);
        break;
      case CommandKind::act: {
        auto& st = banks[c.bank];
        if (st.open || st.reopen_pending)
          throw ProtocolError(fmt::format("ACT at {} ns to bank {} with a row already open", c.at.count(), c.bank));
        st.open = true;
        st.row = c.row;
        out.push(c);
        break;
      }
      case CommandKind::pre: {
        auto& st = banks[c.bank];
        if (st.reopen_pending) {
          st.reopen_pending = false;
          break;
        }
        st.open = false;
        out.push(c);
        break;
      }
      case CommandKind::idle:
        out.push(c);
        break;
    }
  }
  if (conflicts) *conflicts = preempted;
  return out;
}

PolicyVerification verify_policy(const DramArray& array, const CommandStream& aggression, const RefreshPolicy& policy,
                                 Duration duration, const TimingParams& timings, const Temperature& temperature) {
  policy.validate();
  CommandStream refresh;
  switch (policy.kind) {
    case RefreshPolicy::Kind::periodic:
      refresh = periodic_refresh_stream(policy, duration);
      break;
    case RefreshPolicy::Kind::prvr: {
      const auto background = periodic_refresh_stream(policy, duration);
      const auto victims = prvr_stream(array, aggression, policy, duration);
      refresh = merge_streams({&background, &victims});
      break;
    }
    case RefreshPolicy::Kind::raidr:
      refresh = raidr_stream(array, policy, duration);
      break;
  }

  PolicyVerification out;
  auto merged = merge_with_refresh(aggression, refresh, timings, &out.conflicts);
  if (merged.end() < duration) merged.push(Command::idle(merged.end(), duration - merged.end()));

  out.ref_all = refresh.count(CommandKind::ref_all);
  out.ref_row = refresh.count(CommandKind::ref_row);
  out.row_refreshes = static_cast<double>(out.ref_row) + static_cast<double>(out.ref_all) * array.banks() *
                                                            array.rows_per_bank() / policy.commands_per_window;

  auto copy = array;
  EngineOptions options;
  options.refresh_commands_per_window = policy.commands_per_window;
  out.flips = execute(copy, merged, timings, temperature, options);
  return out;
}

}  // namespace coldisturb
