#include "coldisturb/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace coldisturb {

void TimingParams::validate() const {
  const std::pair<const char*, Duration> all[] = {
      {"t_ras", t_ras}, {"t_rp", t_rp},   {"t_agg_on", t_agg_on},           {"t_refw", t_refw},
      {"t_refi", t_refi}, {"t_rfc", t_rfc}, {"t_row_refresh", t_row_refresh},
  };
  for (const auto& [name, d] : all)
    if (!(d.count() > 0.0) || !std::isfinite(d.count()))
      throw ConfigError(fmt::format("timing.{} must be positive (got {} ns)", name, d.count()));
  if (t_agg_on < t_ras)
    throw ConfigError(fmt::format("timing.t_agg_on ({} ns) must be >= t_ras ({} ns)", t_agg_on.count(),
                                  t_ras.count()));
}

const char* to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::act: return "ACT";
    case CommandKind::pre: return "PRE";
    case CommandKind::ref_all: return "REF";
    case CommandKind::ref_row: return "REF_ROW";
    case CommandKind::idle: return "IDLE";
  }
  return "?";
}

void CommandStream::push(const Command& c) {
  if (c.at < last_at_ || c.at < Duration{0}) ordered_ = false;
  if (!segments_.empty() && c.at < end_ && std::holds_alternative<CommandLoop>(segments_.back())) ordered_ = false;
  segments_.emplace_back(c);
  last_at_ = std::max(last_at_, c.at);
  end_ = std::max(end_, c.end());
}

void CommandStream::push_loop(CommandLoop loop) {
  if (loop.count == 0 || loop.body.empty()) return;
  if (!(loop.period.count() > 0.0)) throw InputError("loop period must be positive");
  for (std::size_t i = 0; i < loop.body.size(); ++i) {
    const auto& c = loop.body[i];
    if (c.at < Duration{0} || c.end() > loop.period) throw InputError("loop body command outside its period");
    if (i > 0 && c.at < loop.body[i - 1].at) throw InputError("loop body must be time-ordered");
  }
  if (loop.start < end_) ordered_ = false;
  last_at_ = std::max(last_at_, loop.end());
  end_ = std::max(end_, loop.end());
  segments_.emplace_back(std::move(loop));
}

void CommandStream::append(const CommandStream& other) {
  for (const auto& seg : other.segments_) {
    if (const auto* c = std::get_if<Command>(&seg))
      push(*c);
    else
      push_loop(std::get<CommandLoop>(seg));
  }
}

std::uint64_t CommandStream::size() const {
  std::uint64_t n = 0;
  for (const auto& seg : segments_) {
    if (std::holds_alternative<Command>(seg))
      ++n;
    else {
      const auto& l = std::get<CommandLoop>(seg);
      n += l.count * l.body.size();
    }
  }
  return n;
}

std::uint64_t CommandStream::count(CommandKind kind) const { return count_before(kind, infinite_duration()); }

std::uint64_t CommandStream::count_before(CommandKind kind, Duration horizon) const {
  std::uint64_t n = 0;
  for (const auto& seg : segments_) {
    if (const auto* c = std::get_if<Command>(&seg)) {
      if (c->kind == kind && c->at < horizon) ++n;
      continue;
    }
    const auto& l = std::get<CommandLoop>(seg);
    for (const auto& c : l.body) {
      if (c.kind != kind) continue;
      const Duration first = l.start + c.at;
      if (first >= horizon) continue;
      // iterations i with first + i*period < horizon
      const double span = (horizon - first).count() / l.period.count();
      std::uint64_t k = std::isinf(span) ? l.count : static_cast<std::uint64_t>(std::ceil(span));
      while (k > 0 && first + l.period * static_cast<double>(k - 1) >= horizon) --k;
      n += std::min<std::uint64_t>(k, l.count);
    }
  }
  return n;
}

void CommandStream::for_each(const std::function<void(const Command&)>& visit) const {
  for (const auto& seg : segments_) {
    if (const auto* c = std::get_if<Command>(&seg)) {
      visit(*c);
      continue;
    }
    const auto& l = std::get<CommandLoop>(seg);
    for (std::uint64_t i = 0; i < l.count; ++i) {
      const Duration base = l.start + l.period * static_cast<double>(i);
      for (Command c : l.body) {
        c.at = base + c.at;
        visit(c);
      }
    }
  }
}

std::vector<Command> CommandStream::expand() const {
  std::vector<Command> out;
  out.reserve(size());
  for_each([&](const Command& c) { out.push_back(c); });
  return out;
}

namespace {

int tie_rank(CommandKind k) {
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

}  // namespace

CommandStream merge_streams(const std::vector<const CommandStream*>& streams) {
  struct Tagged {
    Command c;
    std::size_t source;
    std::uint64_t seq;
  };
  std::vector<Tagged> all;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    std::uint64_t seq = 0;
    streams[s]->for_each([&](const Command& c) { all.push_back({c, s, seq++}); });
  }
  std::stable_sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) {
    if (a.c.at != b.c.at) return a.c.at < b.c.at;
    const int ra = tie_rank(a.c.kind), rb = tie_rank(b.c.kind);
    if (ra != rb) return ra < rb;
    if (a.source != b.source) return a.source < b.source;
    return a.seq < b.seq;
  });
  CommandStream out;
  for (const auto& t : all) out.push(t.c);
  return out;
}

}  // namespace coldisturb
