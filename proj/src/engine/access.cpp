#include <cmath>
#include <fmt/format.h>

#include "coldisturb/engine.hpp"

namespace coldisturb {

const char* to_string(AccessKind kind) {
  return kind == AccessKind::single_aggressor ? "single" : "two";
}

AccessKind parse_access_kind(const std::string& text) {
  if (text == "single" || text == "single-aggressor") return AccessKind::single_aggressor;
  if (text == "two" || text == "two-aggressor") return AccessKind::two_aggressor;
  throw ConfigError(fmt::format("unknown access pattern '{}' (expected single or two)", text));
}

Duration AccessPattern::activation_period(const TimingParams& timings) { return timings.t_agg_on + timings.t_rp; }

namespace {

void check_pattern(const DramArray& array, const AccessPattern& p) {
  if (p.bank >= array.banks()) throw InputError(fmt::format("bank {} out of range", p.bank));
  const std::size_t want = p.kind == AccessKind::single_aggressor ? 1 : 2;
  if (p.aggressors.size() != want)
    throw InputError(fmt::format("{}-aggressor pattern needs {} row(s), got {}", to_string(p.kind), want,
                                 p.aggressors.size()));
  for (auto r : p.aggressors) array.check_row(p.bank, r);
  if (want == 2) {
    if (p.aggressors[0] == p.aggressors[1]) throw InputError("two-aggressor rows must be distinct");
    if (array.subarray_of(p.aggressors[0]) != array.subarray_of(p.aggressors[1]))
      throw InputError(fmt::format("aggressors {} and {} are in different subarrays", p.aggressors[0],
                                   p.aggressors[1]));
  }
}

}  // namespace

CommandStream build_access_pattern_by_count(const DramArray& array, const AccessPattern& pattern,
                                            const TimingParams& timings, std::uint64_t activations) {
  check_pattern(array, pattern);
  timings.validate();
  CommandStream s;
  if (activations == 0) return s;
  const Duration p = AccessPattern::activation_period(timings);
  const Duration on = timings.t_agg_on;
  const auto bank = pattern.bank;
  if (pattern.kind == AccessKind::single_aggressor) {
    s.push_loop(CommandLoop{Duration{0}, p, activations,
                            {Command::act(Duration{0}, pattern.aggressors[0], bank), Command::pre(on, bank)}});
    return s;
  }
  const std::uint64_t pairs = activations / 2;
  if (pairs > 0) {
    s.push_loop(CommandLoop{Duration{0}, 2.0 * p, pairs,
                            {Command::act(Duration{0}, pattern.aggressors[0], bank), Command::pre(on, bank),
                             Command::act(p, pattern.aggressors[1], bank), Command::pre(p + on, bank)}});
  }
  if (activations % 2 == 1) {
    const Duration t = 2.0 * p * static_cast<double>(pairs);
    s.push(Command::act(t, pattern.aggressors[0], bank));
    s.push(Command::pre(t + on, bank));
  }
  return s;
}

CommandStream build_access_pattern(const DramArray& array, const AccessPattern& pattern,
                                   const TimingParams& timings, Duration total_duration) {
  check_pattern(array, pattern);
  if (total_duration.count() < 0.0) throw InputError("total duration must be non-negative");
  if (total_duration.count() == 0.0) return {};
  const Duration p = AccessPattern::activation_period(timings);
  const double ratio = total_duration / p;
  auto n = static_cast<std::uint64_t>(std::floor(ratio * (1.0 + 1e-12)));
  CommandStream s = build_access_pattern_by_count(array, pattern, timings, n);
  const Duration used = p * static_cast<double>(n);
  if (used < total_duration) s.push(Command::idle(used, total_duration - used));
  return s;
}

}  // namespace coldisturb
