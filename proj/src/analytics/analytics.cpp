#include "coldisturb/analytics.hpp"

#include <cmath>

#include <fmt/format.h>

namespace coldisturb {

void EnergyParams::validate() const {
  if (!(ref_row_joules >= 0.0) || (ref_all_joules && !(*ref_all_joules >= 0.0)) || !(idle_watts >= 0.0))
    throw ConfigError("energy parameters must be non-negative");
}

double throughput_loss(Duration t_rfc, Duration t_refi) {
  if (t_rfc.count() < 0.0) throw ModelDomainError("t_rfc must be non-negative");
  if (t_rfc.count() == 0.0) return 0.0;
  if (!(t_refi > t_rfc))
    throw ModelDomainError(fmt::format("t_refi ({} ns) must exceed t_rfc ({} ns)", t_refi.count(), t_rfc.count()));
  return t_rfc / t_refi;
}

double normalized_refresh_ops(double weak_fraction, Duration t_strong, Duration t_weak) {
  if (!(weak_fraction >= 0.0 && weak_fraction <= 1.0)) throw ModelDomainError("weak fraction must be in [0, 1]");
  if (!(t_weak.count() > 0.0) || t_strong < t_weak) throw ModelDomainError("need 0 < t_weak <= t_strong");
  return weak_fraction + (1.0 - weak_fraction) * (t_weak / t_strong);
}

double weak_fraction_for_reduction(double reduction, Duration t_long, Duration t_short, Duration t_weak) {
  if (t_short < t_weak || t_long <= t_short) throw ModelDomainError("need t_weak <= t_short < t_long");
  const double a = t_weak / t_long, b = t_weak / t_short, keep = 1.0 - reduction;
  // f + (1 - f) a = keep (f + (1 - f) b)
  const double denom = (1.0 - a) - keep * (1.0 - b);
  if (denom == 0.0) throw ModelDomainError("reduction not reachable");
  const double f = (keep * b - a) / denom;
  if (!(f >= 0.0 && f <= 1.0))
    throw ModelDomainError(fmt::format("a {:.4f} reduction needs weak fraction {:.4f} outside [0, 1]", reduction, f));
  return f;
}

RefreshCount count_refresh_ops(double weak_fraction, Duration t_strong, std::uint32_t rows, Duration span,
                               Duration t_weak) {
  if (!(weak_fraction >= 0.0 && weak_fraction <= 1.0)) throw ModelDomainError("weak fraction must be in [0, 1]");
  if (rows == 0) throw InputError("row count must be positive");
  auto count = [&](Duration period, double phase) {
    std::uint64_t n = 0;
    for (std::uint64_t k = 0;; ++k) {
      const Duration t = period * (phase + static_cast<double>(k));
      if (t.count() > span.count() * (1.0 + 1e-12)) break;
      ++n;
    }
    return n;
  };
  RefreshCount out;
  for (std::uint32_t i = 0; i < rows; ++i) {
    const bool weak = std::floor((i + 1) * weak_fraction) > std::floor(i * weak_fraction);
    const double phase = static_cast<double>(i + 1) / rows;
    out.row_refreshes += count(weak ? t_weak : t_strong, phase);
    out.baseline += count(t_weak, phase);
  }
  return out;
}

void PrvrAssumptions::validate() const {
  if (banks == 0 || rows_per_bank == 0 || commands_per_window == 0)
    throw ConfigError("banks, rows_per_bank and commands_per_window must be positive");
  if (!(t_first.count() > 0.0) || !(default_window.count() > 0.0) || !(fast_window.count() > 0.0))
    throw ConfigError("t_first and refresh windows must be positive");
  if (victims > rows_per_bank) throw InputError("more victims than rows per bank");
}

namespace {

PrvrComparison finish(double fixed_loss, double prvr_loss, double fixed_w, double prvr_w, double idle) {
  PrvrComparison c;
  c.fixed_loss = fixed_loss;
  c.prvr_loss = prvr_loss;
  c.throughput_reduction = 1.0 - prvr_loss / fixed_loss;
  c.fixed_refresh_watts = fixed_w;
  c.prvr_refresh_watts = prvr_w;
  c.energy_reduction = fixed_w > 0.0 ? 1.0 - prvr_w / fixed_w : 0.0;
  c.idle_watts = idle;
  return c;
}

double ref_all_energy(const PrvrAssumptions& a, const EnergyParams& e) {
  if (e.ref_all_joules) return *e.ref_all_joules;
  return static_cast<double>(a.banks) * a.rows_per_bank / a.commands_per_window * e.ref_row_joules;
}

}  // namespace

PrvrComparison prvr_vs_fixed_rate(const PrvrAssumptions& a, const TimingParams& timings, const EnergyParams& energy) {
  a.validate();
  energy.validate();
  const Duration fast_refi = a.fast_window / static_cast<double>(a.commands_per_window);
  const Duration slow_refi = a.default_window / static_cast<double>(a.commands_per_window);
  const double fixed_loss = throughput_loss(timings.t_rfc, fast_refi);
  const double prvr_loss =
      throughput_loss(timings.t_rfc, slow_refi) + a.victims * (timings.t_row_refresh / a.t_first);

  const double e_all = ref_all_energy(a, energy);
  const double per_second = 1e9;
  const double fixed_w = per_second / fast_refi.count() * e_all;
  const double prvr_w = per_second / slow_refi.count() * e_all +
                        static_cast<double>(a.banks) * a.victims * (per_second / a.t_first.count()) *
                            energy.ref_row_joules;
  return finish(fixed_loss, prvr_loss, fixed_w, prvr_w, energy.idle_watts);
}

PrvrComparison prvr_vs_fixed_rate_counted(const PrvrAssumptions& a, const TimingParams& timings,
                                          const EnergyParams& energy, Duration span) {
  a.validate();
  energy.validate();
  if (!(span.count() > 0.0)) throw InputError("span must be positive");
  auto events = [&](Duration period) {
    std::uint64_t n = 0;
    while ((period * static_cast<double>(n + 1)).count() <= span.count() * (1.0 + 1e-12)) ++n;
    return n;
  };
  const auto fast_refs = events(a.fast_window / static_cast<double>(a.commands_per_window));
  const auto slow_refs = events(a.default_window / static_cast<double>(a.commands_per_window));
  // Each bank's PRVR stream: one REF_row every t_first / N while its aggressor stays hot.
  const std::uint64_t victim_refs = a.victims == 0 ? 0 : events(a.t_first / static_cast<double>(a.victims));

  const double s = span.count();
  const double fixed_loss = static_cast<double>(fast_refs) * timings.t_rfc.count() / s;
  const double prvr_loss = static_cast<double>(slow_refs) * timings.t_rfc.count() / s +
                           static_cast<double>(victim_refs) * timings.t_row_refresh.count() / s;
  const double e_all = ref_all_energy(a, energy);
  const double to_watts = 1e9 / s;
  const double fixed_w = static_cast<double>(fast_refs) * e_all * to_watts;
  const double prvr_w = (static_cast<double>(slow_refs) * e_all +
                         static_cast<double>(victim_refs) * a.banks * energy.ref_row_joules) *
                        to_watts;
  return finish(fixed_loss, prvr_loss, fixed_w, prvr_w, energy.idle_watts);
}

Duration row_refresh_latency(std::uint64_t rows, Duration per_row) { return per_row * static_cast<double>(rows); }

Duration drfm_latency(std::uint32_t radius) {
  switch (radius) {
    case 2: return nanoseconds(280);
    case 4: return nanoseconds(560);
    default: return row_refresh_latency(2ULL * radius);
  }
}

}  // namespace coldisturb
