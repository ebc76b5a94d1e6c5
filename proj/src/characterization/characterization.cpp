#include "coldisturb/characterization.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace coldisturb {

const char* to_string(AggressorLocation loc) {
  switch (loc) {
    case AggressorLocation::beginning: return "beginning";
    case AggressorLocation::middle: return "middle";
    case AggressorLocation::end: return "end";
    case AggressorLocation::explicit_row: return "explicit";
  }
  return "?";
}

AggressorLocation parse_aggressor_location(const std::string& text) {
  if (text == "beginning") return AggressorLocation::beginning;
  if (text == "middle") return AggressorLocation::middle;
  if (text == "end") return AggressorLocation::end;
  if (text == "explicit") return AggressorLocation::explicit_row;
  throw ConfigError(fmt::format("unknown aggressor location '{}' (beginning, middle, end, explicit)", text));
}

const char* to_string(Metric m) {
  switch (m) {
    case Metric::time_to_first_flip: return "time_to_first_flip";
    case Metric::blast_radius: return "blast_radius";
    case Metric::fraction_cells: return "fraction_cells";
  }
  return "?";
}

Metric parse_metric(const std::string& text) {
  if (text == "time_to_first_flip") return Metric::time_to_first_flip;
  if (text == "blast_radius") return Metric::blast_radius;
  if (text == "fraction_cells") return Metric::fraction_cells;
  throw ConfigError(fmt::format("unknown metric '{}' (time_to_first_flip, blast_radius, fraction_cells)", text));
}

void ExperimentSpec::validate(const DramArray& array) const {
  if (bank >= array.banks()) throw ConfigError(fmt::format("experiment bank {} out of range", bank));
  if (location != AggressorLocation::explicit_row && aggressor_subarray >= array.subarrays())
    throw ConfigError(fmt::format("aggressor subarray {} out of range", aggressor_subarray));
  if (location == AggressorLocation::explicit_row && explicit_row >= array.rows_per_bank())
    throw ConfigError(fmt::format("aggressor row {} out of range", explicit_row));
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
  if (!(refresh_interval.count() > 0.0)) throw ConfigError("refresh interval must be positive");
  timings.validate();
}

std::vector<std::uint32_t> aggressor_rows(const DramArray& array, const ExperimentSpec& spec) {
  spec.validate(array);
  std::uint32_t row = 0;
  RowRange sub;
  if (spec.location == AggressorLocation::explicit_row) {
    row = spec.explicit_row;
    sub = array.subarray_rows(array.subarray_of(row));
  } else {
    sub = array.subarray_rows(spec.aggressor_subarray);
    switch (spec.location) {
      case AggressorLocation::beginning: row = sub.first; break;
      case AggressorLocation::middle: row = sub.first + sub.size() / 2; break;
      default: row = sub.last - 1; break;
    }
  }
  if (spec.access == AccessKind::single_aggressor) return {row};
  if (sub.size() < 3) throw ConfigError("two-aggressor pattern needs subarrays of at least 3 rows");
  const std::uint32_t second = row + 2 < sub.last ? row + 2 : row - 2;
  return {row, second};
}

void prepare_experiment(DramArray& array, const ExperimentSpec& spec) {
  const auto aggs = aggressor_rows(array, spec);
  array.init_region(RowRange{0, array.rows_per_bank()}, spec.victims(), spec.bank);
  array.init_region(RowRange{aggs[0], aggs[0] + 1}, spec.aggressor_pattern, spec.bank);
  if (aggs.size() > 1) array.init_region(RowRange{aggs[1], aggs[1] + 1}, spec.aggressor_pattern.negated(), spec.bank);
}

namespace {

bool has_disturb_flip(const BitflipReport& report, const ExperimentSpec& spec, std::uint32_t subarray,
                      const std::vector<std::uint32_t>& aggs) {
  for (const auto& f : report.flips) {
    if (f.where.bank != spec.bank || f.where.subarray != subarray) continue;
    if (f.cause == FlipCause::rowhammer_rowpress) continue;
    if (std::find(aggs.begin(), aggs.end(), f.where.row) != aggs.end()) continue;
    return true;
  }
  return false;
}

}  // namespace

SearchResult bisect_time_to_first_flip(const DramArray& array, const ExperimentSpec& spec, std::uint32_t subarray,
                                       Duration cap) {
  spec.validate(array);
  if (subarray >= array.subarrays()) throw ConfigError(fmt::format("subarray {} out of range", subarray));
  const auto aggs = aggressor_rows(array, spec);
  AccessPattern pattern{spec.access, spec.bank, aggs};
  const Duration period = AccessPattern::activation_period(spec.timings);
  const auto max_acts = static_cast<std::uint64_t>(std::floor(cap / period * (1.0 + 1e-12)));
  EngineOptions opt;
  opt.hammer_radius = spec.hammer_radius;

  DramArray work = array;
  SearchResult best{subarray, std::nullopt, 0};
  auto probe = [&](std::uint64_t acts) {
    prepare_experiment(work, spec);
    auto stream = build_access_pattern_by_count(work, pattern, spec.timings, acts);
    const auto report = execute(work, stream, spec.timings, spec.temperature, opt);
    ++best.iterations;
    return has_disturb_flip(report, spec, subarray, aggs);
  };

  for (std::uint32_t rep = 0; rep < spec.repeats; ++rep) {
    if (max_acts == 0 || !probe(max_acts)) continue;
    std::uint64_t lo = 0, hi = max_acts;  // no flip at lo, flip at hi
    while (hi - lo > 1 && static_cast<double>(hi - lo) >= 0.01 * static_cast<double>(hi)) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      (probe(mid) ? hi : lo) = mid;
    }
    const Duration t = period * static_cast<double>(hi);
    if (!best.time_to_first_flip || t < *best.time_to_first_flip) best.time_to_first_flip = t;
  }
  return best;
}

std::uint32_t blast_radius(const BitflipReport& report, std::uint32_t subarray, std::uint32_t bank) {
  std::set<std::uint32_t> rows;
  for (const auto& f : report.flips)
    if (f.where.bank == bank && f.where.subarray == subarray) rows.insert(f.where.row);
  return static_cast<std::uint32_t>(rows.size());
}

double fraction_cells_with_flips(const BitflipReport& report, const DramArray& array, std::uint32_t subarray,
                                 std::uint32_t bank) {
  const RowRange sub = array.subarray_rows(subarray);
  std::set<std::pair<std::uint32_t, std::uint32_t>> cells;
  for (const auto& f : report.flips)
    if (f.where.bank == bank && f.where.subarray == subarray) cells.emplace(f.where.row, f.where.column);
  return static_cast<double>(cells.size()) / (static_cast<double>(sub.size()) * array.columns());
}

std::vector<RowRange> reverse_engineer_subarrays(const DramArray& array, std::uint32_t bank, ProbeMode mode) {
  DramArray work = array;
  const std::uint32_t rows = work.rows_per_bank(), cols = work.columns();
  std::vector<std::uint8_t> probe(cols), inverse(cols);
  for (std::uint32_t c = 0; c < cols; ++c) {
    probe[c] = static_cast<std::uint8_t>((c * 7 + 3) % 5 < 2);
    inverse[c] = probe[c] ^ 1u;
  }
  probe[0] = 1;
  inverse[0] = 0;
  auto same = [&](std::uint32_t a, std::uint32_t b) {
    work.write_row(bank, a, probe);
    work.write_row(bank, b, inverse);
    rowclone(work, bank, a, b);
    return work.read_row(bank, b) == probe;
  };

  std::vector<RowRange> out;
  if (mode == ProbeMode::adjacent_pairs) {
    std::uint32_t first = 0;
    for (std::uint32_t r = 0; r + 1 < rows; ++r)
      if (!same(r, r + 1)) {
        out.push_back({first, r + 1});
        first = r + 1;
      }
    out.push_back({first, rows});
    return out;
  }

  std::vector<std::uint32_t> parent(rows);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::uint32_t a = 0; a < rows; ++a)
    for (std::uint32_t b = a + 1; b < rows; ++b)
      if (find(a) != find(b) && same(a, b)) parent[find(b)] = find(a);
  std::uint32_t first = 0;
  for (std::uint32_t r = 1; r <= rows; ++r)
    if (r == rows || find(r) != find(first)) {
      for (std::uint32_t x = r; x < rows; ++x)
        if (find(x) == find(first)) throw Error("rowclone groups are not contiguous");
      out.push_back({first, r});
      first = r;
    }
  return out;
}

RetentionProfile::RetentionProfile(std::uint32_t banks, std::uint32_t rows, std::uint32_t columns)
    : banks_(banks), rows_(rows), columns_(columns),
      ns_(static_cast<std::size_t>(banks) * rows * columns, kInfinity) {}

Duration RetentionProfile::at(std::uint32_t bank, std::uint32_t row, std::uint32_t column) const {
  if (bank >= banks_ || row >= rows_ || column >= columns_) return infinite_duration();
  return Duration{ns_[(static_cast<std::size_t>(bank) * rows_ + row) * columns_ + column]};
}

void RetentionProfile::observe(std::uint32_t bank, std::uint32_t row, std::uint32_t column, Duration t) {
  if (bank >= banks_ || row >= rows_ || column >= columns_) throw InputError("retention observation out of range");
  auto& v = ns_[(static_cast<std::size_t>(bank) * rows_ + row) * columns_ + column];
  v = std::min(v, t.count());
}

std::size_t RetentionProfile::finite_count() const {
  return static_cast<std::size_t>(std::count_if(ns_.begin(), ns_.end(), [](double v) { return v < kInfinity; }));
}

void RetentionProfile::save(const std::string& path, const DramArray& array) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(fmt::format("cannot write retention profile {}", path));
  f << fmt::format("# retention-profile {} {} {}\n", banks_, rows_, columns_);
  for (std::uint32_t b = 0; b < banks_; ++b)
    for (std::uint32_t r = 0; r < rows_; ++r)
      for (std::uint32_t c = 0; c < columns_; ++c) {
        const double v = at(b, r, c).count();
        if (v < kInfinity) f << fmt::format("{} {} {} {} {}\n", b, array.subarray_of(r), r, c, v);
      }
  if (!f) throw Error(fmt::format("write to {} failed", path));
}

RetentionProfile RetentionProfile::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError(fmt::format("cannot read retention profile {}", path));
  std::string line;
  if (!std::getline(f, line)) throw InputError(fmt::format("{}: empty retention profile", path));
  std::istringstream head(line);
  std::string hash, tag;
  std::uint32_t banks = 0, rows = 0, cols = 0;
  if (!(head >> hash >> tag >> banks >> rows >> cols) || hash != "#" || tag != "retention-profile")
    throw InputError(fmt::format("{}:1: bad retention profile header", path));
  RetentionProfile p(banks, rows, cols);
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream in(line);
    std::uint32_t b, s, r, c;
    double ns;
    if (!(in >> b >> s >> r >> c >> ns) || b >= banks || r >= rows || c >= cols)
      throw InputError(fmt::format("{}:{}: malformed retention entry", path, lineno));
    (void)s;
    p.observe(b, r, c, Duration{ns});
  }
  return p;
}

RetentionProfile profile_retention(const DramArray& array, Duration window, const Temperature& temperature,
                                   std::uint32_t runs) {
  if (runs == 0) throw ConfigError("retention runs must be >= 1");
  RetentionProfile profile(array.banks(), array.rows_per_bank(), array.columns());
  DramArray work = array;
  const auto& patterns = profiling_patterns();
  CommandStream idle;
  idle.push(Command::idle(Duration{0}, window));
  for (std::uint32_t i = 0; i < runs; ++i) {
    DataPattern p = patterns[i % patterns.size()];
    if ((i / patterns.size()) % 2 == 1) p = p.negated();
    work.init_all(p);
    const auto report = execute(work, idle, {}, temperature);
    for (const auto& f : report.flips) profile.observe(f.where.bank, f.where.row, f.where.column, f.time);
  }
  return profile;
}

BitflipReport filter_known_failures(const BitflipReport& report, const RetentionProfile& retention,
                                    const std::vector<std::uint32_t>& aggressors, Duration refresh_interval,
                                    std::uint32_t exclusion, std::uint32_t bank) {
  const std::uint32_t half = exclusion / 2;
  BitflipReport out;
  for (const auto& f : report.flips) {
    bool near = false;
    if (f.where.bank == bank)
      for (auto a : aggressors) {
        const std::uint32_t d = f.where.row > a ? f.where.row - a : a - f.where.row;
        if (d <= half) near = true;
      }
    if (near) continue;
    if (retention.at(f.where.bank, f.where.row, f.where.column) <= refresh_interval) continue;
    out.flips.push_back(f);
  }
  return out;
}

BitflipReport run_experiment(const DramArray& array, const ExperimentSpec& spec, const RetentionProfile* retention,
                             std::uint32_t exclusion) {
  const auto aggs = aggressor_rows(array, spec);
  DramArray work = array;
  prepare_experiment(work, spec);
  EngineOptions opt;
  opt.hammer_radius = spec.hammer_radius;
  const auto stream =
      build_access_pattern(work, {spec.access, spec.bank, aggs}, spec.timings, spec.refresh_interval);
  const auto report = execute(work, stream, spec.timings, spec.temperature, opt);
  const RetentionProfile none;
  return filter_known_failures(report, retention ? *retention : none, aggs, spec.refresh_interval, exclusion,
                               spec.bank);
}

std::size_t SweepGrid::size() const {
  return temperatures.size() * t_agg_on.size() * patterns.size() * access.size() * locations.size() *
         refresh_intervals.size();
}

namespace {

SweepPoint point_at(const SweepGrid& g, std::size_t i) {
  SweepPoint p;
  p.refresh_interval = g.refresh_intervals[i % g.refresh_intervals.size()];
  i /= g.refresh_intervals.size();
  p.location = g.locations[i % g.locations.size()];
  i /= g.locations.size();
  p.access = g.access[i % g.access.size()];
  i /= g.access.size();
  p.pattern = g.patterns[i % g.patterns.size()];
  i /= g.patterns.size();
  p.t_agg_on = g.t_agg_on[i % g.t_agg_on.size()];
  i /= g.t_agg_on.size();
  p.temperature = g.temperatures[i];
  return p;
}

SweepRow run_point(const DramArray& array, const SweepPoint& point, const SweepOptions& opt) {
  ExperimentSpec spec = opt.base;
  spec.temperature = Temperature{point.temperature, opt.temperature_profile};
  spec.timings.t_agg_on = point.t_agg_on;
  spec.aggressor_pattern = point.pattern;
  spec.victim_pattern.reset();
  spec.access = point.access;
  spec.location = point.location;
  spec.refresh_interval = point.refresh_interval;
  spec.validate(array);

  const auto aggs = aggressor_rows(array, spec);
  const std::uint32_t s = array.subarray_of(aggs[0]);
  SweepRow row;
  row.point = point;
  row.aggressor_subarray = s;
  for (std::uint32_t k = (s == 0 ? 0 : s - 1); k <= s + 1 && k < array.subarrays(); ++k) row.subarrays.push_back(k);

  const auto wants = [&](Metric m) { return std::find(opt.metrics.begin(), opt.metrics.end(), m) != opt.metrics.end(); };
  if (wants(Metric::time_to_first_flip))
    for (auto k : row.subarrays) row.first_flip.push_back(bisect_time_to_first_flip(array, spec, k));
  if (wants(Metric::blast_radius) || wants(Metric::fraction_cells)) {
    const auto retention = profile_retention(array, spec.refresh_interval, spec.temperature, opt.retention_runs);
    const auto report = run_experiment(array, spec, &retention, opt.exclusion);
    for (auto k : row.subarrays) {
      if (wants(Metric::blast_radius)) row.blast.push_back(blast_radius(report, k, spec.bank));
      if (wants(Metric::fraction_cells)) row.fraction.push_back(fraction_cells_with_flips(report, array, k, spec.bank));
    }
  }
  return row;
}

}  // namespace

std::vector<SweepRow> run_sweep(const DramArray& array, const SweepGrid& grid, const SweepOptions& options) {
  const std::size_t n = grid.size();
  if (n == 0) throw ConfigError("sweep grid is empty");
  if (options.metrics.empty()) throw ConfigError("sweep needs at least one metric");
  std::vector<SweepRow> rows(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        rows[i] = run_point(array, point_at(grid, i), options);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

CsvTable sweep_table(const std::vector<SweepRow>& rows, const std::vector<Metric>& metrics) {
  CsvTable t;
  t.header = {"temperature_c", "t_agg_on_ns", "aggressor_pattern", "access", "location", "refresh_interval_ms",
              "aggressor_subarray"};
  for (auto m : metrics)
    for (const char* o : {"prev", "agg", "next"}) t.header.push_back(fmt::format("{}_{}", to_string(m), o));

  for (const auto& r : rows) {
    std::vector<std::string> cells{fmt_num(r.point.temperature),
                                   fmt_num(r.point.t_agg_on.count()),
                                   r.point.pattern.name(),
                                   to_string(r.point.access),
                                   to_string(r.point.location),
                                   fmt_num(to_ms(r.point.refresh_interval)),
                                   fmt_num(std::uint64_t{r.aggressor_subarray})};
    for (auto m : metrics)
      for (int off = -1; off <= 1; ++off) {
        const auto it = std::find(r.subarrays.begin(), r.subarrays.end(),
                                  static_cast<std::uint32_t>(static_cast<int>(r.aggressor_subarray) + off));
        if (it == r.subarrays.end()) {
          cells.emplace_back();
          continue;
        }
        const auto k = static_cast<std::size_t>(it - r.subarrays.begin());
        switch (m) {
          case Metric::time_to_first_flip:
            cells.push_back(r.first_flip[k].sentinel() ? "none" : fmt_num(r.first_flip[k].time_to_first_flip->count()));
            break;
          case Metric::blast_radius:
            cells.push_back(fmt_num(std::uint64_t{r.blast[k]}));
            break;
          case Metric::fraction_cells:
            cells.push_back(fmt_num(r.fraction[k]));
            break;
        }
      }
    t.add(std::move(cells));
  }
  return t;
}

}  // namespace coldisturb
