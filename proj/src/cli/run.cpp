#include "coldisturb/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "coldisturb/random.hpp"

namespace coldisturb {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string schema_comment(const std::string& schema, const std::string& figure) {
  return fmt::format("schema=coldisturb.{}.v1 figure={}", schema, figure);
}

class OutputDir {
 public:
  OutputDir(const RunConfig& cfg, std::string subcommand) : cfg_(cfg), sub_(std::move(subcommand)) {
    dir_ = fs::path(cfg.out_dir) / sub_;
    fs::create_directories(dir_);
  }

  void csv(const std::string& file, const std::string& schema, const std::string& figure, const CsvTable& table,
           std::vector<std::string> extra = {}) {
    std::vector<std::string> comments{schema_comment(schema, figure), fmt::format("seed={}", cfg_.seed)};
    comments.insert(comments.end(), extra.begin(), extra.end());
    write_csv_atomic((dir_ / file).string(), comments, table);
    files_.push_back(file);
  }

  std::vector<std::string> finish() {
    json m;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["subcommand"] = sub_;
    m["seed"] = cfg_.seed;
    m["config_hash"] = config_hash(cfg_.resolved);
    m["outputs"] = files_;
    m["config"] = cfg_.resolved;
    write_file_atomic((dir_ / "manifest.json").string(), m.dump(2) + "\n");
    auto out = files_;
    out.push_back("manifest.json");
    return out;
  }

 private:
  const RunConfig& cfg_;
  std::string sub_;
  fs::path dir_;
  std::vector<std::string> files_;
};

DramArray build_array(const RunConfig& cfg) {
  return DramArray::build(cfg.geometry, cfg.profiles, split_seed(cfg.seed, "array"));
}

std::string ms(Duration d) { return fmt_num(d.count() * 1e-6); }

std::vector<std::string> run_characterize(const RunConfig& cfg) {
  OutputDir out(cfg, "characterize");
  const auto array = build_array(cfg);
  const auto& cc = cfg.characterize;
  SweepOptions opt;
  opt.metrics = cc.metrics;
  opt.base = cc.base;
  opt.temperature_profile = cfg.temperature.profile;
  opt.exclusion = cc.exclusion;
  opt.retention_runs = cc.retention_runs;
  opt.threads = cfg.threads;
  const auto rows = run_sweep(array, cc.grid, opt);
  for (const auto metric : cc.metrics) {
    const std::string name = to_string(metric);
    out.csv(name + ".csv", "characterize." + name, name + "-sweep", sweep_table(rows, {metric}));
  }
  return out.finish();
}

std::vector<std::string> run_reverse(const RunConfig& cfg) {
  OutputDir out(cfg, "reverse-subarrays");
  const auto array = build_array(cfg);
  const auto found = reverse_engineer_subarrays(array, cfg.reverse.bank, cfg.reverse.mode);
  CsvTable t{{"subarray", "first_row", "end_row", "rows", "configured_first_row", "configured_end_row", "match"}, {}};
  const auto n = std::max<std::size_t>(found.size(), array.subarrays());
  bool all = found.size() == array.subarrays();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row{fmt_num(std::uint64_t{i})};
    if (i < found.size()) {
      row.insert(row.end(), {fmt_num(std::uint64_t{found[i].first}), fmt_num(std::uint64_t{found[i].last}),
                             fmt_num(std::uint64_t{found[i].size()})});
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    bool match = false;
    if (i < array.subarrays()) {
      const auto truth = array.subarray_rows(static_cast<std::uint32_t>(i));
      row.insert(row.end(), {fmt_num(std::uint64_t{truth.first}), fmt_num(std::uint64_t{truth.last})});
      match = i < found.size() && found[i] == truth;
    } else {
      row.insert(row.end(), {"", ""});
    }
    all = all && match;
    row.push_back(match ? "1" : "0");
    t.add(std::move(row));
  }
  out.csv("subarrays.csv", "reverse-subarrays", "subarray-boundaries", t,
          {fmt::format("bank={} all_match={}", cfg.reverse.bank, all ? 1 : 0)});
  return out.finish();
}

std::vector<std::string> run_mitigate(const RunConfig& cfg) {
  OutputDir out(cfg, "mitigate");
  const auto& mc = cfg.mitigate;
  auto array = build_array(cfg);
  prepare_experiment(array, mc.aggression);
  const auto aggs = aggressor_rows(array, mc.aggression);
  const auto aggression =
      build_access_pattern(array, {mc.aggression.access, mc.aggression.bank, aggs}, cfg.timings, mc.duration);

  struct Entry {
    std::string name;
    RefreshPolicy policy;
    std::uint64_t weak_rows = 0;
  };
  std::vector<Entry> entries;
  for (const auto w : mc.periodic_windows)
    entries.push_back({fmt::format("periodic-{}ms", fmt_num(w.count() * 1e-6)), RefreshPolicy::periodic(w)});

  std::string t_first_source = "configured";
  Duration t_first{};
  if (mc.prvr_t_first) {
    t_first = *mc.prvr_t_first;
  } else {
    std::optional<Duration> measured;
    const auto s = array.subarray_of(aggs[0]);
    for (std::uint32_t sub = s == 0 ? 0 : s - 1; sub <= std::min(s + 1, array.subarrays() - 1); ++sub) {
      const auto r = bisect_time_to_first_flip(array, mc.aggression, sub, mc.duration);
      if (r.time_to_first_flip && (!measured || *r.time_to_first_flip < *measured)) measured = r.time_to_first_flip;
    }
    t_first_source = measured ? fmt::format("measured {} ms", ms(*measured)) : "no flip within duration";
    t_first = measured.value_or(mc.duration) * (mc.prvr_t_first_margin / (1.0 + mc.prvr_trigger_fraction));
  }
  auto prvr = RefreshPolicy::prvr(mc.prvr_victims, t_first, mc.prvr_background_window);
  prvr.trigger_fraction = mc.prvr_trigger_fraction;
  entries.push_back({"prvr", prvr});

  const auto profile = worst_case_profile(array, mc.raidr_condition, cfg.temperature);
  auto bitmap = std::make_shared<WeakRowSet>(WeakRowSet::bitmap(array.banks(), array.rows_per_bank()));
  auto bloom = std::make_shared<WeakRowSet>(WeakRowSet::bloom(mc.bloom_bits, mc.bloom_hashes));
  classify_weak_rows(profile, mc.raidr_t_strong, *bitmap);
  classify_weak_rows(profile, mc.raidr_t_strong, *bloom);
  entries.push_back({"raidr-bitmap", RefreshPolicy::raidr(bitmap, mc.raidr_t_weak, mc.raidr_t_strong),
                     bitmap->inserted()});
  entries.push_back({"raidr-bloom", RefreshPolicy::raidr(bloom, mc.raidr_t_weak, mc.raidr_t_strong),
                     bloom->inserted()});

  CsvTable summary{{"policy", "window_ms", "t_first_ms", "weak_rows", "flips", "column_disturb_flips",
                    "retention_flips", "rowhammer_flips", "ref_all", "ref_row", "row_refreshes",
                    "refresh_busy_fraction", "conflicts"},
                   {}};
  CsvTable violations{{"policy", "time_ns", "bank", "subarray", "row", "column", "direction", "cause"}, {}};
  for (const auto& e : entries) {
    const auto v = verify_policy(array, aggression, e.policy, mc.duration, cfg.timings, cfg.temperature);
    const double busy =
        (static_cast<double>(v.ref_all) * cfg.timings.t_rfc.count() +
         static_cast<double>(v.ref_row) * cfg.timings.t_row_refresh.count()) /
        mc.duration.count();
    const bool is_prvr = e.policy.kind == RefreshPolicy::Kind::prvr;
    const bool is_raidr = e.policy.kind == RefreshPolicy::Kind::raidr;
    summary.add({e.name, is_raidr ? "" : ms(e.policy.window), is_prvr ? ms(e.policy.t_first) : "",
                 is_raidr ? fmt_num(e.weak_rows) : "", fmt_num(std::uint64_t{v.flips.size()}),
                 fmt_num(std::uint64_t{v.flips.count(FlipCause::column_disturb)}),
                 fmt_num(std::uint64_t{v.flips.count(FlipCause::retention_baseline)}),
                 fmt_num(std::uint64_t{v.flips.count(FlipCause::rowhammer_rowpress)}), fmt_num(v.ref_all),
                 fmt_num(v.ref_row), fmt_num(v.row_refreshes), fmt_num(busy), fmt_num(v.conflicts)});
    for (const auto& f : v.flips.flips)
      violations.add({e.name, fmt_num(f.time.count()), fmt_num(std::uint64_t{f.where.bank}),
                      fmt_num(std::uint64_t{f.where.subarray}), fmt_num(std::uint64_t{f.where.row}),
                      fmt_num(std::uint64_t{f.where.column}), to_string(f.direction), to_string(f.cause)});
  }
  const std::vector<std::string> notes{
      fmt::format("duration_ms={} aggressor_row={} prvr_t_first={}", ms(mc.duration), aggs[0], t_first_source)};
  out.csv("mitigate.csv", "mitigate", "refresh-policy-comparison", summary, notes);
  out.csv("violations.csv", "mitigate.violations", "refresh-policy-violations", violations, notes);
  return out.finish();
}

std::vector<std::string> run_analytics(const RunConfig& cfg) {
  OutputDir out(cfg, "analytics");
  const auto& ac = cfg.analytics;
  CsvTable grid{{"weak_fraction", "t_strong_ms", "t_weak_ms", "normalized_refresh_ops", "counted_row_refreshes",
                 "counted_baseline", "counted_normalized", "abs_difference"},
                {}};
  for (const auto f : ac.weak_fractions) {
    for (const auto t : ac.t_strong) {
      const double model = normalized_refresh_ops(f, t, ac.t_weak);
      const auto counted = count_refresh_ops(f, t, ac.count_rows, ac.count_span, ac.t_weak);
      grid.add({fmt_num(f), ms(t), ms(ac.t_weak), fmt_num(model), fmt_num(counted.row_refreshes),
                fmt_num(counted.baseline), fmt_num(counted.normalized()),
                fmt_num(std::abs(counted.normalized() - model))});
    }
  }
  out.csv("refresh_ops.csv", "analytics.refresh-ops", "normalized-refresh-ops", grid,
          {fmt::format("count_rows={} count_span_ms={}", ac.count_rows, ms(ac.count_span))});

  CsvTable costs{{"quantity", "model", "value", "unit"}, {}};
  auto add = [&](const std::string& q, const std::string& model, double v, const std::string& unit) {
    costs.add({q, model, fmt_num(v), unit});
  };
  const auto refi = [&](Duration window) { return window / static_cast<double>(ac.prvr.commands_per_window); };
  add("throughput_loss_default_window", "closed-form", throughput_loss(cfg.timings.t_rfc, refi(ac.prvr.default_window)),
      "fraction");
  add("throughput_loss_fast_window", "closed-form", throughput_loss(cfg.timings.t_rfc, refi(ac.prvr.fast_window)),
      "fraction");
  const auto closed = prvr_vs_fixed_rate(ac.prvr, cfg.timings, ac.energy);
  const auto counted = prvr_vs_fixed_rate_counted(ac.prvr, cfg.timings, ac.energy, ac.prvr_count_span);
  for (const auto& [model, c] : {std::pair{"closed-form", closed}, std::pair{"counted", counted}}) {
    add("fixed_rate_throughput_loss", model, c.fixed_loss, "fraction");
    add("prvr_throughput_loss", model, c.prvr_loss, "fraction");
    add("throughput_loss_reduction", model, c.throughput_reduction, "fraction");
    add("fixed_rate_refresh_power", model, c.fixed_refresh_watts, "W");
    add("prvr_refresh_power", model, c.prvr_refresh_watts, "W");
    add("refresh_energy_reduction", model, c.energy_reduction, "fraction");
    add("idle_power", model, c.idle_watts, "W");
  }
  add("prvr_victim_refresh_latency", "closed-form",
      row_refresh_latency(ac.prvr.victims, cfg.timings.t_row_refresh).count() * 1e-3, "us");
  add("drfm_latency_radius_2", "closed-form", drfm_latency(2).count(), "ns");
  add("drfm_latency_radius_4", "closed-form", drfm_latency(4).count(), "ns");
  try {
    add("weak_fraction_for_target_reduction", "closed-form",
        weak_fraction_for_reduction(ac.target_reduction, milliseconds(1024), milliseconds(128), ac.t_weak), "fraction");
  } catch (const ModelDomainError&) {
    costs.add({"weak_fraction_for_target_reduction", "closed-form", "none", "fraction"});
  }
  out.csv("refresh_costs.csv", "analytics.refresh-costs", "refresh-throughput-energy", costs,
          {fmt::format("target_reduction={} prvr_count_span_ms={}", fmt_num(ac.target_reduction),
                       ms(ac.prvr_count_span))});
  return out.finish();
}

LinearCode code_by_name(const std::string& name) {
  if (name == "hamming-7-4") return LinearCode::hamming_7_4();
  if (name == "secded-72-64") return LinearCode::secded_72_64();
  return LinearCode::sec_136_128();
}

std::vector<std::string> run_ecc(const RunConfig& cfg) {
  OutputDir out(cfg, "ecc");
  const auto& ec = cfg.ecc;
  std::vector<LinearCode> codes;
  for (const auto& name : ec.codes) codes.push_back(code_by_name(name));
  if (ec.custom_h) codes.push_back(LinearCode::load(*ec.custom_h));

  CsvTable t{{"code", "n", "k", "overhead", "weight", "mode", "patterns", "miscorrected", "detected", "corrected",
              "undetected", "miscorrection_rate", "seed"},
             {}};
  for (const auto& code : codes) {
    for (const auto w : ec.weights) {
      if (w > code.n()) continue;
      MiscorrectionResult r;
      if (binomial(code.n(), w) <= ec.exhaustive_cap) {
        r = miscorrection_exhaustive(code, w, ec.exhaustive_cap);
      } else {
        r = miscorrection_monte_carlo(code, w, ec.trials,
                                      split_seed(cfg.seed, fmt::format("ecc/{}/w{}", code.name(), w)));
      }
      t.add({code.name(), fmt_num(std::uint64_t{code.n()}), fmt_num(std::uint64_t{code.k()}),
             fmt_num(overhead(code)), fmt_num(std::uint64_t{w}),
             r.mode == MiscorrectionMode::exhaustive ? "exhaustive" : "monte-carlo", fmt_num(r.patterns),
             fmt_num(r.miscorrected), fmt_num(r.detected), fmt_num(r.corrected), fmt_num(r.undetected),
             fmt_num(r.rate()), r.mode == MiscorrectionMode::exhaustive ? "" : fmt_num(r.seed)});
    }
  }
  out.csv("miscorrection.csv", "ecc.miscorrection", "miscorrection-rate", t);

  if (ec.histogram) {
    const auto array = build_array(cfg);
    const auto& spec = ec.histogram_experiment;
    const auto retention = profile_retention(array, spec.refresh_interval, spec.temperature, ec.retention_runs);
    const auto report = run_experiment(array, spec, &retention, cfg.characterize.exclusion);
    const auto h = chunk_histogram(report, ec.chunk_bits);
    CsvTable hist{{"flips_per_chunk", "chunks"}, {}};
    for (std::uint32_t i = 0; i <= ChunkHistogram::kTopBin; ++i)
      hist.add({i == ChunkHistogram::kTopBin ? fmt::format("{}+", i) : std::to_string(i), fmt_num(h.bins[i])});
    out.csv("chunk_histogram.csv", "ecc.chunk-histogram", "flips-per-ecc-chunk", hist,
            {fmt::format("chunk_bits={} chunks={} beyond_secded={} refresh_interval_ms={}", h.chunk_bits, h.chunks(),
                         h.beyond_secded, ms(spec.refresh_interval))});
  }
  return out.finish();
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"characterize", "reverse-subarrays", "mitigate", "analytics", "ecc"};
  return names;
}

std::vector<std::string> run_subcommand(const std::string& subcommand, const RunConfig& cfg) {
  if (subcommand == "characterize") return run_characterize(cfg);
  if (subcommand == "reverse-subarrays") return run_reverse(cfg);
  if (subcommand == "mitigate") return run_mitigate(cfg);
  if (subcommand == "analytics") return run_analytics(cfg);
  if (subcommand == "ecc") return run_ecc(cfg);
  throw InputError(fmt::format("unknown subcommand '{}'", subcommand));
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Column-disturbance DRAM simulator and experiment runner", kToolName};
  app.set_version_flag("--version", kToolVersion);
  std::string config_path, out_dir, preset_name;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides config 'out')");
  app.add_option("--seed", seed, "master seed (overrides config 'seed')");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--preset", preset_name, "bundled preset applied before --config")
      ->check(CLI::IsMember(preset_names()));
  app.require_subcommand(1, 1);
  app.fallthrough();
  const std::map<std::string, std::string> help{
      {"characterize", "time to first flip, blast radius and flipped-cell fraction over a sweep"},
      {"reverse-subarrays", "recover subarray boundaries with RowClone probes"},
      {"mitigate", "compare periodic refresh, PRVR and RAIDR against one aggression stream"},
      {"analytics", "refresh-operation grid and throughput/energy table"},
      {"ecc", "miscorrection rates and per-chunk flip histogram"}};
  for (const auto& name : subcommand_names()) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    std::vector<ConfigSource> layers;
    if (!preset_name.empty()) layers.push_back(preset(preset_name));
    if (!config_path.empty()) layers.push_back(read_config_file(config_path));
    auto cfg = load_config(layers);
    if (seed) {
      cfg.seed = *seed;
      cfg.resolved["seed"] = *seed;
    }
    if (threads) {
      cfg.threads = *threads;
      cfg.resolved["threads"] = *threads;
    }
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
      cfg.resolved["out"] = out_dir;
    }
    const auto files = run_subcommand(sub, cfg);
    for (const auto& f : files) out << (fs::path(cfg.out_dir) / sub / f).string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace coldisturb
