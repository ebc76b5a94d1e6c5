#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "coldisturb/cli.hpp"

using namespace coldisturb;
namespace fs = std::filesystem;

namespace {

const char* kGeometry = R"("geometry": {"subarrays_per_bank": 3, "rows_per_subarray": 16, "columns_per_row": 8})";

std::string config_error(const std::string& text, const std::string& name = "cfg.json") {
  try {
    load_config({{name, text}});
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / fmt::format("coldisturb-test-cli-{}", name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "coldisturb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) cells.push_back(c);
  return cells;
}

}  // namespace

TEST_CASE("key lines map dotted paths and array elements") {
  const KeyLines k("{\n  \"a\": 1,\n  \"b\": {\n    \"c\": [\n      5,\n      6\n    ]\n  }\n}\n");
  CHECK(k.line("a") == 2);
  CHECK(k.line("b") == 3);
  CHECK(k.line("b.c") == 4);
  CHECK(k.line("b.c[0]") == 5);
  CHECK(k.line("b.c[1]") == 6);
  CHECK(k.line("b.missing") == 3);
  CHECK(k.line("nothing") == 1);
}

TEST_CASE("unknown keys are rejected with their line") {
  const auto top = config_error(fmt::format("{{\n  {},\n  \"bogus\": 1\n}}\n", kGeometry));
  CHECK(top.find("cfg.json:3:") == 0);
  CHECK(top.find("bogus") != std::string::npos);

  const auto nested = config_error(
      fmt::format("{{\n  {},\n  \"mitigate\": {{\n    \"prvr\": {{\n      \"victim\": 3\n    }}\n  }}\n}}\n", kGeometry));
  CHECK(nested.find("cfg.json:5:") == 0);
  CHECK(nested.find("victim") != std::string::npos);
  CHECK(nested.find("mitigate.prvr") != std::string::npos);
}

TEST_CASE("missing geometry names the key") {
  const auto msg = config_error("{\n  \"seed\": 3\n}\n");
  CHECK(msg.find("geometry") != std::string::npos);
  CHECK(msg.find("missing") != std::string::npos);
}

TEST_CASE("type, value and syntax errors are line anchored") {
  const auto type = config_error(fmt::format("{{\n  {},\n  \"seed\": \"x\"\n}}\n", kGeometry));
  CHECK(type.find("cfg.json:3:") == 0);
  CHECK(type.find("seed") != std::string::npos);

  const auto value = config_error(
      "{\n  \"geometry\": {\n    \"subarrays_per_bank\": 3,\n    \"columns_per_row\": 7\n  }\n}\n");
  CHECK(value.find("cfg.json:") == 0);
  CHECK(value.find("columns_per_row") != std::string::npos);

  const auto element = config_error(
      fmt::format("{{\n  {},\n  \"analytics\": {{\n    \"weak_fractions\": [\n      0.1,\n      2.0\n    ]\n  }}\n}}\n",
                  kGeometry));
  CHECK(element.find("cfg.json:6:") == 0);

  const auto syntax = config_error("{\n  \"geometry\": {},\n  \"seed\": ,\n}\n");
  CHECK(syntax.find("cfg.json:3:") == 0);
}

TEST_CASE("layers apply in order and the hash follows the resolved config") {
  const auto a = load_config({preset("quick")});
  const auto b = load_config({preset("quick"), {"user.json", "{\"seed\": 99}"}});
  CHECK(a.seed == 1);
  CHECK(b.seed == 99);
  CHECK(b.geometry.rows_per_subarray == 32);
  CHECK(config_hash(a.resolved) != config_hash(b.resolved));
  CHECK(config_hash(a.resolved) == config_hash(load_config({preset("quick")}).resolved));
  CHECK(config_hash(a.resolved).size() == 16);
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("refresh-ops preset grid matches the closed form at every cell") {
  const auto dir = scratch("grid");
  REQUIRE(run({"analytics", "--preset", "paper-fig-refresh-ops", "--out", dir.string()}) == 0);
  std::ifstream in(dir / "analytics" / "refresh_ops.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# schema=coldisturb.analytics.refresh-ops.v1", 0) == 0);
  while (in.peek() == '#') std::getline(in, line);
  std::getline(in, line);
  CHECK(line.rfind("weak_fraction,t_strong_ms,t_weak_ms,normalized_refresh_ops", 0) == 0);
  int cells = 0;
  while (std::getline(in, line)) {
    const auto c = split(line);
    REQUIRE(c.size() >= 4);
    const double f = std::stod(c[0]), t = std::stod(c[1]), w = std::stod(c[2]);
    // Weak rows every 64 ms, the rest every T: f + (1 - f) * 64 / T.
    const double expected = f * 1.0 + (1.0 - f) * (w / t);
    CHECK(std::stod(c[3]) == doctest::Approx(expected).epsilon(1e-12));
    ++cells;
  }
  CHECK(cells == 13 * 4);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << "{\n  \"seed\": 3\n}\n";
  std::string err;
  CHECK(run({"analytics", "--config", cfg.string(), "--out", dir.string()}, &err) == 2);
  CHECK(err.find("geometry") != std::string::npos);
  CHECK(run({"nonsense"}) == 2);
  CHECK(run({"analytics", "--preset", "nope"}) == 2);
  CHECK(run({"--help"}) == 0);
  std::ofstream(cfg) << "{\n  \"geometry\": {\"rows_per_subarray\": 16, \"columns_per_row\": 8},\n"
                        "  \"ecc\": {\"custom_h\": \"/nonexistent/h.txt\"}\n}\n";
  CHECK(run({"ecc", "--config", cfg.string(), "--out", dir.string()}, &err) != 0);
  fs::remove_all(dir);
}

TEST_CASE("seed override and manifest") {
  const auto dir = scratch("manifest");
  REQUIRE(run({"reverse-subarrays", "--preset", "quick", "--seed", "7", "--out", dir.string()}) == 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "reverse-subarrays" / "manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["seed"] == 7);
  CHECK(manifest["tool"] == kToolName);
  CHECK(manifest["version"] == kToolVersion);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest["outputs"][0] == "subarrays.csv");
  const auto csv = slurp(dir / "reverse-subarrays" / "subarrays.csv");
  CHECK(csv.find("all_match=1") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("analytics output is byte identical across runs") {
  const auto a = scratch("det-a"), b = scratch("det-b");
  REQUIRE(run({"analytics", "--preset", "quick", "--out", a.string()}) == 0);
  REQUIRE(run({"analytics", "--preset", "quick", "--out", b.string()}) == 0);
  for (const auto* f : {"refresh_ops.csv", "refresh_costs.csv"})
    CHECK(slurp(a / "analytics" / f) == slurp(b / "analytics" / f));
  fs::remove_all(a);
  fs::remove_all(b);
}
