#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gengap/error.hpp"
#include "gengap/experiment.hpp"
#include "gengap/io.hpp"

using namespace gengap;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gengap_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(GENGAP_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json minimal(const std::string& kind) { return {{"experiment", kind}, {"seed", 1}}; }

}  // namespace

TEST_CASE("validate reports every violation") {
  SUBCASE("well-formed shipped configs are clean") {
    for (const auto& entry : fs::directory_iterator(GENGAP_SOURCE_DIR "/configs")) {
      CAPTURE(entry.path().string());
      CHECK(validate(parse_config_text(slurp(entry.path()))).empty());
    }
    CHECK(validate(minimal("gap-curve")).empty());
  }
  SUBCASE("k above n_train is a degenerate partition") {
    json c = minimal("gap-curve");
    c["partition"] = {{"k", 17}};
    CHECK(mentions(validate(c), "degenerate partition"));
  }
  SUBCASE("sigma_min >= sigma_max is a schedule violation") {
    json c = minimal("gap-curve");
    c["schedule"] = {{"sigma_min", 28}, {"sigma_max", 28}};
    CHECK(mentions(validate(c), "/schedule"));
  }
  SUBCASE("several problems are listed together") {
    json c = {{"experiment", "delta-sweep"}, {"bogus", 1}, {"noise_draws", 0}};
    const auto errors = validate(c);
    CHECK(mentions(errors, "/seed"));
    CHECK(mentions(errors, "/bogus: unknown field"));
    CHECK(mentions(errors, "/noise_draws"));
    CHECK(mentions(errors, "/sweep/delta"));
  }
  SUBCASE("kind-specific requirements") {
    CHECK(mentions(validate(minimal("guidance-sweep")), "/auxiliary"));
    CHECK(mentions(validate(minimal("flow-field")), "/sweep/sigma"));
    CHECK(mentions(validate(minimal("gap-grid")), "/sigma"));
    CHECK(mentions(validate(minimal("granularity-sweep")), "/sweep/k"));
    CHECK(mentions(validate(minimal("nonsense")), "unknown experiment"));
    json c = minimal("gap-curve");
    c["predictor"] = {{"kind", "conditional"}, {"class_id", 3}};
    CHECK(mentions(validate(c), "/predictor"));
    json t = minimal("gap-curve");
    t["dataset"] = {{"radius", "twelve"}};
    CHECK(mentions(validate(t), "/dataset/radius: wrong type"));
  }
  SUBCASE("infeasible protocol plan") {
    json c = minimal("fd-protocol");
    c["dataset"] = {{"mode", "random"}, {"n_per_split", 32}, {"seed", 7}};
    c["partition"] = {{"k", 4}};
    CHECK(mentions(validate(c), "/fd_protocol"));
  }
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse_config_text("{\n  \"seed\": 1,\n  \"experiment\": ]\n}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("line 3:", 0) == 0);
  }
}

TEST_CASE("delta sweep writes one curve per delta, a summary and a manifest") {
  const fs::path out = scratch("delta");
  json c = minimal("delta-sweep");
  c["sweep"] = {{"delta", {2.0, 1.6, 1.2}}};
  c["noise_draws"] = 16;
  const auto m = run(c, out);
  for (const char* f : {"gap_curve_delta_2.csv", "gap_curve_delta_1.6.csv", "gap_curve_delta_1.2.csv",
                        "summary.json", "manifest.json"})
    CHECK(fs::exists(out / f));
  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["entries"].size() == 3);
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["config"] == c);
  CHECK(manifest["files"].size() == m.files.size());
  for (const auto& f : m.files) {
    const std::string bytes = slurp(out / f.path);
    CHECK(f.hash == hex64(fnv1a(bytes)));
    CHECK(f.bytes == bytes.size());
  }
  fs::remove_all(out);
}

TEST_CASE("flow field writes one field per sigma plus trajectories") {
  const fs::path out = scratch("flow");
  json c = minimal("flow-field");
  c["sweep"] = {{"sigma", {28, 2.8, 0.63}}};
  c["grid"] = {{"resolution", 5}};
  c["trajectories"] = 3;
  run(c, out);
  for (const char* f : {"flow_field_sigma_28.csv", "flow_field_sigma_2.8.csv", "flow_field_sigma_0.63.csv"}) {
    const std::string body = slurp(out / f);
    CHECK(body.rfind("x,y,pred_x,pred_y,error\n", 0) == 0);
    CHECK(std::count(body.begin(), body.end(), '\n') == 26);
  }
  CHECK(fs::exists(out / "trajectories.csv"));
  fs::remove_all(out);
}

TEST_CASE("guidance w=0 reproduces the unguided run bitwise") {
  const fs::path a = scratch("guid"), b = scratch("plain");
  json g = minimal("guidance-sweep");
  g["predictor"] = {{"kind", "error_prone"}, {"delta", 0.8}};
  g["auxiliary"] = {{"kind", "error_prone"}, {"delta", 2.0}};
  g["sweep"] = {{"w", {0, 1}}};
  g["noise_draws"] = 16;
  json d = minimal("delta-sweep");
  d["sweep"] = {{"delta", {0.8}}};
  d["noise_draws"] = 16;
  run(g, a);
  run(d, b);
  CHECK(slurp(a / "gap_curve_w_0.csv") == slurp(b / "gap_curve_delta_0.8.csv"));
  CHECK(slurp(a / "gap_curve_w_1.csv") != slurp(b / "gap_curve_delta_0.8.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("rerunning the echoed config reproduces every data file") {
  for (const char* kind : {"ladder", "truncation-compare", "fd-protocol", "gap-grid"}) {
    CAPTURE(kind);
    json c = minimal(kind);
    c["noise_draws"] = 8;
    c["trajectories"] = 32;
    c["sigma"] = 1.1;
    c["grid"] = {{"resolution", 10}};
    if (std::string(kind) == "fd-protocol") {
      c.erase("sigma");
      c["partition"] = {{"k", 2}};
      c["fd_protocol"] = {{"n_subsets", 3}, {"subset_size", 8}, {"n_generated", 32}};
    }
    const fs::path first = scratch("rerun1"), second = scratch("rerun2");
    const auto m1 = run(c, first);
    const json echoed = json::parse(slurp(first / "manifest.json"))["config"];
    const auto m2 = run(echoed, second);
    REQUIRE(m1.files.size() == m2.files.size());
    for (std::size_t i = 0; i < m1.files.size(); ++i) {
      CHECK(m1.files[i].hash == m2.files[i].hash);
      CHECK(slurp(first / m1.files[i].path) == slurp(second / m2.files[i].path));
    }
    fs::remove_all(first);
    fs::remove_all(second);
  }
}

TEST_CASE("output directory resolution") {
  std::vector<std::string> errors;
  auto c = parse_config(minimal("ladder"), errors);
  CHECK(resolve_output_dir(c, std::string("explicit")) == fs::path("explicit"));
  ::unsetenv("GENGAP_OUTPUT_ROOT");
  CHECK(resolve_output_dir(c, std::nullopt) == fs::path("runs") / "ladder-1");
  ::setenv("GENGAP_OUTPUT_ROOT", "/tmp/root", 1);
  CHECK(resolve_output_dir(c, std::nullopt) == fs::path("/tmp/root") / "ladder-1");
  ::unsetenv("GENGAP_OUTPUT_ROOT");
  c.output = "from-config";
  CHECK(resolve_output_dir(c, std::nullopt) == fs::path("from-config"));
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return (dir / name).string();
  };
  const auto good = write("good.json", R"({"experiment":"ladder","seed":1,"noise_draws":4,"trajectories":8,"sigma":1})");
  const auto syntax = write("syntax.json", R"({"experiment": "ladder",,})");
  const auto semantic = write("semantic.json", R"({"experiment":"ladder","seed":1,"partition":{"k":99}})");
  const auto diverge = write("diverge.json", R"({"experiment":"flow-field","seed":1,"trajectories":1,
    "grid":{"resolution":1},"sweep":{"sigma":[1]},
    "predictor":{"kind":"guided","weight":1e308,"primary":{"kind":"error_prone","delta":0.5},
                 "auxiliary":{"kind":"error_prone","delta":2}}})");

  CHECK(cli("validate " + good) == 0);
  CHECK(cli("validate " + syntax) == 1);
  CHECK(cli("validate " + semantic) == 1);
  CHECK(cli("validate " + (dir / "missing.json").string()) == 1);
  CHECK(cli("run " + good + " --out " + (dir / "run").string() + " --seed 5 --threads 2") == 0);
  CHECK(json::parse(slurp(dir / "run" / "manifest.json"))["config"]["seed"] == 5);
  CHECK(cli("run " + diverge + " --out " + (dir / "div").string()) == 2);
  fs::remove_all(dir);
}
