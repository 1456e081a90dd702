#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "levisqueeze/cli.hpp"
#include "levisqueeze/experiments.hpp"
#include "json.hpp"

using namespace levisqueeze;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "levisqueeze");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("levisqueeze_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& body) {
  const auto p = dir / name;
  std::ofstream(p) << body;
  return p.string();
}

std::vector<fs::path> files_in(const fs::path& dir) {
  std::vector<fs::path> v;
  for (const auto& e : fs::directory_iterator(dir)) v.push_back(e.path());
  std::sort(v.begin(), v.end());
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kFig3Natural = R"(mode = "natural"
[coefficients]
a1 = 1.0
a2 = 1.0
d1 = 0.5
d2 = 0.5
[measurement]
b = 3.0
[protocol]
cycles = 10
)";

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--format", "xml", "coeffs"}).code == kExitUsage);
  CHECK(cli({"nonsense"}).code == kExitUsage);
  const auto dir = scratch("usage");
  const auto r = cli({"--out", dir.string(), "figure", "fig9"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("fig9") != std::string::npos);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"--version"}).out == std::string(kToolVersion) + "\n");
}

TEST_CASE("malformed config names the key") {
  const auto dir = scratch("badkey");
  const auto path = write_file(dir, "bad.toml", "mode = \"natural\"\n[coefficients]\na1 = 1.0\nbogus = 2\n");
  const auto r = cli({"--config", path, "coeffs"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("coefficients.bogus") != std::string::npos);

  const auto conflict = cli({"--config", path, "--mode", "si", "coeffs"});
  CHECK(conflict.code == kExitUsage);

  const auto syntax = write_file(dir, "syntax.toml", "mode = \n");
  CHECK(cli({"--config", syntax, "coeffs"}).code == kExitUsage);
  CHECK(cli({"--config", (dir / "missing.toml").string(), "coeffs"}).code == kExitUsage);
  const auto od = write_file(dir, "od.toml", "mode = \"natural\"\n[coefficients]\na1 = 0.0\na2 = 8.0\n");
  CHECK(cli({"--config", od, "--out", dir.string(), "protocol"}).code == kExitUsage);
}

TEST_CASE("coeffs") {
  const auto r = cli({"--mode", "si", "coeffs", "--json"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["mode"] == "si");
  // eta defaults to 0, so there is no backaction.
  CHECK(r.out.find("\"b\": 0.0") != std::string::npos);
  const auto table = cli({"--mode", "si", "coeffs"});
  CHECK(table.out.find("d2 breakdown") != std::string::npos);
  CHECK(cli({"coeffs"}).code == kExitOk);
}

TEST_CASE("protocol") {
  const auto dir = scratch("protocol");
  const auto cfg = write_file(dir, "fig3.toml", kFig3Natural);
  const auto out = dir / "out";
  const auto r = cli({"--config", cfg, "--out", out.string(), "protocol"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("squeezed") != std::string::npos);
  REQUIRE(files_in(out).size() == 1);
  CHECK(files_in(out)[0].filename().string().rfind("protocol_", 0) == 0);

  const auto undamped = write_file(dir, "undamped.toml",
                                   "mode = \"natural\"\n[coefficients]\na1 = 0.0\na2 = 0.0\nd1 = 0.5\nd2 = 0.5\n"
                                   "[measurement]\nb = 0.0\n");
  const auto u = cli({"--config", undamped, "--out", (dir / "u").string(), "protocol"});
  CHECK(u.code == kExitDivergent);
  CHECK(u.err.find("diverges") != std::string::npos);

  // Zero cycles: only the equilibrated state.
  std::string body = kFig3Natural;
  body.replace(body.find("cycles = 10"), 11, "cycles = 0");
  const auto zc = write_file(dir, "zero.toml", body);
  const auto zd = dir / "zero";
  REQUIRE(cli({"--config", zc, "--out", zd.string(), "protocol"}).code == kExitOk);
  const auto text = slurp(files_in(zd)[0]);
  // Header, the pre-equilibration state, the equilibrated state.
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.find("\r\n4.000000000000e+00,0.000000000000e+00,") != std::string::npos);
}

TEST_CASE("propagate and sweep") {
  const auto dir = scratch("prop");
  const auto cfg = write_file(dir, "fig3.toml", kFig3Natural);
  const auto r = cli({"--config", cfg, "--out", dir.string(), "--seed", "5", "propagate", "--time", "1",
                      "--samples", "10", "--trajectory"});
  REQUIRE(r.code == kExitOk);
  bool traj = false;
  for (const auto& f : files_in(dir))
    if (f.filename().string().rfind("trajectory_", 0) == 0) {
      traj = true;
      CHECK(slurp(f).rfind("time,mean_x,mean_p,sxx,sxp,spp,seed", 0) == 0);
    }
  CHECK(traj);

  const auto s = cli({"--out", (dir / "sw").string(), "sweep", "--var", "a1", "--grid", "0.3:1.0:8", "--fixed",
                      "a2=1", "d1=2", "d2=2", "b=2", "--outputs", "protocol_pp,sr_pp"});
  CHECK(s.code == kExitOk);
  CHECK(cli({"--out", (dir / "sw").string(), "sweep", "--var", "a1", "--grid", "1:1:3"}).code == kExitUsage);
  CHECK(cli({"--out", (dir / "sw").string(), "sweep", "--var", "a1", "--grid", "0.3:1:4", "--fixed", "a2"}).code ==
        kExitUsage);
}

TEST_CASE("figures are byte-identical across runs") {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  REQUIRE(cli({"--seed", "7", "--out", a.string(), "figure", "scenario"}).code == kExitOk);
  REQUIRE(cli({"--seed", "7", "--out", b.string(), "figure", "scenario"}).code == kExitOk);
  const auto fa = files_in(a);
  const auto fb = files_in(b);
  REQUIRE(fa.size() == 1);
  REQUIRE(fb.size() == 1);
  CHECK(fa[0].filename() == fb[0].filename());
  CHECK(slurp(fa[0]) == slurp(fb[0]));
  const auto r = cli({"--seed", "7", "--out", a.string(), "figure", "scenario"});
  CHECK(r.out.find("8.392e-05 nm^2") != std::string::npos);
}
