#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sigpca/cli.hpp"
#include "sigpca/error.hpp"
#include "support.hpp"

using namespace sigpca;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sigpca");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

nlohmann::json tiny_config(const fs::path& data, const fs::path& out) {
  const nlohmann::json net = {{"hidden", {16, 8}}, {"epochs", 15}, {"batch_size", 64}};
  return {{"data", {{"dir", data.string()}}},
          {"out", out.string()},
          {"x_percent", 20.0},
          {"basis", {{"base_knots_per_axis", 3}, {"n_resolutions", 2}}},
          {"reconstruction", net},
          {"corrective", net},
          {"evaluate", {{"max_pairs", 200}, {"spectrum_stations", 2}, {"n_quantiles", 20}}},
          {"sweep", {{"x", {20.0, 60.0}}, {"repeats", 2}}},
          {"synthetic",
           {{"samples", 10}, {"steps", 16}, {"grid_rows", 5}, {"grid_cols", 5}, {"n_stations", 6}}}};
}

fs::path write_config(const testing::TempDir& dir, const nlohmann::json& j, const std::string& name = "config.json") {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Relative path -> contents of every regular file under `root`.
std::map<std::string, std::string> snapshot(const fs::path& root, const std::set<std::string>& skip = {}) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (skip.count(e.path().filename().string())) continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

struct Workspace {
  testing::TempDir dir;
  fs::path data;
  fs::path config;

  Workspace() {
    data = dir / "data";
    config = write_config(dir, tiny_config(data, dir / "out"));
    const auto r = run_cli({"synth", "--config", config.string(), "--out", data.string()});
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("synth writes the dataset deterministically") {
  Workspace w;
  for (const char* sub : {"field", "stations", "truth"}) CHECK(fs::is_directory(w.data / sub));
  const auto first = snapshot(w.data);
  CHECK(!first.empty());
  const auto r = run_cli({"synth", "--config", w.config.string(), "--out", w.data.string()});
  CHECK(r.code == 0);
  CHECK(snapshot(w.data) == first);

  auto bad = tiny_config(w.data, w.dir / "out");
  bad["synthetic"]["grid_rows"] = 1;
  const auto bad_path = write_config(w.dir, bad, "bad.json");
  const auto e = run_cli({"synth", "--config", bad_path.string(), "--out", (w.dir / "bad").string()});
  CHECK(e.code == 2);
  CHECK(e.err.find("grid_rows") != std::string::npos);
}

TEST_CASE("configuration parsing") {
  auto j = tiny_config("d", "o");
  const auto cfg = cli::parse_config(j);
  CHECK(cfg.pipeline.x_percent == 20.0);
  CHECK(cfg.pipeline.reconstruction.hidden == std::vector<std::size_t>{16, 8});
  CHECK(cfg.synthetic.grid_rows == 5);
  CHECK(cfg.sweep_repeats == 2);
  const auto round = cli::parse_config(cli::to_json(cfg));
  CHECK(cli::to_json(round) == cli::to_json(cfg));

  j["signature"] = {{"windw_depth", 3}};
  try {
    cli::parse_config(j);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("signature.windw_depth") != std::string::npos);
  }

  testing::TempDir dir;
  const auto p = write_config(dir, j);
  const auto r = run_cli({"run", "--config", p.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("windw_depth") != std::string::npos);
  CHECK(run_cli({"frobnicate"}).code == 2);

  auto seeded = cfg;
  cli::apply_seed(seeded, 40);
  CHECK(seeded.pipeline.subset_seed == 40);
  CHECK(seeded.pipeline.init_seed == 41);
  CHECK(seeded.pipeline.shuffle_seed == 42);
}

TEST_CASE("fused run, cache reuse and variants") {
  Workspace w;
  const auto out = w.dir / "out";
  const auto r = run_cli({"run", "--config", w.config.string(), "--variant", "sigpca_dk", "--variant", "eof_dk"});
  REQUIRE(r.code == 0);
  const auto sig = out / "sigpca_dk", eof = out / "eof_dk";
  for (const auto& d : {sig, eof}) {
    CHECK(fs::exists(d / "report.json"));
    CHECK(fs::exists(d / "provenance.json"));
    CHECK(fs::is_directory(d / "corrected"));
    std::ifstream in(d / "report.json");
    const auto rep = nlohmann::json::parse(in);
    for (const char* key : {"summary", "stations", "correlations", "spectra", "qq", "seasons"}) CHECK(rep.contains(key));
  }
  CHECK(fs::is_directory(sig / "features"));
  CHECK(fs::is_directory(sig / "pca"));
  CHECK(fs::is_directory(eof / "eof"));
  CHECK(!fs::exists(eof / "features"));
  CHECK(r.err.find("sigpca_dk") != std::string::npos);
  CHECK(r.err.find("eof_dk") != std::string::npos);

  std::ifstream pin(sig / "provenance.json");
  const auto prov = nlohmann::json::parse(pin);
  for (const char* key : {"config", "config_hash", "seeds", "threads", "libraries"}) CHECK(prov.contains(key));

  const std::set<std::string> skip{"provenance.json"};
  const auto before = snapshot(sig, skip);
  const auto again = run_cli({"run", "--config", w.config.string()});
  REQUIRE(again.code == 0);
  CHECK(again.err.find("cached features match") != std::string::npos);
  CHECK(snapshot(sig, skip) == before);
}

TEST_CASE("staged execution matches the fused run") {
  Workspace w;
  auto fused_cfg = tiny_config(w.data, w.dir / "fused");
  auto staged_cfg = tiny_config(w.data, w.dir / "staged");
  const auto fused_path = write_config(w.dir, fused_cfg, "fused.json");
  const auto staged_path = write_config(w.dir, staged_cfg, "staged.json");
  REQUIRE(run_cli({"run", "--config", fused_path.string()}).code == 0);
  for (const char* stage : {"signatures", "reduce", "train-recon", "reconstruct", "train-correct", "correct", "evaluate"}) {
    const auto r = run_cli({stage, "--config", staged_path.string()});
    INFO(stage << ": " << r.err);
    REQUIRE(r.code == 0);
  }
  const std::set<std::string> skip{"provenance.json"};
  const auto a = snapshot(w.dir / "fused" / "sigpca_dk", skip);
  const auto b = snapshot(w.dir / "staged" / "sigpca_dk", skip);
  CHECK(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    INFO(name);
    REQUIRE(b.count(name) == 1);
    CHECK(b.at(name) == bytes);
  }
}

TEST_CASE("stages report missing prerequisites") {
  Workspace w;
  const auto r = run_cli({"evaluate", "--config", w.config.string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("corrected") != std::string::npos);
  CHECK(r.err.find("missing artifact") != std::string::npos);

  const auto t = run_cli({"train-recon", "--config", w.config.string()});
  CHECK(t.code == 3);
  CHECK(t.err.find("reduced") != std::string::npos);

  const auto d = run_cli({"run", "--config", w.config.string(), "--data", (w.dir / "nowhere").string()});
  CHECK(d.code == 3);
}

TEST_CASE("sweep writes one row per training percentage") {
  Workspace w;
  REQUIRE(run_cli({"signatures", "--config", w.config.string()}).code == 0);
  REQUIRE(run_cli({"reduce", "--config", w.config.string()}).code == 0);
  const auto r = run_cli({"sweep", "--config", w.config.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  std::ifstream in(w.dir / "out" / "sigpca_dk" / "sweep.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "x_percent,gridpoints,mean_pct_rmse,std_pct_rmse,run_1,run_2");
  CHECK(lines[1].rfind("20,5,", 0) == 0);
  CHECK(lines[2].rfind("60,15,", 0) == 0);
}
