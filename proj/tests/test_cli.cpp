#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cascade/cli.hpp"
#include "cascade/csvio.hpp"
#include "cascade/model.hpp"

using namespace cascade;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"cascade"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

const char* kConfig = R"(
n = 1
horizon = 1.0
x0 = [1.0]
mc.num_paths = 400
mc.dt = 0.02
mc.seed = 99
mc.max_picard = 4

[regime.""]
1.mu = -0.3
1.nu = 0.25
1.v = 0
1.gamma = 1
)";

}  // namespace

TEST_CASE("solve then evaluate round-trips through the output directory") {
    TempDir dir("cascade_cli_solve");
    const std::string cfg = dir / "problem.cfg";
    write_text_file(cfg, kConfig);

    CHECK(run({"solve", "--config", cfg, "--out", dir / "out", "--method", "both"}) == 0);
    CHECK(fs::exists(dir / "out/riccati.csv"));
    CHECK(fs::exists(dir / "out/riccati_tables.csv"));
    CHECK(fs::exists(dir / "out/adjoint.csv"));
    CHECK(fs::exists(dir / "out/adjoint_diag.csv"));
    CHECK(fs::exists(dir / "out/crosscheck.csv"));
    CHECK(fs::exists(dir / "out/manifest.txt"));

    CHECK(run({"evaluate", "--config", cfg, "--out", dir / "out", "--policy", "riccati"}) == 0);
    CHECK(fs::exists(dir / "out/evaluate.csv"));
    CHECK(run({"evaluate", "--config", cfg, "--out", dir / "out", "--policy", "adjoint"}) == 0);
    CHECK(run({"report", "--out", dir / "out"}) == 0);
}

TEST_CASE("invalid configs exit with code 1 and name the invariant") {
    TempDir dir("cascade_cli_invalid");
    std::string bad = kConfig;
    bad.replace(bad.find("1.v = 0"), 7, "1.v = 1");  // barrier equals x0
    const std::string cfg = dir / "bad.cfg";
    write_text_file(cfg, bad);
    CHECK(run({"simulate", "--config", cfg, "--out", dir / "out"}) == 1);
}

TEST_CASE("unknown policy names are usage errors") {
    TempDir dir("cascade_cli_policy");
    const std::string cfg = dir / "problem.cfg";
    write_text_file(cfg, kConfig);
    CHECK(run({"evaluate", "--config", cfg, "--out", dir / "out", "--policy", "nope"}) == 1);
    // table-backed policies require a prior solve
    CHECK(run({"evaluate", "--config", cfg, "--out", dir / "fresh", "--policy", "riccati"}) ==
          1);
}

TEST_CASE("thread count changes speed only: csv outputs are byte-identical") {
    TempDir dir("cascade_cli_threads");
    const std::string cfg = dir / "problem.cfg";
    write_text_file(cfg, kConfig);

    CHECK(run({"simulate", "--config", cfg, "--out", dir / "t1", "--threads", "1"}) == 0);
    CHECK(run({"simulate", "--config", cfg, "--out", dir / "t2", "--threads", "2"}) == 0);
    CHECK(read_text_file(dir / "t1/paths.csv") == read_text_file(dir / "t2/paths.csv"));

    CHECK(run({"solve", "--config", cfg, "--out", dir / "s1", "--threads", "1"}) == 0);
    CHECK(run({"solve", "--config", cfg, "--out", dir / "s2", "--threads", "2"}) == 0);
    CHECK(read_text_file(dir / "s1/riccati.csv") == read_text_file(dir / "s2/riccati.csv"));
    CHECK(read_text_file(dir / "s1/riccati_tables.csv") ==
          read_text_file(dir / "s2/riccati_tables.csv"));
}

TEST_CASE("manifest hash matches a recomputation from the config") {
    TempDir dir("cascade_cli_manifest");
    const std::string cfg = dir / "problem.cfg";
    write_text_file(cfg, kConfig);
    CHECK(run({"simulate", "--config", cfg, "--out", dir / "out"}) == 0);
    const Manifest m = Manifest::parse(read_text_file(dir / "out/manifest.txt"));
    const ProblemSpec spec = load_spec_file(cfg);
    char hex[19];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(emit_spec(spec))));
    CHECK(m.entries.at("config_hash") == hex);
    CHECK(m.entries.at("subcommand") == "simulate");
}

TEST_CASE("seed and path overrides reach the engine") {
    TempDir dir("cascade_cli_seed");
    const std::string cfg = dir / "problem.cfg";
    write_text_file(cfg, kConfig);
    CHECK(run({"simulate", "--config", cfg, "--out", dir / "a", "--seed", "1", "--paths",
               "50"}) == 0);
    CHECK(run({"simulate", "--config", cfg, "--out", dir / "b", "--seed", "2", "--paths",
               "50"}) == 0);
    CHECK(run({"simulate", "--config", cfg, "--out", dir / "c", "--seed", "1", "--paths",
               "50"}) == 0);
    const std::string a = read_text_file(dir / "a/paths.csv");
    const std::string b = read_text_file(dir / "b/paths.csv");
    const std::string c = read_text_file(dir / "c/paths.csv");
    CHECK(a != b);   // different seed, different noise
    CHECK(a == c);   // same seed, identical bytes
}
