#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "gpm/artifact.hpp"
#include "gpm/pcfg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "gpm_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + GPM_CLI + "\" " + args + " > \"" + (kScratch / "last.log").string() +
                            "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string log_text() { return gpm::artifact::read_file(kScratch / "last.log"); }

std::string out(const std::string& name) { return "--out \"" + (kScratch / name).string() + "\" "; }

}  // namespace

TEST_CASE("exit status: usage and configuration errors are 2, completed runs 0") {
    fs::remove_all(kScratch);
    fs::create_directories(kScratch);
    CHECK(run("--version") == 0);
    CHECK(run("") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run(out("x") + "pcfg-eval --dataset /nonexistent.jsonl") == 2);
    CHECK(log_text().find("dataset not found") != std::string::npos);
    CHECK(run(out("x") + "improve-run --env mars") == 2);
    CHECK(run("--model mock_oracle " + out("x") + "improve-run") == 2);
    CHECK(run("--model telepathy " + out("x") + "arc-eval") == 2);
    CHECK(run(out("x") + "pcfg-gen --k 4 --w 0 --n 0") == 2);

    // a model that answers nothing completes the run with every task failed
    CHECK(run(out("gen") + "pcfg-gen --k 2 --w 0,1 --n 5") == 0);
    CHECK(run(out("empty") + "pcfg-eval --dataset \"" + (kScratch / "gen/pcfg_dataset.jsonl").string() + "\"") == 0);
    const auto s = json::parse(gpm::artifact::read_file(kScratch / "empty/summary.json"));
    CHECK(s["solved"] == 0);
    CHECK(s["total"] == 10);
}

TEST_CASE("artifacts embed version, resolved config, seed and input hashes") {
    fs::create_directories(kScratch);
    REQUIRE(run("--seed 42 " + out("g") + "pcfg-gen --k 2 --w 0 --n 3") == 0);
    const auto dataset = kScratch / "g/pcfg_dataset.jsonl";
    const auto first = json::parse(gpm::artifact::read_file(dataset).substr(0, gpm::artifact::read_file(dataset).find('\n')));
    const auto& hdr = first["artifact"];
    CHECK(hdr["tool"] == "gpm");
    CHECK(hdr["version"] == GPM_VERSION);
    CHECK(hdr["seed"] == 42);
    CHECK(hdr["command"] == "pcfg-gen");
    CHECK(hdr["config"]["params"]["n"] == 3);
    CHECK(gpm::pcfg::read_dataset(dataset).size() == 3);

    REQUIRE(run("--model oracle " + out("e") + "pcfg-eval --dataset \"" + dataset.string() + "\"") == 0);
    const auto s = json::parse(gpm::artifact::read_file(kScratch / "e/summary.json"));
    CHECK(s["artifact"]["inputs"]["dataset"] == gpm::artifact::file_sha256(dataset));
    CHECK(s["artifact"]["config"]["model"]["kind"] == "mock_oracle");
    CHECK(s["solved"] == 3);
}

TEST_CASE("config file supplies defaults and flags override it") {
    fs::create_directories(kScratch);
    const auto cfg = kScratch / "config.json";
    gpm::artifact::write_file(cfg, json{{"seed", 7},
                                        {"model", {{"kind", "random_policy"}}},
                                        {"improve-run", {{"episodes", 3}, {"warmup", 2}}}}
                                       .dump());
    REQUIRE(run("--config \"" + cfg.string() + "\" " + out("a") + "improve-run") == 0);
    auto s = json::parse(gpm::artifact::read_file(kScratch / "a/summary.json"));
    CHECK(s["artifact"]["seed"] == 7);
    CHECK(s["episodes"] == 3);
    CHECK(s["warmup"] == 2);
    CHECK(s["model"] == "random_policy");

    REQUIRE(run("--config \"" + cfg.string() + "\" --seed 8 " + out("b") + "improve-run --episodes 4") == 0);
    s = json::parse(gpm::artifact::read_file(kScratch / "b/summary.json"));
    CHECK(s["artifact"]["seed"] == 8);
    CHECK(s["episodes"] == 4);
    CHECK(s["warmup"] == 2);

    gpm::artifact::write_file(cfg, R"({"model": {"kind": "remote", "remote": {"api_key": "sk-123"}}})");
    CHECK(run("--config \"" + cfg.string() + "\" " + out("c") + "arc-eval") == 2);
    CHECK(log_text().find("environment") != std::string::npos);
}

TEST_CASE("marker-demo runs every ordering arm on the same scenes") {
    fs::create_directories(kScratch);
    REQUIRE(run("--model mock_oracle " + out("m") + "marker-demo --trials 3") == 0);
    const auto s = json::parse(gpm::artifact::read_file(kScratch / "m/summary.json"));
    REQUIRE(s["arms"].size() == 3);
    CHECK(s["arms"][0]["ordering"] == "sorted_asc");
    CHECK(s["arms"][1]["ordering"] == "shuffled");
    CHECK(s["arms"][2]["ordering"] == "sorted_no_rewards");
    for (const auto& arm : s["arms"]) CHECK(arm["mean_reward"] == 100.0);
}
