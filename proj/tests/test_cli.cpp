#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <poolsim/cli.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace poolsim;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) {
   return std::string(POOLSIM_SOURCE_DIR) + "/scenarios/" + name + ".json";
}

// Captures std::cout for the lifetime of one invocation.
struct capture {
   std::stringstream out;
   std::streambuf* saved;
   capture() : saved(std::cout.rdbuf(out.rdbuf())) {}
   ~capture() { std::cout.rdbuf(saved); }
   std::string text() const { return out.str(); }
};

fs::path fresh_dir(const std::string& tag) {
   fs::path dir = fs::temp_directory_path() / ("poolsim-cli-" + tag);
   fs::remove_all(dir);
   fs::create_directories(dir);
   return dir;
}

nlohmann::json read_json(const fs::path& path) {
   std::ifstream in(path);
   REQUIRE(in.good());
   return nlohmann::json::parse(in);
}

} // namespace

TEST_CASE("validate accepts every shipped fixture") {
   for (const char* name :
        {"cap_base", "pow_sync", "pow_retarget", "pos_sync", "pos_partition",
         "quorum_sync", "quorum_partition", "quorum_async", "quorum_stall"}) {
      capture cap;
      const int rc = cli_main({"validate", "--scenario", fixture(name)});
      CHECK(rc == exit_ok);
      CHECK(cap.text().find("ok: ") == 0);
      CHECK(cap.text().find(name) != std::string::npos);
   }
}

TEST_CASE("configuration problems exit with the config code") {
   capture cap;
   CHECK(cli_main({"validate", "--scenario", "/nonexistent.json"}) == exit_config);
   CHECK(cli_main({"validate", "--scenario", fixture("pow_sync"), "--set",
                   "protocol.kind=voting"}) == exit_config);
   CHECK(cli_main({"validate", "--scenario", fixture("pow_sync"), "--set",
                   "duration=0"}) == exit_config);
   CHECK(cli_main({"run"}) == exit_config); // --scenario is required
   CHECK(cli_main({}) == exit_config);      // a subcommand is required
}

TEST_CASE("broken JSON exits with the config code") {
   const fs::path dir = fresh_dir("badjson");
   const fs::path bad = dir / "bad.json";
   std::ofstream(bad) << "{ \"name\": \n oops }";
   capture cap;
   CHECK(cli_main({"validate", "--scenario", bad.string()}) == exit_config);
}

TEST_CASE("help parses cleanly") {
   capture cap;
   CHECK(cli_main({"--help"}) == exit_ok);
}

TEST_CASE("overrides change the config digest") {
   capture base;
   REQUIRE(cli_main({"validate", "--scenario", fixture("quorum_sync")}) == exit_ok);
   std::string base_line;
   {
      capture overridden;
      REQUIRE(cli_main({"validate", "--scenario", fixture("quorum_sync"), "--set",
                        "seeds.scheduler=777"}) == exit_ok);
      base_line = overridden.text();
   }
   CHECK(base.text() != base_line);
}

TEST_CASE("run writes a report and a summary") {
   const fs::path dir = fresh_dir("run");
   capture cap;
   const int rc = cli_main({"run", "--scenario", fixture("quorum_sync"), "--runs", "2",
                            "--out", dir.string()});
   CHECK(rc == exit_ok);
   CHECK(cap.text().find("scenario quorum_sync over 2 runs") != std::string::npos);
   CHECK(cap.text().find("live_window=4") != std::string::npos);
   CHECK(cap.text().find("violating_runs=0") != std::string::npos);

   const nlohmann::json report = read_json(dir / "quorum_sync.report.json");
   CHECK(report.at("runs") == 2);
   CHECK(report.at("scenario") == "quorum_sync");

   std::ifstream csv(dir / "quorum_sync.summary.csv");
   std::string header;
   std::getline(csv, header);
   CHECK(header == "scenario,metric,value");
   std::string row;
   std::getline(csv, row);
   CHECK(row.rfind("quorum_sync,", 0) == 0);
}

TEST_CASE("run emits one trace file per run on request") {
   const fs::path dir = fresh_dir("trace");
   capture cap;
   const int rc = cli_main({"run", "--scenario", fixture("quorum_sync"), "--runs", "2",
                            "--out", dir.string(), "--emit", "both"});
   CHECK(rc == exit_ok);
   for (int k = 0; k < 2; ++k) {
      std::ifstream in(dir / ("quorum_sync.run" + std::to_string(k) + ".trace.jsonl"));
      REQUIRE(in.good());
      std::string line;
      std::size_t lines = 0;
      while (std::getline(in, line)) {
         const nlohmann::json ev = nlohmann::json::parse(line);
         CHECK(ev.contains("t"));
         CHECK(ev.contains("kind"));
         CHECK(ev.contains("message_id"));
         ++lines;
      }
      CHECK(lines > 0);
   }
   CHECK(fs::exists(dir / "quorum_sync.report.json"));

   // trace-only emission skips the report
   const fs::path dir2 = fresh_dir("trace-only");
   capture cap2;
   REQUIRE(cli_main({"run", "--scenario", fixture("quorum_sync"), "--runs", "1",
                     "--out", dir2.string(), "--emit", "trace"}) == exit_ok);
   CHECK(!fs::exists(dir2 / "quorum_sync.report.json"));
   CHECK(fs::exists(dir2 / "quorum_sync.run0.trace.jsonl"));
}

TEST_CASE("the paired-execution command reports and passes") {
   const fs::path dir = fresh_dir("cap");
   capture cap;
   const int rc = cli_main({"cap", "--scenario", fixture("cap_base"), "--runs", "20",
                            "--out", dir.string()});
   CHECK(rc == exit_ok);
   CHECK(cap.text().find("PASS") != std::string::npos);
   CHECK(cap.text().find("t0=") != std::string::npos);

   const nlohmann::json j = read_json(dir / "cap_base.cap.json");
   CHECK(j.at("runs") == 20);
   CHECK(!j.at("t0").is_null());
   CHECK(j.at("passed") == true);
}

TEST_CASE("a run too short to confirm fails calibration") {
   const fs::path dir = fresh_dir("cap-short");
   capture cap;
   const int rc = cli_main(
      {"cap", "--scenario", fixture("cap_base"), "--runs", "5", "--out", dir.string(),
       "--set", "duration=10", "--set",
       "schedule=[{\"from_t\":0,\"to_t\":10,\"sync\":true}]"});
   CHECK(rc == exit_experiment);
   CHECK(cap.text().find("calibration failed") != std::string::npos);
   const nlohmann::json j = read_json(dir / "cap_base.cap.json");
   CHECK(j.at("t0").is_null());
}

TEST_CASE("the grant-analysis table prints the closed form") {
   capture cap;
   const int rc = cli_main({"prop1", "--lambda", "0.001", "--y-max", "3"});
   CHECK(rc == exit_ok);
   std::istringstream in(cap.text());
   std::string line;
   std::getline(in, line);
   CHECK(line == "y,p_any,ratio");
   std::getline(in, line);
   CHECK(line.rfind("1,0.001,", 0) == 0);
   std::getline(in, line);
   CHECK(line.rfind("2,0.001999,", 0) == 0);
   std::getline(in, line);
   CHECK(line.rfind("3,0.002997", 0) == 0);
}

TEST_CASE("grant sampling writes its report next to the table") {
   const fs::path dir = fresh_dir("prop1");
   capture cap;
   const int rc = cli_main({"prop1", "--trials", "2000", "--requests", "1,3", "--out",
                            dir.string()});
   CHECK(rc == exit_ok);
   CHECK(cap.text().find("mc: trials=2000") != std::string::npos);
   const nlohmann::json j = read_json(dir / "prop1.mc.json");
   CHECK(j.at("trials") == 2000);
   CHECK(j.at("keys").size() == 2);
}

TEST_CASE("the C-style entry point matches the vector form") {
   capture cap;
   const char* argv[] = {"poolsim", "validate", "--scenario", nullptr};
   std::string path = fixture("pow_sync");
   argv[3] = path.c_str();
   CHECK(cli_main(4, argv) == exit_ok);
   CHECK(cap.text().find("ok: pow_sync") != std::string::npos);
}
