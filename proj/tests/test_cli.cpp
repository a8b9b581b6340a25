// Copyright 2026 The dred-toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "dred/features.hpp"

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DRED_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string capture_cli(const std::string& args, const fs::path& out_file) {
  const std::string cmd =
      std::string(DRED_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>/dev/null";
  std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "dred_cli_tests";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli synth") {
  const fs::path dir = temp_dir();
  const fs::path f1 = dir / "a.feat";
  const fs::path f2 = dir / "b.feat";

  SUBCASE("writes the documented byte count") {
    REQUIRE(run_cli("synth --seed 3 --frames 400 --out " + f1.string()) == 0);
    CHECK(fs::file_size(f1) == 8 + 2 + 4 + 400u * 20 * 4);
  }

  SUBCASE("same seed twice gives identical files") {
    REQUIRE(run_cli("synth --seed 3 --frames 120 --out " + f1.string()) == 0);
    REQUIRE(run_cli("synth --seed 3 --frames 120 --out " + f2.string()) == 0);
    std::ifstream a(f1, std::ios::binary), b(f2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }

  SUBCASE("zero frames fails with nonzero exit") {
    CHECK(run_cli("synth --seed 3 --frames 0 --out " + f1.string()) != 0);
  }
}

TEST_CASE("cli grad-check") {
  CHECK(run_cli("grad-check --seed 7 --points 50") == 0);
}

TEST_CASE("cli pipeline: synth, build-stream, simulate") {
  const fs::path dir = temp_dir();
  const fs::path feat = dir / "p.feat";
  const fs::path table = dir / "p.qtab";
  const fs::path stream = dir / "p.jsonl";
  const fs::path report = dir / "p.json";

  REQUIRE(run_cli("synth --seed 11 --frames 600 --out " + feat.string()) == 0);

  // A quick low-step training run to produce a table file.
  REQUIRE(run_cli("train --sequences 100 --frames 400 --steps 32 --corpus-seed 500"
                  " --out-table " + table.string() + " --log " + (dir / "t.log").string()) == 0);

  REQUIRE(run_cli("build-stream --features " + feat.string() + " --table " +
                  table.string() + " --out " + stream.string()) == 0);

  SUBCASE("zero-loss simulation recovers everything") {
    REQUIRE(run_cli("simulate --stream " + stream.string() + " --table " +
                    table.string() + " --loss 0 --out " + report.string()) == 0);
    std::ifstream in(report);
    nlohmann::json j;
    in >> j;
    CHECK(j["frames_unrecovered"].get<std::uint64_t>() == 0);
    CHECK(j["decoder_invocations"].get<std::uint64_t>() == 0);
  }

  SUBCASE("burst-51 scenario from a trace file recovers everything") {
    const fs::path trace = dir / "burst.trace";
    {
      std::ofstream out(trace);
      for (int i = 0; i < 300; ++i) out.put(i >= 100 && i < 151 ? '0' : '1');
      out.put('\n');
    }
    REQUIRE(run_cli("simulate --stream " + stream.string() + " --table " +
                    table.string() + " --trace " + trace.string() + " --out " +
                    report.string()) == 0);
    std::ifstream in(report);
    nlohmann::json j;
    in >> j;
    CHECK(j["frames_unrecovered"].get<std::uint64_t>() == 0);
    CHECK(j["decoder_invocations"].get<std::uint64_t>() == 1);
  }

  SUBCASE("rd-sweep emits 16 CSV rows with the documented header") {
    const std::string csv =
        capture_cli("rd-sweep --table " + table.string() +
                        " --sequences 4 --frames 400 --corpus-seed 900",
                    dir / "rd.csv");
    std::stringstream ss(csv);
    std::string line;
    REQUIRE(std::getline(ss, line));
    CHECK(line == "lambda_index,bits_per_vector,distortion,nondegenerate");
    int rows = 0;
    while (std::getline(ss, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows == 16);
  }
}
