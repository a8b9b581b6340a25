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

#include <algorithm>
#include <filesystem>

#include <doctest.h>
#include <json.hpp>

#include "dred/errors.hpp"
#include "dred/netsim.hpp"
#include "dred/rng.hpp"

using namespace dred;

namespace {

struct SimFixture {
  ReferenceTransform transform;
  FeatureSequence features = gen_synthetic_features(99, 1000);  // 10 s
  QuantizerTable table = make_heuristic_table(transform, features);
  RateSchedule schedule = default_schedule(1.04);
  ScheduleRegistry registry = make_prefix_registry(schedule);
  PayloadCodec codec{table};
  std::vector<MuxedPacket> stream =
      build_stream(features, transform, table, schedule);
};

SimFixture& fixture() {
  static SimFixture f;
  return f;
}

LossTrace burst_trace(std::size_t n, std::size_t start, std::size_t len) {
  LossTrace t;
  t.arrived.assign(n, 1);
  for (std::size_t i = start; i < std::min(n, start + len); ++i) t.arrived[i] = 0;
  return t;
}

}  // namespace

TEST_CASE("loss trace generation") {
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(gen_loss_trace(1.0, 5.0, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_loss_trace(-0.1, 5.0, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_loss_trace(0.2, 0.5, 10, 1), std::invalid_argument);
  }

  SUBCASE("zero loss means no losses") {
    const LossTrace t = gen_loss_trace(0.0, 5.0, 10000, 42);
    CHECK(t.losses() == 0);
  }

  SUBCASE("deterministic per seed") {
    const LossTrace a = gen_loss_trace(0.2, 5.0, 5000, 7);
    const LossTrace b = gen_loss_trace(0.2, 5.0, 5000, 7);
    CHECK(a.arrived == b.arrived);
    const LossTrace c = gen_loss_trace(0.2, 5.0, 5000, 8);
    CHECK(a.arrived != c.arrived);
  }

  SUBCASE("stationary statistics over one million packets") {
    const LossTrace t = gen_loss_trace(0.184, 5.0, 1'000'000, 20260810);
    const double rate = static_cast<double>(t.losses()) / t.size();
    CHECK(rate == doctest::Approx(0.184).epsilon(0.003 / 0.184));

    // Mean length of maximal loss runs.
    std::size_t bursts = 0, lost = 0;
    bool in_burst = false;
    for (std::uint8_t a : t.arrived) {
      if (!a) {
        ++lost;
        if (!in_burst) ++bursts;
        in_burst = true;
      } else {
        in_burst = false;
      }
    }
    const double mean_burst = static_cast<double>(lost) / bursts;
    CHECK(mean_burst == doctest::Approx(5.0).epsilon(0.1 / 5.0));
  }

  SUBCASE("file round trip") {
    const LossTrace t = gen_loss_trace(0.3, 2.0, 500, 3);
    const auto path = std::filesystem::temp_directory_path() / "dred_trace_test.txt";
    write_trace(path, t);
    CHECK(read_trace(path).arrived == t.arrived);
    std::filesystem::remove(path);
  }
}

TEST_CASE("simulate") {
  SimFixture& fx = fixture();
  const std::size_t n = fx.stream.size();
  REQUIRE(n == 500);

  SUBCASE("length mismatch rejected") {
    const LossTrace t = burst_trace(n - 1, 0, 0);
    CHECK_THROWS_AS(
        simulate(fx.stream, t, fx.codec, fx.registry, fx.transform),
        std::invalid_argument);
  }

  SUBCASE("lossless trace: all primary, zero decodes") {
    const LossTrace t = burst_trace(n, 0, 0);
    const RecoveryReport r =
        simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
    CHECK(r.frames_total == 2 * n);
    CHECK(r.frames_recovered_primary == 2 * n);
    CHECK(r.frames_unrecovered == 0);
    CHECK(r.decoder_invocations == 0);
    CHECK(r.frames_recovered_redundancy() == 0);
  }

  SUBCASE("single 51-packet burst fully recovered") {
    const LossTrace t = burst_trace(n, 100, 51);
    const RecoveryReport r =
        simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
    CHECK(r.frames_unrecovered == 0);
    CHECK(r.decoder_invocations == 1);
    CHECK(r.frames_recovered_redundancy() == 2 * 51);
    CHECK(r.max_burst_covered == 51);
  }

  SUBCASE("53-packet burst loses exactly (53-51)*2 frames") {
    const LossTrace t = burst_trace(n, 100, 53);
    const RecoveryReport r =
        simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
    CHECK(r.frames_unrecovered == 4);
    CHECK(r.frames_recovered_redundancy() == 2 * 53 - 4);
  }

  SUBCASE("counts always sum to total") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const LossTrace t =
          gen_loss_trace(rng.uniform(0.05, 0.5), rng.uniform(1.0, 8.0), n,
                         rng.next_u64());
      const RecoveryReport r =
          simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
      CHECK(r.frames_recovered_primary + r.frames_recovered_redundancy() +
                r.frames_unrecovered ==
            r.frames_total);
    }
  }

  SUBCASE("decoder invocations equal gap count") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const LossTrace t =
          gen_loss_trace(rng.uniform(0.05, 0.4), 3.0, n, rng.next_u64());
      std::uint64_t gaps = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (t.arrived[i] && !t.arrived[i - 1]) ++gaps;
      }
      const RecoveryReport r =
          simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
      CHECK(r.decoder_invocations == gaps);
    }
  }

  SUBCASE("freshest copy wins: recovered ages are minimal") {
    // A burst of B packets ending right before packet p leaves frames whose
    // tile ordinals in packet p's payload are the minimum over all later
    // arrivals; check the histogram matches the closed-form tiling.
    const std::size_t start = 200, len = 9;
    const LossTrace t = burst_trace(n, start, len);
    const RecoveryReport r =
        simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
    REQUIRE(r.frames_unrecovered == 0);
    std::vector<std::uint64_t> expect;
    const std::size_t p = start + len;
    for (std::size_t f = 2 * start; f < 2 * p; ++f) {
      const std::size_t age = (2 * p + 1 - f) / 4;
      if (expect.size() <= age) expect.resize(age + 1, 0);
      ++expect[age];
    }
    REQUIRE(r.frames_recovered_redundancy_by_age.size() >= expect.size());
    for (std::size_t a = 0; a < expect.size(); ++a) {
      CHECK(r.frames_recovered_redundancy_by_age[a] == expect[a]);
    }
  }

  SUBCASE("trailing gap counts as unrecovered") {
    const LossTrace t = burst_trace(n, n - 10, 10);
    const RecoveryReport r =
        simulate(fx.stream, t, fx.codec, fx.registry, fx.transform);
    CHECK(r.frames_unrecovered == 20);
    CHECK(r.decoder_invocations == 0);
  }
}

TEST_CASE("sweep") {
  SimFixture& fx = fixture();

  SUBCASE("zero loss baseline") {
    const auto reports = sweep({0.0}, fx.stream, fx.codec, fx.registry,
                               fx.transform, {5.0, 3, 1});
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].frames_unrecovered == 0);
    CHECK(reports[0].frames_recovered_primary == reports[0].frames_total);
  }

  SUBCASE("primary fraction falls with loss; bitrate stays constant") {
    SweepConfig cfg;
    cfg.seeds_per_rate = 20;
    const std::vector<double> rates = {0.05, 0.15, 0.3, 0.5};
    const auto reports =
        sweep(rates, fx.stream, fx.codec, fx.registry, fx.transform, cfg);
    REQUIRE(reports.size() == rates.size());
    for (std::size_t i = 1; i < reports.size(); ++i) {
      const double prev = static_cast<double>(reports[i - 1].frames_recovered_primary) /
                          reports[i - 1].frames_total;
      const double cur = static_cast<double>(reports[i].frames_recovered_primary) /
                         reports[i].frames_total;
      CHECK(cur < prev);
      CHECK(reports[i].redundancy_bitrate_bps ==
            doctest::Approx(reports[0].redundancy_bitrate_bps));
    }
  }

  SUBCASE("report JSON is parseable and consistent") {
    const auto reports = sweep({0.2}, fx.stream, fx.codec, fx.registry,
                               fx.transform, {5.0, 2, 11});
    const auto j = nlohmann::json::parse(reports[0].to_json());
    CHECK(j["frames_total"].get<std::uint64_t>() == reports[0].frames_total);
    CHECK(j["loss_rate"].get<double>() == doctest::Approx(0.2));
  }
}
