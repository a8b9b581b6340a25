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

#ifndef DRED_NETSIM_HPP
#define DRED_NETSIM_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dred/framer.hpp"

namespace dred {

// Two-state (Good/Bad) burst-loss chain; every Bad-state packet is lost.
// Stationary loss rate is p_gb / (p_gb + p_bg).
struct LossModel {
  double p_good_to_bad = 0.0;
  double p_bad_to_good = 1.0;
  std::uint64_t seed = 0;
};

struct LossTrace {
  std::vector<std::uint8_t> arrived;  // 1 = arrived, 0 = lost

  std::size_t size() const { return arrived.size(); }
  std::size_t losses() const;
};

// mean_burst_packets sets p_bg = 1/mean_burst; avg_loss sets
// p_gb = p_bg * avg_loss / (1 - avg_loss).  The chain starts from its
// stationary distribution.  avg_loss in [0, 1), mean_burst >= 1.
LossTrace gen_loss_trace(double avg_loss, double mean_burst_packets,
                         std::size_t n, std::uint64_t seed);

// One ASCII character per packet: '1' arrived, '0' lost, newline-terminated.
void write_trace(const std::filesystem::path& path, const LossTrace& trace);
LossTrace read_trace(const std::filesystem::path& path);

struct RecoveryReport {
  std::uint64_t frames_total = 0;
  std::uint64_t frames_recovered_primary = 0;
  std::vector<std::uint64_t> frames_recovered_redundancy_by_age;
  std::uint64_t frames_unrecovered = 0;
  double redundancy_bitrate_bps = 0.0;
  std::uint64_t decoder_invocations = 0;
  std::uint64_t covered_bursts = 0;        // gaps fully repaired
  std::uint64_t covered_burst_packets = 0; // their total length
  std::uint64_t max_burst_covered = 0;
  double loss_rate = 0.0;  // the configured rate for sweep outputs

  std::uint64_t frames_recovered_redundancy() const;
  double mean_burst_covered() const;
  std::string to_json() const;
};

// Receiver model: primary frames play on arrival; the first packet after a
// gap fills the missing frames from its redundancy (freshest copy per
// frame, partial decode limited to the depth the gap needs).  The feature
// decoder runs once per gap and never when nothing was lost.
RecoveryReport simulate(const std::vector<MuxedPacket>& stream,
                        const LossTrace& trace, const PayloadCodec& codec,
                        const ScheduleRegistry& registry,
                        const ReferenceTransform& transform);

struct SweepConfig {
  double mean_burst_packets = 5.0;
  int seeds_per_rate = 20;
  std::uint64_t base_seed = 777;
};

// Runs simulate at each loss rate, aggregating counts over the seeds.
std::vector<RecoveryReport> sweep(const std::vector<double>& loss_rates,
                                  const std::vector<MuxedPacket>& stream,
                                  const PayloadCodec& codec,
                                  const ScheduleRegistry& registry,
                                  const ReferenceTransform& transform,
                                  const SweepConfig& config = {});

}  // namespace dred

#endif  // DRED_NETSIM_HPP
