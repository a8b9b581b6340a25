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

#include "dred/netsim.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dred/errors.hpp"
#include "dred/rng.hpp"

namespace dred {

std::size_t LossTrace::losses() const {
  std::size_t n = 0;
  for (std::uint8_t a : arrived) n += a ? 0 : 1;
  return n;
}

LossTrace gen_loss_trace(double avg_loss, double mean_burst_packets,
                         std::size_t n, std::uint64_t seed) {
  if (avg_loss < 0.0 || avg_loss >= 1.0) {
    throw std::invalid_argument("avg_loss must lie in [0, 1)");
  }
  if (mean_burst_packets < 1.0) {
    throw std::invalid_argument("mean burst must be >= 1 packet");
  }
  const double p_bg = 1.0 / mean_burst_packets;
  const double p_gb = p_bg * avg_loss / (1.0 - avg_loss);

  Rng rng(seed ^ 0x10557ACEull);
  LossTrace trace;
  trace.arrived.resize(n);
  bool bad = rng.uniform() < avg_loss;  // stationary start
  for (std::size_t i = 0; i < n; ++i) {
    trace.arrived[i] = bad ? 0 : 1;
    bad = bad ? (rng.uniform() >= p_bg) : (rng.uniform() < p_gb);
  }
  return trace;
}

void write_trace(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  for (std::uint8_t a : trace.arrived) out.put(a ? '1' : '0');
  out.put('\n');
  if (!out) throw FormatError("write failed: " + path.string());
}

LossTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  LossTrace trace;
  char c;
  while (in.get(c)) {
    if (c == '\n' || c == '\r') break;
    if (c == '1') {
      trace.arrived.push_back(1);
    } else if (c == '0') {
      trace.arrived.push_back(0);
    } else {
      throw FormatError("invalid trace character");
    }
  }
  return trace;
}

std::uint64_t RecoveryReport::frames_recovered_redundancy() const {
  std::uint64_t n = 0;
  for (std::uint64_t v : frames_recovered_redundancy_by_age) n += v;
  return n;
}

double RecoveryReport::mean_burst_covered() const {
  return covered_bursts ? static_cast<double>(covered_burst_packets) / covered_bursts
                        : 0.0;
}

std::string RecoveryReport::to_json() const {
  nlohmann::json j = {
      {"frames_total", frames_total},
      {"frames_recovered_primary", frames_recovered_primary},
      {"frames_recovered_redundancy", frames_recovered_redundancy()},
      {"frames_recovered_redundancy_by_age", frames_recovered_redundancy_by_age},
      {"frames_unrecovered", frames_unrecovered},
      {"redundancy_bitrate_bps", redundancy_bitrate_bps},
      {"decoder_invocations", decoder_invocations},
      {"covered_bursts", covered_bursts},
      {"mean_burst_covered", mean_burst_covered()},
      {"max_burst_covered", max_burst_covered},
      {"loss_rate", loss_rate},
  };
  return j.dump();
}

RecoveryReport simulate(const std::vector<MuxedPacket>& stream,
                        const LossTrace& trace, const PayloadCodec& codec,
                        const ScheduleRegistry& registry,
                        const ReferenceTransform& transform) {
  if (stream.size() != trace.size()) {
    throw std::invalid_argument("stream and trace lengths differ");
  }
  const int stride = transform.stride();
  const int span = 2 * stride;  // feature frames per latent tile

  RecoveryReport report;
  const std::size_t n = stream.size();
  report.frames_total = 2 * n;

  double redundancy_bits = 0.0;
  for (const MuxedPacket& p : stream) {
    redundancy_bits += static_cast<double>(p.redundancy.size()) * 8.0;
  }
  if (n > 0) report.redundancy_bitrate_bps = redundancy_bits / n / 0.020;

  std::int64_t gap_start = -1;  // first lost packet of the open gap
  for (std::size_t p = 0; p < n; ++p) {
    if (!trace.arrived[p]) {
      if (gap_start < 0) gap_start = static_cast<std::int64_t>(p);
      continue;
    }
    report.frames_recovered_primary += 2;
    if (gap_start < 0) continue;

    // First arrival after a gap: repair from this packet's redundancy.
    const std::int64_t first_missing_frame = 2 * gap_start;
    const std::int64_t last_missing_frame = 2 * static_cast<std::int64_t>(p) - 1;
    const std::int64_t gap_packets = static_cast<std::int64_t>(p) - gap_start;
    gap_start = -1;

    std::int64_t recovered_here = 0;
    int decoded = 0;
    if (!stream[p].redundancy.empty()) {
      ++report.decoder_invocations;
      // Decode just deep enough to reach the oldest missing frame.
      const std::int64_t newest_frame = 2 * static_cast<std::int64_t>(p) + 1;
      const int depth_needed = static_cast<int>(
          (newest_frame - first_missing_frame) / span + 1);
      const RedundancyPayload payload =
          codec.parse(stream[p].redundancy, registry, depth_needed);
      decoded = static_cast<int>(payload.latent_dequantized.size());
      if (decoded > 0) {
        const FeatureSequence rec = decode_packet_latents(
            payload.latent_dequantized, payload.is_dequantized, transform);
        (void)rec;
      }
      if (static_cast<int>(report.frames_recovered_redundancy_by_age.size()) < decoded) {
        report.frames_recovered_redundancy_by_age.resize(decoded, 0);
      }
    }

    for (std::int64_t f = first_missing_frame; f <= last_missing_frame; ++f) {
      const std::int64_t age =
          (2 * static_cast<std::int64_t>(p) + 1 - f) / span;
      if (age < decoded) {
        ++report.frames_recovered_redundancy_by_age[static_cast<std::size_t>(age)];
        ++recovered_here;
      } else {
        ++report.frames_unrecovered;
      }
    }
    if (recovered_here == 2 * gap_packets) {
      ++report.covered_bursts;
      report.covered_burst_packets += static_cast<std::uint64_t>(gap_packets);
      report.max_burst_covered = std::max(
          report.max_burst_covered, static_cast<std::uint64_t>(gap_packets));
    }
  }

  // A gap still open at stream end has no later arrival to repair it.
  if (gap_start >= 0) {
    report.frames_unrecovered += 2 * (n - static_cast<std::size_t>(gap_start));
  }
  return report;
}

std::vector<RecoveryReport> sweep(const std::vector<double>& loss_rates,
                                  const std::vector<MuxedPacket>& stream,
                                  const PayloadCodec& codec,
                                  const ScheduleRegistry& registry,
                                  const ReferenceTransform& transform,
                                  const SweepConfig& config) {
  std::vector<RecoveryReport> reports;
  reports.reserve(loss_rates.size());
  for (std::size_t ri = 0; ri < loss_rates.size(); ++ri) {
    RecoveryReport merged;
    merged.loss_rate = loss_rates[ri];
    for (int s = 0; s < config.seeds_per_rate; ++s) {
      const LossTrace trace =
          gen_loss_trace(loss_rates[ri], config.mean_burst_packets,
                         stream.size(), config.base_seed + 1000 * ri + s);
      const RecoveryReport r = simulate(stream, trace, codec, registry, transform);
      merged.frames_total += r.frames_total;
      merged.frames_recovered_primary += r.frames_recovered_primary;
      merged.frames_unrecovered += r.frames_unrecovered;
      merged.decoder_invocations += r.decoder_invocations;
      merged.covered_bursts += r.covered_bursts;
      merged.covered_burst_packets += r.covered_burst_packets;
      merged.max_burst_covered =
          std::max(merged.max_burst_covered, r.max_burst_covered);
      merged.redundancy_bitrate_bps = r.redundancy_bitrate_bps;
      if (merged.frames_recovered_redundancy_by_age.size() <
          r.frames_recovered_redundancy_by_age.size()) {
        merged.frames_recovered_redundancy_by_age.resize(
            r.frames_recovered_redundancy_by_age.size(), 0);
      }
      for (std::size_t i = 0; i < r.frames_recovered_redundancy_by_age.size(); ++i) {
        merged.frames_recovered_redundancy_by_age[i] +=
            r.frames_recovered_redundancy_by_age[i];
      }
    }
    reports.push_back(std::move(merged));
  }
  return reports;
}

}  // namespace dred
