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

#ifndef DRED_FRAMER_HPP
#define DRED_FRAMER_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dred/latent_codec.hpp"
#include "dred/range_coder.hpp"

namespace dred {

// Age-dependent rate assignment: entry j is the lambda index used for the
// j-th newest latent in a payload.  Indices are non-decreasing with age
// (older content is coded coarser).
struct RateSchedule {
  std::vector<int> lambda_index_by_age;

  int duration() const { return static_cast<int>(lambda_index_by_age.size()); }
  void validate() const;  // throws std::invalid_argument
};

// Linear age-to-index map: index 0 for the newest latent, kNumLambda-1 for
// the oldest.  duration_s must be a positive multiple of one latent span
// (40 ms at stride 2).
RateSchedule default_schedule(double duration_s, int stride = 2);

// Builds a schedule hitting measured rate targets: picks the lambda index
// whose per-vector bits are closest to newest_bits (age 0) and to
// oldest_bits (last age), interpolating linearly in between.
RateSchedule make_rate_targeted_schedule(std::span<const double> bits_by_index,
                                         int n_latents, double newest_bits,
                                         double oldest_bits);

// Pre-shared id -> schedule mapping; payloads carry only the id.
class ScheduleRegistry {
 public:
  void add(std::uint8_t id, RateSchedule schedule);
  const RateSchedule* find(std::uint8_t id) const;

 private:
  std::map<std::uint8_t, RateSchedule> by_id_;
};

// Registers every k-newest prefix of the schedule under id k (1-based), so
// early stream positions with short history still produce self-contained
// payloads.
ScheduleRegistry make_prefix_registry(const RateSchedule& full);

struct RedundancyPayload {
  int parity = 0;                 // newest_step & 1: which strided half
  std::int64_t newest_step = 0;   // 20-ms step index of the newest latent
  std::uint8_t schedule_id = 0;
  std::vector<int> is_symbols;
  std::vector<double> is_dequantized;
  std::vector<std::vector<int>> latent_symbols;         // newest-first
  std::vector<std::vector<double>> latent_dequantized;  // newest-first
  bool complete = true;   // false when parsed from a truncated buffer or capped
  std::vector<std::uint8_t> wire;  // serialized form (build side only)
};

// Shared model cache for payload coding; building Laplace frequency tables
// is much more expensive than using them, so bulk callers reuse one codec.
class PayloadCodec {
 public:
  explicit PayloadCodec(const QuantizerTable& table);

  const QuantizerTable& table() const { return *table_; }

  RedundancyPayload build(const StreamEncoder& encoder,
                          const RateSchedule& schedule,
                          std::uint8_t schedule_id,
                          std::int64_t newest_step) const;

  // max_latents < 0 decodes the full schedule.  Truncation inside the IS or
  // the first latent raises FormatError; later truncation yields a partial
  // payload with complete = false.
  RedundancyPayload parse(std::span<const std::uint8_t> bytes,
                          const ScheduleRegistry& registry,
                          int max_latents = -1) const;

 private:
  const SymbolModel& latent_model(int lambda_index, int dim) const;
  const SymbolModel& is_model(int lambda_index, int dim) const;

  const QuantizerTable* table_;
  mutable std::vector<std::optional<SymbolModel>> latent_models_;
  mutable std::vector<std::optional<SymbolModel>> is_models_;
};

// One-shot conveniences around PayloadCodec.
RedundancyPayload build_payload(const StreamEncoder& encoder,
                                const QuantizerTable& table,
                                const RateSchedule& schedule,
                                std::uint8_t schedule_id,
                                std::int64_t newest_step);
RedundancyPayload parse_payload(std::span<const std::uint8_t> bytes,
                                const QuantizerTable& table,
                                const ScheduleRegistry& registry,
                                int max_latents = -1);

struct BudgetStats {
  double mean_bits = 0.0;
  double max_bits = 0.0;
  double bitrate_bps = 0.0;  // mean_bits / 0.020 s
  int payloads = 0;
};

// Measures steady-state payload sizes over a probe sequence.
BudgetStats payload_bit_budget(const RateSchedule& schedule,
                               const QuantizerTable& table,
                               const ReferenceTransform& transform,
                               const FeatureSequence& probe);

struct MuxedPacket {
  std::int64_t sequence = 0;
  double send_time_ms = 0.0;
  std::vector<std::uint8_t> primary;     // opaque stand-in payload
  std::vector<std::uint8_t> redundancy;  // wire bytes; empty = none
};

struct StreamBuildOptions {
  int primary_size_bytes = 60;  // 24 kb/s at 20-ms packets
};

// One packet per 20-ms step: a primary stub plus redundancy for the newest
// step, truncated to the available history via the prefix-registry ids.
std::vector<MuxedPacket> build_stream(const FeatureSequence& features,
                                      const ReferenceTransform& transform,
                                      const QuantizerTable& table,
                                      const RateSchedule& schedule,
                                      const StreamBuildOptions& options = {});

// JSON-lines serialization of packet streams.
void write_stream(const std::filesystem::path& path,
                  const std::vector<MuxedPacket>& stream);
std::vector<MuxedPacket> read_stream(const std::filesystem::path& path);

}  // namespace dred

#endif  // DRED_FRAMER_HPP
