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

#include "dred/framer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dred/errors.hpp"

namespace dred {

namespace {

constexpr std::uint8_t kPayloadMagic = 0xD5;

void append_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v) | 0x80);
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t read_varint(std::span<const std::uint8_t> in, std::size_t& pos) {
  std::uint64_t v = 0;
  int shift = 0;
  while (true) {
    if (pos >= in.size()) throw FormatError("truncated payload header");
    const std::uint8_t b = in[pos++];
    v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
    if (!(b & 0x80)) return v;
    shift += 7;
    if (shift > 63) throw FormatError("varint overflow");
  }
}

const char kBase64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(std::span<const std::uint8_t> in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back(kBase64Chars[(v >> 6) & 63]);
    out.push_back(kBase64Chars[v & 63]);
  }
  if (i < in.size()) {
    std::uint32_t v = in[i] << 16;
    const bool two = i + 1 < in.size();
    if (two) v |= in[i + 1] << 8;
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back(two ? kBase64Chars[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw FormatError("invalid base64 character");
  };
  if (in.size() % 4 != 0) throw FormatError("invalid base64 length");
  std::vector<std::uint8_t> out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    const int a = value(in[i]);
    const int b = value(in[i + 1]);
    const int c = value(in[i + 2]);
    const int d = value(in[i + 3]);
    if (a < 0 || b < 0) throw FormatError("invalid base64 padding");
    out.push_back(static_cast<std::uint8_t>((a << 2) | (b >> 4)));
    if (c >= 0) out.push_back(static_cast<std::uint8_t>((b << 4) | (c >> 2)));
    if (c >= 0 && d >= 0) out.push_back(static_cast<std::uint8_t>((c << 6) | d));
  }
  return out;
}

}  // namespace

void RateSchedule::validate() const {
  int prev = 0;
  for (int idx : lambda_index_by_age) {
    if (idx < 0 || idx >= kNumLambda) {
      throw std::invalid_argument("lambda index out of range in schedule");
    }
    if (idx < prev) {
      throw std::invalid_argument("schedule lambda indices must be non-decreasing with age");
    }
    prev = idx;
  }
  if (duration() > 255) {
    throw std::invalid_argument("schedule too long for a one-byte id space");
  }
}

RateSchedule default_schedule(double duration_s, int stride) {
  const double span = 0.020 * stride;  // seconds covered per latent
  const double ratio = duration_s / span;
  const int n = static_cast<int>(std::lround(ratio));
  if (n < 1 || std::abs(ratio - n) > 1e-9) {
    throw std::invalid_argument("duration must be a positive multiple of the latent span");
  }
  RateSchedule s;
  s.lambda_index_by_age.resize(n);
  for (int j = 0; j < n; ++j) {
    s.lambda_index_by_age[j] =
        n == 1 ? 0
               : static_cast<int>(std::lround(static_cast<double>(j) *
                                              (kNumLambda - 1) / (n - 1)));
  }
  s.validate();
  return s;
}

RateSchedule make_rate_targeted_schedule(std::span<const double> bits_by_index,
                                         int n_latents, double newest_bits,
                                         double oldest_bits) {
  if (bits_by_index.size() != kNumLambda || n_latents < 1) {
    throw std::invalid_argument("need one rate per lambda index and >= 1 latent");
  }
  auto closest = [&](double target) {
    int best = 0;
    for (int l = 1; l < kNumLambda; ++l) {
      if (std::abs(bits_by_index[l] - target) <
          std::abs(bits_by_index[best] - target)) {
        best = l;
      }
    }
    return best;
  };
  const int newest = closest(newest_bits);
  const int oldest = std::max(newest, closest(oldest_bits));

  RateSchedule s;
  s.lambda_index_by_age.resize(n_latents);
  for (int j = 0; j < n_latents; ++j) {
    s.lambda_index_by_age[j] =
        n_latents == 1
            ? newest
            : newest + static_cast<int>(std::lround(
                           static_cast<double>(j) * (oldest - newest) /
                           (n_latents - 1)));
  }
  s.validate();
  return s;
}

void ScheduleRegistry::add(std::uint8_t id, RateSchedule schedule) {
  schedule.validate();
  by_id_[id] = std::move(schedule);
}

const RateSchedule* ScheduleRegistry::find(std::uint8_t id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

ScheduleRegistry make_prefix_registry(const RateSchedule& full) {
  full.validate();
  ScheduleRegistry reg;
  for (int k = 1; k <= full.duration(); ++k) {
    RateSchedule prefix;
    prefix.lambda_index_by_age.assign(full.lambda_index_by_age.begin(),
                                      full.lambda_index_by_age.begin() + k);
    reg.add(static_cast<std::uint8_t>(k), std::move(prefix));
  }
  return reg;
}

PayloadCodec::PayloadCodec(const QuantizerTable& table) : table_(&table) {
  latent_models_.resize(static_cast<std::size_t>(kNumLambda) * table.latent_dim);
  is_models_.resize(static_cast<std::size_t>(kNumLambda) * table.is_dim);
}

const SymbolModel& PayloadCodec::latent_model(int lambda_index, int dim) const {
  auto& slot =
      latent_models_[static_cast<std::size_t>(lambda_index) * table_->latent_dim + dim];
  if (!slot) slot = build_model(coding_params(table_->latent_at(lambda_index, dim)));
  return *slot;
}

const SymbolModel& PayloadCodec::is_model(int lambda_index, int dim) const {
  auto& slot =
      is_models_[static_cast<std::size_t>(lambda_index) * table_->is_dim + dim];
  if (!slot) slot = build_model(coding_params(table_->is_at(lambda_index, dim)));
  return *slot;
}

RedundancyPayload PayloadCodec::build(const StreamEncoder& encoder,
                                      const RateSchedule& schedule,
                                      std::uint8_t schedule_id,
                                      std::int64_t newest_step) const {
  schedule.validate();
  const int stride = encoder.transform().stride();
  const int duration = schedule.duration();
  if (newest_step < 0 || newest_step >= encoder.steps()) {
    throw std::invalid_argument("newest_step outside encoded history");
  }
  if (newest_step - static_cast<std::int64_t>(duration - 1) * stride < 0) {
    throw std::invalid_argument("insufficient encoder history for schedule");
  }

  RedundancyPayload p;
  p.newest_step = newest_step;
  p.parity = static_cast<int>(newest_step & 1);
  p.schedule_id = schedule_id;

  p.wire.push_back(kPayloadMagic);
  p.wire.push_back(schedule_id);
  append_varint(p.wire,
                (static_cast<std::uint64_t>(newest_step) << 1) |
                    static_cast<std::uint64_t>(p.parity));

  RangeEncoder rc;

  // Initial state for the newest frame, coded at the newest age's rate.
  const int is_lambda = duration > 0 ? schedule.lambda_index_by_age[0] : 0;
  {
    QuantizedLatent q = quantize_is(encoder.initial_state(
                                        static_cast<int>(newest_step)),
                                    *table_, is_lambda);
    p.is_symbols = q.symbols;
    p.is_dequantized = q.dequantized;
    for (int i = 0; i < table_->is_dim; ++i) {
      if (table_->is_at(is_lambda, i).scale < kDegenerateScale) continue;
      rc.encode(is_model(is_lambda, i), q.symbols[i]);
    }
  }

  // Latents newest-first so a decoder can stop after the first few.
  for (int j = 0; j < duration; ++j) {
    const int lambda_index = schedule.lambda_index_by_age[j];
    const int step = static_cast<int>(newest_step) - j * stride;
    QuantizedLatent q = quantize_latent(encoder.latent(step), *table_, lambda_index);
    for (int i = 0; i < table_->latent_dim; ++i) {
      if (table_->latent_at(lambda_index, i).scale < kDegenerateScale) continue;
      rc.encode(latent_model(lambda_index, i), q.symbols[i]);
    }
    p.latent_symbols.push_back(std::move(q.symbols));
    p.latent_dequantized.push_back(std::move(q.dequantized));
  }

  const CodedBuffer coded = rc.finish();
  p.wire.insert(p.wire.end(), coded.bytes.begin(), coded.bytes.end());
  return p;
}

RedundancyPayload PayloadCodec::parse(std::span<const std::uint8_t> bytes,
                                      const ScheduleRegistry& registry,
                                      int max_latents) const {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != kPayloadMagic) {
    throw FormatError("bad payload magic");
  }
  pos = 1;
  const std::uint8_t schedule_id = bytes[pos++];
  const RateSchedule* schedule = registry.find(schedule_id);
  if (!schedule) throw FormatError("unknown schedule id");
  const std::uint64_t packed = read_varint(bytes, pos);

  RedundancyPayload p;
  p.schedule_id = schedule_id;
  p.parity = static_cast<int>(packed & 1);
  p.newest_step = static_cast<std::int64_t>(packed >> 1);

  const int duration = schedule->duration();
  const int want = max_latents < 0 ? duration
                                   : std::min(max_latents, duration);

  RangeDecoder rc(bytes.subspan(pos));

  const int is_lambda = duration > 0 ? schedule->lambda_index_by_age[0] : 0;
  p.is_symbols.assign(table_->is_dim, 0);
  p.is_dequantized.assign(table_->is_dim, 0.0);
  for (int i = 0; i < table_->is_dim; ++i) {
    const DimQuant& d = table_->is_at(is_lambda, i);
    if (d.scale < kDegenerateScale) continue;
    p.is_symbols[i] = rc.decode(is_model(is_lambda, i));
    p.is_dequantized[i] = unscale(p.is_symbols[i], d.scale);
  }

  for (int j = 0; j < want; ++j) {
    const int lambda_index = schedule->lambda_index_by_age[j];
    std::vector<int> symbols(table_->latent_dim, 0);
    std::vector<double> deq(table_->latent_dim, 0.0);
    try {
      for (int i = 0; i < table_->latent_dim; ++i) {
        const DimQuant& d = table_->latent_at(lambda_index, i);
        if (d.scale < kDegenerateScale) continue;
        symbols[i] = rc.decode(latent_model(lambda_index, i));
        deq[i] = unscale(symbols[i], d.scale);
      }
    } catch (const FormatError&) {
      if (j == 0) throw;  // nothing decodable beyond the header
      p.complete = false;
      return p;
    }
    p.latent_symbols.push_back(std::move(symbols));
    p.latent_dequantized.push_back(std::move(deq));
  }
  p.complete = want == duration;
  return p;
}

RedundancyPayload build_payload(const StreamEncoder& encoder,
                                const QuantizerTable& table,
                                const RateSchedule& schedule,
                                std::uint8_t schedule_id,
                                std::int64_t newest_step) {
  return PayloadCodec(table).build(encoder, schedule, schedule_id, newest_step);
}

RedundancyPayload parse_payload(std::span<const std::uint8_t> bytes,
                                const QuantizerTable& table,
                                const ScheduleRegistry& registry,
                                int max_latents) {
  return PayloadCodec(table).parse(bytes, registry, max_latents);
}

BudgetStats payload_bit_budget(const RateSchedule& schedule,
                               const QuantizerTable& table,
                               const ReferenceTransform& transform,
                               const FeatureSequence& probe) {
  schedule.validate();
  StreamEncoder enc(transform);
  enc.push_sequence(probe);
  const PayloadCodec codec(table);

  const int warmup = std::max(0, (schedule.duration() - 1) * transform.stride());
  BudgetStats stats;
  double total = 0.0;
  for (int step = warmup; step < enc.steps(); ++step) {
    const RedundancyPayload p =
        codec.build(enc, schedule, static_cast<std::uint8_t>(schedule.duration()), step);
    const double bits = static_cast<double>(p.wire.size()) * 8.0;
    total += bits;
    stats.max_bits = std::max(stats.max_bits, bits);
    ++stats.payloads;
  }
  if (stats.payloads > 0) {
    stats.mean_bits = total / stats.payloads;
    stats.bitrate_bps = stats.mean_bits / 0.020;
  }
  return stats;
}

std::vector<MuxedPacket> build_stream(const FeatureSequence& features,
                                      const ReferenceTransform& transform,
                                      const QuantizerTable& table,
                                      const RateSchedule& schedule,
                                      const StreamBuildOptions& options) {
  schedule.validate();
  StreamEncoder enc(transform);
  enc.push_sequence(features);
  const PayloadCodec codec(table);
  const int stride = transform.stride();

  std::vector<MuxedPacket> stream;
  stream.reserve(enc.steps());
  for (int p = 0; p < enc.steps(); ++p) {
    MuxedPacket pkt;
    pkt.sequence = p;
    pkt.send_time_ms = 20.0 * p;
    pkt.primary.resize(options.primary_size_bytes);
    for (int i = 0; i < options.primary_size_bytes; ++i) {
      pkt.primary[i] = static_cast<std::uint8_t>((p + i) & 0xFF);
    }

    const int effective = std::min(schedule.duration(), p / stride + 1);
    RateSchedule prefix;
    prefix.lambda_index_by_age.assign(
        schedule.lambda_index_by_age.begin(),
        schedule.lambda_index_by_age.begin() + effective);
    const RedundancyPayload payload =
        codec.build(enc, prefix, static_cast<std::uint8_t>(effective), p);
    pkt.redundancy = payload.wire;
    stream.push_back(std::move(pkt));
  }
  return stream;
}

void write_stream(const std::filesystem::path& path,
                  const std::vector<MuxedPacket>& stream) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  for (const MuxedPacket& p : stream) {
    nlohmann::json rec = {
        {"seq", p.sequence},
        {"send_time_ms", p.send_time_ms},
        {"primary_size_bytes", p.primary.size()},
    };
    if (!p.redundancy.empty()) {
      rec["redundancy_base64"] = base64_encode(p.redundancy);
    }
    out << rec.dump() << "\n";
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<MuxedPacket> read_stream(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  std::vector<MuxedPacket> stream;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw FormatError("invalid stream json line");
    }
    MuxedPacket p;
    p.sequence = rec.at("seq").get<std::int64_t>();
    p.send_time_ms = rec.at("send_time_ms").get<double>();
    p.primary.resize(rec.at("primary_size_bytes").get<std::size_t>());
    for (std::size_t i = 0; i < p.primary.size(); ++i) {
      p.primary[i] = static_cast<std::uint8_t>((p.sequence + i) & 0xFF);
    }
    if (rec.contains("redundancy_base64")) {
      p.redundancy = base64_decode(rec["redundancy_base64"].get<std::string>());
    }
    stream.push_back(std::move(p));
  }
  return stream;
}

}  // namespace dred
