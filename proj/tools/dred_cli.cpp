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

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dred/features.hpp"
#include "dred/framer.hpp"
#include "dred/latent_codec.hpp"
#include "dred/netsim.hpp"
#include "dred/range_coder.hpp"
#include "dred/rd_trainer.hpp"

namespace {

using namespace dred;

std::vector<FeatureSequence> make_corpus(std::uint64_t seed, int sequences, int frames) {
  std::vector<FeatureSequence> corpus;
  corpus.reserve(sequences);
  for (int i = 0; i < sequences; ++i) {
    corpus.push_back(gen_synthetic_features(seed + i, frames));
  }
  return corpus;
}

int cmd_synth(std::uint64_t seed, int frames, const std::string& out) {
  write_features(out, gen_synthetic_features(seed, frames));
  std::cout << "wrote " << frames << " frames to " << out << "\n";
  return 0;
}

int cmd_train(std::uint64_t corpus_seed, int sequences, int frames,
              const TrainConfig& cfg, std::uint64_t transform_seed,
              const std::string& out_table, const std::string& log_path) {
  TransformConfig tc;
  tc.seed = transform_seed;
  const ReferenceTransform transform(tc);
  const auto corpus = make_corpus(corpus_seed, sequences, frames);
  const TrainResult result = train_tables(cfg, corpus, transform);
  save_table(out_table, result.table);

  std::ostream* log = &std::cout;
  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) {
      std::cerr << "cannot open log file: " << log_path << "\n";
      return 1;
    }
    log = &log_file;
  }
  for (const std::string& line : result.log_lines) *log << line << "\n";
  std::cout << "wrote table to " << out_table << "\n";
  return 0;
}

int cmd_rd_sweep(const std::string& table_path, std::uint64_t corpus_seed,
                 int sequences, int frames, std::uint64_t transform_seed,
                 const std::string& out) {
  TransformConfig tc;
  tc.seed = transform_seed;
  const ReferenceTransform transform(tc);
  const QuantizerTable table = load_table(table_path);
  const auto probe = make_corpus(corpus_seed, sequences, frames);
  const auto points = evaluate_rd(table, transform, probe);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) {
      std::cerr << "cannot open output file: " << out << "\n";
      return 1;
    }
    os = &file;
  }
  *os << "lambda_index,bits_per_vector,distortion,nondegenerate\n";
  for (const RDPoint& p : points) {
    *os << p.lambda_index << "," << p.mean_rate_bits << "," << p.mean_distortion
        << "," << p.nondegenerate_dims << "\n";
  }
  return 0;
}

int cmd_build_stream(const std::string& features_path, const std::string& table_path,
                     double duration_s, std::uint64_t transform_seed,
                     int primary_bytes, const std::string& out) {
  TransformConfig tc;
  tc.seed = transform_seed;
  const ReferenceTransform transform(tc);
  const FeatureSequence features = read_features(features_path);
  const QuantizerTable table = load_table(table_path);
  const RateSchedule schedule = default_schedule(duration_s, transform.stride());
  StreamBuildOptions opts;
  opts.primary_size_bytes = primary_bytes;
  const auto stream = build_stream(features, transform, table, schedule, opts);
  write_stream(out, stream);
  std::cout << "wrote " << stream.size() << " packets to " << out << "\n";
  return 0;
}

int cmd_simulate(const std::string& stream_path, const std::string& table_path,
                 double duration_s, std::uint64_t transform_seed,
                 const std::string& trace_path, double loss, double burst,
                 std::uint64_t trace_seed, const std::vector<double>& sweep_rates,
                 int seeds_per_rate, const std::string& out) {
  TransformConfig tc;
  tc.seed = transform_seed;
  const ReferenceTransform transform(tc);
  const QuantizerTable table = load_table(table_path);
  const auto stream = read_stream(stream_path);
  const RateSchedule schedule = default_schedule(duration_s, transform.stride());
  const ScheduleRegistry registry = make_prefix_registry(schedule);
  const PayloadCodec codec(table);

  std::string payload;
  if (!sweep_rates.empty()) {
    SweepConfig sc;
    sc.mean_burst_packets = burst;
    sc.seeds_per_rate = seeds_per_rate;
    sc.base_seed = trace_seed;
    const auto reports = sweep(sweep_rates, stream, codec, registry, transform, sc);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(nlohmann::json::parse(r.to_json()));
    payload = arr.dump(2);
  } else {
    LossTrace trace;
    if (!trace_path.empty()) {
      trace = read_trace(trace_path);
    } else {
      trace = gen_loss_trace(loss, burst, stream.size(), trace_seed);
    }
    RecoveryReport report = simulate(stream, trace, codec, registry, transform);
    report.loss_rate = loss;
    payload = nlohmann::json::parse(report.to_json()).dump(2);
  }

  if (out.empty()) {
    std::cout << payload << "\n";
  } else {
    std::ofstream file(out);
    if (!file) {
      std::cerr << "cannot open output file: " << out << "\n";
      return 1;
    }
    file << payload << "\n";
  }
  return 0;
}

int cmd_grad_check(std::uint64_t seed, int points) {
  const GradCheckReport report = grad_check(seed, points);
  nlohmann::json j = {{"points", report.points},
                      {"max_rel_error_pointwise", report.max_rel_error_pointwise},
                      {"max_rel_error_full", report.max_rel_error_full},
                      {"max_rel_error", report.max_rel_error()}};
  std::cout << j.dump(2) << "\n";
  return report.max_rel_error() < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep-redundancy speech transport toolkit"};
  app.set_config("--config", "", "key=value config file ('#' comments)");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::uint64_t transform_seed = TransformConfig{}.seed;
  int frames = 400;
  int sequences = 128;
  std::string out, table_path, features_path, stream_path, trace_path, log_path;
  double duration_s = 1.04;
  double loss = 0.184;
  double burst = 5.0;
  std::uint64_t trace_seed = 777;
  int primary_bytes = 60;
  int points = 100;
  std::vector<double> sweep_rates;
  int seeds_per_rate = 20;
  TrainConfig train_cfg;
  std::uint64_t corpus_seed = 1000;

  auto* synth = app.add_subcommand("synth", "generate a synthetic feature file");
  synth->add_option("--seed", seed, "generator seed")->capture_default_str();
  synth->add_option("--frames", frames, "frame count (10-ms frames, even)")
      ->capture_default_str();
  synth->add_option("--out", out, "output feature file")->required();

  auto* train = app.add_subcommand("train", "train quantizer tables");
  train->add_option("--corpus-seed", corpus_seed, "first corpus sequence seed")
      ->capture_default_str();
  train->add_option("--sequences", sequences, "corpus size")->capture_default_str();
  train->add_option("--frames", frames, "frames per sequence")->capture_default_str();
  train->add_option("--steps", train_cfg.steps, "optimization steps")
      ->capture_default_str();
  train->add_option("--lr", train_cfg.learning_rate, "learning rate")
      ->capture_default_str();
  train->add_option("--seed", train_cfg.seed, "training seed")->capture_default_str();
  train->add_option("--transform-seed", transform_seed, "reference transform seed")
      ->capture_default_str();
  train->add_option("--out-table", table_path, "output table file")->required();
  train->add_option("--log", log_path, "JSON-lines eval log (default stdout)");

  auto* rd = app.add_subcommand("rd-sweep", "rate-distortion sweep of a table");
  rd->add_option("--table", table_path, "table file")->required();
  rd->add_option("--corpus-seed", corpus_seed, "probe corpus seed")
      ->capture_default_str();
  rd->add_option("--sequences", sequences, "probe sequences")->capture_default_str();
  rd->add_option("--frames", frames, "frames per sequence")->capture_default_str();
  rd->add_option("--transform-seed", transform_seed, "reference transform seed")
      ->capture_default_str();
  rd->add_option("--out", out, "CSV output (default stdout)");

  auto* bs = app.add_subcommand("build-stream", "encode a packet stream with redundancy");
  bs->add_option("--features", features_path, "input feature file")->required();
  bs->add_option("--table", table_path, "table file")->required();
  bs->add_option("--duration-s", duration_s, "redundancy duration in seconds")
      ->capture_default_str();
  bs->add_option("--transform-seed", transform_seed, "reference transform seed")
      ->capture_default_str();
  bs->add_option("--primary-bytes", primary_bytes, "primary payload stub size")
      ->capture_default_str();
  bs->add_option("--out", out, "output stream (JSON lines)")->required();

  auto* sim = app.add_subcommand("simulate", "run the loss/recovery simulator");
  sim->add_option("--stream", stream_path, "stream file (JSON lines)")->required();
  sim->add_option("--table", table_path, "table file")->required();
  sim->add_option("--duration-s", duration_s, "redundancy duration in seconds")
      ->capture_default_str();
  sim->add_option("--transform-seed", transform_seed, "reference transform seed")
      ->capture_default_str();
  sim->add_option("--trace", trace_path, "loss trace file ('1' arrived, '0' lost)");
  sim->add_option("--loss", loss, "average loss rate")->capture_default_str();
  sim->add_option("--burst", burst, "mean burst length in packets")
      ->capture_default_str();
  sim->add_option("--trace-seed", trace_seed, "loss generator seed")
      ->capture_default_str();
  sim->add_option("--sweep", sweep_rates, "sweep these loss rates instead");
  sim->add_option("--seeds-per-rate", seeds_per_rate, "seeds per sweep rate")
      ->capture_default_str();
  sim->add_option("--out", out, "report JSON output (default stdout)");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
  gc->add_option("--seed", seed, "check seed")->capture_default_str();
  gc->add_option("--points", points, "random points")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(seed, frames, out);
    if (train->parsed()) {
      return cmd_train(corpus_seed, sequences, frames, train_cfg, transform_seed,
                       table_path, log_path);
    }
    if (rd->parsed()) {
      return cmd_rd_sweep(table_path, corpus_seed, sequences, frames,
                          transform_seed, out);
    }
    if (bs->parsed()) {
      return cmd_build_stream(features_path, table_path, duration_s,
                              transform_seed, primary_bytes, out);
    }
    if (sim->parsed()) {
      return cmd_simulate(stream_path, table_path, duration_s, transform_seed,
                          trace_path, loss, burst, trace_seed, sweep_rates,
                          seeds_per_rate, out);
    }
    if (gc->parsed()) return cmd_grad_check(seed, points);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
