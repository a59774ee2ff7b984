// Copyright 2026 The ELSA-Toy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// elsa: command-line driver for the pipeline stages. Every subcommand writes
// into a run directory:
//   <out>/config.json   effective configuration (workers omitted)
//   <out>/report.json   stage results, deterministic for a given seed
//   <out>/checkpoints/  model checkpoints (train)
//   <out>/logs/<cmd>.log
// Exit codes: 0 ok, 1 user or input error, 2 internal error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "elsa/captions.h"
#include "elsa/dataio.h"
#include "elsa/errors.h"
#include "elsa/model.h"
#include "elsa/parallel.h"
#include "elsa/pipeline.h"
#include "elsa/roomsim.h"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace elsa;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string rephraser_url;
};

struct StageInputs {
  std::string corpus;
  std::string features;
  std::string checkpoint;
  std::string embeddings;
  std::string input;
  std::string split = "test";
  double azimuth = 0.0, elevation = 0.0, distance = 1.5;
  std::uint64_t room_index = 0;
};

class Log {
 public:
  explicit Log(const fs::path& path) : os_(path, std::ios::trunc) {
    if (!os_) throw DataError("cannot open log " + path.string());
  }
  void operator()(const std::string& msg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
    os_ << stamp << ' ' << msg << '\n';
    os_.flush();
    std::cerr << msg << '\n';
  }

 private:
  std::ofstream os_;
};

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc);
  os << s;
  if (!s.empty() && s.back() != '\n') os << '\n';
  if (!os) throw DataError("cannot write " + p.string());
}

json parsed(const std::string& s) { return json::parse(s); }

fs::path need_dir(const std::string& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("--") + what + " is required");
  if (!fs::is_directory(p)) throw DataError(std::string(what) + " directory not found: " + p);
  return p;
}

fs::path need_file(const std::string& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("--") + what + " is required");
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " file not found: " + p);
  return p;
}

class Run {
 public:
  Run(const std::string& cmd, const Common& c) : cmd_(cmd) {
    cfg_ = c.config_path.empty() ? pipe::RunConfig{}
                                 : pipe::RunConfig::from_json(read_text(c.config_path));
    if (c.seed) cfg_.set_seed(*c.seed);
    if (c.workers) cfg_.workers = *c.workers;
    if (cfg_.workers < 0) throw ConfigError("workers must be >= 0");
    cfg_.train.workers = cfg_.workers;
    url_ = c.rephraser_url;
    if (url_.empty()) {
      if (auto e = cap::RephraserEndpoint::from_env()) url_ = e->url;
    }
    if (c.out.empty()) throw ConfigError("--out is required");
    out_ = c.out;
    fs::create_directories(out_ / "checkpoints");
    fs::create_directories(out_ / "logs");
    auto echoed = parsed(cfg_.to_json());
    echoed.erase("workers");
    write_text(out_ / "config.json", echoed.dump(2));
    log_.emplace(out_ / "logs" / (cmd + ".log"));
    (*log_)(cmd + ": seed " + std::to_string(cfg_.seed) + ", workers " +
            std::to_string(cfg_.workers == 0 ? default_workers() : cfg_.workers));
  }

  const pipe::RunConfig& cfg() const { return cfg_; }
  int workers() const { return cfg_.workers; }
  const fs::path& out() const { return out_; }
  const std::string& rephraser_url() const { return url_; }
  void log(const std::string& m) { (*log_)(m); }

  void finish(json report) {
    json r{{"command", cmd_}};
    for (auto& [k, v] : report.items()) r[k] = v;
    write_text(out_ / "report.json", r.dump(2));
    log("wrote " + (out_ / "report.json").string());
  }

 private:
  std::string cmd_;
  pipe::RunConfig cfg_;
  fs::path out_;
  std::string url_;
  std::optional<Log> log_;
};

json split_counts(const std::vector<io::ManifestRecord>& recs) {
  json j = json::object();
  for (auto s : {room::Split::kTrain, room::Split::kVal, room::Split::kTest}) {
    std::size_t sp = 0, mono = 0;
    for (const auto& r : recs) {
      if (r.split != s) continue;
      (r.is_spatial ? sp : mono)++;
    }
    j[room::split_name(s)] = {{"spatial", sp}, {"mono", mono}};
  }
  return j;
}

// Replaces template captions with external completions; failures keep the
// template caption and are counted.
json rephrase_manifest(Run& run, const fs::path& corpus) {
  cap::RephraserEndpoint ep;
  ep.url = run.rephraser_url();
  cap::RephraserClient client(ep);
  auto recs = io::read_manifest(corpus / "manifest.jsonl");
  std::vector<char> fell_back(recs.size(), 0);
  std::vector<std::string> errors(recs.size());
  parallel_for(recs.size(), std::min(run.workers() <= 0 ? default_workers() : run.workers(),
                                     ep.max_concurrent),
               [&](std::size_t i) {
                 auto& r = recs[i];
                 if (!r.is_spatial) return;
                 const auto prompt = cap::build_llm_prompt(
                     r.original_caption, cap::attrs_to_descriptors(r.attributes));
                 auto res = client.rephrase(prompt, r.spatial_caption);
                 r.spatial_caption = res.text;
                 fell_back[i] = res.fallback;
                 errors[i] = res.error;
               });
  std::size_t n = 0, fallbacks = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!recs[i].is_spatial) continue;
    ++n;
    if (fell_back[i]) {
      ++fallbacks;
      run.log("rephrase fallback for " + recs[i].id + ": " + errors[i]);
    }
  }
  io::write_manifest(corpus / "manifest.jsonl", recs);
  return {{"endpoint", ep.url}, {"requests", n}, {"fallbacks", fallbacks}};
}

void cmd_synth_corpus(Run& run) {
  const auto corpus = run.out() / "corpus";
  if (fs::exists(corpus)) fs::remove_all(corpus);
  run.log("synthesizing corpus into " + corpus.string());
  const auto recs = io::make_synthetic_corpus(run.cfg().corpus, corpus, run.workers());
  json report{{"corpus", "corpus"}, {"records", recs.size()}, {"splits", split_counts(recs)},
              {"caption_audit_mismatches", io::audit_caption_descriptors(recs)}};
  io::audit_room_disjointness(recs);
  report["rooms_disjoint"] = true;
  if (!run.rephraser_url().empty()) report["rephraser"] = rephrase_manifest(run, corpus);
  run.finish(report);
}

void cmd_simulate(Run& run, const StageInputs& in) {
  const auto wav = io::read_wav(need_file(in.input, "input"));
  if (wav.channels.empty()) throw DataError("input has no channels");
  std::vector<float> mono(wav.channels[0].size(), 0.0f);
  for (const auto& ch : wav.channels) {
    for (std::size_t i = 0; i < mono.size(); ++i) mono[i] += ch[i] / wav.channels.size();
  }
  const auto split = room::parse_split(in.split);
  room::RoomSampler sampler(split, run.cfg().seed, room::AttributeRanges::train_val());
  const auto spec = sampler.sample_for_pose(in.room_index, in.azimuth, in.elevation, in.distance);
  const auto out = room::spatialize(mono, spec, wav.sample_rate);
  io::write_foa_wav(run.out() / "simulated.wav", out.audio);
  const auto& a = out.attributes;
  run.finish({{"audio", "simulated.wav"},
              {"sample_rate", wav.sample_rate},
              {"samples", out.audio.num_samples()},
              {"room",
               {{"dims_m", spec.dims_m},
                {"absorption", spec.absorption},
                {"source_pos", spec.source_pos},
                {"receiver_pos", spec.receiver_pos}}},
              {"attributes",
               {{"azimuth_deg", a.azimuth_deg},
                {"elevation_deg", a.elevation_deg},
                {"distance_m", a.distance_m},
                {"floor_area_m2", a.floor_area_m2},
                {"t30_ms", a.t30_ms}}},
              {"t30_from_sabine", out.t30_from_sabine}});
}

void cmd_featurize(Run& run, const StageInputs& in) {
  const auto corpus = need_dir(in.corpus, "corpus");
  const auto out = run.out() / "features";
  pipe::featurize_corpus(corpus, out, run.cfg().features, run.workers());
  const auto ds = pipe::load_dataset(corpus, out);
  const auto& f = ds.features.front();
  run.finish({{"features", "features"},
              {"records", ds.records.size()},
              {"frames", f.frames},
              {"mel_bands", f.mel_bands},
              {"bins", f.bins}});
}

pipe::Dataset dataset(const StageInputs& in) {
  return pipe::load_dataset(need_dir(in.corpus, "corpus"), need_dir(in.features, "features"));
}

json loss_json(const model::LossBreakdown& l) {
  return {{"clip", l.clip}, {"dir", l.dir}, {"dist", l.dist}, {"area", l.area}, {"total", l.total}};
}

void cmd_train(Run& run, const StageInputs& in) {
  const auto ds = dataset(in);
  const auto data = pipe::make_train_data(ds);
  run.log("training on " + std::to_string(data.train.size()) + " spatial + " +
          std::to_string(data.mono.size()) + " mono clips");
  const auto res = model::train(run.cfg().model, run.cfg().train, data, [&](const model::EpochLog& e) {
    std::ostringstream ss;
    ss << "epoch " << e.epoch << " loss " << e.loss.total << " val mAP@10 "
       << e.val.mean_map_at_10() << (e.best ? " *" : "");
    run.log(ss.str());
  });
  const auto ckpt = run.out() / "checkpoints" / "best.ckpt";
  res.best.save(ckpt, json{{"best_epoch", res.best_epoch}}.dump());
  json hist = json::array();
  for (const auto& e : res.history) {
    hist.push_back({{"epoch", e.epoch},
                    {"loss", loss_json(e.loss)},
                    {"val_mean_map_at_10", e.val.mean_map_at_10()}});
  }
  run.finish({{"checkpoint", "checkpoints/best.ckpt"},
              {"best_epoch", res.best_epoch},
              {"train_clips", data.train.size()},
              {"mono_clips", data.mono.size()},
              {"history", hist}});
}

model::ElsaModel load_model(const StageInputs& in) {
  return model::ElsaModel::load(need_file(in.checkpoint, "checkpoint"));
}

void cmd_evaluate(Run& run, const StageInputs& in) {
  if (!in.embeddings.empty()) {
    run.finish(parsed(pipe::evaluate_embeddings_report(need_file(in.embeddings, "embeddings"))));
    return;
  }
  const auto m = load_model(in);
  run.finish(parsed(pipe::evaluate_report(m, dataset(in), run.workers())));
}

void cmd_probe(Run& run, const StageInputs& in) {
  const auto m = load_model(in);
  run.finish(parsed(pipe::zeroshot_probes(m, dataset(in), run.workers()).to_json()));
}

void cmd_swap(Run& run, const StageInputs& in) {
  const auto m = load_model(in);
  run.finish(parsed(pipe::swap_probe(m, dataset(in), run.cfg().probe, run.workers()).to_json()));
}

void cmd_doa(Run& run, const StageInputs& in) {
  const auto m = load_model(in);
  const auto r = pipe::doa_probe(m, dataset(in), run.cfg().probe, run.workers());
  write_text(run.out() / "doa_breakdown.txt", r.breakdown.to_table());
  run.finish(parsed(r.to_json()));
}

void cmd_export(Run& run, const StageInputs& in) {
  const auto m = load_model(in);
  const auto ds = dataset(in);
  const auto split = room::parse_split(in.split);
  pipe::export_embeddings(m, ds, split, run.out() / "embeddings.mat", run.workers());
  run.finish({{"embeddings", "embeddings.mat"},
              {"ids", "embeddings.ids.txt"},
              {"split", room::split_name(split)},
              {"rows", ds.select(split, true).size()}});
}

int run_main(int argc, char** argv) {
  CLI::App app{"Spatial audio-language embeddings: corpus, training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  StageInputs in;
  app.add_option("--config", c.config_path, "run configuration (JSON)");
  app.add_option("--seed", c.seed, "seed for every stage (overrides the config)");
  app.add_option("--workers", c.workers, "worker threads, 0 = logical cores");
  app.add_option("--out", c.out, "run directory")->required();
  app.add_option("--rephraser-url", c.rephraser_url,
                 "external rephrasing endpoint (or ELSA_REPHRASER_URL)");

  auto* synth = app.add_subcommand("synth-corpus", "generate the synthetic spatial corpus");
  auto* sim = app.add_subcommand("simulate", "spatialize a mono WAV in a sampled room");
  sim->add_option("--input", in.input, "mono WAV (channels are averaged)")->required();
  sim->add_option("--azimuth", in.azimuth, "degrees, left = -90");
  sim->add_option("--elevation", in.elevation, "degrees");
  sim->add_option("--distance", in.distance, "metres");
  sim->add_option("--split", in.split, "room pool: train, val or test");
  sim->add_option("--room-index", in.room_index, "room stream index");
  auto* feat = app.add_subcommand("featurize", "log-mel and intensity-vector features");
  auto* train = app.add_subcommand("train", "contrastive training");
  auto* evaluate = app.add_subcommand("evaluate", "retrieval metrics");
  evaluate->add_option("--embeddings", in.embeddings, "matrix file with 'audio' and 'text'");
  auto* probe = app.add_subcommand("probe", "zero-shot attribute probes");
  auto* swap = app.add_subcommand("swap", "direction swap and removal");
  auto* doa = app.add_subcommand("doa", "DOA regression probe with error breakdown");
  auto* exp = app.add_subcommand("export-embeddings", "write audio/text embeddings");
  exp->add_option("--split", in.split, "train, val or test");
  for (auto* s : {feat, train, evaluate, probe, swap, doa, exp}) {
    s->add_option("--corpus", in.corpus, "corpus directory (manifest.jsonl)");
  }
  for (auto* s : {train, evaluate, probe, swap, doa, exp}) {
    s->add_option("--features", in.features, "feature directory");
  }
  for (auto* s : {evaluate, probe, swap, doa, exp}) {
    s->add_option("--checkpoint", in.checkpoint, "model checkpoint");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto* sub = app.get_subcommands().front();
  Run run(sub->get_name(), c);
  if (sub == synth) cmd_synth_corpus(run);
  else if (sub == sim) cmd_simulate(run, in);
  else if (sub == feat) cmd_featurize(run, in);
  else if (sub == train) cmd_train(run, in);
  else if (sub == evaluate) cmd_evaluate(run, in);
  else if (sub == probe) cmd_probe(run, in);
  else if (sub == swap) cmd_swap(run, in);
  else if (sub == doa) cmd_doa(run, in);
  else cmd_export(run, in);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const elsa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
