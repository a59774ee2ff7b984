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

#include "elsa/pipeline.h"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

#include "elsa/parallel.h"

namespace elsa::pipe {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

eval::EmbeddingMatrix to_embedding(const io::NamedMatrix& m) {
  eval::EmbeddingMatrix e;
  e.rows = m.rows;
  e.cols = m.cols;
  e.data.assign(m.data.begin(), m.data.end());
  return e;
}

json parsed(const std::string& s) { return json::parse(s); }

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  reject_unknown(j, {"seed", "workers", "corpus", "features", "model", "train", "probe"},
                 "run config");
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("corpus")) c.corpus = io::corpus_spec_from_json(j["corpus"].dump());
    if (j.contains("model")) c.model = model::model_config_from_json(j["model"].dump());
    if (j.contains("train")) c.train = model::train_config_from_json(j["train"].dump());
    if (j.contains("features")) {
      const auto& f = j["features"];
      reject_unknown(f, {"win", "hop", "mel_bands", "pool_time", "pool_freq", "crop_seconds"},
                     "features");
      c.features.stft.win = f.value("win", c.features.stft.win);
      c.features.stft.hop = f.value("hop", c.features.stft.hop);
      c.features.stft.mel_bands = f.value("mel_bands", c.features.stft.mel_bands);
      c.features.pool_time = f.value("pool_time", c.features.pool_time);
      c.features.pool_freq = f.value("pool_freq", c.features.pool_freq);
      c.features.crop_seconds = f.value("crop_seconds", c.features.crop_seconds);
    }
    if (j.contains("probe")) {
      const auto& p = j["probe"];
      reject_unknown(p, {"hidden", "epochs", "lr", "ridge"}, "probe");
      c.probe.hidden = p.value("hidden", c.probe.hidden);
      c.probe.epochs = p.value("epochs", c.probe.epochs);
      c.probe.lr = p.value("lr", c.probe.lr);
      c.probe.ridge = p.value("ridge", c.probe.ridge);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.features.stft.sample_rate = c.corpus.sample_rate;
  if (c.features.stft.win <= 0 || c.features.stft.hop <= 0 || c.features.stft.mel_bands <= 0 ||
      c.features.pool_time <= 0 || c.features.pool_freq <= 0 || !(c.features.crop_seconds > 0.0)) {
    throw ConfigError("feature settings must be positive");
  }
  if (c.probe.hidden == 0 || c.probe.epochs < 0 || !(c.probe.lr > 0.0) || !(c.probe.ridge >= 0.0)) {
    throw ConfigError("bad probe settings");
  }
  c.set_seed(c.seed);
  return c;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  corpus.seed = s;
  train.seed = s;
  probe.seed = s;
}

std::string RunConfig::to_json() const {
  auto corpus_j = parsed(io::to_json(corpus));
  corpus_j.erase("seed");
  auto train_j = parsed(model::to_json(train));
  train_j.erase("seed");
  train_j.erase("workers");
  return json{{"seed", seed},
              {"workers", workers},
              {"corpus", corpus_j},
              {"features",
               {{"win", features.stft.win},
                {"hop", features.stft.hop},
                {"mel_bands", features.stft.mel_bands},
                {"pool_time", features.pool_time},
                {"pool_freq", features.pool_freq},
                {"crop_seconds", features.crop_seconds}}},
              {"model", parsed(model::to_json(model))},
              {"train", train_j},
              {"probe",
               {{"hidden", probe.hidden},
                {"epochs", probe.epochs},
                {"lr", probe.lr},
                {"ridge", probe.ridge}}}}
      .dump(2);
}

feat::FeatureSet featurize_clip(const ambi::FOASignal& foa, const FeaturizeConfig& cfg) {
  if (foa.sample_rate != cfg.stft.sample_rate) {
    throw DataError("audio at " + std::to_string(foa.sample_rate) + " Hz, features expect " +
                    std::to_string(cfg.stft.sample_rate) + " Hz");
  }
  const auto keep = static_cast<std::size_t>(std::llround(cfg.crop_seconds * foa.sample_rate));
  ambi::FOASignal cropped = foa;
  for (auto& ch : cropped.channels) ch.resize(std::min(ch.size(), keep));
  return feat::pool_features(feat::extract_features(cropped, cfg.stft), cfg.pool_time,
                             cfg.pool_freq);
}

void featurize_corpus(const fs::path& corpus_root, const fs::path& out_dir,
                      const FeaturizeConfig& cfg, int workers) {
  const auto recs = io::read_manifest(corpus_root / "manifest.jsonl");
  fs::create_directories(out_dir);
  for (auto split : {room::Split::kTrain, room::Split::kVal, room::Split::kTest}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].split == split) idx.push_back(i);
    }
    std::vector<feat::FeatureSet> feats(idx.size());
    parallel_for(idx.size(), workers, [&](std::size_t k) {
      feats[k] = featurize_clip(io::read_foa_wav(corpus_root / recs[idx[k]].audio_path), cfg);
    });
    io::MatrixWriter w(out_dir / (room::split_name(split) + ".mat"), false);
    for (std::size_t k = 0; k < idx.size(); ++k) io::write_features(w, recs[idx[k]].id, feats[k]);
    w.close();
  }
}

std::vector<std::size_t> Dataset::select(room::Split split, bool spatial) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split && records[i].is_spatial == spatial) out.push_back(i);
  }
  return out;
}

Dataset load_dataset(const fs::path& corpus_root, const fs::path& features_dir) {
  Dataset ds;
  ds.records = io::read_manifest(corpus_root / "manifest.jsonl");
  io::audit_room_disjointness(ds.records);
  std::map<std::string, feat::FeatureSet> by_id;
  for (auto split : {room::Split::kTrain, room::Split::kVal, room::Split::kTest}) {
    const auto path = features_dir / (room::split_name(split) + ".mat");
    if (!fs::exists(path)) continue;
    for (auto& [id, f] : io::read_feature_cache(path)) by_id.emplace(id, std::move(f));
  }
  ds.features.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw DataError("no cached features for " + r.id);
    ds.features.push_back(std::move(it->second));
  }
  return ds;
}

std::array<double, 3> doa_vector(const room::SpatialAttributes& a) {
  return room::attributes_to_direction(a.azimuth_deg, a.elevation_deg).unit_vector();
}

model::Sample make_sample(const io::ManifestRecord& r, const feat::FeatureSet& f) {
  model::Sample s;
  s.features = f;
  s.caption = r.spatial_caption;
  s.target.is_spatial = r.is_spatial;
  if (r.is_spatial) {
    s.target.direction = doa_vector(r.attributes);
    s.target.distance_m = r.attributes.distance_m;
    s.target.floor_area_m2 = r.attributes.floor_area_m2;
  }
  return s;
}

model::TrainData make_train_data(const Dataset& ds) {
  model::TrainData td;
  std::map<std::string, int> mono_of;
  for (std::size_t i : ds.select(room::Split::kTrain, false)) {
    mono_of[ds.records[i].base_id] = static_cast<int>(td.mono.size());
    td.mono.push_back(make_sample(ds.records[i], ds.features[i]));
  }
  for (std::size_t i : ds.select(room::Split::kTrain, true)) {
    td.train.push_back(make_sample(ds.records[i], ds.features[i]));
    const auto it = mono_of.find(ds.records[i].base_id);
    td.mono_partner.push_back(it == mono_of.end() ? -1 : it->second);
  }
  for (std::size_t i : ds.select(room::Split::kVal, true)) {
    td.val.push_back(make_sample(ds.records[i], ds.features[i]));
  }
  return td;
}

const std::map<std::string, std::vector<std::string>>& probe_families() {
  static const std::map<std::string, std::vector<std::string>> kFamilies{
      {"direction", {"left", "right", "front", "back"}},
      {"distance", {"near", "far"}},
      {"elevation", {"up", "down"}},
      {"room_size", {"small", "medium", "large"}},
      {"reverb", {"highly reverberant", "acoustically dampened"}}};
  return kFamilies;
}

std::string family_label(const io::ManifestRecord& r, const std::string& family) {
  if (!r.is_spatial) return {};
  const auto d = cap::attrs_to_descriptors(r.attributes);
  if (family == "direction") return d.direction ? cap::to_string(*d.direction) : "";
  if (family == "distance") return d.distance ? cap::to_string(*d.distance) : "";
  if (family == "elevation") return d.elevation ? cap::to_string(*d.elevation) : "";
  if (family == "room_size") return cap::to_string(d.room_size);
  if (family == "reverb") return d.reverb ? cap::to_string(*d.reverb) : "";
  throw ConfigError("unknown probe family '" + family + "'");
}

Embeddings embed(const model::ElsaModel& m, const Dataset& ds, const std::vector<std::size_t>& idx,
                 int workers) {
  Embeddings e;
  e.rows = idx;
  std::vector<const feat::FeatureSet*> fs;
  std::vector<std::string> caps;
  for (std::size_t i : idx) {
    fs.push_back(&ds.features[i]);
    caps.push_back(ds.records[i].spatial_caption);
  }
  e.audio = m.embed_audio_batch(fs, workers);
  e.text = m.embed_text_batch(caps, workers);
  return e;
}

std::string evaluate_report(const model::ElsaModel& m, const Dataset& ds, int workers) {
  const auto test = ds.select(room::Split::kTest, true);
  if (test.empty()) throw DataError("no spatial test records");
  const auto e = embed(m, ds, test, workers);
  json j;
  j["split"] = "test";
  j["retrieval"] = json::parse(eval::retrieval_report(e.audio, e.text).to_json());

  const auto mono = ds.select(room::Split::kTest, false);
  if (!mono.empty()) {
    std::vector<const feat::FeatureSet*> fs;
    std::vector<std::string> labels;
    std::map<std::string, std::vector<double>> probes;
    for (std::size_t i : mono) {
      fs.push_back(&ds.features[i]);
      labels.push_back(ds.records[i].class_name);
      if (!probes.count(ds.records[i].class_name)) {
        probes[ds.records[i].class_name] = m.embed_text(ds.records[i].original_caption);
      }
    }
    const auto zs = eval::zeroshot_classify(m.embed_audio_batch(fs, workers), labels, probes);
    j["mono_semantic_zeroshot"] = json::parse(zs.to_json());
  }
  return j.dump(2);
}

std::string evaluate_embeddings_report(const fs::path& matrices) {
  const auto audio = to_embedding(io::read_matrix(matrices, "audio"));
  const auto text = to_embedding(io::read_matrix(matrices, "text"));
  json j;
  j["source"] = matrices.filename().string();
  j["retrieval"] = json::parse(eval::retrieval_report(audio, text).to_json());
  return j.dump(2);
}

std::string ZeroShotTable::to_json() const {
  json j = json::object();
  for (const auto& [name, r] : families) j[name] = json::parse(r.to_json());
  return j.dump(2);
}

ZeroShotTable zeroshot_probes(const model::ElsaModel& m, const Dataset& ds, int workers) {
  const auto test = ds.select(room::Split::kTest, true);
  if (test.empty()) throw DataError("no spatial test records");
  std::vector<const feat::FeatureSet*> all;
  for (std::size_t i : test) all.push_back(&ds.features[i]);
  const auto audio = m.embed_audio_batch(all, workers);
  ZeroShotTable t;
  for (const auto& [family, labels] : probe_families()) {
    std::map<std::string, std::vector<double>> probes;
    for (const auto& l : labels) probes[l] = m.embed_text(cap::probe_caption(l));
    std::vector<std::size_t> keep;
    std::vector<std::string> y;
    for (std::size_t k = 0; k < test.size(); ++k) {
      auto l = family_label(ds.records[test[k]], family);
      if (l.empty()) continue;
      keep.push_back(k);
      y.push_back(std::move(l));
    }
    if (keep.empty()) continue;
    t.families[family] = eval::zeroshot_classify(audio.select(keep), y, probes);
  }
  return t;
}

std::string DoaResult::to_json() const {
  return json{{"mae_deg", mae_deg},
              {"train_n", train_n},
              {"test_n", test_n},
              {"breakdown", json::parse(breakdown.to_json())}}
      .dump(2);
}

DoaResult doa_probe(const model::ElsaModel& m, const Dataset& ds, const eval::ProbeConfig& cfg,
                    int workers) {
  const auto tr = ds.select(room::Split::kTrain, true);
  const auto te = ds.select(room::Split::kTest, true);
  std::vector<std::string> tr_rooms, te_rooms;
  for (std::size_t i : tr) tr_rooms.push_back(ds.records[i].room_id);
  for (std::size_t i : te) te_rooms.push_back(ds.records[i].room_id);
  eval::check_room_disjoint(tr_rooms, te_rooms);

  auto targets = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<double>> y;
    for (std::size_t i : idx) {
      const auto v = doa_vector(ds.records[i].attributes);
      y.push_back({v[0], v[1], v[2]});
    }
    return y;
  };
  const auto etr = embed(m, ds, tr, workers);
  const auto ete = embed(m, ds, te, workers);
  const auto probe = eval::train_probe(etr.audio, targets(tr), eval::ProbeTask::kDoaRegression, cfg);
  DoaResult r;
  std::vector<double> errors;
  r.mae_deg = eval::doa_mae_deg(probe, ete.audio, targets(te), &errors);
  r.train_n = tr.size();
  r.test_n = te.size();
  std::vector<room::SpatialAttributes> attrs;
  for (std::size_t i : te) attrs.push_back(ds.records[i].attributes);
  r.breakdown = eval::doa_error_breakdown(errors, attrs);
  return r;
}

std::string SwapResult::to_json() const {
  auto j = json::parse(report.to_json());
  j["classifier_test_accuracy"] = classifier_test_accuracy;
  return j.dump(2);
}

SwapResult swap_probe(const model::ElsaModel& m, const Dataset& ds, const eval::ProbeConfig& cfg,
                      int workers) {
  auto labelled = [&](room::Split split) {
    std::vector<std::size_t> idx;
    std::vector<std::string> dirs;
    for (std::size_t i : ds.select(split, true)) {
      auto d = family_label(ds.records[i], "direction");
      if (d.empty()) continue;
      idx.push_back(i);
      dirs.push_back(std::move(d));
    }
    return std::pair{idx, dirs};
  };
  const auto [tr, tr_dirs] = labelled(room::Split::kTrain);
  const auto [te, te_dirs] = labelled(room::Split::kTest);
  if (tr.empty() || te.empty()) throw eval::DegenerateSplitError("no direction-labelled clips");
  auto class_index = [](const std::string& d) {
    return static_cast<std::size_t>(std::find(eval::kDirections.begin(), eval::kDirections.end(), d) -
                                    eval::kDirections.begin());
  };
  const auto etr = embed(m, ds, tr, workers);
  const auto ete = embed(m, ds, te, workers);
  std::vector<std::vector<double>> y;
  for (const auto& d : tr_dirs) y.push_back({static_cast<double>(class_index(d))});
  const auto clf = eval::train_probe(etr.audio, y, eval::ProbeTask::kDirection4, cfg);

  eval::DirectionPrototypes protos;
  for (const auto& d : eval::kDirections) protos.protos[d] = m.embed_text(cap::probe_caption(d));
  SwapResult r;
  r.report = eval::swap_experiment(ete.audio, te_dirs, protos, clf);
  std::vector<std::size_t> te_labels;
  for (const auto& d : te_dirs) te_labels.push_back(class_index(d));
  r.classifier_test_accuracy = eval::probe_accuracy(clf, ete.audio, te_labels);
  return r;
}

void export_embeddings(const model::ElsaModel& m, const Dataset& ds, room::Split split,
                       const fs::path& out, int workers) {
  const auto idx = ds.select(split, true);
  if (idx.empty()) throw DataError("no spatial records in split " + room::split_name(split));
  const auto e = embed(m, ds, idx, workers);
  auto to_named = [](const std::string& name, const eval::EmbeddingMatrix& x) {
    return io::NamedMatrix{name, x.rows, x.cols, std::vector<float>(x.data.begin(), x.data.end())};
  };
  io::MatrixWriter w(out, false);
  w.write(to_named("audio", e.audio));
  w.write(to_named("text", e.text));
  w.close();
  auto ids_path = out;
  ids_path.replace_extension(".ids.txt");
  std::ofstream os(ids_path);
  for (std::size_t i : idx) os << ds.records[i].id << '\n';
  if (!os) throw DataError("failed writing " + ids_path.string());
}

}  // namespace elsa::pipe
