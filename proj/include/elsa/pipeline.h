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

#ifndef ELSA_PIPELINE_H_
#define ELSA_PIPELINE_H_

// Stage functions shared by the command-line tool and the acceptance run:
// run configuration, featurization, dataset assembly, training and the
// evaluation reports.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "elsa/captions.h"
#include "elsa/dataio.h"
#include "elsa/evalkit.h"
#include "elsa/features.h"
#include "elsa/model.h"

namespace elsa::pipe {

struct FeaturizeConfig {
  feat::FeatureConfig stft = feat::FeatureConfig::toy();
  int pool_time = 8;
  int pool_freq = 8;
  double crop_seconds = 4.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 0;
  io::SyntheticCorpusSpec corpus;
  FeaturizeConfig features;
  model::ELSAConfig model;
  model::TrainConfig train;
  eval::ProbeConfig probe;

  // Strict: unknown keys at any level raise ConfigError. The top-level seed
  // overrides every per-stage seed.
  static RunConfig from_json(const std::string& text);
  std::string to_json() const;
  void set_seed(std::uint64_t s);
};

// Crop, STFT features, then average-pool to the model grid.
feat::FeatureSet featurize_clip(const ambi::FOASignal& foa, const FeaturizeConfig& cfg);

// Writes <out>/<split>.mat with features for every manifest record of that
// split, in manifest order.
void featurize_corpus(const std::filesystem::path& corpus_root,
                      const std::filesystem::path& out_dir, const FeaturizeConfig& cfg,
                      int workers);

struct Dataset {
  std::vector<io::ManifestRecord> records;
  std::vector<feat::FeatureSet> features;  // aligned with records

  std::vector<std::size_t> select(room::Split split, bool spatial) const;
};

Dataset load_dataset(const std::filesystem::path& corpus_root,
                     const std::filesystem::path& features_dir);

// Unit DOA vector in the receiver frame.
std::array<double, 3> doa_vector(const room::SpatialAttributes& a);
model::Sample make_sample(const io::ManifestRecord& r, const feat::FeatureSet& f);
model::TrainData make_train_data(const Dataset& ds);

// Label of one probe family ("direction", "distance", "elevation",
// "room_size", "reverb") for a record, empty when the band is not covered.
std::string family_label(const io::ManifestRecord& r, const std::string& family);
const std::map<std::string, std::vector<std::string>>& probe_families();

struct Embeddings {
  std::vector<std::size_t> rows;  // dataset indices
  eval::EmbeddingMatrix audio;
  eval::EmbeddingMatrix text;     // caption embeddings
};
Embeddings embed(const model::ElsaModel& m, const Dataset& ds, const std::vector<std::size_t>& idx,
                 int workers);

// Retrieval on test spatial clips plus mono semantic zero-shot accuracy.
std::string evaluate_report(const model::ElsaModel& m, const Dataset& ds, int workers);
// Retrieval from an exported embedding file holding "audio" and "text".
std::string evaluate_embeddings_report(const std::filesystem::path& matrices);

struct ZeroShotTable {
  std::map<std::string, eval::ZeroShotResult> families;
  std::string to_json() const;
};
ZeroShotTable zeroshot_probes(const model::ElsaModel& m, const Dataset& ds, int workers);

struct DoaResult {
  double mae_deg = 0.0;
  std::size_t train_n = 0, test_n = 0;
  eval::ErrorBreakdown breakdown;
  std::string to_json() const;
};
DoaResult doa_probe(const model::ElsaModel& m, const Dataset& ds, const eval::ProbeConfig& cfg,
                    int workers);

struct SwapResult {
  eval::SwapReport report;
  double classifier_test_accuracy = 0.0;
  std::string to_json() const;
};
SwapResult swap_probe(const model::ElsaModel& m, const Dataset& ds, const eval::ProbeConfig& cfg,
                      int workers);

void export_embeddings(const model::ElsaModel& m, const Dataset& ds, room::Split split,
                       const std::filesystem::path& out, int workers);

}  // namespace elsa::pipe

#endif  // ELSA_PIPELINE_H_
