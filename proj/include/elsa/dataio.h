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

#ifndef ELSA_DATAIO_H_
#define ELSA_DATAIO_H_

// File formats (WAV, named matrices, JSON-lines manifests) and the
// synthetic spatial-audio corpus.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "elsa/ambisonics.h"
#include "elsa/errors.h"
#include "elsa/features.h"
#include "elsa/roomsim.h"

namespace elsa::io {

class WrongChannelCountError : public FormatError {
 public:
  using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

// ---- WAV ----

struct WavData {
  double sample_rate = 0.0;
  std::vector<std::vector<float>> channels;
};

// 32-bit IEEE float, little-endian, any channel count.
void write_wav(const std::filesystem::path& path, const WavData& wav);
// Reads PCM 16/24/32-bit and float32 files (plain or extensible format).
WavData read_wav(const std::filesystem::path& path);

void write_foa_wav(const std::filesystem::path& path, const ambi::FOASignal& foa);
// Throws WrongChannelCountError unless the file has four channels.
ambi::FOASignal read_foa_wav(const std::filesystem::path& path);

// ---- named matrices ----

inline constexpr std::uint32_t kMatrixVersion = 1;

struct NamedMatrix {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;  // row-major
};

// Each record carries its own header, so files can be appended to.
class MatrixWriter {
 public:
  MatrixWriter(const std::filesystem::path& path, bool append);
  void write(const NamedMatrix& m);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream os_;
};

std::vector<NamedMatrix> read_matrices(const std::filesystem::path& path);
// Throws DataError when `name` is absent and FormatError when the stored
// dimensions differ from the expected ones (0 = any).
NamedMatrix read_matrix(const std::filesystem::path& path, const std::string& name,
                        std::size_t rows = 0, std::size_t cols = 0);

// Feature caches: "<id>/logmel" [frames, mel] and "<id>/ivs" [frames, bins*6].
void write_features(MatrixWriter& w, const std::string& id, const feat::FeatureSet& fs);
// Pairs the cached matrices back up by id, in file order.
std::vector<std::pair<std::string, feat::FeatureSet>> read_feature_cache(
    const std::filesystem::path& path);

// ---- manifests ----

inline constexpr int kManifestSchema = 1;

struct ManifestRecord {
  std::string id;
  std::string audio_path;  // relative to the corpus root
  std::string original_caption;
  std::string spatial_caption;
  room::SpatialAttributes attributes;
  std::string room_id;  // empty for mono records
  room::Split split = room::Split::kTrain;
  bool is_spatial = true;
  std::string class_name;
  std::string base_id;  // links augmentations and the mono version of a clip
};

std::string to_json_line(const ManifestRecord& r);
ManifestRecord record_from_json_line(const std::string& line);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& recs);
// Throws FormatError on malformed lines and DataError on duplicate ids.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Throws DataError when a room id shows up in two splits.
void audit_room_disjointness(const std::vector<ManifestRecord>& recs);
// Number of spatial records whose caption does not carry exactly the
// descriptors derived from their attributes.
std::size_t audit_caption_descriptors(const std::vector<ManifestRecord>& recs);

// ---- synthetic corpus ----

enum class SignalClass { kTone, kChirp, kBandNoise, kAmNoise, kClickTrain, kHarmonic };

std::string class_name(SignalClass c);
SignalClass parse_signal_class(const std::string& s);
// Base caption, e.g. "a steady tone".
std::string class_phrase(SignalClass c);
std::vector<float> synthesize_signal(SignalClass c, double sample_rate, double seconds,
                                     std::uint64_t seed);

struct SyntheticCorpusSpec {
  std::vector<SignalClass> classes{SignalClass::kTone,      SignalClass::kChirp,
                                   SignalClass::kBandNoise, SignalClass::kAmNoise,
                                   SignalClass::kClickTrain, SignalClass::kHarmonic};
  std::vector<std::string> directions{"left", "right", "front", "back"};
  std::size_t train_clips_per_cell = 20;
  std::size_t val_clips_per_cell = 3;
  std::size_t test_clips_per_cell = 10;
  std::size_t train_augmentations = 2;
  double sample_rate = 16000.0;
  double clip_seconds = 4.0;
  double azimuth_jitter_deg = 25.0;
  room::Range near_m{0.5, 0.95};
  room::Range far_m{2.1, 4.0};
  room::Range up_deg{42.0, 48.0};
  room::Range down_deg{-47.0, -42.0};
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

SyntheticCorpusSpec corpus_spec_from_json(const std::string& text);
std::string to_json(const SyntheticCorpusSpec& s);

// Writes audio/<split>/<id>.wav under `root` plus manifest.jsonl and
// returns the records in manifest order. Output bytes depend only on the
// spec.
std::vector<ManifestRecord> make_synthetic_corpus(const SyntheticCorpusSpec& spec,
                                                  const std::filesystem::path& root,
                                                  int workers);

}  // namespace elsa::io

#endif  // ELSA_DATAIO_H_
