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

#ifndef ELSA_EVALKIT_H_
#define ELSA_EVALKIT_H_

// Retrieval metrics, zero-shot probing, MLP probes on frozen embeddings,
// direction swap/removal and binned DOA error reports.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elsa/errors.h"
#include "elsa/optim.h"
#include "elsa/roomsim.h"

namespace elsa::eval {

// Row-major rows x cols.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
  void append(const std::vector<double>& r);
  EmbeddingMatrix select(const std::vector<std::size_t>& idx) const;
};

inline constexpr std::array<std::size_t, 3> kRecallKs{1, 5, 10};

struct DirectionalRetrieval {
  std::array<double, 3> recall{};  // R@1, R@5, R@10
  double map_at_10 = 0.0;
};

struct RetrievalReport {
  std::size_t n = 0;
  DirectionalRetrieval audio_to_text;
  DirectionalRetrieval text_to_audio;

  double mean_map_at_10() const {
    return 0.5 * (audio_to_text.map_at_10 + text_to_audio.map_at_10);
  }
  std::string to_json() const;
};

// 1-based rank of the matching item of each query (query i matches
// candidate i) by cosine similarity. Ties count against the match: every
// other candidate scoring at least as high is ranked ahead of it.
std::vector<std::size_t> match_ranks(const EmbeddingMatrix& queries,
                                     const EmbeddingMatrix& candidates);

RetrievalReport retrieval_report(const EmbeddingMatrix& audio,
                                 const EmbeddingMatrix& text);

class MissingClassError : public DataError {
 public:
  using DataError::DataError;
};

struct ZeroShotResult {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t n = 0;
  double accuracy = 0.0;
  std::string to_json() const;
};

// Nearest probe by cosine; `probes` maps class label -> text embedding.
ZeroShotResult zeroshot_classify(const EmbeddingMatrix& audio,
                                 const std::vector<std::string>& labels,
                                 const std::map<std::string, std::vector<double>>& probes);

enum class ProbeTask { kDoaRegression, kDirection4, kDistance2 };

struct ProbeConfig {
  std::size_t hidden = 128;
  int epochs = 0;  // optional Adam refinement after the closed-form fit
  double lr = 3e-3;
  double ridge = 1e-6;
  std::uint64_t seed = 0;
};

// Two-layer MLP on frozen embeddings. The hidden layer is a fixed bank of
// paired +-w ReLU features and the readout is fit by ridge least squares.
// With epochs > 0 all weights are then refined with full-batch Adam, keeping
// the best iterate.
class MlpProbe {
 public:
  MlpProbe() = default;
  MlpProbe(std::size_t in, std::size_t hidden, std::size_t out, ProbeTask task,
           std::uint64_t seed);

  std::vector<double> forward(const double* x) const;
  // Class index for classification tasks.
  std::size_t classify(const double* x) const;

  ProbeTask task() const { return task_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::ParameterSet& params() { return params_; }
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

 private:
  ProbeTask task_ = ProbeTask::kDirection4;
  std::size_t in_ = 0, hidden_ = 0, out_ = 0;
  nn::ParameterSet params_;
};

class DegenerateSplitError : public DataError {
 public:
  using DataError::DataError;
};

// Throws DegenerateSplitError if either side is empty or a room id appears
// on both sides.
void check_room_disjoint(const std::vector<std::string>& train_rooms,
                         const std::vector<std::string>& test_rooms);

// Regression targets are unit 3-vectors; classification targets are class
// indices stored in the first element.
MlpProbe train_probe(const EmbeddingMatrix& x,
                     const std::vector<std::vector<double>>& targets,
                     ProbeTask task, const ProbeConfig& cfg = {});

double angular_error_deg(const double* a, const double* b);
// Mean great-circle error of probe outputs against unit targets.
double doa_mae_deg(const MlpProbe& probe, const EmbeddingMatrix& x,
                   const std::vector<std::vector<double>>& targets,
                   std::vector<double>* per_sample = nullptr);
double probe_accuracy(const MlpProbe& probe, const EmbeddingMatrix& x,
                      const std::vector<std::size_t>& labels);

inline const std::array<std::string, 4> kDirections{"left", "right", "front", "back"};

struct DirectionPrototypes {
  std::map<std::string, std::vector<double>> protos;
  const std::vector<double>& at(const std::string& d) const;
};

struct SwapOutcome {
  std::vector<double> embedding;
  std::size_t predicted = 0;
  bool success = false;
};

// v' = normalize(v - p_old + p_new), judged by the 4-class classifier
// (class order follows kDirections).
SwapOutcome direction_swap(const std::vector<double>& emb, const std::string& from,
                           const std::string& to, const DirectionPrototypes& protos,
                           const MlpProbe& classifier);
// normalize(v - p_old); success means the classifier no longer says `from`.
SwapOutcome direction_remove(const std::vector<double>& emb, const std::string& from,
                             const DirectionPrototypes& protos,
                             const MlpProbe& classifier);

struct SwapReport {
  std::size_t evaluated = 0;
  std::size_t correctly_classified = 0;
  std::size_t swaps = 0;
  double swap_success = 0.0;
  double removal_original_rate = 0.0;
  double involution_recovery = 0.0;  // over successful swaps
  std::string to_json() const;
};

SwapReport swap_experiment(const EmbeddingMatrix& emb,
                           const std::vector<std::string>& directions,
                           const DirectionPrototypes& protos,
                           const MlpProbe& classifier);

struct ErrorBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct ErrorBreakdown {
  // attribute name -> 10 uniform bins over the observed range.
  std::vector<std::pair<std::string, std::vector<ErrorBin>>> attributes;
  std::string to_json() const;
  std::string to_table() const;
};

ErrorBreakdown doa_error_breakdown(const std::vector<double>& errors_deg,
                                   const std::vector<room::SpatialAttributes>& attrs,
                                   std::size_t bins = 10);

}  // namespace elsa::eval

#endif  // ELSA_EVALKIT_H_
