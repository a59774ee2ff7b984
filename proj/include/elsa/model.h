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

#ifndef ELSA_MODEL_H_
#define ELSA_MODEL_H_

// The dual encoder: log-mel CNN and coordinate-augmented IV CNN on the audio
// side, hashed bag-of-words on the text side, regression heads, the
// contrastive + spatial loss stack and the deterministic training loop.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "elsa/evalkit.h"
#include "elsa/features.h"
#include "elsa/nn.h"
#include "elsa/optim.h"

namespace elsa::model {

struct ELSAConfig {
  std::size_t semantic_dim = 96;
  std::size_t spatial_dim = 24;
  std::size_t joint_dim = 64;
  std::size_t audio_hidden = 128;
  std::array<std::size_t, 3> conv_channels{16, 32, 32};
  std::size_t text_hash_buckets = 2048;
  std::size_t text_embed_dim = 48;
  std::size_t text_hidden = 128;
  std::size_t head_hidden = 32;
  double init_tau = 0.07;
  double min_tau = 0.01;
  double mix_nonspatial_fraction = 0.5;

  // Throws ConfigError.
  void validate() const;
  std::size_t audio_concat_dim() const { return semantic_dim + spatial_dim; }
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 64;
  double lr = 2e-3;
  double lr_floor = 2e-5;
  std::uint64_t seed = 0;
  int workers = 0;

  void validate() const;
};

// Strict JSON round trip; unknown keys raise ConfigError.
ELSAConfig model_config_from_json(std::string_view text);
std::string to_json(const ELSAConfig& c);
TrainConfig train_config_from_json(std::string_view text);
std::string to_json(const TrainConfig& c);

class EmptyCaptionError : public DataError {
 public:
  using DataError::DataError;
};
class MissingLabelError : public DataError {
 public:
  using DataError::DataError;
};
class EmptyCorpusError : public DataError {
 public:
  using DataError::DataError;
};

// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view caption);
// Throws EmptyCaptionError when nothing survives tokenization.
std::vector<std::size_t> token_buckets(std::string_view caption, std::size_t buckets);

struct TargetLabels {
  std::array<double, 3> direction{0.0, 0.0, 0.0};
  double distance_m = 0.0;
  double floor_area_m2 = 0.0;
  bool is_spatial = false;
};

struct Sample {
  feat::FeatureSet features;
  std::string caption;
  TargetLabels target;
};

// Input and target normalization constants, fitted on the training split.
struct Scalers {
  double logmel_mean = 0.0, logmel_std = 1.0;
  double dist_mean = 0.0, dist_std = 1.0;
  double area_mean = 0.0, area_std = 1.0;
};
Scalers fit_scalers(const std::vector<const Sample*>& train);

struct LossBreakdown {
  double clip = 0.0, dir = 0.0, dist = 0.0, area = 0.0, total = 0.0;
};

// -log softmax_i(X y / tau) over the rows of X [N,d], y [d].
nn::Tensor infonce(const nn::Tensor& X, std::size_t i, const nn::Tensor& y, double tau);
// Mean of the audio->text and text->audio InfoNCE terms over aligned rows.
// `log_scale` is log(1/tau) as a scalar tensor.
nn::Tensor clip_loss(const nn::Tensor& za, const nn::Tensor& zt, const nn::Tensor& log_scale);
nn::Tensor clip_loss(const nn::Tensor& za, const nn::Tensor& zt, double tau);

// [6 + 2, T, F]: IV channels then normalized time and frequency indices.
std::vector<double> spatial_input(const feat::FeatureSet& fs);

class ElsaModel {
 public:
  ElsaModel() = default;
  ElsaModel(const ELSAConfig& cfg, std::uint64_t seed);

  struct AudioOut {
    nn::Tensor z;     // [joint], unit norm
    nn::Tensor raw;   // [joint] before normalization
    nn::Tensor semantic, spatial;
  };
  struct HeadOut {
    nn::Tensor dir;   // [3], unit norm
    nn::Tensor dist;  // [1], z-scored units
    nn::Tensor area;  // [1]
  };

  // `p` holds one tensor per parameter, in ParameterSet order.
  AudioOut audio_forward(const std::vector<nn::Tensor>& p, const feat::FeatureSet& fs) const;
  HeadOut heads(const std::vector<nn::Tensor>& p, const nn::Tensor& raw) const;
  // [B, joint] rows of unit norm.
  nn::Tensor text_forward(const std::vector<nn::Tensor>& p,
                          const std::vector<std::string>& captions) const;
  nn::Tensor log_scale(const std::vector<nn::Tensor>& p) const;

  // Spatial-head terms of one sample, pre-divided by the batch's spatial
  // count. Undefined for mono samples.
  struct AuxTerms {
    nn::Tensor dir, dist, area;
  };
  AuxTerms aux_terms(const std::vector<nn::Tensor>& p, const nn::Tensor& raw,
                     const TargetLabels& t, std::size_t spatial_count) const;

  // Whole-batch loss on a single graph. Used for checks; training uses the
  // per-sample decomposition in train_step.
  struct LossGraph {
    nn::Tensor total;
    LossBreakdown parts;
  };
  LossGraph loss_graph(const std::vector<nn::Tensor>& p,
                       const std::vector<const Sample*>& batch) const;

  std::vector<double> embed_audio(const feat::FeatureSet& fs) const;
  std::vector<double> embed_text(std::string_view caption) const;
  eval::EmbeddingMatrix embed_audio_batch(const std::vector<const feat::FeatureSet*>& fs,
                                          int workers) const;
  eval::EmbeddingMatrix embed_text_batch(const std::vector<std::string>& captions,
                                         int workers) const;
  // Predicted unit direction for one clip.
  std::array<double, 3> predict_direction(const feat::FeatureSet& fs) const;

  const ELSAConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  Scalers& scalers() { return scalers_; }
  const Scalers& scalers() const { return scalers_; }
  // Keeps tau >= min_tau.
  void clamp_temperature();

  nn::Checkpoint to_checkpoint(std::string extra_meta_json = "{}") const;
  static ElsaModel from_checkpoint(const nn::Checkpoint& ck);
  void save(const std::filesystem::path& path, std::string extra_meta_json = "{}") const;
  static ElsaModel load(const std::filesystem::path& path);

 private:
  void build(std::uint64_t seed);
  nn::Tensor cnn(const std::vector<nn::Tensor>& p, std::size_t first, nn::Tensor x) const;

  ELSAConfig cfg_;
  nn::ParameterSet params_;
  Scalers scalers_;
  std::size_t sem_ = 0, spa_ = 0, mlp_ = 0, dir_ = 0, dist_ = 0, area_ = 0, text_ = 0,
              scale_ = 0;
};

struct StepResult {
  LossBreakdown loss;
};

// One Adam update on `batch`. Audio graphs are built per sample (in parallel)
// and their gradients summed in sample order, so the result does not depend
// on `workers`.
StepResult train_step(ElsaModel& model, nn::Adam& adam, const std::vector<const Sample*>& batch,
                      int workers);
// Per-parameter gradients from the same decomposition, without an update.
std::vector<std::vector<double>> batch_gradients(const ElsaModel& model,
                                                 const std::vector<const Sample*>& batch,
                                                 int workers, LossBreakdown* loss = nullptr);

struct TrainData {
  std::vector<Sample> train;
  // Mono-replicated counterpart of train[i], or -1.
  std::vector<int> mono_partner;
  std::vector<Sample> mono;
  std::vector<Sample> val;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;  // mean over batches
  eval::RetrievalReport val;
  bool best = false;
};

struct TrainResult {
  ElsaModel best;
  int best_epoch = -1;
  std::vector<EpochLog> history;
};

// Keeps the epoch with the highest mean validation mAP@10.
TrainResult train(const ELSAConfig& mcfg, const TrainConfig& tcfg, const TrainData& data,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

eval::RetrievalReport evaluate_retrieval(const ElsaModel& model, const std::vector<Sample>& set,
                                         int workers);

}  // namespace elsa::model

#endif  // ELSA_MODEL_H_
