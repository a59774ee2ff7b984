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

#include "elsa/model.h"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "elsa/parallel.h"
#include "elsa/rng.h"

namespace elsa::model {
namespace {

using nn::Tensor;
using json = nlohmann::json;

// Reads the keys of `j` into fields; any key nobody asked for is an error.
class StrictReader {
 public:
  StrictReader(std::string_view text, const char* what) : what_(what) {
    try {
      j_ = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
    if (!j_.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string(what_) + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + what_);
    }
  }

 private:
  const char* what_;
  json j_;
  std::set<std::string> seen_;
};

constexpr std::size_t kCnnParams = 8;

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
  std::vector<const Sample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

void check_target(const TargetLabels& t) {
  if (!t.is_spatial) return;
  const double n = std::hypot(t.direction[0], t.direction[1], t.direction[2]);
  if (std::abs(n - 1.0) > 1e-6 || !std::isfinite(t.distance_m) || !std::isfinite(t.floor_area_m2) ||
      t.distance_m <= 0.0 || t.floor_area_m2 <= 0.0) {
    throw MissingLabelError("spatial sample without valid direction/distance/area targets");
  }
}

std::size_t spatial_count(const std::vector<const Sample*>& batch) {
  std::size_t s = 0;
  for (const Sample* x : batch) {
    check_target(x->target);
    s += x->target.is_spatial;
  }
  return s;
}

}  // namespace

void ELSAConfig::validate() const {
  if (joint_dim == 0 || semantic_dim == 0 || spatial_dim == 0 || audio_hidden == 0 ||
      text_hash_buckets == 0 || text_embed_dim == 0 || text_hidden == 0 || head_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  for (auto c : conv_channels) {
    if (c == 0) throw ConfigError("conv channel counts must be positive");
  }
  if (!(init_tau >= min_tau) || !(min_tau > 0.0)) {
    throw ConfigError("need init_tau >= min_tau > 0");
  }
  if (!(mix_nonspatial_fraction >= 0.0 && mix_nonspatial_fraction <= 1.0)) {
    throw ConfigError("mix_nonspatial_fraction must lie in [0, 1]");
  }
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(lr > 0.0) || !(lr_floor >= 0.0) || lr_floor > lr) {
    throw ConfigError("need lr > 0 and 0 <= lr_floor <= lr");
  }
}

ELSAConfig model_config_from_json(std::string_view text) {
  ELSAConfig c;
  StrictReader r(text, "model config");
  r.get("semantic_dim", c.semantic_dim);
  r.get("spatial_dim", c.spatial_dim);
  r.get("joint_dim", c.joint_dim);
  r.get("audio_hidden", c.audio_hidden);
  r.get("conv_channels", c.conv_channels);
  r.get("text_hash_buckets", c.text_hash_buckets);
  r.get("text_embed_dim", c.text_embed_dim);
  r.get("text_hidden", c.text_hidden);
  r.get("head_hidden", c.head_hidden);
  r.get("init_tau", c.init_tau);
  r.get("min_tau", c.min_tau);
  r.get("mix_nonspatial_fraction", c.mix_nonspatial_fraction);
  r.finish();
  c.validate();
  return c;
}

std::string to_json(const ELSAConfig& c) {
  return json{{"semantic_dim", c.semantic_dim},
              {"spatial_dim", c.spatial_dim},
              {"joint_dim", c.joint_dim},
              {"audio_hidden", c.audio_hidden},
              {"conv_channels", c.conv_channels},
              {"text_hash_buckets", c.text_hash_buckets},
              {"text_embed_dim", c.text_embed_dim},
              {"text_hidden", c.text_hidden},
              {"head_hidden", c.head_hidden},
              {"init_tau", c.init_tau},
              {"min_tau", c.min_tau},
              {"mix_nonspatial_fraction", c.mix_nonspatial_fraction}}
      .dump();
}

TrainConfig train_config_from_json(std::string_view text) {
  TrainConfig c;
  StrictReader r(text, "train config");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("lr_floor", c.lr_floor);
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.finish();
  c.validate();
  return c;
}

std::string to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
              {"lr_floor", c.lr_floor}, {"seed", c.seed},     {"workers", c.workers}}
      .dump();
}

std::vector<std::string> tokenize(std::string_view caption) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : caption) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::size_t> token_buckets(std::string_view caption, std::size_t buckets) {
  const auto toks = tokenize(caption);
  if (toks.empty()) throw EmptyCaptionError("caption has no tokens: '" + std::string(caption) + "'");
  std::vector<std::size_t> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(static_cast<std::size_t>(fnv1a64(t) % buckets));
  return ids;
}

Scalers fit_scalers(const std::vector<const Sample*>& train) {
  Scalers s;
  double m = 0.0, m2 = 0.0, n = 0.0;
  double dm = 0.0, dm2 = 0.0, am = 0.0, am2 = 0.0, ns = 0.0;
  for (const Sample* x : train) {
    for (float v : x->features.logmel) {
      m += v;
      m2 += static_cast<double>(v) * v;
      n += 1.0;
    }
    if (x->target.is_spatial) {
      dm += x->target.distance_m;
      dm2 += x->target.distance_m * x->target.distance_m;
      am += x->target.floor_area_m2;
      am2 += x->target.floor_area_m2 * x->target.floor_area_m2;
      ns += 1.0;
    }
  }
  auto finish = [](double sum, double sum2, double count, double& mean, double& sd) {
    if (count == 0.0) return;
    mean = sum / count;
    sd = std::sqrt(std::max(0.0, sum2 / count - mean * mean));
    if (!(sd > 1e-12)) sd = 1.0;
  };
  finish(m, m2, n, s.logmel_mean, s.logmel_std);
  finish(dm, dm2, ns, s.dist_mean, s.dist_std);
  finish(am, am2, ns, s.area_mean, s.area_std);
  return s;
}

Tensor infonce(const Tensor& X, std::size_t i, const Tensor& y, double tau) {
  if (!(tau > 0.0)) throw DomainError("infonce needs tau > 0");
  const std::size_t n = X.dim(0), d = X.dim(1);
  const Tensor logits = nn::reshape(nn::scale(nn::matmul(X, nn::reshape(y, {d, 1})), 1.0 / tau),
                                    {1, n});
  return nn::cross_entropy_rows(logits, {i});
}

Tensor clip_loss(const Tensor& za, const Tensor& zt, const Tensor& log_scale) {
  if (za.shape().size() != 2 || za.shape() != zt.shape()) {
    throw ShapeError("clip_loss needs equal [N,d] batches, got " + nn::shape_str(za.shape()) +
                     " and " + nn::shape_str(zt.shape()));
  }
  const std::size_t n = za.dim(0);
  std::vector<std::size_t> diag(n);
  std::iota(diag.begin(), diag.end(), 0);
  const Tensor logits = nn::scale_by(nn::matmul(za, nn::transpose(zt)), nn::exp(log_scale));
  return nn::scale(nn::add(nn::cross_entropy_rows(logits, diag),
                           nn::cross_entropy_rows(nn::transpose(logits), diag)),
                   0.5);
}

Tensor clip_loss(const Tensor& za, const Tensor& zt, double tau) {
  if (!(tau > 0.0)) throw DomainError("clip_loss needs tau > 0");
  return clip_loss(za, zt, Tensor::scalar(std::log(1.0 / tau)));
}

std::vector<double> spatial_input(const feat::FeatureSet& fs) {
  const std::size_t T = fs.frames, F = fs.bins;
  if (T == 0 || F == 0 || fs.ivs.size() != T * F * 6) {
    throw ShapeError("spatial input needs frames x bins x 6 IVs");
  }
  std::vector<double> x(8 * T * F);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t c = 0; c < 6; ++c) x[(c * T + t) * F + f] = fs.iv(t, f, c);
      x[(6 * T + t) * F + f] = T > 1 ? -1.0 + 2.0 * static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
      x[(7 * T + t) * F + f] = F > 1 ? -1.0 + 2.0 * static_cast<double>(f) / static_cast<double>(F - 1) : 0.0;
    }
  }
  return x;
}

ElsaModel::ElsaModel(const ELSAConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  build(seed);
}

void ElsaModel::build(std::uint64_t seed) {
  Rng rng(seed, fnv1a64("model-init"));
  auto& ps = params_;
  const auto& ch = cfg_.conv_channels;
  auto add_cnn = [&](const std::string& pre, std::size_t in, std::size_t out) {
    const std::size_t first = ps.size();
    std::size_t prev = in;
    for (std::size_t l = 0; l < 3; ++l) {
      const std::string n = pre + ".conv" + std::to_string(l + 1);
      ps.add_he(n + ".w", {ch[l], prev, 3, 3}, prev * 9, rng);
      ps.add_const(n + ".b", {ch[l]}, 0.0);
      prev = ch[l];
    }
    ps.add_he(pre + ".fc.w", {out, prev}, prev, rng);
    ps.add_const(pre + ".fc.b", {out}, 0.0);
    return first;
  };
  auto add_mlp = [&](const std::string& pre, std::size_t in, std::size_t hidden, std::size_t out) {
    const std::size_t first = ps.size();
    ps.add_he(pre + ".w1", {hidden, in}, in, rng);
    ps.add_const(pre + ".b1", {hidden}, 0.0);
    ps.add_he(pre + ".w2", {out, hidden}, hidden, rng);
    ps.add_const(pre + ".b2", {out}, 0.0);
    return first;
  };
  sem_ = add_cnn("semantic", 1, cfg_.semantic_dim);
  spa_ = add_cnn("spatial", 8, cfg_.spatial_dim);
  mlp_ = add_mlp("audio_proj", cfg_.audio_concat_dim(), cfg_.audio_hidden, cfg_.joint_dim);
  dir_ = add_mlp("head.dir", cfg_.joint_dim, cfg_.head_hidden, 3);
  dist_ = add_mlp("head.dist", cfg_.joint_dim, cfg_.head_hidden, 1);
  area_ = add_mlp("head.area", cfg_.joint_dim, cfg_.head_hidden, 1);
  text_ = ps.size();
  std::vector<double> table(cfg_.text_hash_buckets * cfg_.text_embed_dim);
  for (double& v : table) v = rng.normal();
  ps.add("text.embed", {cfg_.text_hash_buckets, cfg_.text_embed_dim}, std::move(table));
  add_mlp("text_proj", cfg_.text_embed_dim, cfg_.text_hidden, cfg_.joint_dim);
  scale_ = ps.size();
  ps.add_const("logit_scale", {1}, std::log(1.0 / cfg_.init_tau));
}

Tensor ElsaModel::cnn(const std::vector<Tensor>& p, std::size_t first, Tensor x) const {
  for (std::size_t l = 0; l < 3; ++l) {
    x = nn::relu(nn::conv2d(x, p[first + 2 * l], p[first + 2 * l + 1], 1, 1));
    if (l < 2) x = nn::max_pool2d(x, 2);
  }
  return nn::linear(nn::global_mean_pool(x), p[first + 6], p[first + 7]);
}

ElsaModel::AudioOut ElsaModel::audio_forward(const std::vector<Tensor>& p,
                                             const feat::FeatureSet& fs) const {
  if (fs.frames == 0 || fs.mel_bands == 0 || fs.logmel.size() != fs.frames * fs.mel_bands) {
    throw ShapeError("audio features need frames x mel_bands log-mel values");
  }
  std::vector<double> mel(fs.logmel.size());
  for (std::size_t i = 0; i < mel.size(); ++i) {
    mel[i] = (fs.logmel[i] - scalers_.logmel_mean) / scalers_.logmel_std;
  }
  AudioOut out;
  out.semantic = cnn(p, sem_, Tensor::constant({1, fs.frames, fs.mel_bands}, std::move(mel)));
  out.spatial = cnn(p, spa_, Tensor::constant({8, fs.frames, fs.bins}, spatial_input(fs)));
  const Tensor cat = nn::concat({out.semantic, out.spatial});
  out.raw = nn::linear(nn::relu(nn::linear(cat, p[mlp_], p[mlp_ + 1])), p[mlp_ + 2], p[mlp_ + 3]);
  out.z = nn::l2_normalize(out.raw);
  return out;
}

ElsaModel::HeadOut ElsaModel::heads(const std::vector<Tensor>& p, const Tensor& raw) const {
  auto mlp = [&](std::size_t i) {
    return nn::linear(nn::relu(nn::linear(raw, p[i], p[i + 1])), p[i + 2], p[i + 3]);
  };
  return {nn::l2_normalize(mlp(dir_)), mlp(dist_), mlp(area_)};
}

Tensor ElsaModel::text_forward(const std::vector<Tensor>& p,
                               const std::vector<std::string>& captions) const {
  if (captions.empty()) throw EmptyCaptionError("no captions to encode");
  std::vector<Tensor> bags;
  bags.reserve(captions.size());
  for (const auto& c : captions) {
    bags.push_back(nn::embedding_bag_mean(p[text_], token_buckets(c, cfg_.text_hash_buckets)));
  }
  const Tensor h = nn::relu(nn::linear(nn::stack(bags), p[text_ + 1], p[text_ + 2]));
  return nn::l2_normalize(nn::linear(h, p[text_ + 3], p[text_ + 4]));
}

Tensor ElsaModel::log_scale(const std::vector<Tensor>& p) const { return p[scale_]; }

ElsaModel::AuxTerms ElsaModel::aux_terms(const std::vector<Tensor>& p, const Tensor& raw,
                                         const TargetLabels& t,
                                         std::size_t spatial_count) const {
  if (!t.is_spatial) return {};
  check_target(t);
  const double w = 1.0 / static_cast<double>(spatial_count);
  const HeadOut h = heads(p, raw);
  const Tensor target = Tensor::constant({3}, {t.direction[0], t.direction[1], t.direction[2]});
  const Tensor cos = nn::sum(nn::mul(h.dir, target));
  AuxTerms a;
  a.dir = nn::scale(nn::sub(Tensor::scalar(1.0), cos), w);
  const double zd = (t.distance_m - scalers_.dist_mean) / scalers_.dist_std;
  const double za = (t.floor_area_m2 - scalers_.area_mean) / scalers_.area_std;
  a.dist = nn::scale(nn::square(nn::sub(h.dist, Tensor::scalar(zd))), w);
  a.area = nn::scale(nn::square(nn::sub(h.area, Tensor::scalar(za))), w);
  return a;
}

ElsaModel::LossGraph ElsaModel::loss_graph(const std::vector<Tensor>& p,
                                           const std::vector<const Sample*>& batch) const {
  if (batch.empty()) throw EmptyCorpusError("empty batch");
  const std::size_t S = spatial_count(batch);
  std::vector<Tensor> zs;
  std::vector<std::string> caps;
  Tensor dir = Tensor::scalar(0.0), dist = Tensor::scalar(0.0), area = Tensor::scalar(0.0);
  for (const Sample* s : batch) {
    const auto out = audio_forward(p, s->features);
    zs.push_back(out.z);
    caps.push_back(s->caption);
    if (s->target.is_spatial) {
      const auto a = aux_terms(p, out.raw, s->target, S);
      dir = nn::add(dir, a.dir);
      dist = nn::add(dist, a.dist);
      area = nn::add(area, a.area);
    }
  }
  const Tensor clip = clip_loss(nn::stack(zs), text_forward(p, caps), log_scale(p));
  LossGraph g;
  g.total = nn::add(nn::add(clip, dir), nn::add(dist, area));
  g.parts = {clip.item(), dir.item(), dist.item(), area.item(), 0.0};
  g.parts.total = g.parts.clip + g.parts.dir + g.parts.dist + g.parts.area;
  return g;
}

std::vector<double> ElsaModel::embed_audio(const feat::FeatureSet& fs) const {
  return audio_forward(params_.leaves(false), fs).z.value();
}

std::vector<double> ElsaModel::embed_text(std::string_view caption) const {
  return text_forward(params_.leaves(false), {std::string(caption)}).value();
}

eval::EmbeddingMatrix ElsaModel::embed_audio_batch(const std::vector<const feat::FeatureSet*>& fs,
                                                   int workers) const {
  const auto p = params_.leaves(false);
  std::vector<std::vector<double>> rows(fs.size());
  parallel_for(fs.size(), workers, [&](std::size_t i) { rows[i] = audio_forward(p, *fs[i]).z.value(); });
  eval::EmbeddingMatrix m;
  for (const auto& r : rows) m.append(r);
  return m;
}

eval::EmbeddingMatrix ElsaModel::embed_text_batch(const std::vector<std::string>& captions,
                                                  int workers) const {
  const auto p = params_.leaves(false);
  std::vector<std::vector<double>> rows(captions.size());
  parallel_for(captions.size(), workers,
               [&](std::size_t i) { rows[i] = text_forward(p, {captions[i]}).value(); });
  eval::EmbeddingMatrix m;
  for (const auto& r : rows) m.append(r);
  return m;
}

std::array<double, 3> ElsaModel::predict_direction(const feat::FeatureSet& fs) const {
  const auto p = params_.leaves(false);
  const auto& v = heads(p, audio_forward(p, fs).raw).dir.value();
  return {v[0], v[1], v[2]};
}

void ElsaModel::clamp_temperature() {
  double& s = params_.items()[scale_].value[0];
  s = std::min(s, std::log(1.0 / cfg_.min_tau));
}

nn::Checkpoint ElsaModel::to_checkpoint(std::string extra_meta_json) const {
  json meta;
  meta["model_config"] = json::parse(to_json(cfg_));
  meta["scalers"] = {{"logmel_mean", scalers_.logmel_mean}, {"logmel_std", scalers_.logmel_std},
                     {"dist_mean", scalers_.dist_mean},     {"dist_std", scalers_.dist_std},
                     {"area_mean", scalers_.area_mean},     {"area_std", scalers_.area_std}};
  meta["extra"] = json::parse(extra_meta_json);
  nn::Checkpoint ck;
  ck.meta_json = meta.dump();
  ck.params = params_;
  return ck;
}

ElsaModel ElsaModel::from_checkpoint(const nn::Checkpoint& ck) {
  json meta;
  try {
    meta = json::parse(ck.meta_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!meta.contains("model_config") || !meta.contains("scalers")) {
    throw FormatError("checkpoint lacks model config or scalers");
  }
  ElsaModel m(model_config_from_json(meta["model_config"].dump()), 0);
  const auto& sc = meta["scalers"];
  m.scalers_ = {sc.at("logmel_mean"), sc.at("logmel_std"), sc.at("dist_mean"),
                sc.at("dist_std"),    sc.at("area_mean"),  sc.at("area_std")};
  if (ck.params.size() != m.params_.size()) throw FormatError("checkpoint parameter count differs");
  for (auto& p : m.params_.items()) {
    const auto& src = ck.params.get(p.name);
    if (src.shape != p.shape) throw FormatError("checkpoint shape mismatch for " + p.name);
    p.value = src.value;
  }
  return m;
}

void ElsaModel::save(const std::filesystem::path& path, std::string extra_meta_json) const {
  nn::save_checkpoint(path, to_checkpoint(std::move(extra_meta_json)));
}

ElsaModel ElsaModel::load(const std::filesystem::path& path) {
  return from_checkpoint(nn::load_checkpoint(path));
}

std::vector<std::vector<double>> batch_gradients(const ElsaModel& model,
                                                 const std::vector<const Sample*>& batch,
                                                 int workers, LossBreakdown* loss) {
  if (batch.empty()) throw EmptyCorpusError("empty batch");
  const auto& ps = model.params();
  const std::size_t B = batch.size(), P = ps.size();
  const std::size_t S = spatial_count(batch);
  const std::size_t J = model.config().joint_dim;
  const std::size_t text_first = ps.index_of("text.embed");

  struct PerSample {
    std::vector<Tensor> leaves;
    Tensor z;
    ElsaModel::AuxTerms aux;
  };
  std::vector<PerSample> per(B);
  parallel_for(B, workers, [&](std::size_t i) {
    auto& s = per[i];
    s.leaves.resize(P);
    for (std::size_t k = 0; k < text_first; ++k) {
      s.leaves[k] = Tensor::leaf(ps.items()[k].shape, ps.items()[k].value, true);
    }
    const auto out = model.audio_forward(s.leaves, batch[i]->features);
    s.z = out.z;
    s.aux = model.aux_terms(s.leaves, out.raw, batch[i]->target, S);
  });

  // Contrastive term on one graph over the audio embeddings as a leaf.
  std::vector<double> za(B * J);
  std::vector<std::string> caps(B);
  for (std::size_t i = 0; i < B; ++i) {
    std::copy(per[i].z.value().begin(), per[i].z.value().end(), za.begin() + static_cast<std::ptrdiff_t>(i * J));
    caps[i] = batch[i]->caption;
  }
  std::vector<Tensor> tl(P);
  for (std::size_t k = text_first; k < P; ++k) {
    tl[k] = Tensor::leaf(ps.items()[k].shape, ps.items()[k].value, true);
  }
  const Tensor za_leaf = Tensor::leaf({B, J}, za, true);
  const Tensor clip = clip_loss(za_leaf, model.text_forward(tl, caps), model.log_scale(tl));
  clip.backward();
  const auto& dza = za_leaf.grad();

  parallel_for(B, workers, [&](std::size_t i) {
    auto& s = per[i];
    const std::vector<double> g(dza.begin() + static_cast<std::ptrdiff_t>(i * J),
                                dza.begin() + static_cast<std::ptrdiff_t>((i + 1) * J));
    Tensor root = nn::sum(nn::mul(s.z, Tensor::constant({J}, g)));
    if (s.aux.dir.defined()) root = nn::add(root, nn::add(s.aux.dir, nn::add(s.aux.dist, s.aux.area)));
    root.backward();
  });

  std::vector<std::vector<double>> grads(P);
  LossBreakdown lb;
  lb.clip = clip.item();
  for (std::size_t k = 0; k < P; ++k) {
    grads[k].assign(ps.items()[k].value.size(), 0.0);
    if (k >= text_first) {
      if (!tl[k].grad().empty()) grads[k] = tl[k].grad();
      continue;
    }
    for (std::size_t i = 0; i < B; ++i) {
      const auto& g = per[i].leaves[k].grad();
      if (g.empty()) continue;
      for (std::size_t j = 0; j < g.size(); ++j) grads[k][j] += g[j];
    }
  }
  for (const auto& s : per) {
    if (!s.aux.dir.defined()) continue;
    lb.dir += s.aux.dir.item();
    lb.dist += s.aux.dist.item();
    lb.area += s.aux.area.item();
  }
  lb.total = lb.clip + lb.dir + lb.dist + lb.area;
  if (loss) *loss = lb;
  return grads;
}

StepResult train_step(ElsaModel& model, nn::Adam& adam, const std::vector<const Sample*>& batch,
                      int workers) {
  StepResult r;
  const auto grads = batch_gradients(model, batch, workers, &r.loss);
  adam.step(model.params(), grads);
  model.clamp_temperature();
  return r;
}

eval::RetrievalReport evaluate_retrieval(const ElsaModel& model, const std::vector<Sample>& set,
                                         int workers) {
  if (set.empty()) throw EmptyCorpusError("retrieval over an empty set");
  std::vector<const feat::FeatureSet*> fs;
  std::vector<std::string> caps;
  for (const auto& s : set) {
    fs.push_back(&s.features);
    caps.push_back(s.caption);
  }
  return eval::retrieval_report(model.embed_audio_batch(fs, workers),
                                model.embed_text_batch(caps, workers));
}

TrainResult train(const ELSAConfig& mcfg, const TrainConfig& tcfg, const TrainData& data,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  mcfg.validate();
  tcfg.validate();
  if (data.train.empty()) throw EmptyCorpusError("training split is empty");
  if (data.val.empty()) throw EmptyCorpusError("validation split is empty");
  if (!data.mono_partner.empty() && data.mono_partner.size() != data.train.size()) {
    throw ShapeError("mono_partner must align with the training split");
  }

  ElsaModel model(mcfg, tcfg.seed);
  model.scalers() = fit_scalers(pointers(data.train));
  const std::size_t N = data.train.size();
  const std::size_t steps_per_epoch = (N + tcfg.batch_size - 1) / tcfg.batch_size;
  nn::Adam adam({tcfg.lr, tcfg.lr_floor,
                 static_cast<std::uint64_t>(tcfg.epochs) * steps_per_epoch});

  TrainResult result;
  double best_map = -1.0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng(tcfg.seed, fnv1a64("shuffle"), static_cast<std::uint64_t>(epoch))
        .shuffle(order.begin(), order.end());
    std::vector<const Sample*> chosen(N);
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t i = order[k];
      chosen[k] = &data.train[i];
      const int partner = data.mono_partner.empty() ? -1 : data.mono_partner[i];
      if (partner < 0) continue;
      Rng mix(tcfg.seed, fnv1a64("mix"), static_cast<std::uint64_t>(epoch) * N + i);
      if (mix.uniform() < mcfg.mix_nonspatial_fraction) {
        chosen[k] = &data.mono.at(static_cast<std::size_t>(partner));
      }
    }

    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < N; start += tcfg.batch_size) {
      const std::size_t end = std::min(N, start + tcfg.batch_size);
      if (end - start < 2 && batches > 0) break;  // a lone sample has no negatives
      const std::vector<const Sample*> batch(chosen.begin() + static_cast<std::ptrdiff_t>(start),
                                             chosen.begin() + static_cast<std::ptrdiff_t>(end));
      const auto r = train_step(model, adam, batch, tcfg.workers);
      log.loss.clip += r.loss.clip;
      log.loss.dir += r.loss.dir;
      log.loss.dist += r.loss.dist;
      log.loss.area += r.loss.area;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    log.loss.clip /= nb;
    log.loss.dir /= nb;
    log.loss.dist /= nb;
    log.loss.area /= nb;
    log.loss.total = log.loss.clip + log.loss.dir + log.loss.dist + log.loss.area;

    log.val = evaluate_retrieval(model, data.val, tcfg.workers);
    if (log.val.mean_map_at_10() > best_map) {
      best_map = log.val.mean_map_at_10();
      result.best = model;
      result.best_epoch = epoch;
      log.best = true;
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace elsa::model
