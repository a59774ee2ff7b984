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

#include "elsa/evalkit.h"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace elsa::eval {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> normalize(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return v;
}

DirectionalRetrieval summarize(const std::vector<std::size_t>& ranks) {
  DirectionalRetrieval d;
  for (std::size_t r : ranks) {
    for (std::size_t k = 0; k < kRecallKs.size(); ++k) {
      if (r <= kRecallKs[k]) d.recall[k] += 1.0;
    }
    if (r <= 10) d.map_at_10 += 1.0 / static_cast<double>(r);
  }
  const auto n = static_cast<double>(ranks.size());
  for (double& v : d.recall) v /= n;
  d.map_at_10 /= n;
  return d;
}

nlohmann::json to_json(const DirectionalRetrieval& d) {
  return {{"R@1", d.recall[0]}, {"R@5", d.recall[1]}, {"R@10", d.recall[2]},
          {"mAP@10", d.map_at_10}};
}

std::size_t direction_index(const std::string& d) {
  for (std::size_t i = 0; i < kDirections.size(); ++i) {
    if (kDirections[i] == d) return i;
  }
  throw MissingClassError("unknown direction '" + d + "'");
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void EmbeddingMatrix::append(const std::vector<double>& r) {
  if (rows == 0 && cols == 0) cols = r.size();
  if (r.size() != cols) {
    throw ShapeError("embedding row of width " + std::to_string(r.size()) +
                     " appended to matrix of width " + std::to_string(cols));
  }
  data.insert(data.end(), r.begin(), r.end());
  ++rows;
}

EmbeddingMatrix EmbeddingMatrix::select(const std::vector<std::size_t>& idx) const {
  EmbeddingMatrix out;
  out.cols = cols;
  for (std::size_t i : idx) {
    out.data.insert(out.data.end(), row(i), row(i) + cols);
    ++out.rows;
  }
  return out;
}

std::vector<std::size_t> match_ranks(const EmbeddingMatrix& queries,
                                     const EmbeddingMatrix& candidates) {
  if (queries.rows != candidates.rows || queries.cols != candidates.cols) {
    throw ShapeError("retrieval needs aligned embedding sets, got " +
                     std::to_string(queries.rows) + "x" + std::to_string(queries.cols) +
                     " and " + std::to_string(candidates.rows) + "x" +
                     std::to_string(candidates.cols));
  }
  if (queries.rows == 0) throw ShapeError("retrieval over an empty set");
  // Plain loops rather than a blocked product: duplicate rows have to score
  // bit-identically wherever they sit, or pessimistic ties break by rounding.
  const std::size_t n = queries.rows, d = queries.cols;
  auto unit_rows = [d](const EmbeddingMatrix& m) {
    std::vector<double> out(m.data);
    for (std::size_t i = 0; i < m.rows; ++i) {
      double* r = out.data() + i * d;
      double ss = 0.0;
      for (std::size_t k = 0; k < d; ++k) ss += r[k] * r[k];
      const double norm = std::sqrt(ss);
      if (norm > 0.0) {
        for (std::size_t k = 0; k < d; ++k) r[k] /= norm;
      }
    }
    return out;
  };
  const auto q = unit_rows(queries), c = unit_rows(candidates);
  auto sim = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += q[i * d + k] * c[j * d + k];
    return s;
  };
  std::vector<std::size_t> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double own = sim(i, i);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && sim(i, j) >= own) ++ahead;
    }
    ranks[i] = ahead + 1;
  }
  return ranks;
}

RetrievalReport retrieval_report(const EmbeddingMatrix& audio, const EmbeddingMatrix& text) {
  RetrievalReport r;
  r.n = audio.rows;
  r.audio_to_text = summarize(match_ranks(audio, text));
  r.text_to_audio = summarize(match_ranks(text, audio));
  return r;
}

std::string RetrievalReport::to_json() const {
  return nlohmann::json{{"n", n},
                        {"audio_to_text", eval::to_json(audio_to_text)},
                        {"text_to_audio", eval::to_json(text_to_audio)}}
      .dump(2);
}

ZeroShotResult zeroshot_classify(const EmbeddingMatrix& audio,
                                 const std::vector<std::string>& labels,
                                 const std::map<std::string, std::vector<double>>& probes) {
  if (labels.size() != audio.rows) throw ShapeError("zero-shot: labels and embeddings differ");
  ZeroShotResult res;
  std::vector<std::vector<double>> proto;
  for (const auto& [name, e] : probes) {
    if (e.size() != audio.cols) throw ShapeError("zero-shot: probe width mismatch");
    res.classes.push_back(name);
    proto.push_back(normalize(e));
  }
  const std::size_t k = res.classes.size();
  res.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < audio.rows; ++i) {
    const auto it = std::find(res.classes.begin(), res.classes.end(), labels[i]);
    if (it == res.classes.end()) {
      throw MissingClassError("no probe caption for class '" + labels[i] + "'");
    }
    const auto truth = static_cast<std::size_t>(it - res.classes.begin());
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t d = 0; d < audio.cols; ++d) s += audio.row(i)[d] * proto[c][d];
      if (s > best_sim) {
        best_sim = s;
        best = c;
      }
    }
    ++res.confusion[truth][best];
    if (best == truth) ++correct;
  }
  res.n = audio.rows;
  res.accuracy = res.n ? static_cast<double>(correct) / static_cast<double>(res.n) : 0.0;
  return res;
}

std::string ZeroShotResult::to_json() const {
  return nlohmann::json{{"classes", classes}, {"confusion", confusion}, {"n", n},
                        {"accuracy", accuracy}}
      .dump(2);
}

MlpProbe::MlpProbe(std::size_t in, std::size_t hidden, std::size_t out, ProbeTask task,
                   std::uint64_t seed)
    : task_(task), in_(in), hidden_(hidden), out_(out) {
  Rng rng(seed, fnv1a64("mlp-probe"));
  const std::size_t half = (hidden + 1) / 2;
  hidden_ = 2 * half;
  std::vector<double> w1(hidden_ * in);
  for (std::size_t h = 0; h < half; ++h) {
    for (std::size_t i = 0; i < in; ++i) {
      const double w = rng.normal() / std::sqrt(static_cast<double>(in));
      w1[h * in + i] = w;
      w1[(h + half) * in + i] = -w;
    }
  }
  params_.add("w1", {hidden_, in}, std::move(w1));
  params_.add_const("b1", {hidden_}, 0.0);
  params_.add_const("w2", {out, hidden_}, 0.0);
  params_.add_const("b2", {out}, 0.0);
}

std::vector<double> MlpProbe::forward(const double* x) const {
  const auto& w1 = params_.items()[0].value;
  const auto& b1 = params_.items()[1].value;
  const auto& w2 = params_.items()[2].value;
  const auto& b2 = params_.items()[3].value;
  std::vector<double> h(hidden_);
  for (std::size_t j = 0; j < hidden_; ++j) {
    double a = b1[j];
    for (std::size_t i = 0; i < in_; ++i) a += w1[j * in_ + i] * x[i];
    h[j] = std::max(0.0, a);
  }
  std::vector<double> y(out_);
  for (std::size_t o = 0; o < out_; ++o) {
    double a = b2[o];
    for (std::size_t j = 0; j < hidden_; ++j) a += w2[o * hidden_ + j] * h[j];
    y[o] = a;
  }
  return y;
}

std::size_t MlpProbe::classify(const double* x) const { return argmax(forward(x)); }

void check_room_disjoint(const std::vector<std::string>& train_rooms,
                         const std::vector<std::string>& test_rooms) {
  if (train_rooms.empty() || test_rooms.empty()) {
    throw DegenerateSplitError("probe needs non-empty train and test sets");
  }
  const std::set<std::string> train(train_rooms.begin(), train_rooms.end());
  for (const auto& r : test_rooms) {
    if (train.count(r)) throw DegenerateSplitError("room '" + r + "' is in both splits");
  }
}

MlpProbe train_probe(const EmbeddingMatrix& x, const std::vector<std::vector<double>>& targets,
                     ProbeTask task, const ProbeConfig& cfg) {
  if (x.rows == 0 || targets.size() != x.rows) {
    throw DegenerateSplitError("probe training set is empty or misaligned");
  }
  const bool regression = task == ProbeTask::kDoaRegression;
  const std::size_t out = regression ? 3 : (task == ProbeTask::kDirection4 ? 4 : 2);
  std::vector<std::size_t> labels;
  RowMat Y = RowMat::Zero(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(out));
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (regression) {
      if (targets[i].size() != 3) throw ShapeError("DOA targets must be 3-vectors");
      for (std::size_t d = 0; d < 3; ++d) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = targets[i][d];
    } else {
      const auto c = static_cast<std::size_t>(targets[i].at(0));
      if (c >= out) throw ShapeError("class index out of range");
      labels.push_back(c);
      Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = 1.0;
    }
  }
  if (!regression && std::set<std::size_t>(labels.begin(), labels.end()).size() < 2) {
    throw DegenerateSplitError("classification probe needs at least two classes");
  }

  MlpProbe probe(x.cols, cfg.hidden, out, task, cfg.seed);
  auto& ps = probe.params();
  const std::size_t hidden = ps.items()[0].shape[0];

  // Closed-form readout on the initial features.
  RowMat H(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(hidden + 1));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto& w1 = ps.items()[0].value;
    for (std::size_t j = 0; j < hidden; ++j) {
      double a = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) a += w1[j * x.cols + k] * x.row(i)[k];
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::max(0.0, a);
    }
    H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(hidden)) = 1.0;
  }
  Eigen::MatrixXd gram = H.transpose() * H;
  gram.diagonal().array() += cfg.ridge;
  const Eigen::MatrixXd beta = gram.ldlt().solve(H.transpose() * Y);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t j = 0; j < hidden; ++j) {
      ps.items()[2].value[o * hidden + j] = beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(o));
    }
    ps.items()[3].value[o] = beta(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(o));
  }

  const nn::Tensor X = nn::Tensor::constant({x.rows, x.cols}, x.data);
  const nn::Tensor T = nn::Tensor::constant(
      {x.rows, out}, std::vector<double>(Y.data(), Y.data() + Y.size()));
  nn::Adam adam({cfg.lr, 0.0, static_cast<std::uint64_t>(std::max(1, cfg.epochs))});
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<nn::Parameter> best = ps.items();
  for (int e = 0; e <= cfg.epochs; ++e) {
    const auto p = ps.leaves(true);
    const auto logits = nn::linear(nn::relu(nn::linear(X, p[0], p[1])), p[2], p[3]);
    const auto loss = regression ? nn::mean(nn::square(nn::sub(logits, T)))
                                 : nn::cross_entropy_rows(logits, labels);
    // Keep the best iterate; Adam can only wander off a closed-form optimum.
    if (loss.value()[0] < best_loss) {
      best_loss = loss.value()[0];
      best = ps.items();
    }
    loss.backward();
    std::vector<std::vector<double>> grads;
    for (const auto& t : p) grads.push_back(t.grad());
    if (e < cfg.epochs) adam.step(ps, grads);
  }
  ps.items() = std::move(best);
  return probe;
}

double angular_error_deg(const double* a, const double* b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < 3; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 90.0;
  // atan2 form stays accurate near 0 and 180 degrees.
  const double cx = a[1] * b[2] - a[2] * b[1];
  const double cy = a[2] * b[0] - a[0] * b[2];
  const double cz = a[0] * b[1] - a[1] * b[0];
  const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  return std::atan2(cross, dot) * 180.0 / std::numbers::pi;
}

double doa_mae_deg(const MlpProbe& probe, const EmbeddingMatrix& x,
                   const std::vector<std::vector<double>>& targets,
                   std::vector<double>* per_sample) {
  if (targets.size() != x.rows || x.rows == 0) throw ShapeError("DOA evaluation misaligned");
  double total = 0.0;
  if (per_sample) per_sample->clear();
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto y = probe.forward(x.row(i));
    const double e = angular_error_deg(y.data(), targets[i].data());
    total += e;
    if (per_sample) per_sample->push_back(e);
  }
  return total / static_cast<double>(x.rows);
}

double probe_accuracy(const MlpProbe& probe, const EmbeddingMatrix& x,
                      const std::vector<std::size_t>& labels) {
  if (labels.size() != x.rows || x.rows == 0) throw ShapeError("accuracy evaluation misaligned");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < x.rows; ++i) ok += probe.classify(x.row(i)) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(x.rows);
}

const std::vector<double>& DirectionPrototypes::at(const std::string& d) const {
  const auto it = protos.find(d);
  if (it == protos.end()) throw MissingClassError("no prototype for direction '" + d + "'");
  return it->second;
}

SwapOutcome direction_swap(const std::vector<double>& emb, const std::string& from,
                           const std::string& to, const DirectionPrototypes& protos,
                           const MlpProbe& classifier) {
  const auto& po = protos.at(from);
  const auto& pn = protos.at(to);
  std::vector<double> v(emb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = emb[i] - po[i] + pn[i];
  SwapOutcome out;
  out.embedding = normalize(std::move(v));
  out.predicted = classifier.classify(out.embedding.data());
  out.success = out.predicted == direction_index(to);
  return out;
}

SwapOutcome direction_remove(const std::vector<double>& emb, const std::string& from,
                             const DirectionPrototypes& protos, const MlpProbe& classifier) {
  const auto& po = protos.at(from);
  std::vector<double> v(emb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = emb[i] - po[i];
  SwapOutcome out;
  out.embedding = normalize(std::move(v));
  out.predicted = classifier.classify(out.embedding.data());
  out.success = out.predicted != direction_index(from);
  return out;
}

SwapReport swap_experiment(const EmbeddingMatrix& emb, const std::vector<std::string>& directions,
                           const DirectionPrototypes& protos, const MlpProbe& classifier) {
  if (directions.size() != emb.rows) throw ShapeError("swap: labels and embeddings differ");
  SwapReport r;
  std::size_t swap_ok = 0, removal_kept = 0, back_ok = 0;
  for (std::size_t i = 0; i < emb.rows; ++i) {
    ++r.evaluated;
    const std::size_t truth = direction_index(directions[i]);
    if (classifier.classify(emb.row(i)) != truth) continue;
    ++r.correctly_classified;
    const std::vector<double> v(emb.row(i), emb.row(i) + emb.cols);
    for (const auto& to : kDirections) {
      if (to == directions[i]) continue;
      ++r.swaps;
      const auto s = direction_swap(v, directions[i], to, protos, classifier);
      if (!s.success) continue;
      ++swap_ok;
      back_ok += direction_swap(s.embedding, to, directions[i], protos, classifier).success;
    }
    removal_kept += !direction_remove(v, directions[i], protos, classifier).success;
  }
  if (r.swaps) r.swap_success = static_cast<double>(swap_ok) / static_cast<double>(r.swaps);
  if (r.correctly_classified) {
    r.removal_original_rate =
        static_cast<double>(removal_kept) / static_cast<double>(r.correctly_classified);
  }
  if (swap_ok) r.involution_recovery = static_cast<double>(back_ok) / static_cast<double>(swap_ok);
  return r;
}

std::string SwapReport::to_json() const {
  return nlohmann::json{{"evaluated", evaluated},
                        {"correctly_classified", correctly_classified},
                        {"swaps", swaps},
                        {"swap_success", swap_success},
                        {"removal_original_rate", removal_original_rate},
                        {"involution_recovery", involution_recovery}}
      .dump(2);
}

ErrorBreakdown doa_error_breakdown(const std::vector<double>& errors_deg,
                                   const std::vector<room::SpatialAttributes>& attrs,
                                   std::size_t bins) {
  if (errors_deg.size() != attrs.size()) throw ShapeError("breakdown: errors and attributes differ");
  if (bins == 0) throw ShapeError("breakdown needs at least one bin");
  using Getter = double (*)(const room::SpatialAttributes&);
  const std::vector<std::pair<std::string, Getter>> fields = {
      {"azimuth_deg", [](const room::SpatialAttributes& a) { return a.azimuth_deg; }},
      {"elevation_deg", [](const room::SpatialAttributes& a) { return a.elevation_deg; }},
      {"distance_m", [](const room::SpatialAttributes& a) { return a.distance_m; }},
      {"floor_area_m2", [](const room::SpatialAttributes& a) { return a.floor_area_m2; }},
      {"t30_ms", [](const room::SpatialAttributes& a) { return a.t30_ms; }},
  };
  ErrorBreakdown out;
  for (const auto& [name, get] : fields) {
    std::vector<ErrorBin> b(bins);
    double lo = 0.0, hi = 0.0;
    if (!attrs.empty()) {
      lo = hi = get(attrs[0]);
      for (const auto& a : attrs) {
        lo = std::min(lo, get(a));
        hi = std::max(hi, get(a));
      }
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      b[k].lo = lo + width * static_cast<double>(k);
      b[k].hi = k + 1 == bins ? hi : lo + width * static_cast<double>(k + 1);
    }
    std::vector<double> sum(bins, 0.0), sum2(bins, 0.0);
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      std::size_t k = width > 0.0 ? static_cast<std::size_t>((get(attrs[i]) - lo) / width) : 0;
      k = std::min(k, bins - 1);
      ++b[k].count;
      sum[k] += errors_deg[i];
      sum2[k] += errors_deg[i] * errors_deg[i];
    }
    for (std::size_t k = 0; k < bins; ++k) {
      if (b[k].count == 0) continue;
      const auto n = static_cast<double>(b[k].count);
      b[k].mean = sum[k] / n;
      b[k].std = std::sqrt(std::max(0.0, sum2[k] / n - b[k].mean * b[k].mean));
    }
    out.attributes.emplace_back(name, std::move(b));
  }
  return out;
}

std::string ErrorBreakdown::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, bins] : attributes) {
    auto& arr = j[name] = nlohmann::json::array();
    for (const auto& b : bins) {
      arr.push_back({{"lo", b.lo}, {"hi", b.hi}, {"mean", b.mean}, {"std", b.std},
                     {"count", b.count}});
    }
  }
  return j.dump(2);
}

std::string ErrorBreakdown::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-22s %10s %10s %7s\n", "attribute", "range",
                "mean_deg", "std_deg", "count");
  os << line;
  for (const auto& [name, bins] : attributes) {
    for (const auto& b : bins) {
      char range[64];
      std::snprintf(range, sizeof range, "[%.2f, %.2f]", b.lo, b.hi);
      std::snprintf(line, sizeof line, "%-14s %-22s %10.3f %10.3f %7zu\n", name.c_str(), range,
                    b.mean, b.std, b.count);
      os << line;
    }
  }
  return os.str();
}

}  // namespace elsa::eval
