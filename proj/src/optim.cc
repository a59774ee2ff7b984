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

#include "elsa/optim.h"

#include <cmath>
#include <fstream>
#include <numbers>

#include "elsa/binio.h"

namespace elsa::nn {
namespace {

constexpr char kMagic[8] = {'E', 'L', 'S', 'A', 'C', 'K', 'P', 'T'};

}  // namespace

Parameter& ParameterSet::add(std::string name, Shape shape, std::vector<double> value) {
  for (const auto& p : items_) {
    if (p.name == name) throw ConfigError("duplicate parameter '" + name + "'");
  }
  if (numel(shape) != value.size()) {
    throw ShapeError("parameter '" + name + "' of shape " + shape_str(shape) + " given " +
                     std::to_string(value.size()) + " values");
  }
  items_.push_back({std::move(name), std::move(shape), std::move(value)});
  return items_.back();
}

Parameter& ParameterSet::add_he(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(shape), std::move(v));
}

Parameter& ParameterSet::add_const(std::string name, Shape shape, double v) {
  const auto n = numel(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, v));
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name == name) return i;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const {
  return items_[index_of(name)];
}

Parameter& ParameterSet::get(const std::string& name) { return items_[index_of(name)]; }

std::size_t ParameterSet::total_values() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

std::vector<Tensor> ParameterSet::leaves(bool requires_grad) const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(Tensor::leaf(p.shape, p.value, requires_grad));
  return out;
}

double CosineSchedule::at(std::uint64_t step) const {
  if (total_steps == 0) return floor;
  const double frac =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

Adam::Adam(CosineSchedule schedule, double beta1, double beta2, double eps)
    : schedule_(schedule), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterSet& params, const std::vector<std::vector<double>>& grads) {
  auto& items = params.items();
  if (grads.size() != items.size()) {
    throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(items.size()) + " parameters");
  }
  if (state_.m.empty()) {
    for (const auto& p : items) {
      state_.m.emplace_back(p.value.size(), 0.0);
      state_.v.emplace_back(p.value.size(), 0.0);
    }
  }
  const double lr = schedule_.at(state_.step);
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto& val = items[k].value;
    const auto& g = grads[k];
    if (g.size() != val.size()) {
      throw ShapeError("adam: gradient size mismatch for '" + items[k].name + "'");
    }
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      val[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  bin::put_u32(os, kCheckpointVersion);
  bin::put_string(os, ck.meta_json);
  bin::put_u64(os, ck.params.size());
  for (const auto& p : ck.params.items()) {
    bin::put_string(os, p.name);
    bin::put_u64(os, p.shape.size());
    for (auto d : p.shape) bin::put_u64(os, d);
    bin::put_f32s<double>(os, p.value);
  }
  bin::put_u32(os, ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    bin::put_u64(os, ck.optimizer->step);
    bin::put_u64(os, ck.optimizer->m.size());
    for (std::size_t k = 0; k < ck.optimizer->m.size(); ++k) {
      bin::put_u64(os, ck.optimizer->m[k].size());
      bin::put_f32s<double>(os, ck.optimizer->m[k]);
      bin::put_f32s<double>(os, ck.optimizer->v[k]);
    }
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  bin::read_exact(is, magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  const auto version = bin::get_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.meta_json = bin::get_string(is);
  const auto n = bin::get_u64(is);
  for (std::uint64_t k = 0; k < n; ++k) {
    std::string name = bin::get_string(is, 4096);
    const auto rank = bin::get_u64(is);
    if (rank > 8) throw FormatError("parameter rank out of range");
    Shape shape(rank);
    for (auto& d : shape) d = bin::get_u64(is);
    const auto count = numel(shape);
    if (count > (1ull << 32)) throw FormatError("parameter too large");
    ck.params.add(std::move(name), std::move(shape), bin::get_f32s<double>(is, count));
  }
  if (bin::get_u32(is) == 1) {
    AdamState st;
    st.step = bin::get_u64(is);
    const auto np = bin::get_u64(is);
    if (np != n) throw FormatError("optimizer state does not match parameters");
    for (std::uint64_t k = 0; k < np; ++k) {
      const auto cnt = bin::get_u64(is);
      if (cnt != ck.params.items()[k].value.size()) {
        throw FormatError("optimizer moment size mismatch");
      }
      st.m.push_back(bin::get_f32s<double>(is, cnt));
      st.v.push_back(bin::get_f32s<double>(is, cnt));
    }
    ck.optimizer = std::move(st);
  }
  return ck;
}

}  // namespace elsa::nn
