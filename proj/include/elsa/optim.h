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

#ifndef ELSA_OPTIM_H_
#define ELSA_OPTIM_H_

// Named parameters, Adam with a cosine learning-rate schedule, and the
// checkpoint file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "elsa/nn.h"
#include "elsa/rng.h"

namespace elsa::nn {

struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
};

class ParameterSet {
 public:
  // Throws ConfigError on a duplicate name.
  Parameter& add(std::string name, Shape shape, std::vector<double> value);
  // Uniform in +-sqrt(6 / fan_in).
  Parameter& add_he(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
  Parameter& add_const(std::string name, Shape shape, double v);

  const Parameter& get(const std::string& name) const;
  Parameter& get(const std::string& name);
  std::size_t index_of(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t total_values() const;
  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }

  // Fresh leaves over copies of the values, one per parameter.
  std::vector<Tensor> leaves(bool requires_grad) const;

 private:
  std::vector<Parameter> items_;
};

// lr(step) = floor + (peak - floor) (1 + cos(pi step / total)) / 2, held at
// floor after total_steps.
struct CosineSchedule {
  double peak = 1e-3;
  double floor = 0.0;
  std::uint64_t total_steps = 1;

  double at(std::uint64_t step) const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

class Adam {
 public:
  explicit Adam(CosineSchedule schedule, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // One update with lr = schedule.at(step) before the step counter advances.
  void step(ParameterSet& params, const std::vector<std::vector<double>>& grads);

  const CosineSchedule& schedule() const { return schedule_; }
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  CosineSchedule schedule_;
  double beta1_, beta2_, eps_;
  AdamState state_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string meta_json = "{}";
  ParameterSet params;
  std::optional<AdamState> optimizer;
};

// Values are written as little-endian float32, so a reload rounds them.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
// Throws FormatError on a bad magic, unknown version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace elsa::nn

#endif  // ELSA_OPTIM_H_
