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

#ifndef ELSA_ROOMSIM_H_
#define ELSA_ROOMSIM_H_

// Shoebox room simulation: image-source early reflections plus a seeded
// diffuse tail whose decay follows Sabine's reverberation time, rendered
// directly to first-order ambisonics at the receiver.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elsa/ambisonics.h"
#include "elsa/errors.h"
#include "elsa/rng.h"

namespace elsa::room {

inline constexpr double kSilenceThresholdDbfs = -60.0;
inline constexpr double kPeakNormDbfs = -3.0;
inline constexpr double kMinSourceDistance = 0.3;  // m
inline constexpr double kMinLoopSeconds = 4.0;
inline constexpr double kTailDipoleDb = -10.0;

// Surfaces are ordered x=0, x=Lx, y=0, y=Ly, z=0 (floor), z=Lz (ceiling).
struct RoomSpec {
  std::array<double, 3> dims_m{5.0, 5.0, 2.5};
  std::array<double, 6> absorption{0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  std::array<double, 3> source_pos{1.0, 1.0, 1.0};
  std::array<double, 3> receiver_pos{2.5, 2.5, 1.2};
  double receiver_yaw = 0.0;  // radians, counter-clockwise about +z
  int max_image_order = 6;
  std::uint64_t seed = 0;

  double volume() const { return dims_m[0] * dims_m[1] * dims_m[2]; }
  double floor_area() const { return dims_m[0] * dims_m[1]; }
  std::array<double, 6> surface_areas() const;

  // Throws DomainError when a position lies outside the room, the source
  // is closer than kMinSourceDistance, or an absorption is outside (0, 1].
  void validate() const;

  bool operator==(const RoomSpec&) const = default;
};

// Dataset-convention attributes: positive azimuth is to the receiver's
// right, so "left" occupies negative azimuth.
struct SpatialAttributes {
  double azimuth_deg = 0.0;    // (-180, 180]
  double elevation_deg = 0.0;  // [-90, 90]
  double distance_m = 0.0;
  double floor_area_m2 = 0.0;
  double t30_ms = 0.0;
};

// Receiver-relative direction of the source in the ambisonics frame
// (azimuth counter-clockwise, +90 deg = left).
sph::SphericalDirection source_direction(const RoomSpec& room);

// Geometric attributes; t30_ms is left at zero.
SpatialAttributes geometric_attributes(const RoomSpec& room);

// Conversions between dataset azimuth (degrees, positive right) and the
// ambisonics-frame direction.
sph::SphericalDirection attributes_to_direction(double azimuth_deg,
                                                double elevation_deg);
double wrap_degrees(double deg);

// 0.161 V / sum(alpha_i S_i), seconds.
double sabine_t60(const RoomSpec& room);

// Direct-path delay plus the mixing time 2 sqrt(V) ms.
double mixing_time_s(const RoomSpec& room);

ambi::FOASignal simulate_foa_rir(const RoomSpec& room, double sample_rate);

class InsufficientDecayError : public DataError {
 public:
  using DataError::DataError;
};

// Schroeder backward integration of the W channel with a linear fit over
// [-5, -35] dB; returns 60 / |slope| in milliseconds.
double measure_t30(const ambi::FOASignal& rir);

struct SpatializedAudio {
  ambi::FOASignal audio;
  SpatialAttributes attributes;
  bool t30_from_sabine = false;  // set when the RIR had no measurable decay
};

// Removes leading/trailing samples below -60 dBFS. Throws DataError if the
// whole signal is below the threshold.
std::vector<float> trim_silence(std::span<const float> audio);

// Repeats whole copies of the signal until it is at least `seconds` long.
std::vector<float> loop_pad(std::span<const float> audio, double sample_rate,
                            double seconds = kMinLoopSeconds);

SpatializedAudio spatialize(std::span<const float> audio,
                            const RoomSpec& room, double sample_rate);

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split s);
Split parse_split(const std::string& s);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct AttributeRanges {
  Range azimuth_deg{-180.0, 180.0};
  Range elevation_deg{-47.5, 48.7};
  Range distance_m{0.5, 4.0};
  Range floor_area_m2{13.3, 277.4};
  Range t30_ms{144.5, 2671.9};

  // Column "Train & Validation" of the published room statistics.
  static AttributeRanges train_val() { return {}; }
  // Column "Test".
  static AttributeRanges test() {
    return {{-180.0, 180.0}, {-29.8, 42.4}, {0.9, 4.0}, {14.3, 277.4},
            {167.8, 1254.8}};
  }
  static AttributeRanges for_split(Split s) {
    return s == Split::kTest ? test() : train_val();
  }
  bool contains(const SpatialAttributes& a) const;
};

// Room geometry/material priors the sampler draws from before rejection.
struct RoomPriors {
  Range width_m{3.0, 20.0};
  Range height_m{2.4, 5.0};
  Range absorption{0.05, 0.9};
  double wall_margin_m = 0.3;
  int max_image_order = 6;
};

// Rejection sampler for rooms. Each split draws from its own seed stream;
// sample i of a split is a pure function of (seed, split, i).
class RoomSampler {
 public:
  RoomSampler(Split split, std::uint64_t seed,
              std::optional<AttributeRanges> ranges = std::nullopt,
              RoomPriors priors = {});

  Split split() const { return split_; }
  const AttributeRanges& ranges() const { return ranges_; }
  const RoomPriors& priors() const { return priors_; }

  // Next room in the stream; T30 is predicted with Sabine during rejection.
  RoomSpec next();
  RoomSpec sample(std::uint64_t index) const;

  // Room realizing a requested receiver-relative pose (dataset azimuth).
  RoomSpec sample_for_pose(std::uint64_t index, double azimuth_deg,
                           double elevation_deg, double distance_m) const;

  static constexpr int kMaxRejections = 10000;

 private:
  Split split_;
  std::uint64_t seed_;
  AttributeRanges ranges_;
  RoomPriors priors_;
  std::uint64_t counter_ = 0;
};

class SamplingExhaustedError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace elsa::room

#endif  // ELSA_ROOMSIM_H_
