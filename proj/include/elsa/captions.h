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

#ifndef ELSA_CAPTIONS_H_
#define ELSA_CAPTIONS_H_

// Spatial descriptors, caption templates, rephrasing prompts and zero-shot
// probe captions.

#include <chrono>
#include <cstdint>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "elsa/errors.h"
#include "elsa/roomsim.h"

namespace elsa::cap {

enum class Distance { kNear, kFar };
enum class Direction { kLeft, kRight, kFront, kBack };
enum class Elevation { kUp, kDown };
enum class RoomSize { kSmall, kMedium, kLarge };
enum class Reverb { kHighlyReverberant, kAcousticallyDampened };

std::string to_string(Distance v);
std::string to_string(Direction v);
std::string to_string(Elevation v);
std::string to_string(RoomSize v);
std::string to_string(Reverb v);

struct DescriptorSet {
  std::optional<Distance> distance;
  std::optional<Direction> direction;
  std::optional<Elevation> elevation;
  RoomSize room_size = RoomSize::kMedium;
  std::optional<Reverb> reverb;

  bool operator==(const DescriptorSet&) const = default;
};

// Band edges of the attribute-to-descriptor mapping.
struct DescriptorBands {
  double near_below_m = 1.0;
  double far_above_m = 2.0;
  double side_lo_deg = 55.0;   // |azimuth| in [55, 125] is left/right
  double side_hi_deg = 125.0;
  double front_deg = 35.0;     // |azimuth| <= 35
  double back_deg = 145.0;     // |azimuth| >= 145
  double up_above_deg = 40.0;  // elevation > 40 up, < -40 down
  double small_below_m2 = 50.0;
  double large_above_m2 = 100.0;
  double reverberant_above_ms = 1000.0;
  double dampened_below_ms = 200.0;
};

DescriptorSet attrs_to_descriptors(const room::SpatialAttributes& a,
                                   const DescriptorBands& bands = {});

inline constexpr int kNumTemplates = 8;

// Fills template `variant % kNumTemplates`, dropping absent slots.
std::string build_spatial_caption(std::string_view original,
                                  const DescriptorSet& d,
                                  std::uint64_t variant);

// Reads the descriptors back out of a caption built by
// build_spatial_caption. The original caption is removed first so its words
// cannot be mistaken for descriptors.
DescriptorSet parse_descriptors(std::string_view caption,
                                std::string_view original);

inline constexpr std::string_view kRephraseInstruction =
    "Rephrase as a short English sentence describing the sound and all the "
    "details of its source.";

std::string build_llm_prompt(std::string_view original, const DescriptorSet& d);

class UnknownLabelError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Probe classes per attribute, e.g. "near", "left", "up", "small",
// "highly reverberant".
std::string probe_phrase(std::string_view label);
std::string probe_caption(std::string_view label);
std::vector<std::string> probe_labels();

struct CaptionRecord {
  std::string original_caption;
  std::string spatial_caption;
  DescriptorSet descriptors;
  room::SpatialAttributes attributes;
};

// External rephrasing service: POST {prompt, temperature, max_tokens},
// response {text}.
struct RephraserEndpoint {
  std::string url;  // e.g. http://127.0.0.1:8080/rephrase
  double temperature = 0.9;
  int max_tokens = 1024;
  std::chrono::milliseconds timeout{10000};
  int retries = 1;
  int max_concurrent = 4;

  // Reads ELSA_REPHRASER_URL; nullopt when unset or empty.
  static std::optional<RephraserEndpoint> from_env();
};

struct RephraseResult {
  std::string text;
  bool fallback = false;
  std::string error;  // transport or format problem when fallback is set
};

class RephraserClient {
 public:
  explicit RephraserClient(RephraserEndpoint endpoint);

  // Returns the service completion verbatim, or `fallback_caption` with the
  // fallback flag set when the request or its response is unusable.
  RephraseResult rephrase(const std::string& prompt,
                          const std::string& fallback_caption);

  const RephraserEndpoint& endpoint() const { return endpoint_; }

 private:
  RephraserEndpoint endpoint_;
  std::string base_;
  std::string path_;
  std::counting_semaphore<> slots_;
};

}  // namespace elsa::cap

#endif  // ELSA_CAPTIONS_H_
