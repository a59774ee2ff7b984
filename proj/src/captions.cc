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

#include "elsa/captions.h"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace elsa::cap {
namespace {

// Plain templates realize the location as "the <dist> <elev> <dir> of a";
// adverbial ones append phrases such as "far away above on the left".
struct Template {
  std::string_view text;
  bool plain;
};

constexpr std::array<Template, kNumTemplates> kTemplates{{
    {"The sound of {cap} is coming from {loc} {size} {reverb} room.", true},
    {"In a {size} {reverb} room, {cap} is heard {loc}.", false},
    {"{Cap} sounds {loc} in a {size} {reverb} room.", false},
    {"From {loc} {size} {reverb} room comes the sound of {cap}.", true},
    {"Within a {size} {reverb} room there is {cap} {loc}.", false},
    {"{Cap} is coming from {loc} {size} {reverb} room.", true},
    {"You can hear {cap} {loc} in a {size} {reverb} room.", false},
    {"Inside a {size} {reverb} room, the sound of {cap} plays {loc}.", false},
}};

std::string adverbial(Distance v) {
  return v == Distance::kNear ? "nearby" : "far away";
}
std::string adverbial(Elevation v) {
  return v == Elevation::kUp ? "above" : "below";
}
std::string adverbial(Direction v) {
  switch (v) {
    case Direction::kLeft:
      return "on the left";
    case Direction::kRight:
      return "on the right";
    case Direction::kFront:
      return "at the front";
    case Direction::kBack:
      return "at the back";
  }
  return {};
}

void replace_all(std::string& s, std::string_view key, std::string_view value) {
  for (auto pos = s.find(key); pos != std::string::npos;
       pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
}

// Collapses runs of spaces and removes spaces before punctuation.
std::string tidy(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    if ((c == '.' || c == ',') && !out.empty() && out.back() == ' ') out.pop_back();
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string reverb_or_empty(const std::optional<Reverb>& r) {
  return r ? to_string(*r) : std::string();
}

std::string plain_location(const DescriptorSet& d) {
  std::string words;
  if (d.distance) words += to_string(*d.distance) + " ";
  if (d.elevation) words += to_string(*d.elevation) + " ";
  if (d.direction) words += to_string(*d.direction) + " ";
  return words.empty() ? "a" : "the " + words + "of a";
}

}  // namespace

std::string to_string(Distance v) { return v == Distance::kNear ? "near" : "far"; }
std::string to_string(Elevation v) { return v == Elevation::kUp ? "up" : "down"; }
std::string to_string(Direction v) {
  switch (v) {
    case Direction::kLeft:
      return "left";
    case Direction::kRight:
      return "right";
    case Direction::kFront:
      return "front";
    case Direction::kBack:
      return "back";
  }
  return {};
}
std::string to_string(RoomSize v) {
  switch (v) {
    case RoomSize::kSmall:
      return "small";
    case RoomSize::kMedium:
      return "medium";
    case RoomSize::kLarge:
      return "large";
  }
  return {};
}
std::string to_string(Reverb v) {
  return v == Reverb::kHighlyReverberant ? "highly reverberant"
                                         : "acoustically dampened";
}

DescriptorSet attrs_to_descriptors(const room::SpatialAttributes& a,
                                   const DescriptorBands& b) {
  DescriptorSet d;
  if (a.distance_m < b.near_below_m) {
    d.distance = Distance::kNear;
  } else if (a.distance_m > b.far_above_m) {
    d.distance = Distance::kFar;
  }
  const double az = room::wrap_degrees(a.azimuth_deg);
  const double mag = std::abs(az);
  if (mag >= b.side_lo_deg && mag <= b.side_hi_deg) {
    d.direction = az < 0.0 ? Direction::kLeft : Direction::kRight;
  } else if (mag <= b.front_deg) {
    d.direction = Direction::kFront;
  } else if (mag >= b.back_deg) {
    d.direction = Direction::kBack;
  }
  if (a.elevation_deg > b.up_above_deg) {
    d.elevation = Elevation::kUp;
  } else if (a.elevation_deg < -b.up_above_deg) {
    d.elevation = Elevation::kDown;
  }
  if (a.floor_area_m2 < b.small_below_m2) {
    d.room_size = RoomSize::kSmall;
  } else if (a.floor_area_m2 > b.large_above_m2) {
    d.room_size = RoomSize::kLarge;
  }
  if (a.t30_ms > b.reverberant_above_ms) {
    d.reverb = Reverb::kHighlyReverberant;
  } else if (a.t30_ms < b.dampened_below_ms) {
    d.reverb = Reverb::kAcousticallyDampened;
  }
  return d;
}

std::string build_spatial_caption(std::string_view original,
                                  const DescriptorSet& d,
                                  std::uint64_t variant) {
  if (original.empty()) throw DataError("original caption is empty");
  const Template& t = kTemplates[variant % kNumTemplates];
  std::string loc;
  if (t.plain) {
    loc = plain_location(d);
  } else {
    if (d.distance) loc += adverbial(*d.distance) + " ";
    if (d.elevation) loc += adverbial(*d.elevation) + " ";
    if (d.direction) loc += adverbial(*d.direction);
  }
  std::string cap_upper(original);
  cap_upper[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cap_upper[0])));

  std::string s(t.text);
  replace_all(s, "{loc}", loc);
  replace_all(s, "{size}", to_string(d.room_size));
  replace_all(s, "{reverb}", reverb_or_empty(d.reverb));
  replace_all(s, "{Cap}", cap_upper);
  replace_all(s, "{cap}", original);
  return tidy(s);
}

DescriptorSet parse_descriptors(std::string_view caption,
                                std::string_view original) {
  std::string text = lower(caption);
  const std::string orig = lower(original);
  if (!orig.empty()) {
    if (const auto pos = text.find(orig); pos != std::string::npos) {
      text.erase(pos, orig.size());
    }
  }
  for (char& c : text) {
    if (!std::isalpha(static_cast<unsigned char>(c))) c = ' ';
  }
  DescriptorSet d;
  bool sized = false;
  std::istringstream words(text);
  for (std::string w; words >> w;) {
    if (w == "near" || w == "nearby") d.distance = Distance::kNear;
    else if (w == "far") d.distance = Distance::kFar;
    else if (w == "up" || w == "above") d.elevation = Elevation::kUp;
    else if (w == "down" || w == "below") d.elevation = Elevation::kDown;
    else if (w == "left") d.direction = Direction::kLeft;
    else if (w == "right") d.direction = Direction::kRight;
    else if (w == "front") d.direction = Direction::kFront;
    else if (w == "back") d.direction = Direction::kBack;
    else if (w == "small") d.room_size = RoomSize::kSmall, sized = true;
    else if (w == "medium") d.room_size = RoomSize::kMedium, sized = true;
    else if (w == "large") d.room_size = RoomSize::kLarge, sized = true;
    else if (w == "reverberant") d.reverb = Reverb::kHighlyReverberant;
    else if (w == "dampened") d.reverb = Reverb::kAcousticallyDampened;
  }
  if (!sized) throw DataError("caption names no room size");
  return d;
}

std::string build_llm_prompt(std::string_view original, const DescriptorSet& d) {
  if (original.empty()) throw DataError("original caption is empty");
  std::string s = "The sound: ";
  s += original;
  s += " is coming from ";
  s += plain_location(d);
  s += " " + to_string(d.room_size) + " " + reverb_or_empty(d.reverb) + " room. ";
  s += kRephraseInstruction;
  return tidy(s);
}

std::vector<std::string> probe_labels() {
  return {"near",  "far",   "left",   "right", "front",
          "back",  "up",    "down",   "small", "medium",
          "large", "highly reverberant", "acoustically dampened"};
}

std::string probe_phrase(std::string_view label) {
  static const std::array<std::pair<std::string_view, std::string_view>, 13>
      kPhrases{{{"near", "nearby"},
                {"far", "far away"},
                {"left", "the left"},
                {"right", "the right"},
                {"front", "the front"},
                {"back", "the back"},
                {"up", "above"},
                {"down", "below"},
                {"small", "a small room"},
                {"medium", "a medium room"},
                {"large", "a large room"},
                {"highly reverberant", "a highly reverberant room"},
                {"acoustically dampened", "an acoustically dampened room"}}};
  for (const auto& [k, v] : kPhrases) {
    if (k == label) return std::string(v);
  }
  throw UnknownLabelError("unknown probe label '" + std::string(label) + "'");
}

std::string probe_caption(std::string_view label) {
  return "A sound coming from " + probe_phrase(label);
}

std::optional<RephraserEndpoint> RephraserEndpoint::from_env() {
  const char* url = std::getenv("ELSA_REPHRASER_URL");
  if (url == nullptr || *url == '\0') return std::nullopt;
  RephraserEndpoint e;
  e.url = url;
  return e;
}

}  // namespace elsa::cap
