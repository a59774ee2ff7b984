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

#include "elsa/roomsim.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "elsa/fft.h"

namespace elsa::room {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLn10 = 2.302585092994046;

double db_to_amp(double db) { return std::pow(10.0, db / 20.0); }

std::array<double, 3> rotate_to_receiver(const std::array<double, 3>& v,
                                         double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]};
}

double norm3(const std::array<double, 3>& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

bool inside(const std::array<double, 3>& p, const std::array<double, 3>& dims,
            double margin) {
  for (int a = 0; a < 3; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (p[i] < margin || p[i] > dims[i] - margin) return false;
  }
  return true;
}

// Raised-cosine hand-over from image sources to the diffuse tail.
double early_weight(double t, double start, double end) {
  if (t < start) return 1.0;
  if (t >= end) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * (t - start) / (end - start)));
}

}  // namespace

std::array<double, 6> RoomSpec::surface_areas() const {
  const double x = dims_m[0];
  const double y = dims_m[1];
  const double z = dims_m[2];
  return {y * z, y * z, x * z, x * z, x * y, x * y};
}

void RoomSpec::validate() const {
  for (double d : dims_m) {
    if (!(d > 0.0)) throw DomainError("room dimensions must be positive");
  }
  for (double a : absorption) {
    if (!(a > 0.0 && a <= 1.0)) {
      throw DomainError("absorption coefficients must lie in (0, 1]");
    }
  }
  for (int a = 0; a < 3; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (!(source_pos[i] > 0.0 && source_pos[i] < dims_m[i]) ||
        !(receiver_pos[i] > 0.0 && receiver_pos[i] < dims_m[i])) {
      throw DomainError("source and receiver must lie strictly inside the room");
    }
  }
  const std::array<double, 3> v{source_pos[0] - receiver_pos[0],
                                source_pos[1] - receiver_pos[1],
                                source_pos[2] - receiver_pos[2]};
  if (norm3(v) < kMinSourceDistance) {
    throw DomainError("source-receiver distance below 0.3 m");
  }
  if (max_image_order < 0) throw DomainError("max_image_order must be >= 0");
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

sph::SphericalDirection attributes_to_direction(double azimuth_deg,
                                                double elevation_deg) {
  return {wrap_degrees(-azimuth_deg) * kPi / 180.0,
          elevation_deg * kPi / 180.0};
}

sph::SphericalDirection source_direction(const RoomSpec& room) {
  const std::array<double, 3> v{room.source_pos[0] - room.receiver_pos[0],
                                room.source_pos[1] - room.receiver_pos[1],
                                room.source_pos[2] - room.receiver_pos[2]};
  const auto r = rotate_to_receiver(v, room.receiver_yaw);
  return sph::SphericalDirection::from_vector(r[0], r[1], r[2]);
}

SpatialAttributes geometric_attributes(const RoomSpec& room) {
  const auto dir = source_direction(room);
  SpatialAttributes a;
  a.azimuth_deg = wrap_degrees(-dir.azimuth * 180.0 / kPi);
  a.elevation_deg = dir.elevation * 180.0 / kPi;
  a.distance_m = norm3({room.source_pos[0] - room.receiver_pos[0],
                        room.source_pos[1] - room.receiver_pos[1],
                        room.source_pos[2] - room.receiver_pos[2]});
  a.floor_area_m2 = room.floor_area();
  return a;
}

double sabine_t60(const RoomSpec& room) {
  const auto s = room.surface_areas();
  double absorption_area = 0.0;
  for (std::size_t i = 0; i < 6; ++i) absorption_area += room.absorption[i] * s[i];
  return 0.161 * room.volume() / absorption_area;
}

double mixing_time_s(const RoomSpec& room) {
  return 2e-3 * std::sqrt(room.volume());
}

ambi::FOASignal simulate_foa_rir(const RoomSpec& room, double sample_rate) {
  room.validate();
  const double c = ambi::kSpeedOfSound;
  const double t60 = sabine_t60(room);
  const double direct_s =
      geometric_attributes(room).distance_m / c;
  const double xfade_start = direct_s + mixing_time_s(room);
  const double xfade_end = direct_s + 2.0 * mixing_time_s(room);
  const auto length = static_cast<std::size_t>(
      std::ceil((direct_s + 1.2 * t60 + 0.01) * sample_rate) + 1);

  std::array<std::vector<double>, 4> h;
  for (auto& ch : h) ch.assign(length, 0.0);

  std::array<double, 6> beta{};
  for (std::size_t i = 0; i < 6; ++i) beta[i] = std::sqrt(1.0 - room.absorption[i]);

  // Image sources: per axis, image coordinate (1 - 2p) s + 2 q L reflects
  // |q - p| times off the lower wall and |q| times off the upper wall.
  const int m = room.max_image_order;
  for (int qx = -m; qx <= m; ++qx) {
    for (int qy = -m; qy <= m; ++qy) {
      for (int qz = -m; qz <= m; ++qz) {
        const std::array<int, 3> q{qx, qy, qz};
        for (int parity = 0; parity < 8; ++parity) {
          const std::array<int, 3> p{parity & 1, (parity >> 1) & 1,
                                     (parity >> 2) & 1};
          int order = 0;
          double gain = 1.0;
          std::array<double, 3> rel{};
          for (std::size_t a = 0; a < 3; ++a) {
            const int lo = std::abs(q[a] - p[a]);
            const int hi = std::abs(q[a]);
            order += lo + hi;
            gain *= std::pow(beta[2 * a], lo) * std::pow(beta[2 * a + 1], hi);
            const double img = (1 - 2 * p[a]) * room.source_pos[a] +
                               2.0 * q[a] * room.dims_m[a];
            rel[a] = img - room.receiver_pos[a];
          }
          if (order > m || gain == 0.0) continue;
          const double d = norm3(rel);
          const double t = d / c;
          const auto n = static_cast<std::size_t>(std::lround(t * sample_rate));
          if (n >= length) continue;
          const double w = early_weight(t, xfade_start, xfade_end);
          if (w == 0.0) continue;
          const auto r = rotate_to_receiver(rel, room.receiver_yaw);
          const auto y = sph::sh_vector(
              1, sph::SphericalDirection::from_vector(r[0], r[1], r[2]));
          const double amp = w * gain / std::max(d, 0.1);
          for (std::size_t ch = 0; ch < 4; ++ch) h[ch][n] += amp * y[ch];
        }
      }
    }
  }

  // Diffuse tail: reverberant energy 16 pi (1 - mean alpha) / A relative to
  // a direct path of energy 1/d^2, decaying at the Sabine rate.
  const auto s = room.surface_areas();
  double area = 0.0;
  double absorption_area = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    area += s[i];
    absorption_area += room.absorption[i] * s[i];
  }
  const double mean_alpha = absorption_area / area;
  const double reverb_energy =
      16.0 * kPi * (1.0 - mean_alpha) / absorption_area;
  if (reverb_energy > 0.0) {
    const auto n_direct =
        static_cast<std::size_t>(std::lround(direct_s * sample_rate));
    const double energy_decay = 6.0 * kLn10 / (t60 * sample_rate);
    double env_sum = 0.0;
    for (std::size_t n = n_direct; n < length; ++n) {
      env_sum += std::exp(-energy_decay * static_cast<double>(n - n_direct));
    }
    const double g = std::sqrt(reverb_energy / env_sum);
    const double y00 = 0.5 / std::sqrt(kPi);
    const double dipole = db_to_amp(kTailDipoleDb);
    Rng rng(room.seed, fnv1a64("diffuse-tail"));
    for (std::size_t n = n_direct; n < length; ++n) {
      const double t = static_cast<double>(n) / sample_rate;
      const double env =
          g * y00 *
          std::exp(-0.5 * energy_decay * static_cast<double>(n - n_direct)) *
          (1.0 - early_weight(t, xfade_start, xfade_end));
      h[0][n] += env * rng.normal();
      for (std::size_t ch = 1; ch < 4; ++ch) h[ch][n] += env * dipole * rng.normal();
    }
  }

  ambi::FOASignal out;
  out.sample_rate = sample_rate;
  for (std::size_t ch = 0; ch < 4; ++ch) {
    out.channels[ch].assign(h[ch].begin(), h[ch].end());
  }
  return out;
}

double measure_t30(const ambi::FOASignal& rir) {
  const auto& w = rir.channels[ambi::kW];
  const std::size_t n = w.size();
  std::vector<double> edc(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    edc[i] = edc[i + 1] + static_cast<double>(w[i]) * w[i];
  }
  const double total = edc[0];
  if (!(total > 0.0)) throw InsufficientDecayError("impulse response is silent");
  std::size_t first = n;
  std::size_t last = n;
  for (std::size_t i = 0; i < n; ++i) {
    const double db = 10.0 * std::log10(edc[i] / total);
    if (first == n && db <= -5.0) first = i;
    if (db <= -35.0) {
      last = i;
      break;
    }
  }
  if (last == n) {
    throw InsufficientDecayError("decay curve never reaches -35 dB");
  }
  if (last < first + 8) {
    throw InsufficientDecayError(
        "decay curve has too few samples between -5 and -35 dB");
  }
  // Least-squares line through (t, dB) on the fit range.
  double st = 0.0, sd = 0.0, stt = 0.0, std_ = 0.0;
  const double cnt = static_cast<double>(last - first);
  for (std::size_t i = first; i < last; ++i) {
    const double t = static_cast<double>(i) / rir.sample_rate;
    const double db = 10.0 * std::log10(edc[i] / total);
    st += t;
    sd += db;
    stt += t * t;
    std_ += t * db;
  }
  const double slope = (cnt * std_ - st * sd) / (cnt * stt - st * st);
  if (!(slope < 0.0)) throw InsufficientDecayError("decay curve is not decaying");
  return 60.0 / -slope * 1000.0;
}

std::vector<float> trim_silence(std::span<const float> audio) {
  const double thr = db_to_amp(kSilenceThresholdDbfs);
  std::size_t b = 0;
  while (b < audio.size() && std::abs(audio[b]) < thr) ++b;
  if (b == audio.size()) {
    throw DataError("input audio is silent (below -60 dBFS everywhere)");
  }
  std::size_t e = audio.size();
  while (e > b && std::abs(audio[e - 1]) < thr) --e;
  return {audio.begin() + static_cast<std::ptrdiff_t>(b),
          audio.begin() + static_cast<std::ptrdiff_t>(e)};
}

std::vector<float> loop_pad(std::span<const float> audio, double sample_rate,
                            double seconds) {
  if (audio.empty()) throw DataError("cannot loop-pad an empty signal");
  const auto target = static_cast<std::size_t>(std::ceil(seconds * sample_rate));
  std::vector<float> out(audio.begin(), audio.end());
  while (out.size() < target) out.insert(out.end(), audio.begin(), audio.end());
  return out;
}

SpatializedAudio spatialize(std::span<const float> audio, const RoomSpec& room,
                            double sample_rate) {
  if (audio.empty()) throw DataError("spatialize needs non-empty audio");
  const std::vector<float> padded =
      loop_pad(trim_silence(audio), sample_rate);
  const ambi::FOASignal rir = simulate_foa_rir(room, sample_rate);

  SpatializedAudio out;
  out.attributes = geometric_attributes(room);
  try {
    out.attributes.t30_ms = measure_t30(rir);
  } catch (const InsufficientDecayError&) {
    out.attributes.t30_ms = sabine_t60(room) * 1000.0;
    out.t30_from_sabine = true;
  }

  const std::vector<double> dry(padded.begin(), padded.end());
  std::array<std::vector<double>, 4> wet;
  double peak = 0.0;
  for (std::size_t ch = 0; ch < 4; ++ch) {
    const std::vector<double> h(rir.channels[ch].begin(), rir.channels[ch].end());
    wet[ch] = dsp::fft_convolve(dry, h);
    for (double v : wet[ch]) peak = std::max(peak, std::abs(v));
  }
  const double scale = peak > 0.0 ? db_to_amp(kPeakNormDbfs) / peak : 0.0;
  out.audio.sample_rate = sample_rate;
  for (std::size_t ch = 0; ch < 4; ++ch) {
    auto& dst = out.audio.channels[ch];
    dst.resize(wet[ch].size());
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<float>(wet[ch][i] * scale);
    }
  }
  return out;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

bool AttributeRanges::contains(const SpatialAttributes& a) const {
  return azimuth_deg.contains(a.azimuth_deg) &&
         elevation_deg.contains(a.elevation_deg) &&
         distance_m.contains(a.distance_m) &&
         floor_area_m2.contains(a.floor_area_m2) && t30_ms.contains(a.t30_ms);
}

RoomSampler::RoomSampler(Split split, std::uint64_t seed,
                         std::optional<AttributeRanges> ranges,
                         RoomPriors priors)
    : split_(split),
      seed_(seed),
      ranges_(ranges.value_or(AttributeRanges::for_split(split))),
      priors_(priors) {}

RoomSpec RoomSampler::next() { return sample(counter_++); }

namespace {

struct Shell {
  RoomSpec room;
  bool ok = false;
};

// Draws dimensions and materials, rejecting on floor area and Sabine T30.
Shell draw_shell(Rng& rng, const AttributeRanges& ranges,
                 const RoomPriors& priors) {
  Shell s;
  RoomSpec& r = s.room;
  r.dims_m = {rng.uniform(priors.width_m.lo, priors.width_m.hi),
              rng.uniform(priors.width_m.lo, priors.width_m.hi),
              rng.uniform(priors.height_m.lo, priors.height_m.hi)};
  for (double& a : r.absorption) {
    a = rng.uniform(priors.absorption.lo, priors.absorption.hi);
  }
  r.max_image_order = priors.max_image_order;
  s.ok = ranges.floor_area_m2.contains(r.floor_area()) &&
         ranges.t30_ms.contains(sabine_t60(r) * 1000.0);
  return s;
}

bool place(Rng& rng, RoomSpec& r, const RoomPriors& priors, double az_deg,
           double el_deg, double dist) {
  const double m = priors.wall_margin_m;
  for (std::size_t a = 0; a < 3; ++a) {
    r.receiver_pos[a] = rng.uniform(m, r.dims_m[a] - m);
  }
  r.receiver_yaw = rng.uniform(-kPi, kPi);
  const auto u = attributes_to_direction(az_deg, el_deg).unit_vector();
  const double c = std::cos(r.receiver_yaw);
  const double s = std::sin(r.receiver_yaw);
  const std::array<double, 3> world{c * u[0] - s * u[1], s * u[0] + c * u[1],
                                    u[2]};
  for (std::size_t a = 0; a < 3; ++a) {
    r.source_pos[a] = r.receiver_pos[a] + dist * world[a];
  }
  return inside(r.source_pos, r.dims_m, m);
}

}  // namespace

RoomSpec RoomSampler::sample(std::uint64_t index) const {
  Rng rng(seed_, fnv1a64("room-sampler/" + split_name(split_)), index);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    Shell shell = draw_shell(rng, ranges_, priors_);
    const double az = rng.uniform(ranges_.azimuth_deg.lo, ranges_.azimuth_deg.hi);
    const double el =
        rng.uniform(ranges_.elevation_deg.lo, ranges_.elevation_deg.hi);
    const double dist =
        rng.uniform(std::max(ranges_.distance_m.lo, kMinSourceDistance),
                    ranges_.distance_m.hi);
    if (!shell.ok) continue;
    if (!place(rng, shell.room, priors_, az, el, dist)) continue;
    SpatialAttributes attrs = geometric_attributes(shell.room);
    attrs.t30_ms = sabine_t60(shell.room) * 1000.0;
    if (!ranges_.contains(attrs)) continue;
    shell.room.seed = rng.next();
    return shell.room;
  }
  throw SamplingExhaustedError("room sampling exhausted after " +
                               std::to_string(kMaxRejections) + " rejections");
}

RoomSpec RoomSampler::sample_for_pose(std::uint64_t index, double azimuth_deg,
                                      double elevation_deg,
                                      double distance_m) const {
  Rng rng(seed_, fnv1a64("room-pose/" + split_name(split_)), index);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    Shell shell = draw_shell(rng, ranges_, priors_);
    if (!shell.ok) continue;
    if (!place(rng, shell.room, priors_, azimuth_deg, elevation_deg,
               distance_m)) {
      continue;
    }
    shell.room.seed = rng.next();
    return shell.room;
  }
  throw SamplingExhaustedError("no room realizes azimuth " +
                               std::to_string(azimuth_deg) + ", elevation " +
                               std::to_string(elevation_deg) + ", distance " +
                               std::to_string(distance_m));
}

}  // namespace elsa::room
