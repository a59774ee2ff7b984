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

#include "elsa/ambisonics.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "elsa/rng.h"

namespace elsa::ambi {
namespace {

using sph::SphericalDirection;
constexpr double kPi = std::numbers::pi;

SphericalDirection random_direction(Rng& rng) {
  // Uniform on the sphere.
  const double z = rng.uniform(-1.0, 1.0);
  return {rng.uniform(-kPi, kPi), std::asin(z)};
}

double coefficient_error(const std::vector<std::complex<double>>& a,
                         const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += std::norm(a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

TEST(PlaneWaveFoa, ImpulseFromFront) {
  std::vector<float> delta(8, 0.0f);
  delta[0] = 1.0f;
  const FOASignal foa = planewave_foa({0.0, 0.0}, delta, 48000.0);
  EXPECT_NEAR(foa.channels[kW][0], 0.28209479177387814, 1e-7);
  EXPECT_NEAR(foa.channels[kX][0], 0.48860251190291992, 1e-7);
  EXPECT_EQ(foa.channels[kY][0], 0.0f);
  EXPECT_NEAR(foa.channels[kZ][0], 0.0f, 1e-7);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(foa.channels[c][3], 0.0f);
}

TEST(PlaneWaveFoa, ZeroSource) {
  const std::vector<float> zero(100, 0.0f);
  const FOASignal foa = planewave_foa({1.0, 0.3}, zero, 16000.0);
  for (const auto& ch : foa.channels) {
    EXPECT_TRUE(std::all_of(ch.begin(), ch.end(), [](float v) { return v == 0.0f; }));
  }
}

TEST(MicPressure, AlignedSensorIsLoudest) {
  const auto geom = MicArrayGeometry::tetrahedral();
  const double k = 0.5 / geom.radius_m;
  for (std::size_t s = 0; s < geom.size(); ++s) {
    const auto p = mic_pressure_planewave(geom, geom.sensors[s], k);
    std::size_t best = 0;
    for (std::size_t q = 1; q < p.size(); ++q) {
      if (std::abs(p[q]) > std::abs(p[best])) best = q;
    }
    EXPECT_EQ(best, s);
  }
}

TEST(MicPressure, ConstantFieldAtTinyWavenumber) {
  const auto geom = MicArrayGeometry::tetrahedral();
  double prev = 1.0;
  for (double kr : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const auto p = mic_pressure_planewave(geom, {0.3, 0.2}, kr / geom.radius_m);
    double spread = 0.0;
    for (const auto& v : p) spread = std::max(spread, std::abs(v - p[0]) / std::abs(p[0]));
    // Sensor differences come from the n >= 1 terms and shrink like kr.
    EXPECT_LT(spread, 10.0 * kr);
    EXPECT_LT(spread, prev);
    prev = spread;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(Encoder, BandLimitedTetrahedralRoundTrip) {
  const auto geom = MicArrayGeometry::tetrahedral();
  const Encoder enc(geom, 1);
  const double k = 0.5 / geom.radius_m;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto dir = random_direction(rng);
    const auto p = mic_pressure_planewave(geom, dir, k, /*truncation_order=*/1);
    EXPECT_LT(coefficient_error(enc.encode(p, k), sph::sh_vector(1, dir)), 1e-3);
  }
}

TEST(Encoder, TetrahedronAliasesHigherOrders) {
  // With the series carried to N + 2 the four-sensor array cannot separate
  // orders 2-3 from the dipoles; pin the measured aliasing level.
  const auto geom = MicArrayGeometry::tetrahedral();
  const Encoder enc(geom, 1);
  const double k = 0.5 / geom.radius_m;
  Rng rng(0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto dir = random_direction(rng);
    const auto p = mic_pressure_planewave(geom, dir, k, 3);
    worst = std::max(worst,
                     coefficient_error(enc.encode(p, k), sph::sh_vector(1, dir)));
  }
  EXPECT_GT(worst, 0.1);
  EXPECT_LT(worst, 0.25);
}

TEST(Encoder, IcosahedralRoundTripOverBand) {
  const auto geom = MicArrayGeometry::icosahedral();
  const Encoder enc(geom, 1);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto dir = random_direction(rng);
    const double kr = rng.uniform(0.1, 1.5);
    const double k = kr / geom.radius_m;
    const auto p = mic_pressure_planewave(geom, dir, k, 3);
    EXPECT_LT(coefficient_error(enc.encode(p, k), sph::sh_vector(1, dir)), 1e-3);
  }
}

TEST(Encoder, ZeroAndLinear) {
  const auto geom = MicArrayGeometry::icosahedral();
  const Encoder enc(geom, 1);
  const double k = 0.8 / geom.radius_m;
  const std::vector<std::complex<double>> zero(geom.size(), 0.0);
  for (const auto& c : enc.encode(zero, k)) EXPECT_EQ(std::abs(c), 0.0);

  const auto p1 = mic_pressure_planewave(geom, {0.4, 0.1}, k);
  const auto p2 = mic_pressure_planewave(geom, {-2.0, -0.6}, k);
  std::vector<std::complex<double>> sum(geom.size()), twice(geom.size());
  for (std::size_t q = 0; q < geom.size(); ++q) {
    sum[q] = p1[q] + p2[q];
    twice[q] = 2.0 * p1[q];
  }
  const auto a1 = enc.encode(p1, k);
  const auto a2 = enc.encode(p2, k);
  const auto as = enc.encode(sum, k);
  const auto at = enc.encode(twice, k);
  for (std::size_t c = 0; c < a1.size(); ++c) {
    EXPECT_LT(std::abs(as[c] - (a1[c] + a2[c])), 1e-9);
    EXPECT_LT(std::abs(at[c] - 2.0 * a1[c]), 1e-9);
  }
}

TEST(Encoder, RejectsIllConditionedGeometry) {
  MicArrayGeometry three = MicArrayGeometry::tetrahedral();
  three.sensors.pop_back();
  EXPECT_THROW(Encoder(three, 1), IllConditionedGeometry);

  MicArrayGeometry flat;
  flat.name = "equator";
  for (int i = 0; i < 6; ++i) flat.sensors.push_back({i * kPi / 3.0, 0.0});
  EXPECT_THROW(Encoder(flat, 1), IllConditionedGeometry);
}

TEST(Encoder, DeviceAgnosticCoefficients) {
  const auto ico = MicArrayGeometry::icosahedral(0.042);
  const auto dod = MicArrayGeometry::dodecahedral(0.05);
  const Encoder e1(ico, 1);
  const Encoder e2(dod, 1);
  EXPECT_LT(e1.condition_number(), 100.0);
  EXPECT_LT(e2.condition_number(), 100.0);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto dir = random_direction(rng);
    const double k = rng.uniform(2.0, 30.0);
    const auto a1 = e1.encode(mic_pressure_planewave(ico, dir, k), k);
    const auto a2 = e2.encode(mic_pressure_planewave(dod, dir, k), k);
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < a1.size(); ++c) {
      num += std::norm(a1[c] - a2[c]);
      den += std::norm(a1[c]);
    }
    EXPECT_LT(std::sqrt(num / den), 1e-2);
  }
}

TEST(Encoder, StftFrames) {
  const auto geom = MicArrayGeometry::icosahedral();
  MicSTFT p;
  p.sample_rate = 16000.0;
  p.win = 64;
  p.hop = 32;
  p.frames = 2;
  p.bins = 33;
  p.sensors = geom.size();
  p.data.resize(p.frames * p.bins * p.sensors);
  const SphericalDirection dir{1.1, -0.4};
  for (std::size_t t = 0; t < p.frames; ++t) {
    for (std::size_t f = 1; f < p.bins; ++f) {
      const double k = 2 * kPi * f * p.sample_rate / p.win / kSpeedOfSound;
      const auto pf = mic_pressure_planewave(geom, dir, k);
      std::copy(pf.begin(), pf.end(),
                p.data.begin() + static_cast<std::ptrdiff_t>((t * p.bins + f) * p.sensors));
    }
  }
  const AmbisonicsSTFT a = encode_from_mics(p, geom, 1);
  ASSERT_EQ(a.channels(), 4u);
  const auto y = sph::sh_vector(1, dir);
  for (std::size_t f = 1; f < a.bins; ++f) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(std::abs(a.at(1, f, c) - y[c]), 0.0, 1e-6) << f;
    }
  }
}

TEST(Decode, PlaneWavePeaksAtSource) {
  const auto grid = direction_grid(1.0);
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    const auto dir = random_direction(rng);
    const auto y = sph::sh_vector(1, dir);
    const std::vector<std::complex<double>> a(y.begin(), y.end());
    const auto e = decode_to_grid(a, 1, grid);
    const auto best = grid[static_cast<std::size_t>(
        std::max_element(e.begin(), e.end()) - e.begin())];
    const auto u = best.unit_vector();
    const auto v = dir.unit_vector();
    const double ang =
        std::acos(std::clamp(u[0] * v[0] + u[1] * v[1] + u[2] * v[2], -1.0, 1.0));
    EXPECT_LT(ang * 180.0 / kPi, 1.0);
  }
}

TEST(Decode, IsotropicAndAntipodal) {
  const auto grid = direction_grid(5.0);
  const std::vector<std::complex<double>> w{1.0, 0.0, 0.0, 0.0};
  const auto e = decode_to_grid(w, 1, grid);
  for (double v : e) EXPECT_NEAR(v, e[0], 1e-12);

  const SphericalDirection d{0.7, 0.3};
  const SphericalDirection anti{0.7 - kPi, -0.3};
  const auto y1 = sph::sh_vector(1, d);
  const auto y2 = sph::sh_vector(1, anti);
  // Incoherent sum of the two energy maps.
  const std::vector<std::complex<double>> a1(y1.begin(), y1.end());
  const std::vector<std::complex<double>> a2(y2.begin(), y2.end());
  const auto e1 = decode_to_grid(a1, 1, std::span(&d, 1));
  const auto e2 = decode_to_grid(a2, 1, std::span(&anti, 1));
  const auto e12 = decode_to_grid(a1, 1, std::span(&anti, 1));
  const auto e21 = decode_to_grid(a2, 1, std::span(&d, 1));
  EXPECT_NEAR(e1[0] + e21[0], e2[0] + e12[0], 1e-9);
  EXPECT_THROW(decode_to_grid(a1, 1, {}), ShapeError);
}

TEST(Rotation, AzimuthRotatesDipolesOnly) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto dir = random_direction(rng);
    const double delta = rng.uniform(-kPi, kPi);
    const auto a = sph::sh_vector(1, dir);
    const auto b = sph::sh_vector(1, {dir.azimuth + delta, dir.elevation});
    EXPECT_NEAR(b[kW], a[kW], 1e-9);
    EXPECT_NEAR(b[kZ], a[kZ], 1e-9);
    const double c = std::cos(delta), s = std::sin(delta);
    EXPECT_NEAR(b[kX], c * a[kX] - s * a[kY], 1e-9);
    EXPECT_NEAR(b[kY], s * a[kX] + c * a[kY], 1e-9);
  }
}

}  // namespace
}  // namespace elsa::ambi
