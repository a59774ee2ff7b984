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

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/SVD>

namespace elsa::ambi {
namespace {

using sph::SphericalDirection;

MicArrayGeometry from_vertices(const std::vector<std::array<double, 3>>& v,
                               double radius, std::string name) {
  MicArrayGeometry g;
  g.radius_m = radius;
  g.name = std::move(name);
  for (const auto& p : v) {
    g.sensors.push_back(SphericalDirection::from_vector(p[0], p[1], p[2]));
  }
  return g;
}

}  // namespace

FOASignal FOASignal::zeros(std::size_t n, double sample_rate) {
  FOASignal s;
  s.sample_rate = sample_rate;
  for (auto& ch : s.channels) ch.assign(n, 0.0f);
  return s;
}

MicArrayGeometry MicArrayGeometry::tetrahedral(double radius_m) {
  return from_vertices({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}},
                       radius_m, "tetrahedral");
}

MicArrayGeometry MicArrayGeometry::octahedral(double radius_m) {
  return from_vertices({{1, 0, 0},
                        {-1, 0, 0},
                        {0, 1, 0},
                        {0, -1, 0},
                        {0, 0, 1},
                        {0, 0, -1}},
                       radius_m, "octahedral");
}

MicArrayGeometry MicArrayGeometry::icosahedral(double radius_m) {
  const double g = std::numbers::phi;
  std::vector<std::array<double, 3>> v;
  for (double s1 : {1.0, -1.0}) {
    for (double s2 : {1.0, -1.0}) {
      v.push_back({0.0, s1, s2 * g});
      v.push_back({s1, s2 * g, 0.0});
      v.push_back({s2 * g, 0.0, s1});
    }
  }
  return from_vertices(v, radius_m, "icosahedral");
}

MicArrayGeometry MicArrayGeometry::dodecahedral(double radius_m) {
  const double g = std::numbers::phi;
  const double ig = 1.0 / g;
  std::vector<std::array<double, 3>> v;
  for (double a : {1.0, -1.0}) {
    for (double b : {1.0, -1.0}) {
      for (double c : {1.0, -1.0}) v.push_back({a, b, c});
      v.push_back({0.0, a * ig, b * g});
      v.push_back({a * ig, b * g, 0.0});
      v.push_back({a * g, 0.0, b * ig});
    }
  }
  return from_vertices(v, radius_m, "dodecahedral");
}

FOASignal planewave_foa(const SphericalDirection& dir,
                        std::span<const float> source, double sample_rate) {
  const std::vector<double> y = sph::sh_vector(1, dir);
  FOASignal out = FOASignal::zeros(source.size(), sample_rate);
  for (int c = 0; c < kFoaChannels; ++c) {
    auto& ch = out.channels[static_cast<std::size_t>(c)];
    const double g = y[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < source.size(); ++i) {
      ch[i] = static_cast<float>(g * source[i]);
    }
  }
  return out;
}

std::complex<double> surface_radial(int n, double kr) {
  if (kr <= 0.0) {
    return n == 0 ? std::complex<double>(4.0 * std::numbers::pi, 0.0)
                  : std::complex<double>(0.0, 0.0);
  }
  return sph::radial_function_rigid(n, kr, kr);
}

std::vector<std::complex<double>> mic_pressure_planewave(
    const MicArrayGeometry& geom, const SphericalDirection& dir, double k,
    int truncation_order) {
  const double kr = k * geom.radius_m;
  std::vector<std::complex<double>> b(
      static_cast<std::size_t>(truncation_order) + 1);
  for (int n = 0; n <= truncation_order; ++n) {
    b[static_cast<std::size_t>(n)] = sph::radial_function_rigid(n, kr, kr);
  }
  const std::vector<double> ydir = sph::sh_vector(truncation_order, dir);
  std::vector<std::complex<double>> p(geom.size());
  for (std::size_t q = 0; q < geom.size(); ++q) {
    const std::vector<double> ys = sph::sh_vector(truncation_order,
                                                  geom.sensors[q]);
    std::complex<double> acc = 0.0;
    for (int n = 0; n <= truncation_order; ++n) {
      double s = 0.0;
      for (int m = -n; m <= n; ++m) {
        const auto i = static_cast<std::size_t>(sph::SHIndex{n, m}.acn());
        s += ys[i] * ydir[i];
      }
      acc += b[static_cast<std::size_t>(n)] * s;
    }
    p[q] = acc;
  }
  return p;
}

Encoder::Encoder(MicArrayGeometry geom, int order, double max_condition)
    : geom_(std::move(geom)), order_(order) {
  const int nc = sph::num_channels(order);
  const auto q = static_cast<Eigen::Index>(geom_.size());
  if (q < nc) {
    throw IllConditionedGeometry(
        "geometry '" + geom_.name + "' has " + std::to_string(q) +
        " sensors, order " + std::to_string(order) + " needs at least " +
        std::to_string(nc));
  }
  Eigen::MatrixXd y(q, nc);
  for (Eigen::Index r = 0; r < q; ++r) {
    const auto v = sph::sh_vector(order, geom_.sensors[static_cast<std::size_t>(r)]);
    for (int c = 0; c < nc; ++c) y(r, c) = v[static_cast<std::size_t>(c)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU |
                                               Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  condition_ = smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
  if (!(condition_ <= max_condition)) {
    throw IllConditionedGeometry("geometry '" + geom_.name +
                                 "' is ill-conditioned: cond(Y) = " +
                                 std::to_string(condition_));
  }
  Eigen::VectorXd sinv = s.cwiseInverse();
  pinv_ = svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

std::vector<std::complex<double>> Encoder::encode(
    std::span<const std::complex<double>> pressure, double k) const {
  if (pressure.size() != geom_.size()) {
    throw ShapeError("encoder expects " + std::to_string(geom_.size()) +
                     " sensor pressures, got " +
                     std::to_string(pressure.size()));
  }
  const double kr = k * geom_.radius_m;
  const double floor = kRadialFloorFraction * 4.0 * std::numbers::pi;
  const auto nc = static_cast<std::size_t>(sph::num_channels(order_));
  std::vector<std::complex<double>> out(nc);
  for (int n = 0; n <= order_; ++n) {
    std::complex<double> b = surface_radial(n, kr);
    const double mag = std::abs(b);
    if (mag < floor) {
      b = mag > 0.0 ? b / mag * floor : std::complex<double>(floor, 0.0);
    }
    for (int m = -n; m <= n; ++m) {
      const auto c = static_cast<std::size_t>(sph::SHIndex{n, m}.acn());
      std::complex<double> acc = 0.0;
      for (std::size_t qi = 0; qi < pressure.size(); ++qi) {
        acc += pinv_(static_cast<Eigen::Index>(c),
                     static_cast<Eigen::Index>(qi)) *
               pressure[qi];
      }
      out[c] = acc / b;
    }
  }
  return out;
}

AmbisonicsSTFT encode_from_mics(const MicSTFT& p, const MicArrayGeometry& geom,
                                int order, double speed_of_sound) {
  if (p.sensors != geom.size()) {
    throw ShapeError("mic STFT has " + std::to_string(p.sensors) +
                     " sensors but geometry has " +
                     std::to_string(geom.size()));
  }
  const Encoder enc(geom, order);
  AmbisonicsSTFT a;
  a.order = order;
  a.sample_rate = p.sample_rate;
  a.win = p.win;
  a.hop = p.hop;
  a.frames = p.frames;
  a.bins = p.bins;
  const std::size_t nc = a.channels();
  a.data.assign(a.frames * a.bins * nc, 0.0);
  for (std::size_t t = 0; t < p.frames; ++t) {
    for (std::size_t f = 0; f < p.bins; ++f) {
      const double k = 2.0 * std::numbers::pi * a.bin_frequency(f) /
                       speed_of_sound;
      const std::span<const std::complex<double>> snap(
          p.data.data() + (t * p.bins + f) * p.sensors, p.sensors);
      const auto coeffs = enc.encode(snap, k);
      for (std::size_t c = 0; c < nc; ++c) a.at(t, f, c) = coeffs[c];
    }
  }
  return a;
}

std::vector<double> decode_to_grid(
    std::span<const std::complex<double>> coefficients, int order,
    std::span<const SphericalDirection> grid) {
  const auto nc = static_cast<std::size_t>(sph::num_channels(order));
  if (coefficients.size() != nc) {
    throw ShapeError("decode_to_grid expects " + std::to_string(nc) +
                     " coefficients, got " +
                     std::to_string(coefficients.size()));
  }
  if (grid.empty()) throw ShapeError("decode_to_grid needs a non-empty grid");
  std::vector<double> energy(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto y = sph::sh_vector(order, grid[g]);
    std::complex<double> a = 0.0;
    for (std::size_t c = 0; c < nc; ++c) a += coefficients[c] * y[c];
    energy[g] = std::norm(a);
  }
  return energy;
}

std::vector<SphericalDirection> direction_grid(double step_deg) {
  std::vector<SphericalDirection> grid;
  const double d2r = std::numbers::pi / 180.0;
  const int n_el = static_cast<int>(std::round(180.0 / step_deg));
  const int n_az = static_cast<int>(std::round(360.0 / step_deg));
  for (int e = 0; e <= n_el; ++e) {
    const double el = -90.0 + e * step_deg;
    for (int a = 0; a < n_az; ++a) {
      const double az = -180.0 + (a + 1) * step_deg;
      grid.push_back({az * d2r, el * d2r});
    }
  }
  return grid;
}

}  // namespace elsa::ambi
