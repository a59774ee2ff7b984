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

#ifndef ELSA_AMBISONICS_H_
#define ELSA_AMBISONICS_H_

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "elsa/errors.h"
#include "elsa/sphmath.h"

namespace elsa::ambi {

inline constexpr double kSpeedOfSound = 343.0;  // m/s
inline constexpr int kFoaChannels = 4;

// ACN channel order: W, Y, Z, X.
enum FoaChannel : int { kW = 0, kY = 1, kZ = 2, kX = 3 };

struct FOASignal {
  std::array<std::vector<float>, kFoaChannels> channels;
  double sample_rate = 48000.0;

  std::size_t num_samples() const { return channels[0].size(); }
  static FOASignal zeros(std::size_t n, double sample_rate);
};

// Complex ambisonics spectrogram, T x F x (N+1)^2, row-major.
struct AmbisonicsSTFT {
  int order = 1;
  double sample_rate = 48000.0;
  int win = 1024;
  int hop = 480;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  std::size_t channels() const {
    return static_cast<std::size_t>(sph::num_channels(order));
  }
  std::complex<double>& at(std::size_t t, std::size_t f, std::size_t c) {
    return data[(t * bins + f) * channels() + c];
  }
  const std::complex<double>& at(std::size_t t, std::size_t f,
                                 std::size_t c) const {
    return data[(t * bins + f) * channels() + c];
  }
  double bin_frequency(std::size_t f) const {
    return static_cast<double>(f) * sample_rate / win;
  }
};

struct MicArrayGeometry {
  double radius_m = 0.042;
  std::vector<sph::SphericalDirection> sensors;
  std::string name;

  std::size_t size() const { return sensors.size(); }

  static MicArrayGeometry tetrahedral(double radius_m = 0.042);
  static MicArrayGeometry octahedral(double radius_m = 0.042);
  static MicArrayGeometry icosahedral(double radius_m = 0.042);
  static MicArrayGeometry dodecahedral(double radius_m = 0.042);
};

class IllConditionedGeometry : public Error {
 public:
  using Error::Error;
};

// FOA of a unit plane-wave density at `dir` carrying `source`:
// channel acn(n,m) = source(t) * Y_n^m(dir).
FOASignal planewave_foa(const sph::SphericalDirection& dir,
                        std::span<const float> source, double sample_rate);

// Analytic rigid-sphere pressure at each sensor for a unit plane wave from
// `dir` with wavenumber k, series truncated at `truncation_order`.
std::vector<std::complex<double>> mic_pressure_planewave(
    const MicArrayGeometry& geom, const sph::SphericalDirection& dir, double k,
    int truncation_order = 3);

// b_n(kr) with kr0 = kr (sensors on the sphere) extended to kr = 0 by its
// limit (4 pi for n = 0, zero otherwise).
std::complex<double> surface_radial(int n, double kr);

// Least-squares mic -> ambisonics encoder for a fixed geometry and order.
class Encoder {
 public:
  // Throws IllConditionedGeometry if Q < (N+1)^2 or cond(Y) > max_condition.
  Encoder(MicArrayGeometry geom, int order, double max_condition = 1e6);

  // Coefficients for one (t, f) pressure snapshot at wavenumber k.
  std::vector<std::complex<double>> encode(
      std::span<const std::complex<double>> pressure, double k) const;

  int order() const { return order_; }
  double condition_number() const { return condition_; }
  const MicArrayGeometry& geometry() const { return geom_; }

  // |b_n| below floor_fraction * 4 pi is clamped (phase kept).
  static constexpr double kRadialFloorFraction = 1e-4;

 private:
  MicArrayGeometry geom_;
  int order_;
  double condition_ = 0.0;
  Eigen::MatrixXd pinv_;  // (N+1)^2 x Q
};

// Mic STFT: T x F x Q complex pressures.
struct MicSTFT {
  double sample_rate = 48000.0;
  int win = 1024;
  int hop = 480;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t sensors = 0;
  std::vector<std::complex<double>> data;
};

AmbisonicsSTFT encode_from_mics(const MicSTFT& p, const MicArrayGeometry& geom,
                                int order,
                                double speed_of_sound = kSpeedOfSound);

// |sum_nm A_nm Y_n^m(grid_g)|^2 for every grid direction.
std::vector<double> decode_to_grid(
    std::span<const std::complex<double>> coefficients, int order,
    std::span<const sph::SphericalDirection> grid);

// Regular azimuth/elevation grid with the given spacing in degrees.
std::vector<sph::SphericalDirection> direction_grid(double step_deg);

}  // namespace elsa::ambi

#endif  // ELSA_AMBISONICS_H_
