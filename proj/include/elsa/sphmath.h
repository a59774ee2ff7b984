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

#ifndef ELSA_SPHMATH_H_
#define ELSA_SPHMATH_H_

// Special functions behind the ambisonics representation: real orthonormal
// spherical harmonics (ACN ordering, N3D normalization, no Condon-Shortley
// phase), spherical Bessel/Hankel functions and the rigid-sphere radial
// function. Everything here is a pure function.

#include <array>
#include <complex>
#include <vector>

namespace elsa::sph {

// Azimuth is measured counter-clockwise from +x towards +y (so +y, the
// listener's left, is +90 deg); elevation is measured up from the xy-plane.
struct SphericalDirection {
  double azimuth = 0.0;    // radians, (-pi, pi]
  double elevation = 0.0;  // radians, [-pi/2, pi/2]

  std::array<double, 3> unit_vector() const;
  static SphericalDirection from_vector(double x, double y, double z);
};

struct SHIndex {
  int order = 0;
  int mode = 0;

  bool valid() const { return order >= 0 && mode >= -order && mode <= order; }
  int acn() const { return order * order + order + mode; }
  static SHIndex from_acn(int acn);
};

inline constexpr int num_channels(int order) {
  return (order + 1) * (order + 1);
}

// Orthonormal real spherical harmonic Y_n^m evaluated at `dir`.
double real_sph_harm(SHIndex idx, const SphericalDirection& dir);

// All harmonics up to `order`, in ACN order.
std::vector<double> sh_vector(int order, const SphericalDirection& dir);

// Spherical Bessel functions of the first/second kind for x >= 0 (x > 0 for
// y_n). Accuracy target 1e-10 on [1e-6, 50].
double sph_bessel_j(int n, double x);
double sph_bessel_y(int n, double x);
double sph_bessel_j_deriv(int n, double x);
double sph_bessel_y_deriv(int n, double x);

// h_n^(1)(x) = j_n(x) + i y_n(x); throws DomainError for x <= 0.
std::complex<double> sph_hankel_h1(int n, double x);
std::complex<double> sph_hankel_h1_deriv(int n, double x);

// Rigid-sphere radial function
//   b_n(kr) = 4 pi i^n [ j_n(kr) - j_n'(kr0) / h_n'(kr0) * h_n(kr) ]
// with h_n = h_n^(2) = conj(h_n^(1)), the outgoing wave for the e^{i w t}
// time convention in which A_nm = Y_n^m(dir) describes a plane wave arriving
// from `dir`. Throws DomainError unless kr0 > 0 and kr >= kr0.
std::complex<double> radial_function_rigid(int n, double kr, double kr0);

// Open-sphere value 4 pi i^n j_n(kr) (scatterer term removed).
std::complex<double> radial_function_open(int n, double kr);

}  // namespace elsa::sph

#endif  // ELSA_SPHMATH_H_
