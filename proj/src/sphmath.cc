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

#include "elsa/sphmath.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "elsa/errors.h"

namespace elsa::sph {
namespace {

constexpr double kPi = std::numbers::pi;

// Associated Legendre P_n^m(x) for m >= 0 without the Condon-Shortley phase.
double assoc_legendre(int n, int m, double x) {
  const double s = std::sqrt(std::max(0.0, (1.0 - x) * (1.0 + x)));
  double pmm = 1.0;
  for (int i = 1; i <= m; ++i) pmm *= (2.0 * i - 1.0) * s;
  if (n == m) return pmm;
  double pm1 = x * (2.0 * m + 1.0) * pmm;
  if (n == m + 1) return pm1;
  double pn = 0.0;
  for (int l = m + 2; l <= n; ++l) {
    pn = ((2.0 * l - 1.0) * x * pm1 - (l + m - 1.0) * pmm) / (l - m);
    pmm = pm1;
    pm1 = pn;
  }
  return pn;
}

double factorial_ratio(int n, int m) {
  // (n - m)! / (n + m)!
  double r = 1.0;
  for (int k = n - m + 1; k <= n + m; ++k) r /= k;
  return r;
}

// Power series for small arguments:
// j_n(x) = x^n / (2n+1)!! * sum_k (-x^2/2)^k / (k! (2n+3)(2n+5)...(2n+2k+1)).
double bessel_j_series(int n, double x) {
  double lead = 1.0;
  for (int k = 1; k <= n; ++k) lead *= x / (2.0 * k + 1.0);
  const double q = -0.5 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= q / (k * (2.0 * n + 2.0 * k + 1.0));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return lead * sum;
}

// Miller downward recurrence normalized against j_0.
double bessel_j_downward(int n, double x) {
  const int start = n + 20 + static_cast<int>(std::sqrt(40.0 * (n + 1)));
  const int top = std::max(start, static_cast<int>(x) + 20);
  double next = 0.0;
  double cur = 1e-300;
  double result = 0.0;
  for (int k = top; k >= 1; --k) {
    const double prev = (2.0 * k + 1.0) / x * cur - next;
    next = cur;
    cur = prev;
    if (k - 1 == n) result = cur;
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      next *= 1e-250;
      result *= 1e-250;
    }
  }
  // `cur` now holds the unnormalized j_0.
  return result * (std::sin(x) / x) / cur;
}

void check_order(int n) {
  if (n < 0) throw DomainError("spherical Bessel order must be >= 0");
}

}  // namespace

std::array<double, 3> SphericalDirection::unit_vector() const {
  const double ce = std::cos(elevation);
  return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

SphericalDirection SphericalDirection::from_vector(double x, double y,
                                                   double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  if (r == 0.0) return {};
  double az = std::atan2(y, x);
  if (az <= -kPi) az = kPi;
  return {az, std::asin(std::clamp(z / r, -1.0, 1.0))};
}

SHIndex SHIndex::from_acn(int acn) {
  const int n = static_cast<int>(std::floor(std::sqrt(static_cast<double>(acn))));
  return {n, acn - n * n - n};
}

double real_sph_harm(SHIndex idx, const SphericalDirection& dir) {
  const int n = idx.order;
  const int am = std::abs(idx.mode);
  const double norm =
      std::sqrt((2.0 * n + 1.0) / (4.0 * kPi) * (am == 0 ? 1.0 : 2.0) *
                factorial_ratio(n, am));
  const double p = assoc_legendre(n, am, std::sin(dir.elevation));
  if (idx.mode > 0) return norm * p * std::cos(am * dir.azimuth);
  if (idx.mode < 0) return norm * p * std::sin(am * dir.azimuth);
  return norm * p;
}

std::vector<double> sh_vector(int order, const SphericalDirection& dir) {
  std::vector<double> out(static_cast<std::size_t>(num_channels(order)));
  for (int n = 0; n <= order; ++n) {
    for (int m = -n; m <= n; ++m) {
      const SHIndex idx{n, m};
      out[static_cast<std::size_t>(idx.acn())] = real_sph_harm(idx, dir);
    }
  }
  return out;
}

double sph_bessel_j(int n, double x) {
  check_order(n);
  if (x < 0.0) throw DomainError("sph_bessel_j requires x >= 0");
  if (x == 0.0) return n == 0 ? 1.0 : 0.0;
  if (x < 1.0 || x < 0.05 * n) return bessel_j_series(n, x);
  const double s = std::sin(x);
  const double c = std::cos(x);
  switch (n) {
    case 0:
      return s / x;
    case 1:
      return s / (x * x) - c / x;
    case 2:
      return (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
    default:
      break;
  }
  if (x > n) {
    double jm1 = s / x;
    double j = s / (x * x) - c / x;
    for (int k = 1; k < n; ++k) {
      const double jp1 = (2.0 * k + 1.0) / x * j - jm1;
      jm1 = j;
      j = jp1;
    }
    return j;
  }
  return bessel_j_downward(n, x);
}

double sph_bessel_y(int n, double x) {
  check_order(n);
  if (x <= 0.0) throw DomainError("sph_bessel_y requires x > 0");
  const double s = std::sin(x);
  const double c = std::cos(x);
  double ym1 = -c / x;
  if (n == 0) return ym1;
  double y = -c / (x * x) - s / x;
  for (int k = 1; k < n; ++k) {
    const double yp1 = (2.0 * k + 1.0) / x * y - ym1;
    ym1 = y;
    y = yp1;
  }
  return y;
}

double sph_bessel_j_deriv(int n, double x) {
  check_order(n);
  if (n == 0) return -sph_bessel_j(1, x);
  if (x == 0.0) return n == 1 ? 1.0 / 3.0 : 0.0;
  return sph_bessel_j(n - 1, x) - (n + 1.0) / x * sph_bessel_j(n, x);
}

double sph_bessel_y_deriv(int n, double x) {
  check_order(n);
  if (n == 0) return -sph_bessel_y(1, x);
  return sph_bessel_y(n - 1, x) - (n + 1.0) / x * sph_bessel_y(n, x);
}

std::complex<double> sph_hankel_h1(int n, double x) {
  if (x <= 0.0) throw DomainError("spherical Hankel function requires x > 0");
  return {sph_bessel_j(n, x), sph_bessel_y(n, x)};
}

std::complex<double> sph_hankel_h1_deriv(int n, double x) {
  if (x <= 0.0) throw DomainError("spherical Hankel function requires x > 0");
  return {sph_bessel_j_deriv(n, x), sph_bessel_y_deriv(n, x)};
}

namespace {
std::complex<double> i_pow(int n) {
  switch (n % 4) {
    case 0:
      return {1.0, 0.0};
    case 1:
      return {0.0, 1.0};
    case 2:
      return {-1.0, 0.0};
    default:
      return {0.0, -1.0};
  }
}
}  // namespace

std::complex<double> radial_function_rigid(int n, double kr, double kr0) {
  if (!(kr0 > 0.0)) {
    throw DomainError("radial function needs kr0 > 0, got " +
                      std::to_string(kr0));
  }
  if (kr < kr0) {
    throw DomainError("radial function needs kr >= kr0 (kr=" +
                      std::to_string(kr) + ", kr0=" + std::to_string(kr0) +
                      ")");
  }
  const std::complex<double> h2 = std::conj(sph_hankel_h1(n, kr));
  const std::complex<double> h2d = std::conj(sph_hankel_h1_deriv(n, kr0));
  const double jd = sph_bessel_j_deriv(n, kr0);
  return 4.0 * kPi * i_pow(n) * (sph_bessel_j(n, kr) - jd / h2d * h2);
}

std::complex<double> radial_function_open(int n, double kr) {
  return 4.0 * kPi * i_pow(n) * sph_bessel_j(n, kr);
}

}  // namespace elsa::sph
