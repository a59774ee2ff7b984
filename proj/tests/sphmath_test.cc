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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "elsa/errors.h"
#include "elsa/rng.h"

namespace elsa::sph {
namespace {

constexpr double kPi = std::numbers::pi;

// Gauss-Legendre nodes/weights by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(static_cast<std::size_t>(n));
  w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    long double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    long double dp = 0;
    for (int it = 0; it < 100; ++it) {
      long double p0 = 1, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const long double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1);
      const long double dz = p1 / dp;
      z -= dz;
      if (std::abs(static_cast<double>(dz)) < 1e-18) break;
    }
    x[static_cast<std::size_t>(i)] = static_cast<double>(z);
    w[static_cast<std::size_t>(i)] =
        static_cast<double>(2 / ((1 - z * z) * dp * dp));
  }
}

// Independent power-series oracle in long double.
long double series_j(int n, long double x) {
  long double lead = 1;
  for (int k = 1; k <= n; ++k) lead *= x / (2 * k + 1);
  long double term = 1, sum = 1;
  for (int k = 1; k < 200; ++k) {
    term *= -x * x / 2 / (k * (2.0L * n + 2 * k + 1));
    sum += term;
  }
  return lead * sum;
}

TEST(SphericalHarmonics, ConstantTerm) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const SphericalDirection d{rng.uniform(-kPi, kPi),
                               rng.uniform(-kPi / 2, kPi / 2)};
    EXPECT_NEAR(real_sph_harm({0, 0}, d), 0.282094791773878143, 1e-15);
  }
}

TEST(SphericalHarmonics, DipoleOnAxis) {
  EXPECT_NEAR(real_sph_harm({1, 1}, {0.0, 0.0}), 0.48860251190291992, 1e-15);
  EXPECT_NEAR(real_sph_harm({1, -1}, {0.0, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(real_sph_harm({1, 0}, {0.0, kPi / 2}), 0.48860251190291992,
              1e-15);
  // +y (left) maps to the Y channel.
  EXPECT_NEAR(real_sph_harm({1, -1}, {kPi / 2, 0.0}), 0.48860251190291992,
              1e-15);
}

TEST(SphericalHarmonics, QuadratureGramIsIdentity) {
  std::vector<double> nodes, weights;
  gauss_legendre(64, nodes, weights);
  const int n_az = 128;
  const int nc = num_channels(3);
  std::vector<double> gram(static_cast<std::size_t>(nc * nc), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double el = std::asin(nodes[i]);
    for (int a = 0; a < n_az; ++a) {
      const double az = 2.0 * kPi * a / n_az;
      const auto y = sh_vector(3, {az, el});
      const double dw = weights[i] * 2.0 * kPi / n_az;
      for (int p = 0; p < nc; ++p) {
        for (int q = 0; q < nc; ++q) {
          gram[static_cast<std::size_t>(p * nc + q)] +=
              dw * y[static_cast<std::size_t>(p)] * y[static_cast<std::size_t>(q)];
        }
      }
    }
  }
  for (int p = 0; p < nc; ++p) {
    for (int q = 0; q < nc; ++q) {
      EXPECT_NEAR(gram[static_cast<std::size_t>(p * nc + q)], p == q ? 1.0 : 0.0,
                  1e-6)
          << "p=" << p << " q=" << q;
    }
  }
}

TEST(SphericalHarmonics, AcnIsBijective) {
  std::vector<int> seen(static_cast<std::size_t>(num_channels(3)), 0);
  for (int n = 0; n <= 3; ++n) {
    for (int m = -n; m <= n; ++m) {
      const SHIndex idx{n, m};
      ASSERT_TRUE(idx.valid());
      const int acn = idx.acn();
      ASSERT_GE(acn, 0);
      ASSERT_LT(acn, num_channels(3));
      ++seen[static_cast<std::size_t>(acn)];
      const SHIndex back = SHIndex::from_acn(acn);
      EXPECT_EQ(back.order, n);
      EXPECT_EQ(back.mode, m);
    }
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(SphericalDirection, UnitVectorNorm) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const SphericalDirection d{rng.uniform(-kPi, kPi),
                               rng.uniform(-kPi / 2, kPi / 2)};
    const auto v = d.unit_vector();
    EXPECT_NEAR(v[0] * v[0] + v[1] * v[1] + v[2] * v[2], 1.0, 1e-12);
    const auto back = SphericalDirection::from_vector(v[0], v[1], v[2]);
    EXPECT_NEAR(back.elevation, d.elevation, 1e-12);
  }
}

TEST(SphericalBessel, ClosedFormsAndLimits) {
  EXPECT_NEAR(sph_bessel_j(0, 1.0), std::sin(1.0), 1e-15);
  EXPECT_EQ(sph_bessel_j(0, 0.0), 1.0);
  EXPECT_EQ(sph_bessel_j(1, 0.0), 0.0);
  EXPECT_TRUE(std::isfinite(sph_bessel_j(3, 1e-300)));
}

TEST(SphericalBessel, MatchesSeriesOracle) {
  EXPECT_NEAR(sph_bessel_j(2, 5.0), 0.13473121008512521879, 1e-12);
  EXPECT_NEAR(sph_bessel_j(3, 0.5), 0.0011740354438675573, 1e-14);
  EXPECT_NEAR(sph_bessel_j(5, 2.0), 0.0026351697702441173, 1e-13);
  EXPECT_NEAR(sph_bessel_y(3, 2.0), -1.4843665574430799, 1e-12);
  for (int n = 0; n <= 6; ++n) {
    for (double x : {1e-6, 1e-3, 0.3, 0.9, 1.5, 3.0, 7.5, 12.0}) {
      const double ref = static_cast<double>(series_j(n, x));
      EXPECT_NEAR(sph_bessel_j(n, x), ref, 1e-10 * std::max(1.0, std::abs(ref)))
          << "n=" << n << " x=" << x;
    }
  }
}

TEST(SphericalBessel, RecurrenceRegimesMatchGoldens) {
  // Upward recurrence above x = n, Miller downward below.
  EXPECT_NEAR(sph_bessel_j(3, 20.0), 0.0060303590811107896, 1e-12);
  EXPECT_NEAR(sph_bessel_j(4, 50.0), -0.0013094776000062203, 1e-12);
  EXPECT_NEAR(sph_bessel_j(6, 4.0), 0.017462168682796764, 1e-12);
  EXPECT_NEAR(sph_bessel_j(3, 3.0), 0.15205166203053329, 1e-12);
  EXPECT_NEAR(sph_bessel_j(3, 2.9), 0.14240733570173680, 1e-12);
  EXPECT_NEAR(sph_bessel_j(0, 50.0), std::sin(50.0) / 50.0, 1e-15);
}

TEST(SphericalHankel, ClosedFormAndDerivatives) {
  const auto h = sph_hankel_h1(0, 1.0);
  EXPECT_NEAR(h.real(), std::sin(1.0), 1e-14);
  EXPECT_NEAR(h.imag(), -std::cos(1.0), 1e-14);
  EXPECT_NEAR(sph_bessel_j_deriv(0, 2.0), -sph_bessel_j(1, 2.0), 1e-10);

  const double x = 1.0, step = 1e-5;
  const auto fd = (sph_hankel_h1(1, x + step) - sph_hankel_h1(1, x - step)) /
                  (2.0 * step);
  const auto an = sph_hankel_h1_deriv(1, x);
  EXPECT_NEAR(an.real(), fd.real(), 1e-6);
  EXPECT_NEAR(an.imag(), fd.imag(), 1e-6);
  EXPECT_NEAR(an.real(), 0.23913362692838293, 1e-12);
  EXPECT_NEAR(an.imag(), 2.2232442754839327, 1e-12);
}

TEST(SphericalHankel, DomainErrors) {
  EXPECT_THROW(sph_hankel_h1(0, 0.0), DomainError);
  EXPECT_THROW(sph_hankel_h1(1, -1.0), DomainError);
  EXPECT_THROW(sph_bessel_j(0, -1.0), DomainError);
}

TEST(RadialFunction, SmallArgumentIsFourPi) {
  const auto b = radial_function_rigid(0, 1e-3, 1e-3);
  EXPECT_LT(std::abs(b - std::complex<double>(4 * kPi, 0)) / (4 * kPi), 1e-3);
}

TEST(RadialFunction, VanishingScatterTermGivesOpenSphere) {
  // j_0'(x) = -j_1(x) vanishes at the first zero of j_1.
  const double kr0 = 4.4934094579090641753;
  for (double kr : {kr0, 5.0, 9.0}) {
    const auto rigid = radial_function_rigid(0, kr, kr0);
    const auto open = radial_function_open(0, kr);
    EXPECT_NEAR(rigid.real(), open.real(), 1e-9);
    EXPECT_NEAR(rigid.imag(), open.imag(), 1e-9);
  }
  EXPECT_DOUBLE_EQ(radial_function_open(2, 1.3).real(),
                   -4 * kPi * sph_bessel_j(2, 1.3));
}

TEST(RadialFunction, GoldenValues) {
  const auto b1 = radial_function_rigid(1, 1.0, 1.0);
  EXPECT_NEAR(b1.real(), 0.60100835646759213, 1e-10);
  EXPECT_NEAR(b1.imag(), 5.5876223063967084, 1e-10);
  const auto b2 = radial_function_rigid(2, 2.0, 0.5);
  EXPECT_NEAR(b2.real(), -2.4978358781958901, 1e-10);
  EXPECT_NEAR(b2.imag(), 0.0011010789662108600, 1e-10);
}

TEST(RadialFunction, DomainChecks) {
  EXPECT_THROW(radial_function_rigid(0, 0.5, 1.0), DomainError);
  EXPECT_THROW(radial_function_rigid(0, 0.5, 0.0), DomainError);
}

TEST(RadialFunction, FiniteAndNonzeroOnWorkingRange) {
  for (int n = 0; n <= 3; ++n) {
    for (double kr0 = 0.01; kr0 <= 2.0; kr0 *= 1.3) {
      for (double kr = kr0; kr <= 20.0; kr += 0.37) {
        const auto b = radial_function_rigid(n, kr, kr0);
        ASSERT_TRUE(std::isfinite(b.real()) && std::isfinite(b.imag()));
        ASSERT_GT(std::abs(b), 0.0) << n << " " << kr << " " << kr0;
      }
    }
  }
}

TEST(SpecialFunctions, BitIdenticalRepeats) {
  for (double x : {0.2, 1.7, 13.0}) {
    const auto a = radial_function_rigid(2, x, 0.1);
    const auto b = radial_function_rigid(2, x, 0.1);
    EXPECT_EQ(a, b);
    EXPECT_EQ(real_sph_harm({3, -2}, {x, 0.1}), real_sph_harm({3, -2}, {x, 0.1}));
  }
}

}  // namespace
}  // namespace elsa::sph
