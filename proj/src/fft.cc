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

#include "elsa/fft.h"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <utility>

#include "elsa/errors.h"

namespace elsa::dsp {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface
// is. Plans are created once per size under a lock and never destroyed.
struct PlanCache {
  std::mutex mu;
  std::map<std::size_t, std::pair<fftw_plan, fftw_plan>> plans;

  std::pair<fftw_plan, fftw_plan> get(std::size_t n) {
    std::lock_guard lock(mu);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    std::vector<double> r(n);
    std::vector<std::complex<double>> c(n / 2 + 1);
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan fwd =
        fftw_plan_dft_r2c_1d(static_cast<int>(n), r.data(), cp, flags);
    fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), cp, r.data(),
                                         flags | FFTW_DESTROY_INPUT);
    plans.emplace(n, std::make_pair(fwd, inv));
    return {fwd, inv};
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void rfft(std::span<const double> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n / 2 + 1) {
    throw ShapeError("rfft: output must hold n/2+1 bins");
  }
  const auto plan = cache().get(n).first;
  std::vector<double> buf(in.begin(), in.end());
  fftw_execute_dft_r2c(plan, buf.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void irfft(std::span<const std::complex<double>> in, std::span<double> out) {
  const std::size_t n = out.size();
  if (n == 0 || in.size() != n / 2 + 1) {
    throw ShapeError("irfft: input must hold n/2+1 bins");
  }
  const auto plan = cache().get(n).second;
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(buf.data()),
                       out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
}

std::vector<double> fft_convolve(std::span<const double> a,
                                 std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(len);
  std::vector<double> pa(n, 0.0);
  std::vector<double> pb(n, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fa(n / 2 + 1);
  std::vector<std::complex<double>> fb(n / 2 + 1);
  rfft(pa, fa);
  rfft(pb, fb);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  irfft(fa, pa);
  pa.resize(len);
  return pa;
}

}  // namespace elsa::dsp
