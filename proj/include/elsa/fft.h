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

#ifndef ELSA_FFT_H_
#define ELSA_FFT_H_

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace elsa::dsp {

// Real forward transform of in.size() samples into in.size()/2 + 1 bins.
void rfft(std::span<const double> in, std::span<std::complex<double>> out);

// Inverse of rfft including the 1/n scale; out.size() is the signal length.
void irfft(std::span<const std::complex<double>> in, std::span<double> out);

// Full linear convolution, length a.size() + b.size() - 1.
std::vector<double> fft_convolve(std::span<const double> a,
                                 std::span<const double> b);

std::size_t next_pow2(std::size_t n);

}  // namespace elsa::dsp

#endif  // ELSA_FFT_H_
