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

#ifndef ELSA_FEATURES_H_
#define ELSA_FEATURES_H_

// Spectral features of FOA audio: Hann STFT, log-mel of the omni channel and
// unit-norm active/reactive intensity vectors.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "elsa/ambisonics.h"

namespace elsa::feat {

inline constexpr double kLogMelEpsilon = 1e-10;
inline constexpr double kIvEpsilon = 1e-12;

struct FeatureConfig {
  double sample_rate = 48000.0;
  int win = 1024;
  int hop = 480;
  int mel_bands = 64;

  // Settings used for the 16 kHz synthetic corpus.
  static FeatureConfig toy() { return {16000.0, 512, 256, 32}; }
};

// Onesided spectrogram of one channel, frames x (win/2 + 1).
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  const std::complex<double>& at(std::size_t t, std::size_t f) const {
    return data[t * bins + f];
  }
};

// Periodic Hann window.
std::vector<double> hann_window(int win);

// Throws DataError if the signal is shorter than one window.
Spectrogram stft(std::span<const float> signal, int win, int hop);

ambi::AmbisonicsSTFT foa_stft(const ambi::FOASignal& foa, int win, int hop);

// HTK-style triangular filters spanning 0 Hz to Nyquist, mel_bands x bins.
class MelFilterbank {
 public:
  MelFilterbank(int mel_bands, std::size_t bins, double sample_rate, int win);

  int bands() const { return bands_; }
  std::size_t bins() const { return bins_; }
  double weight(int band, std::size_t bin) const {
    return weights_[static_cast<std::size_t>(band) * bins_ + bin];
  }
  // Sum of a band's weights over all bins.
  double mass(int band) const;

  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);

 private:
  int bands_;
  std::size_t bins_;
  std::vector<double> weights_;
};

// log(sum_f |A_00(t,f)|^2 W(f, v) + eps), frames x mel_bands, row-major.
std::vector<double> logmel(const ambi::AmbisonicsSTFT& a, int mel_bands);

// frames x bins x 6: active (y, z, x) then reactive (y, z, x); each 3-vector
// scaled to unit norm, or zero when its norm is below kIvEpsilon.
std::vector<double> intensity_vectors(const ambi::AmbisonicsSTFT& a);

// Copies a mono signal to all four FOA channels.
ambi::FOASignal replicate_mono(std::span<const float> signal,
                               double sample_rate);

struct FeatureSet {
  std::size_t frames = 0;
  std::size_t mel_bands = 0;
  std::size_t bins = 0;
  std::vector<float> logmel;  // frames x mel_bands
  std::vector<float> ivs;     // frames x bins x 6
  std::vector<double> frame_times;

  float iv(std::size_t t, std::size_t f, std::size_t c) const {
    return ivs[(t * bins + f) * 6 + c];
  }
};

FeatureSet extract_features(const ambi::FOASignal& foa,
                            const FeatureConfig& cfg);

// Block-averages frames by `time_factor` and frequency bins by `freq_factor`
// (trailing remainders dropped). Averaging unit vectors keeps every IV norm
// <= 1, so the FeatureSet invariants survive pooling.
FeatureSet pool_features(const FeatureSet& fs, int time_factor,
                         int freq_factor);

}  // namespace elsa::feat

#endif  // ELSA_FEATURES_H_
