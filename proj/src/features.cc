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

#include "elsa/features.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "elsa/errors.h"
#include "elsa/fft.h"

namespace elsa::feat {

std::vector<double> hann_window(int win) {
  std::vector<double> w(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
  }
  return w;
}

Spectrogram stft(std::span<const float> signal, int win, int hop) {
  if (hop <= 0 || win < hop) {
    throw ConfigError("stft needs win >= hop > 0 (win=" + std::to_string(win) +
                      ", hop=" + std::to_string(hop) + ")");
  }
  const auto w = static_cast<std::size_t>(win);
  if (signal.size() < w) {
    throw DataError("signal of " + std::to_string(signal.size()) +
                    " samples is shorter than the " + std::to_string(win) +
                    "-sample window");
  }
  const std::vector<double> window = hann_window(win);
  Spectrogram s;
  s.frames = 1 + (signal.size() - w) / static_cast<std::size_t>(hop);
  s.bins = w / 2 + 1;
  s.data.resize(s.frames * s.bins);
  std::vector<double> frame(w);
  for (std::size_t t = 0; t < s.frames; ++t) {
    const std::size_t off = t * static_cast<std::size_t>(hop);
    for (std::size_t i = 0; i < w; ++i) frame[i] = signal[off + i] * window[i];
    dsp::rfft(frame, std::span(s.data.data() + t * s.bins, s.bins));
  }
  return s;
}

ambi::AmbisonicsSTFT foa_stft(const ambi::FOASignal& foa, int win, int hop) {
  ambi::AmbisonicsSTFT a;
  a.order = 1;
  a.sample_rate = foa.sample_rate;
  a.win = win;
  a.hop = hop;
  for (std::size_t c = 0; c < ambi::kFoaChannels; ++c) {
    const Spectrogram s = stft(foa.channels[c], win, hop);
    if (c == 0) {
      a.frames = s.frames;
      a.bins = s.bins;
      a.data.assign(a.frames * a.bins * 4, 0.0);
    }
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t f = 0; f < s.bins; ++f) a.at(t, f, c) = s.at(t, f);
    }
  }
  return a;
}

double MelFilterbank::hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double MelFilterbank::mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFilterbank::MelFilterbank(int mel_bands, std::size_t bins,
                             double sample_rate, int win)
    : bands_(mel_bands), bins_(bins) {
  if (mel_bands <= 0) throw ConfigError("mel_bands must be positive");
  weights_.assign(static_cast<std::size_t>(mel_bands) * bins, 0.0);
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(mel_bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) /
                         static_cast<double>(mel_bands + 1));
  }
  for (int b = 0; b < mel_bands; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)];
    const double mid = edges[static_cast<std::size_t>(b) + 1];
    const double hi = edges[static_cast<std::size_t>(b) + 2];
    for (std::size_t f = 0; f < bins; ++f) {
      const double hz = static_cast<double>(f) * sample_rate / win;
      const double up = (hz - lo) / (mid - lo);
      const double down = (hi - hz) / (hi - mid);
      weights_[static_cast<std::size_t>(b) * bins + f] =
          std::max(0.0, std::min(up, down));
    }
  }
}

double MelFilterbank::mass(int band) const {
  double s = 0.0;
  for (std::size_t f = 0; f < bins_; ++f) s += weight(band, f);
  return s;
}

std::vector<double> logmel(const ambi::AmbisonicsSTFT& a, int mel_bands) {
  const MelFilterbank fb(mel_bands, a.bins, a.sample_rate, a.win);
  std::vector<double> out(a.frames * static_cast<std::size_t>(mel_bands));
  std::vector<double> power(a.bins);
  for (std::size_t t = 0; t < a.frames; ++t) {
    for (std::size_t f = 0; f < a.bins; ++f) power[f] = std::norm(a.at(t, f, 0));
    for (int b = 0; b < mel_bands; ++b) {
      double e = 0.0;
      for (std::size_t f = 0; f < a.bins; ++f) e += power[f] * fb.weight(b, f);
      out[t * static_cast<std::size_t>(mel_bands) + static_cast<std::size_t>(b)] =
          std::log(e + kLogMelEpsilon);
    }
  }
  return out;
}

std::vector<double> intensity_vectors(const ambi::AmbisonicsSTFT& a) {
  if (a.order < 1) {
    throw ShapeError("intensity vectors need ambisonics order >= 1");
  }
  std::vector<double> out(a.frames * a.bins * 6, 0.0);
  for (std::size_t t = 0; t < a.frames; ++t) {
    for (std::size_t f = 0; f < a.bins; ++f) {
      const std::complex<double> w = std::conj(a.at(t, f, 0));
      double act[3];
      double rea[3];
      for (std::size_t k = 0; k < 3; ++k) {
        const std::complex<double> v = w * a.at(t, f, k + 1);
        act[k] = v.real();
        rea[k] = v.imag();
      }
      double* dst = &out[(t * a.bins + f) * 6];
      const double na = std::sqrt(act[0] * act[0] + act[1] * act[1] +
                                  act[2] * act[2]);
      const double nr = std::sqrt(rea[0] * rea[0] + rea[1] * rea[1] +
                                  rea[2] * rea[2]);
      for (std::size_t k = 0; k < 3; ++k) {
        dst[k] = na > kIvEpsilon ? act[k] / na : 0.0;
        dst[k + 3] = nr > kIvEpsilon ? rea[k] / nr : 0.0;
      }
    }
  }
  return out;
}

ambi::FOASignal replicate_mono(std::span<const float> signal,
                               double sample_rate) {
  ambi::FOASignal out;
  out.sample_rate = sample_rate;
  for (auto& ch : out.channels) ch.assign(signal.begin(), signal.end());
  return out;
}

FeatureSet extract_features(const ambi::FOASignal& foa,
                            const FeatureConfig& cfg) {
  const ambi::AmbisonicsSTFT a = foa_stft(foa, cfg.win, cfg.hop);
  FeatureSet fs;
  fs.frames = a.frames;
  fs.bins = a.bins;
  fs.mel_bands = static_cast<std::size_t>(cfg.mel_bands);
  const auto lm = logmel(a, cfg.mel_bands);
  const auto iv = intensity_vectors(a);
  fs.logmel.assign(lm.begin(), lm.end());
  fs.ivs.assign(iv.begin(), iv.end());
  fs.frame_times.resize(a.frames);
  for (std::size_t t = 0; t < a.frames; ++t) {
    fs.frame_times[t] =
        (static_cast<double>(t * static_cast<std::size_t>(cfg.hop)) +
         0.5 * cfg.win) /
        foa.sample_rate;
  }
  return fs;
}

FeatureSet pool_features(const FeatureSet& fs, int time_factor,
                         int freq_factor) {
  if (time_factor <= 0 || freq_factor <= 0) {
    throw ConfigError("pooling factors must be positive");
  }
  const auto tf = static_cast<std::size_t>(time_factor);
  const auto ff = static_cast<std::size_t>(freq_factor);
  FeatureSet out;
  out.frames = fs.frames / tf;
  out.bins = fs.bins / ff;
  out.mel_bands = fs.mel_bands;
  if (out.frames == 0 || out.bins == 0) {
    throw DataError("feature set too small for pooling " +
                    std::to_string(time_factor) + "x" +
                    std::to_string(freq_factor));
  }
  out.logmel.assign(out.frames * out.mel_bands, 0.0f);
  out.ivs.assign(out.frames * out.bins * 6, 0.0f);
  out.frame_times.resize(out.frames);
  for (std::size_t t = 0; t < out.frames; ++t) {
    double time_acc = 0.0;
    for (std::size_t dt = 0; dt < tf; ++dt) time_acc += fs.frame_times[t * tf + dt];
    out.frame_times[t] = time_acc / static_cast<double>(tf);
    for (std::size_t v = 0; v < out.mel_bands; ++v) {
      double acc = 0.0;
      for (std::size_t dt = 0; dt < tf; ++dt) {
        acc += fs.logmel[(t * tf + dt) * fs.mel_bands + v];
      }
      out.logmel[t * out.mel_bands + v] =
          static_cast<float>(acc / static_cast<double>(tf));
    }
    for (std::size_t f = 0; f < out.bins; ++f) {
      for (std::size_t c = 0; c < 6; ++c) {
        double acc = 0.0;
        for (std::size_t dt = 0; dt < tf; ++dt) {
          for (std::size_t df = 0; df < ff; ++df) {
            acc += fs.iv(t * tf + dt, f * ff + df, c);
          }
        }
        out.ivs[(t * out.bins + f) * 6 + c] =
            static_cast<float>(acc / static_cast<double>(tf * ff));
      }
    }
  }
  return out;
}

}  // namespace elsa::feat
