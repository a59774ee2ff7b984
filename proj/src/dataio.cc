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

#include "elsa/dataio.h"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "elsa/binio.h"
#include "elsa/captions.h"
#include "elsa/parallel.h"
#include "elsa/rng.h"

namespace elsa::io {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr char kMatrixMagic[4] = {'E', 'M', 'A', 'T'};

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

std::uint16_t u16_at(const std::string& s, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[off]) |
                                    (static_cast<unsigned char>(s[off + 1]) << 8));
}

std::uint32_t u32_at(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]);
  return v;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return is;
}

std::ofstream open_out(const fs::path& path, bool append = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

json attrs_json(const room::SpatialAttributes& a) {
  return {{"azimuth_deg", a.azimuth_deg},
          {"elevation_deg", a.elevation_deg},
          {"distance_m", a.distance_m},
          {"floor_area_m2", a.floor_area_m2},
          {"t30_ms", a.t30_ms}};
}

// Bandpass biquad, constant 0 dB peak gain.
std::vector<double> bandpass(const std::vector<double>& x, double fc, double octaves, double fs_hz) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs_hz;
  const double alpha = std::sin(w0) * std::sinh(std::log(2.0) / 2.0 * octaves * w0 / std::sin(w0));
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = b0 * x[i] + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = y[i];
  }
  return y;
}

struct Job {
  room::Split split;
  SignalClass cls;
  std::size_t dir = 0;
  bool near = true;
  std::size_t clip = 0;
  std::size_t aug = 0;
  bool mono = false;
  std::uint64_t base_ordinal = 0;
  std::uint64_t room_index = 0;
};

double direction_center(const std::string& d) {
  if (d == "left") return -90.0;
  if (d == "right") return 90.0;
  if (d == "front") return 0.0;
  if (d == "back") return 180.0;
  throw ConfigError("unknown direction bin '" + d + "'");
}

std::string pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

// ---- WAV ----

void write_wav(const fs::path& path, const WavData& wav) {
  const std::size_t nch = wav.channels.size();
  if (nch == 0 || nch > 0xffff) throw DataError("wav needs 1..65535 channels");
  const std::size_t n = wav.channels[0].size();
  for (const auto& c : wav.channels) {
    if (c.size() != n) throw DataError("wav channels differ in length");
  }
  if (!(wav.sample_rate > 0.0) || wav.sample_rate != std::round(wav.sample_rate)) {
    throw DataError("wav sample rate must be a positive integer");
  }
  const std::uint64_t data_bytes = static_cast<std::uint64_t>(n) * nch * 4;
  if (data_bytes + 36 > 0xffffffffULL) throw DataError("wav too large");
  auto os = open_out(path);
  os.write("RIFF", 4);
  bin::put_u32(os, static_cast<std::uint32_t>(36 + data_bytes));
  os.write("WAVEfmt ", 8);
  bin::put_u32(os, 16);
  put_u16(os, kFormatFloat);
  put_u16(os, static_cast<std::uint16_t>(nch));
  const auto sr = static_cast<std::uint32_t>(wav.sample_rate);
  bin::put_u32(os, sr);
  bin::put_u32(os, static_cast<std::uint32_t>(sr * nch * 4));
  put_u16(os, static_cast<std::uint16_t>(nch * 4));
  put_u16(os, 32);
  os.write("data", 4);
  bin::put_u32(os, static_cast<std::uint32_t>(data_bytes));
  std::vector<char> buf(data_bytes);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < nch; ++c) {
      const auto u = std::bit_cast<std::uint32_t>(wav.channels[c][i]);
      for (int b = 0; b < 4; ++b) buf[k++] = static_cast<char>((u >> (8 * b)) & 0xff);
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

WavData read_wav(const fs::path& path) {
  auto is = open_in(path);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, nch = 0, bits = 0;
  std::uint32_t sr = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_fmt = false, have_data = false;
  for (std::size_t off = 12; off + 8 <= bytes.size();) {
    const std::string id = bytes.substr(off, 4);
    const std::size_t len = u32_at(bytes, off + 4);
    const std::size_t body = off + 8;
    if (body + len > bytes.size()) {
      if (id != "data") throw FormatError(path.string() + ": truncated chunk " + id);
    }
    if (id == "fmt ") {
      if (len < 16) throw FormatError(path.string() + ": short fmt chunk");
      format = u16_at(bytes, body);
      nch = u16_at(bytes, body + 2);
      sr = u32_at(bytes, body + 4);
      bits = u16_at(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw FormatError(path.string() + ": short extensible fmt chunk");
        format = u16_at(bytes, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_off = body;
      data_len = std::min(len, bytes.size() - body);
      if (data_len != len) throw FormatError(path.string() + ": truncated data chunk");
      have_data = true;
    }
    off = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) throw FormatError(path.string() + ": missing fmt or data chunk");
  if (nch == 0 || sr == 0) throw FormatError(path.string() + ": bad channel count or rate");
  const bool ok = (format == kFormatFloat && bits == 32) ||
                  (format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32));
  if (!ok) {
    throw FormatError(path.string() + ": unsupported sample format " + std::to_string(format) +
                      "/" + std::to_string(bits) + " bit");
  }
  const std::size_t bps = bits / 8, frame = bps * nch;
  if (data_len % frame != 0) throw FormatError(path.string() + ": data not a whole number of frames");
  const std::size_t n = data_len / frame;
  WavData w;
  w.sample_rate = sr;
  w.channels.assign(nch, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < nch; ++c) {
      const std::size_t p = data_off + i * frame + c * bps;
      float v = 0.0f;
      if (format == kFormatFloat) {
        v = std::bit_cast<float>(u32_at(bytes, p));
      } else if (bits == 16) {
        v = static_cast<float>(static_cast<std::int16_t>(u16_at(bytes, p)) / 32768.0);
      } else if (bits == 24) {
        std::int32_t s = static_cast<unsigned char>(bytes[p]) |
                         (static_cast<unsigned char>(bytes[p + 1]) << 8) |
                         (static_cast<unsigned char>(bytes[p + 2]) << 16);
        if (s & 0x800000) s -= 1 << 24;
        v = static_cast<float>(s / 8388608.0);
      } else {
        v = static_cast<float>(static_cast<std::int32_t>(u32_at(bytes, p)) / 2147483648.0);
      }
      w.channels[c][i] = v;
    }
  }
  return w;
}

void write_foa_wav(const fs::path& path, const ambi::FOASignal& foa) {
  WavData w;
  w.sample_rate = foa.sample_rate;
  for (const auto& c : foa.channels) w.channels.push_back(c);
  write_wav(path, w);
}

ambi::FOASignal read_foa_wav(const fs::path& path) {
  WavData w = read_wav(path);
  if (w.channels.size() != 4) {
    throw WrongChannelCountError(path.string() + ": expected 4 channels, found " +
                                 std::to_string(w.channels.size()));
  }
  ambi::FOASignal foa;
  foa.sample_rate = w.sample_rate;
  for (std::size_t c = 0; c < 4; ++c) foa.channels[c] = std::move(w.channels[c]);
  return foa;
}

// ---- matrices ----

MatrixWriter::MatrixWriter(const fs::path& path, bool append)
    : path_(path), os_(open_out(path, append)) {}

void MatrixWriter::write(const NamedMatrix& m) {
  if (m.data.size() != m.rows * m.cols) {
    throw ShapeError("matrix " + m.name + " holds " + std::to_string(m.data.size()) +
                     " values for " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
  }
  os_.write(kMatrixMagic, 4);
  bin::put_u32(os_, kMatrixVersion);
  bin::put_string(os_, m.name);
  bin::put_u64(os_, m.rows);
  bin::put_u64(os_, m.cols);
  bin::put_f32s<float>(os_, m.data);
  if (!os_) throw DataError("failed writing " + path_.string());
}

void MatrixWriter::close() {
  os_.close();
  if (!os_) throw DataError("failed closing " + path_.string());
}

std::vector<NamedMatrix> read_matrices(const fs::path& path) {
  auto is = open_in(path);
  std::vector<NamedMatrix> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    char magic[4];
    bin::read_exact(is, magic, 4);
    if (!std::equal(magic, magic + 4, kMatrixMagic)) {
      throw FormatError(path.string() + ": bad matrix record magic");
    }
    const auto version = bin::get_u32(is);
    if (version != kMatrixVersion) {
      throw VersionMismatchError(path.string() + ": matrix format version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kMatrixVersion));
    }
    NamedMatrix m;
    m.name = bin::get_string(is, 1 << 16);
    m.rows = bin::get_u64(is);
    m.cols = bin::get_u64(is);
    if (m.cols != 0 && m.rows > (std::uint64_t{1} << 34) / m.cols) {
      throw FormatError(path.string() + ": implausible matrix size");
    }
    m.data = bin::get_f32s<float>(is, m.rows * m.cols);
    out.push_back(std::move(m));
  }
  return out;
}

NamedMatrix read_matrix(const fs::path& path, const std::string& name, std::size_t rows,
                        std::size_t cols) {
  for (auto& m : read_matrices(path)) {
    if (m.name != name) continue;
    if ((rows && m.rows != rows) || (cols && m.cols != cols)) {
      throw FormatError("matrix " + name + " is " + std::to_string(m.rows) + "x" +
                        std::to_string(m.cols) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
    return std::move(m);
  }
  throw DataError("no matrix named " + name + " in " + path.string());
}

void write_features(MatrixWriter& w, const std::string& id, const feat::FeatureSet& f) {
  w.write({id + "/logmel", f.frames, f.mel_bands, f.logmel});
  w.write({id + "/ivs", f.frames, f.bins * 6, f.ivs});
}

std::vector<std::pair<std::string, feat::FeatureSet>> read_feature_cache(const fs::path& path) {
  auto mats = read_matrices(path);
  std::vector<std::pair<std::string, feat::FeatureSet>> out;
  for (std::size_t i = 0; i + 1 < mats.size(); i += 2) {
    const auto& a = mats[i];
    const auto& b = mats[i + 1];
    const auto slash = a.name.rfind('/');
    if (slash == std::string::npos || a.name.substr(slash) != "/logmel" ||
        b.name != a.name.substr(0, slash) + "/ivs" || a.rows != b.rows || b.cols % 6 != 0) {
      throw FormatError(path.string() + ": feature cache records out of order near " + a.name);
    }
    feat::FeatureSet f;
    f.frames = a.rows;
    f.mel_bands = a.cols;
    f.bins = b.cols / 6;
    f.logmel = a.data;
    f.ivs = b.data;
    out.emplace_back(a.name.substr(0, slash), std::move(f));
  }
  if (mats.size() % 2 != 0) throw FormatError(path.string() + ": unpaired feature record");
  return out;
}

// ---- manifests ----

std::string to_json_line(const ManifestRecord& r) {
  return json{{"schema", kManifestSchema},
              {"id", r.id},
              {"audio_path", r.audio_path},
              {"original_caption", r.original_caption},
              {"spatial_caption", r.spatial_caption},
              {"attributes", attrs_json(r.attributes)},
              {"room_id", r.room_id},
              {"split", room::split_name(r.split)},
              {"is_spatial", r.is_spatial},
              {"class", r.class_name},
              {"base_id", r.base_id}}
      .dump();
}

ManifestRecord record_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    if (j.at("schema").get<int>() != kManifestSchema) {
      throw VersionMismatchError("manifest schema " + j.at("schema").dump() + ", expected " +
                                 std::to_string(kManifestSchema));
    }
    ManifestRecord r;
    r.id = j.at("id");
    r.audio_path = j.at("audio_path");
    r.original_caption = j.at("original_caption");
    r.spatial_caption = j.at("spatial_caption");
    const auto& a = j.at("attributes");
    r.attributes = {a.at("azimuth_deg"), a.at("elevation_deg"), a.at("distance_m"),
                    a.at("floor_area_m2"), a.at("t30_ms")};
    r.room_id = j.at("room_id");
    r.split = room::parse_split(j.at("split"));
    r.is_spatial = j.at("is_spatial");
    r.class_name = j.value("class", "");
    r.base_id = j.value("base_id", "");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest line: ") + e.what());
  }
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& recs) {
  auto os = open_out(path);
  for (const auto& r : recs) os << to_json_line(r) << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  auto is = open_in(path);
  std::vector<ManifestRecord> out;
  std::set<std::string> ids;
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const VersionMismatchError& e) {
      throw VersionMismatchError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(out.back().id).second) {
      throw DataError(path.string() + ": duplicate id " + out.back().id);
    }
  }
  return out;
}

void audit_room_disjointness(const std::vector<ManifestRecord>& recs) {
  std::map<std::string, room::Split> owner;
  for (const auto& r : recs) {
    if (r.room_id.empty()) continue;
    const auto [it, fresh] = owner.emplace(r.room_id, r.split);
    if (!fresh && it->second != r.split) {
      throw DataError("room " + r.room_id + " appears in " + room::split_name(it->second) +
                      " and " + room::split_name(r.split));
    }
  }
}

std::size_t audit_caption_descriptors(const std::vector<ManifestRecord>& recs) {
  std::size_t bad = 0;
  for (const auto& r : recs) {
    if (!r.is_spatial) continue;
    if (cap::parse_descriptors(r.spatial_caption, r.original_caption) !=
        cap::attrs_to_descriptors(r.attributes)) {
      ++bad;
    }
  }
  return bad;
}

// ---- synthetic corpus ----

std::string class_name(SignalClass c) {
  switch (c) {
    case SignalClass::kTone:
      return "tone";
    case SignalClass::kChirp:
      return "chirp";
    case SignalClass::kBandNoise:
      return "band_noise";
    case SignalClass::kAmNoise:
      return "am_noise";
    case SignalClass::kClickTrain:
      return "click_train";
    case SignalClass::kHarmonic:
      return "harmonic";
  }
  return {};
}

SignalClass parse_signal_class(const std::string& s) {
  for (auto c : {SignalClass::kTone, SignalClass::kChirp, SignalClass::kBandNoise,
                 SignalClass::kAmNoise, SignalClass::kClickTrain, SignalClass::kHarmonic}) {
    if (class_name(c) == s) return c;
  }
  throw ConfigError("unknown signal class '" + s + "'");
}

std::string class_phrase(SignalClass c) {
  switch (c) {
    case SignalClass::kTone:
      return "a steady whistling tone";
    case SignalClass::kChirp:
      return "a rising electronic chirp";
    case SignalClass::kBandNoise:
      return "a soft hiss of filtered static";
    case SignalClass::kAmNoise:
      return "a pulsing wash of wind";
    case SignalClass::kClickTrain:
      return "a rapid ticking clock";
    case SignalClass::kHarmonic:
      return "a low buzzing engine drone";
  }
  return {};
}

std::vector<float> synthesize_signal(SignalClass c, double sr, double seconds, std::uint64_t seed) {
  if (!(sr > 0.0) || !(seconds > 0.0)) throw DomainError("signal needs positive rate and length");
  Rng rng(seed, fnv1a64("signal"), static_cast<std::uint64_t>(c));
  const auto n = static_cast<std::size_t>(std::llround(sr * seconds));
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> x(n, 0.0);
  switch (c) {
    case SignalClass::kTone: {
      const double f = rng.uniform(400.0, 1000.0);
      const double ph = rng.uniform(0.0, two_pi);
      for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(two_pi * f * static_cast<double>(i) / sr + ph);
      break;
    }
    case SignalClass::kChirp: {
      const double f0 = rng.uniform(200.0, 400.0), f1 = rng.uniform(3000.0, 5000.0);
      const double period = rng.uniform(0.4, 0.8);
      const double k = std::log(f1 / f0);
      double phase = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = std::fmod(static_cast<double>(i) / sr, period) / period;
        phase += two_pi * f0 * std::exp(k * t) / sr;
        x[i] = std::sin(phase);
      }
      break;
    }
    case SignalClass::kBandNoise: {
      std::vector<double> w(n);
      for (double& v : w) v = rng.normal();
      x = bandpass(bandpass(w, rng.uniform(1500.0, 2500.0), 1.0, sr), rng.uniform(1500.0, 2500.0),
                   1.5, sr);
      break;
    }
    case SignalClass::kAmNoise: {
      const double fm = rng.uniform(2.0, 5.0), ph = rng.uniform(0.0, two_pi);
      for (std::size_t i = 0; i < n; ++i) {
        const double env = 0.55 + 0.45 * std::sin(two_pi * fm * static_cast<double>(i) / sr + ph);
        x[i] = env * rng.normal();
      }
      break;
    }
    case SignalClass::kClickTrain: {
      const double rate = rng.uniform(8.0, 16.0);
      const auto step = static_cast<std::size_t>(sr / rate);
      const auto burst = static_cast<std::size_t>(0.003 * sr);
      for (std::size_t s = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(step)));
           s < n; s += step) {
        for (std::size_t i = 0; i < burst && s + i < n; ++i) {
          x[s + i] = rng.normal() * std::exp(-static_cast<double>(i) / (0.0007 * sr));
        }
      }
      break;
    }
    case SignalClass::kHarmonic: {
      const double f0 = rng.uniform(90.0, 160.0);
      std::vector<double> ph(12);
      for (double& p : ph) p = rng.uniform(0.0, two_pi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        double v = 0.0;
        for (std::size_t h = 1; h <= 12; ++h) {
          v += std::sin(two_pi * f0 * static_cast<double>(h) * t + ph[h - 1]) / static_cast<double>(h);
        }
        x[i] = v;
      }
      break;
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) throw DataError("synthesized silence");
  // Faint broadband floor so every frequency bin carries some direction.
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(0.7 * x[i] / peak + 0.01 * rng.normal());
  return out;
}

void SyntheticCorpusSpec::validate() const {
  if (classes.size() < 2) throw ConfigError("corpus needs at least two semantic classes");
  if (std::set<SignalClass>(classes.begin(), classes.end()).size() != classes.size()) {
    throw ConfigError("duplicate semantic class");
  }
  if (directions.empty()) throw ConfigError("corpus needs direction bins");
  for (const auto& d : directions) direction_center(d);
  if (train_clips_per_cell == 0 || val_clips_per_cell == 0 || test_clips_per_cell == 0) {
    throw ConfigError("every split needs clips");
  }
  if (train_augmentations < 2) throw ConfigError("train clips need at least two augmentations");
  if (!(sample_rate > 0.0) || !(clip_seconds > 0.0)) throw ConfigError("bad rate or length");
  if (!(azimuth_jitter_deg >= 0.0 && azimuth_jitter_deg < 45.0)) {
    throw ConfigError("azimuth jitter must lie in [0, 45)");
  }
  const auto r = room::AttributeRanges::train_val();
  for (const auto& [rg, lim, what] :
       {std::tuple{near_m, r.distance_m, "near_m"}, std::tuple{far_m, r.distance_m, "far_m"},
        std::tuple{up_deg, r.elevation_deg, "up_deg"},
        std::tuple{down_deg, r.elevation_deg, "down_deg"}}) {
    if (!(rg.lo <= rg.hi) || !lim.contains(rg.lo) || !lim.contains(rg.hi)) {
      throw ConfigError(std::string(what) + " outside the room-statistics range");
    }
  }
}

SyntheticCorpusSpec corpus_spec_from_json(const std::string& text) {
  SyntheticCorpusSpec s;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec: ") + e.what());
  }
  static const std::set<std::string> known{
      "classes", "directions", "train_clips_per_cell", "val_clips_per_cell",
      "test_clips_per_cell", "train_augmentations", "sample_rate", "clip_seconds",
      "azimuth_jitter_deg", "near_m", "far_m", "up_deg", "down_deg", "seed"};
  if (!j.is_object()) throw ConfigError("corpus spec must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in corpus spec");
  }
  try {
    if (j.contains("classes")) {
      s.classes.clear();
      for (const auto& c : j["classes"]) s.classes.push_back(parse_signal_class(c));
    }
    if (j.contains("directions")) s.directions = j["directions"].get<std::vector<std::string>>();
    auto num = [&](const char* k, auto& out) {
      if (j.contains(k)) out = j[k].get<std::decay_t<decltype(out)>>();
    };
    num("train_clips_per_cell", s.train_clips_per_cell);
    num("val_clips_per_cell", s.val_clips_per_cell);
    num("test_clips_per_cell", s.test_clips_per_cell);
    num("train_augmentations", s.train_augmentations);
    num("sample_rate", s.sample_rate);
    num("clip_seconds", s.clip_seconds);
    num("azimuth_jitter_deg", s.azimuth_jitter_deg);
    num("seed", s.seed);
    auto range = [&](const char* k, room::Range& out) {
      if (!j.contains(k)) return;
      const auto v = j[k].get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError(std::string(k) + " must be [lo, hi]");
      out = {v[0], v[1]};
    };
    range("near_m", s.near_m);
    range("far_m", s.far_m);
    range("up_deg", s.up_deg);
    range("down_deg", s.down_deg);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string to_json(const SyntheticCorpusSpec& s) {
  std::vector<std::string> classes;
  for (auto c : s.classes) classes.push_back(class_name(c));
  return json{{"classes", classes},
              {"directions", s.directions},
              {"train_clips_per_cell", s.train_clips_per_cell},
              {"val_clips_per_cell", s.val_clips_per_cell},
              {"test_clips_per_cell", s.test_clips_per_cell},
              {"train_augmentations", s.train_augmentations},
              {"sample_rate", s.sample_rate},
              {"clip_seconds", s.clip_seconds},
              {"azimuth_jitter_deg", s.azimuth_jitter_deg},
              {"near_m", {s.near_m.lo, s.near_m.hi}},
              {"far_m", {s.far_m.lo, s.far_m.hi}},
              {"up_deg", {s.up_deg.lo, s.up_deg.hi}},
              {"down_deg", {s.down_deg.lo, s.down_deg.hi}},
              {"seed", s.seed}}
      .dump(2);
}

std::vector<ManifestRecord> make_synthetic_corpus(const SyntheticCorpusSpec& spec,
                                                  const fs::path& root, int workers) {
  spec.validate();
  std::vector<Job> jobs;
  std::uint64_t base = 0;
  for (auto split : {room::Split::kTrain, room::Split::kVal, room::Split::kTest}) {
    const std::size_t clips = split == room::Split::kTrain ? spec.train_clips_per_cell
                              : split == room::Split::kVal ? spec.val_clips_per_cell
                                                           : spec.test_clips_per_cell;
    const std::size_t augs = split == room::Split::kTrain ? spec.train_augmentations : 1;
    std::uint64_t room_index = 0;
    for (auto cls : spec.classes) {
      for (std::size_t d = 0; d < spec.directions.size(); ++d) {
        for (bool near : {true, false}) {
          for (std::size_t clip = 0; clip < clips; ++clip, ++base) {
            for (std::size_t a = 0; a < augs; ++a) {
              jobs.push_back({split, cls, d, near, clip, a, false, base, room_index++});
            }
            jobs.push_back({split, cls, d, near, clip, 0, true, base, 0});
          }
        }
      }
    }
  }

  std::vector<ManifestRecord> recs(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t k) {
    const Job& jb = jobs[k];
    const std::string split = room::split_name(jb.split);
    const std::string base_id = split + "-" + class_name(jb.cls) + "-" + spec.directions[jb.dir] +
                                "-" + (jb.near ? "near" : "far") + "-" + pad(jb.clip, 3);
    const std::uint64_t signal_seed = Rng(spec.seed, fnv1a64("clip"), jb.base_ordinal).next();
    const auto signal = synthesize_signal(jb.cls, spec.sample_rate, spec.clip_seconds, signal_seed);
    ManifestRecord& r = recs[k];
    r.split = jb.split;
    r.class_name = class_name(jb.cls);
    r.base_id = base_id;
    r.original_caption = class_phrase(jb.cls);
    if (jb.mono) {
      r.id = base_id + "-mono";
      r.audio_path = "audio/" + split + "/" + r.id + ".wav";
      r.spatial_caption = r.original_caption;
      r.is_spatial = false;
      write_foa_wav(root / r.audio_path, feat::replicate_mono(signal, spec.sample_rate));
      return;
    }
    Rng pose(spec.seed, fnv1a64("pose") ^ static_cast<std::uint64_t>(jb.split), jb.room_index);
    const double az = room::wrap_degrees(direction_center(spec.directions[jb.dir]) +
                                         pose.uniform(-spec.azimuth_jitter_deg, spec.azimuth_jitter_deg));
    const bool up = (jb.clip + jb.aug) % 2 == 0;
    const auto& er = up ? spec.up_deg : spec.down_deg;
    const double el = pose.uniform(er.lo, er.hi);
    const auto& dr = jb.near ? spec.near_m : spec.far_m;
    const double dist = pose.uniform(dr.lo, dr.hi);
    const room::RoomSampler sampler(jb.split, spec.seed, room::AttributeRanges::train_val());
    const room::RoomSpec rs = sampler.sample_for_pose(jb.room_index, az, el, dist);
    auto sp = room::spatialize(signal, rs, spec.sample_rate);
    const auto keep = static_cast<std::size_t>(std::llround(spec.clip_seconds * spec.sample_rate));
    for (auto& ch : sp.audio.channels) ch.resize(std::min(ch.size(), keep));

    r.id = base_id + "-a" + std::to_string(jb.aug);
    r.audio_path = "audio/" + split + "/" + r.id + ".wav";
    r.attributes = sp.attributes;
    r.room_id = split + "-room-" + pad(jb.room_index, 5);
    r.is_spatial = true;
    const auto variant = Rng(spec.seed, fnv1a64("caption"), k).index(cap::kNumTemplates);
    r.spatial_caption = cap::build_spatial_caption(
        r.original_caption, cap::attrs_to_descriptors(r.attributes), variant);
    write_foa_wav(root / r.audio_path, sp.audio);
  });
  write_manifest(root / "manifest.jsonl", recs);
  return recs;
}

}  // namespace elsa::io
