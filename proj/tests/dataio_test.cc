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

#include <gtest/gtest.h>
#include <unistd.h>

#include <fstream>
#include <set>
#include <sstream>

#include "elsa/captions.h"
#include "elsa/rng.h"

namespace elsa::io {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int n = 0;
    path_ = fs::temp_directory_path() /
            ("elsa_dataio_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

ambi::FOASignal random_foa(std::size_t n, double rate, std::uint64_t seed) {
  Rng rng(seed);
  ambi::FOASignal f;
  f.sample_rate = rate;
  for (auto& ch : f.channels) {
    ch.resize(n);
    for (float& v : ch) v = static_cast<float>(rng.normal());
  }
  return f;
}

TEST(Wav, FoaRoundTripIsBitExact) {
  TempDir d;
  auto f = random_foa(1001, 48000.0, 1);
  f.channels[2][7] = -0.0f;
  f.channels[1][3] = 1e-40f;  // subnormal
  write_foa_wav(d.path() / "a.wav", f);
  const auto g = read_foa_wav(d.path() / "a.wav");
  EXPECT_EQ(g.sample_rate, 48000.0);
  for (std::size_t c = 0; c < 4; ++c) {
    ASSERT_EQ(g.channels[c].size(), 1001u);
    EXPECT_EQ(0, std::memcmp(g.channels[c].data(), f.channels[c].data(), 1001 * sizeof(float)));
  }
  const auto bytes = slurp(d.path() / "a.wav");
  EXPECT_EQ(bytes.size(), 44u + 1001 * 16);
  EXPECT_EQ(bytes.substr(0, 4), "RIFF");
}

TEST(Wav, WrongChannelCount) {
  TempDir d;
  WavData w{16000.0, {std::vector<float>(10, 0.1f), std::vector<float>(10, 0.2f)}};
  write_wav(d.path() / "st.wav", w);
  EXPECT_THROW(read_foa_wav(d.path() / "st.wav"), WrongChannelCountError);
  EXPECT_EQ(read_wav(d.path() / "st.wav").channels.size(), 2u);
}

TEST(Wav, ReadsPcm16) {
  TempDir d;
  std::ostringstream os;
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) os.put(static_cast<char>(v >> (8 * i))); };
  auto u16 = [&](std::uint16_t v) { os.put(static_cast<char>(v & 0xff)); os.put(static_cast<char>(v >> 8)); };
  os << "RIFF";
  u32(36 + 8);
  os << "WAVEfmt ";
  u32(16);
  u16(1);
  u16(1);
  u32(22050);
  u32(44100);
  u16(2);
  u16(16);
  os << "data";
  u32(8);
  for (std::int16_t s : {0, 16384, -32768, 32767}) u16(static_cast<std::uint16_t>(s));
  spit(d.path() / "p.wav", os.str());
  const auto w = read_wav(d.path() / "p.wav");
  EXPECT_EQ(w.sample_rate, 22050.0);
  ASSERT_EQ(w.channels[0].size(), 4u);
  EXPECT_EQ(w.channels[0][1], 0.5f);
  EXPECT_EQ(w.channels[0][2], -1.0f);
}

TEST(Wav, MalformedFiles) {
  TempDir d;
  spit(d.path() / "x.wav", "not a wave file at all");
  EXPECT_THROW(read_wav(d.path() / "x.wav"), FormatError);
  write_foa_wav(d.path() / "t.wav", random_foa(100, 16000.0, 2));
  auto b = slurp(d.path() / "t.wav");
  spit(d.path() / "t.wav", b.substr(0, b.size() - 10));
  EXPECT_THROW(read_foa_wav(d.path() / "t.wav"), FormatError);
  EXPECT_THROW(read_wav(d.path() / "missing.wav"), DataError);
}

TEST(Matrix, RoundTripAndAppend) {
  TempDir d;
  const auto p = d.path() / "m.mat";
  NamedMatrix a{"alpha", 2, 3, {1, 2, 3, 4, 5, 6.25f}};
  NamedMatrix b{"beta", 1, 2, {-1e-30f, 3e30f}};
  {
    MatrixWriter w(p, false);
    w.write(a);
    w.close();
  }
  {
    MatrixWriter w(p, true);
    w.write(b);
    w.close();
  }
  const auto all = read_matrices(p);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].name, "alpha");
  EXPECT_EQ(all[0].data, a.data);
  EXPECT_EQ(all[1].data, b.data);
  EXPECT_EQ(read_matrix(p, "beta", 1, 2).data, b.data);
  EXPECT_THROW(read_matrix(p, "beta", 2, 1), FormatError);
  EXPECT_THROW(read_matrix(p, "gamma"), DataError);
}

TEST(Matrix, TruncationAndVersion) {
  TempDir d;
  const auto p = d.path() / "m.mat";
  MatrixWriter w(p, false);
  w.write({"alpha", 2, 2, {1, 2, 3, 4}});
  w.close();
  const auto bytes = slurp(p);
  spit(p, bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_matrices(p), FormatError);
  auto v2 = bytes;
  v2[4] = 2;  // version field follows the 4-byte magic
  spit(p, v2);
  EXPECT_THROW(read_matrices(p), VersionMismatchError);
  MatrixWriter bad(d.path() / "b.mat", false);
  EXPECT_THROW(bad.write({"x", 2, 2, {1, 2, 3}}), ShapeError);
}

TEST(Matrix, FeatureCacheRoundTrip) {
  TempDir d;
  feat::FeatureSet f;
  f.frames = 3;
  f.mel_bands = 2;
  f.bins = 2;
  f.logmel = {1, 2, 3, 4, 5, 6};
  f.ivs.assign(3 * 2 * 6, 0.5f);
  MatrixWriter w(d.path() / "f.mat", false);
  write_features(w, "clip-a", f);
  write_features(w, "clip-b", f);
  w.close();
  const auto back = read_feature_cache(d.path() / "f.mat");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].first, "clip-b");
  EXPECT_EQ(back[0].second.logmel, f.logmel);
  EXPECT_EQ(back[0].second.ivs, f.ivs);
  EXPECT_EQ(back[0].second.bins, 2u);
}

ManifestRecord sample_record(const std::string& id, const std::string& room, room::Split s) {
  ManifestRecord r;
  r.id = id;
  r.audio_path = "audio/" + id + ".wav";
  r.original_caption = "a dog \"barking\"";
  r.spatial_caption = "A dog barks on the left.";
  r.attributes = {-90.0, 1.5, 0.8, 60.0, 450.0};
  r.room_id = room;
  r.split = s;
  r.class_name = "dog";
  r.base_id = id;
  return r;
}

TEST(Manifest, RoundTripAndErrors) {
  TempDir d;
  const auto p = d.path() / "m.jsonl";
  std::vector<ManifestRecord> recs{sample_record("a", "r1", room::Split::kTrain),
                                   sample_record("b", "r2", room::Split::kTest)};
  write_manifest(p, recs);
  const auto back = read_manifest(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].original_caption, recs[0].original_caption);
  EXPECT_EQ(back[1].split, room::Split::kTest);
  EXPECT_EQ(back[0].attributes.t30_ms, 450.0);
  EXPECT_EQ(to_json_line(back[1]), to_json_line(recs[1]));

  write_manifest(p, {recs[0], recs[0]});
  EXPECT_THROW(read_manifest(p), DataError);
  spit(p, "{\"id\": 3\n");
  EXPECT_THROW(read_manifest(p), FormatError);
  auto line = to_json_line(recs[0]);
  line.replace(line.find("\"schema\":1"), 10, "\"schema\":9");
  spit(p, line + "\n");
  EXPECT_THROW(read_manifest(p), VersionMismatchError);
}

TEST(Manifest, RoomAudit) {
  std::vector<ManifestRecord> recs{sample_record("a", "r1", room::Split::kTrain),
                                   sample_record("b", "r1", room::Split::kTrain),
                                   sample_record("c", "r2", room::Split::kVal)};
  EXPECT_NO_THROW(audit_room_disjointness(recs));
  recs.push_back(sample_record("d", "r1", room::Split::kTest));
  EXPECT_THROW(audit_room_disjointness(recs), DataError);
}

TEST(Signals, DeterministicAndDistinct) {
  std::set<std::vector<float>> seen;
  for (auto c : SyntheticCorpusSpec{}.classes) {
    const auto a = synthesize_signal(c, 16000.0, 0.5, 7);
    EXPECT_EQ(a, synthesize_signal(c, 16000.0, 0.5, 7)) << class_name(c);
    EXPECT_NE(a, synthesize_signal(c, 16000.0, 0.5, 8)) << class_name(c);
    EXPECT_EQ(a.size(), 8000u);
    seen.insert(a);
    EXPECT_EQ(parse_signal_class(class_name(c)), c);
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_THROW(parse_signal_class("kazoo"), ConfigError);
}

TEST(CorpusSpec, JsonIsStrict) {
  SyntheticCorpusSpec s;
  s.seed = 5;
  s.classes = {SignalClass::kTone, SignalClass::kChirp};
  const auto back = corpus_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_THROW(corpus_spec_from_json(R"({"clases": []})"), ConfigError);
  EXPECT_THROW(corpus_spec_from_json(R"({"classes": ["tone"]})"), ConfigError);
  EXPECT_THROW(corpus_spec_from_json(R"({"near_m": [0.1, 0.9]})"), ConfigError);
  EXPECT_THROW(corpus_spec_from_json(R"({"train_augmentations": 1})"), ConfigError);
}

SyntheticCorpusSpec tiny_spec() {
  SyntheticCorpusSpec s;
  s.classes = {SignalClass::kTone, SignalClass::kClickTrain};
  s.directions = {"left", "back"};
  s.train_clips_per_cell = 1;
  s.val_clips_per_cell = 1;
  s.test_clips_per_cell = 1;
  s.clip_seconds = 1.0;
  s.seed = 7;
  return s;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

TEST(Corpus, SameSeedSameBytesAnyWorkers) {
  TempDir a, b, c;
  make_synthetic_corpus(tiny_spec(), a.path(), 1);
  make_synthetic_corpus(tiny_spec(), b.path(), 3);
  auto other = tiny_spec();
  other.seed = 8;
  make_synthetic_corpus(other, c.path(), 1);
  const auto ta = tree(a.path()), tb = tree(b.path());
  EXPECT_EQ(ta.size(), tb.size());
  EXPECT_TRUE(ta == tb);
  EXPECT_NE(ta.at("manifest.jsonl"), tree(c.path()).at("manifest.jsonl"));
}

TEST(Corpus, FullGridCountsAndAudits) {
  TempDir d;
  SyntheticCorpusSpec s;
  s.train_clips_per_cell = 1;
  s.val_clips_per_cell = 1;
  s.test_clips_per_cell = 10;
  s.clip_seconds = 1.0;
  s.seed = 11;
  const auto recs = make_synthetic_corpus(s, d.path(), 0);
  std::map<std::pair<room::Split, bool>, std::size_t> count;
  for (const auto& r : recs) ++count[{r.split, r.is_spatial}];
  EXPECT_EQ((count[{room::Split::kTest, true}]), 480u);
  EXPECT_EQ((count[{room::Split::kTest, false}]), 480u);
  EXPECT_EQ((count[{room::Split::kTrain, true}]), 96u);
  EXPECT_EQ((count[{room::Split::kVal, true}]), 48u);
  EXPECT_EQ(audit_caption_descriptors(recs), 0u);
  EXPECT_NO_THROW(audit_room_disjointness(recs));
  const auto back = read_manifest(d.path() / "manifest.jsonl");
  EXPECT_EQ(back.size(), recs.size());
  // Every cell realizes the descriptors it was generated for.
  for (const auto& r : back) {
    if (!r.is_spatial) continue;
    const auto desc = cap::attrs_to_descriptors(r.attributes);
    ASSERT_TRUE(desc.direction && desc.distance && desc.elevation) << r.id;
    EXPECT_NE(r.id.find("-" + cap::to_string(*desc.direction) + "-" + cap::to_string(*desc.distance) + "-"),
              std::string::npos)
        << r.id;
    EXPECT_TRUE(room::AttributeRanges::train_val().contains(r.attributes)) << r.id;
  }
  const auto foa = read_foa_wav(d.path() / back.front().audio_path);
  EXPECT_EQ(foa.num_samples(), 16000u);
  EXPECT_EQ(foa.sample_rate, 16000.0);
}

}  // namespace
}  // namespace elsa::io
