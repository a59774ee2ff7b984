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

// Drives the elsa executable end to end on a tiny configuration.

#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <string>

#include "elsa/dataio.h"
#include "elsa/rng.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kTiny = fs::path(ELSA_CONFIG_DIR) / "tiny.json";

fs::path scratch_root() {
  return fs::temp_directory_path() / ("elsa_cli_" + std::to_string(::getpid()));
}

struct RemoveScratch : ::testing::Environment {
  void TearDown() override { fs::remove_all(scratch_root()); }
};
[[maybe_unused]] auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new RemoveScratch);

fs::path scratch(const std::string& name) {
  auto p = scratch_root() / name;
  fs::remove_all(p);
  return p;
}

int elsa(const std::string& args) {
  const std::string cmd = std::string(ELSA_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Every file under root except logs, which carry timestamps.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto rel = fs::relative(e.path(), root);
    if (e.is_regular_file() && rel.parent_path().filename() != "logs") {
      out[rel.string()] = slurp(e.path());
    }
  }
  return out;
}

json report(const fs::path& run) { return json::parse(slurp(run / "report.json")); }

TEST(Cli, SynthCorpusTwiceIsIdentical) {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(elsa("synth-corpus --config " + kTiny.string() + " --seed 7 --out " + a.string()), 0);
  ASSERT_EQ(elsa("synth-corpus --config " + kTiny.string() + " --seed 7 --out " + b.string()), 0);
  const auto ta = tree(a);
  EXPECT_GT(ta.size(), 100u);
  EXPECT_TRUE(ta == tree(b));
  EXPECT_TRUE(fs::exists(a / "logs" / "synth-corpus.log"));
  EXPECT_TRUE(fs::is_directory(a / "checkpoints"));
  EXPECT_EQ(json::parse(slurp(a / "config.json")).at("seed"), 7);
  // Rerunning into the same directory overwrites with the same bytes.
  ASSERT_EQ(elsa("synth-corpus --config " + kTiny.string() + " --seed 7 --out " + a.string()), 0);
  EXPECT_TRUE(ta == tree(a));
}

TEST(Cli, EvaluateIdentityEmbeddings) {
  const auto dir = scratch("ident");
  fs::create_directories(dir);
  elsa::Rng rng(3);
  elsa::io::NamedMatrix m{"audio", 30, 8, {}};
  for (int i = 0; i < 30 * 8; ++i) m.data.push_back(static_cast<float>(rng.normal()));
  elsa::io::MatrixWriter w(dir / "e.mat", false);
  w.write(m);
  m.name = "text";
  w.write(m);
  w.close();
  ASSERT_EQ(elsa("evaluate --embeddings " + (dir / "e.mat").string() + " --out " +
                 (dir / "run").string()),
            0);
  const auto r = report(dir / "run").at("retrieval");
  EXPECT_EQ(r.at("audio_to_text").at("R@1"), 1.0);
  EXPECT_EQ(r.at("text_to_audio").at("R@1"), 1.0);
  EXPECT_EQ(r.at("n"), 30);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"seed": 1, "trian": {}})";
  EXPECT_EQ(elsa("synth-corpus --config " + (dir / "bad.json").string() + " --out " +
                 (dir / "a").string()),
            1);
  EXPECT_EQ(elsa("featurize --corpus " + (dir / "missing").string() + " --out " +
                 (dir / "b").string()),
            1);
  EXPECT_EQ(elsa("no-such-command --out " + (dir / "c").string()), 1);
  EXPECT_EQ(elsa("synth-corpus"), 1);
  EXPECT_EQ(elsa("evaluate --embeddings " + kTiny.string() + " --out " + (dir / "d").string()), 1);
}

// corpus -> features -> train -> every evaluation stage, at two worker counts.
std::map<std::string, std::string> full_pipeline(const fs::path& root, int workers) {
  const std::string common = " --config " + kTiny.string() + " --workers " +
                             std::to_string(workers) + " --out ";
  const auto corpus = (root / "synth" / "corpus").string();
  const auto feats = (root / "feat" / "features").string();
  const auto ckpt = (root / "train" / "checkpoints" / "best.ckpt").string();
  EXPECT_EQ(elsa("synth-corpus" + common + (root / "synth").string()), 0);
  EXPECT_EQ(elsa("featurize" + common + (root / "feat").string() + " --corpus " + corpus), 0);
  const std::string data = " --corpus " + corpus + " --features " + feats;
  EXPECT_EQ(elsa("train" + common + (root / "train").string() + data), 0);
  for (std::string s : {"evaluate", "probe", "swap", "doa", "export-embeddings"}) {
    EXPECT_EQ(elsa(s + common + (root / s).string() + data + " --checkpoint " + ckpt), 0) << s;
  }
  std::map<std::string, std::string> all;
  for (const auto& [k, v] : tree(root)) all[k] = v;
  return all;
}

TEST(Cli, TinyPipelineDeterministicAcrossWorkers) {
  const auto a = full_pipeline(scratch("pipe1"), 1);
  const auto b = full_pipeline(scratch("pipe3"), 3);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [k, v] : a) {
    ASSERT_TRUE(b.count(k)) << k;
    EXPECT_TRUE(v == b.at(k)) << k;
  }
  const auto tr = json::parse(a.at("train/report.json"));
  EXPECT_EQ(tr.at("history").size(), 2u);
  EXPECT_TRUE(a.count("train/checkpoints/best.ckpt"));
  EXPECT_TRUE(a.count("doa/doa_breakdown.txt"));
  EXPECT_TRUE(a.count("export-embeddings/embeddings.mat"));
  const auto probe = json::parse(a.at("probe/report.json"));
  for (const char* f : {"direction", "distance", "elevation"}) EXPECT_TRUE(probe.contains(f)) << f;
}

}  // namespace
