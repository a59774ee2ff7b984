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

#include "elsa/nn.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "elsa/optim.h"
#include "elsa/parallel.h"
#include "elsa/rng.h"

namespace elsa::nn {
namespace {

constexpr double kTol = 1e-4;

Tensor rand_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed, 3);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::leaf(std::move(shape), std::move(v));
}

// Values bounded away from zero so ReLU kinks stay outside +-h.
Tensor away_from_zero(Shape shape, std::uint64_t seed) {
  Tensor t = rand_tensor(std::move(shape), seed);
  for (double& x : t.mutable_value()) x = x >= 0 ? x + 0.05 : x - 0.05;
  return t;
}

TEST(Ops, LinearIdentity) {
  const auto x = rand_tensor({5}, 1);
  std::vector<double> eye(25, 0.0);
  for (int i = 0; i < 5; ++i) eye[i * 6] = 1.0;
  const auto y = linear(x, Tensor::constant({5, 5}, eye), Tensor::zeros({5}));
  EXPECT_EQ(y.value(), x.value());
}

TEST(Ops, ConvDeltaKernelReproducesInput) {
  const auto x = rand_tensor({3, 6, 7}, 2);
  std::vector<double> k(3 * 3 * 9, 0.0);
  for (int c = 0; c < 3; ++c) k[(c * 3 + c) * 9 + 4] = 1.0;
  const auto y = conv2d(x, Tensor::constant({3, 3, 3, 3}, k), Tensor(), 1, 1);
  EXPECT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.value()[i], x.value()[i]);
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  try {
    add(rand_tensor({2, 3}, 1), rand_tensor({3, 2}, 2));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3, 2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(linear(rand_tensor({4}, 1), rand_tensor({3, 5}, 2), Tensor()), ShapeError);
  EXPECT_THROW(conv2d(rand_tensor({2, 5, 5}, 1), rand_tensor({4, 3, 3, 3}, 2), Tensor()),
               ShapeError);
  EXPECT_THROW(matmul(rand_tensor({2, 3}, 1), rand_tensor({2, 3}, 2)), ShapeError);
}

TEST(Ops, NanGuard) {
  EXPECT_THROW(exp(Tensor::constant({1}, {1000.0})), NumericError);
}

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

struct Case {
  const char* name;
  Fn f;
  std::vector<Tensor> in;
};

TEST(Gradcheck, EveryOp) {
  const std::vector<Case> cases = {
      {"add", [](auto& v) { return add(v[0], v[1]); }, {rand_tensor({3, 4}, 1), rand_tensor({3, 4}, 2)}},
      {"sub", [](auto& v) { return sub(v[0], v[1]); }, {rand_tensor({7}, 3), rand_tensor({7}, 4)}},
      {"mul", [](auto& v) { return mul(v[0], v[1]); }, {rand_tensor({2, 5}, 5), rand_tensor({2, 5}, 6)}},
      {"scale", [](auto& v) { return scale(v[0], -2.5); }, {rand_tensor({6}, 7)}},
      {"scale_by", [](auto& v) { return scale_by(v[0], v[1]); }, {rand_tensor({6}, 8), rand_tensor({1}, 9)}},
      {"relu", [](auto& v) { return relu(v[0]); }, {away_from_zero({4, 4}, 10)}},
      {"exp", [](auto& v) { return exp(v[0]); }, {rand_tensor({5}, 11)}},
      {"square", [](auto& v) { return square(v[0]); }, {rand_tensor({5}, 12)}},
      {"sum", [](auto& v) { return sum(v[0]); }, {rand_tensor({2, 3}, 13)}},
      {"mean", [](auto& v) { return mean(v[0]); }, {rand_tensor({2, 3}, 14)}},
      {"reshape", [](auto& v) { return reshape(v[0], {6}); }, {rand_tensor({2, 3}, 15)}},
      {"concat", [](auto& v) { return concat({v[0], v[1]}); }, {rand_tensor({2, 3}, 16), rand_tensor({1, 3}, 17)}},
      {"stack", [](auto& v) { return stack({v[0], v[1]}); }, {rand_tensor({4}, 18), rand_tensor({4}, 19)}},
      {"linear1d", [](auto& v) { return linear(v[0], v[1], v[2]); },
       {rand_tensor({5}, 20), rand_tensor({3, 5}, 21), rand_tensor({3}, 22)}},
      {"linear2d", [](auto& v) { return linear(v[0], v[1], v[2]); },
       {rand_tensor({4, 5}, 23), rand_tensor({3, 5}, 24), rand_tensor({3}, 25)}},
      {"matmul", [](auto& v) { return matmul(v[0], v[1]); }, {rand_tensor({3, 4}, 26), rand_tensor({4, 2}, 27)}},
      {"transpose", [](auto& v) { return transpose(v[0]); }, {rand_tensor({3, 4}, 28)}},
      {"conv_same", [](auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); },
       {rand_tensor({2, 5, 6}, 29), rand_tensor({3, 2, 3, 3}, 30), rand_tensor({3}, 31)}},
      {"conv_stride", [](auto& v) { return conv2d(v[0], v[1], v[2], 2, 0); },
       {rand_tensor({2, 7, 6}, 32), rand_tensor({2, 2, 3, 2}, 33), rand_tensor({2}, 34)}},
      {"max_pool", [](auto& v) { return max_pool2d(v[0], 2); }, {rand_tensor({2, 5, 4}, 35)}},
      {"global_mean", [](auto& v) { return global_mean_pool(v[0]); }, {rand_tensor({3, 4, 5}, 36)}},
      {"global_max", [](auto& v) { return global_max_pool(v[0]); }, {rand_tensor({3, 4, 5}, 37)}},
      {"mean_rows", [](auto& v) { return mean_rows(v[0]); }, {rand_tensor({4, 3}, 38)}},
      {"layer_norm", [](auto& v) { return layer_norm(v[0], v[1], v[2]); },
       {rand_tensor({3, 6}, 39), rand_tensor({6}, 40), rand_tensor({6}, 41)}},
      {"layer_norm_plain", [](auto& v) { return layer_norm(v[0], Tensor(), Tensor()); }, {rand_tensor({7}, 42)}},
      {"l2_normalize", [](auto& v) { return l2_normalize(v[0]); }, {rand_tensor({3, 4}, 43)}},
      {"log_softmax", [](auto& v) { return log_softmax_rows(v[0]); }, {rand_tensor({3, 5}, 44, -3, 3)}},
      {"gather", [](auto& v) { return gather(v[0], {0, 4, 4, 2}); }, {rand_tensor({5}, 45)}},
      {"cross_entropy", [](auto& v) { return cross_entropy_rows(v[0], {1, 0, 3}); }, {rand_tensor({3, 4}, 46, -2, 2)}},
      {"embedding_bag", [](auto& v) { return embedding_bag_mean(v[0], {2, 0, 2, 5}); }, {rand_tensor({6, 3}, 47)}},
  };
  for (const auto& c : cases) EXPECT_LT(gradcheck(c.f, c.in), kTol) << c.name;
}

TEST(Gradcheck, ComposedConvReluPoolLinear) {
  const Fn f = [](const std::vector<Tensor>& v) {
    auto h = relu(conv2d(v[0], v[1], v[2], 1, 1));
    h = max_pool2d(h, 2);
    return linear(reshape(h, {h.size()}), v[3], v[4]);
  };
  const std::vector<Tensor> in = {rand_tensor({2, 6, 6}, 50), rand_tensor({3, 2, 3, 3}, 51),
                                  rand_tensor({3}, 52), rand_tensor({4, 27}, 53),
                                  rand_tensor({4}, 54)};
  EXPECT_LT(gradcheck(f, in), kTol);
}

TEST(Gradcheck, DetectsCorruptedGradient) {
  const Fn bad_square = [](const std::vector<Tensor>& v) {
    const Tensor a = v[0];
    std::vector<double> out(a.value());
    for (double& x : out) x *= x;
    return Tensor::from_op(a.shape(), out, {a}, [a](Node& s) {
      auto& g = a.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * a.value()[i] * s.grad[i];
    });
  };
  EXPECT_GT(gradcheck(bad_square, {rand_tensor({4}, 60)}), 1e-2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet ps;
  ps.add("w", {1}, {0.5});
  Adam adam({1e-3, 0.0, 100});
  adam.step(ps, {{1.0}});
  EXPECT_NEAR(ps.get("w").value[0] - 0.5, -1e-3, 1e-9);
  EXPECT_EQ(adam.state().step, 1u);
}

TEST(Adam, ZeroGradientsLeaveParameters) {
  ParameterSet ps;
  ps.add("a", {3}, {1.0, -2.0, 3.0});
  Adam adam({1e-2, 0.0, 10});
  for (int i = 0; i < 3; ++i) adam.step(ps, {{0.0, 0.0, 0.0}});
  EXPECT_EQ(ps.get("a").value, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(adam.state().step, 3u);
}

TEST(Adam, ScheduleEndpoints) {
  const CosineSchedule s{1e-3, 1e-5, 200};
  EXPECT_DOUBLE_EQ(s.at(0), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(200), 1e-5);
  EXPECT_DOUBLE_EQ(s.at(500), 1e-5);
  EXPECT_NEAR(s.at(100), 0.5 * (1e-3 + 1e-5), 1e-15);
  for (std::uint64_t t = 1; t <= 200; ++t) EXPECT_LE(s.at(t), s.at(t - 1));
}

// Tiny regression trained with per-sample graphs run on `workers` threads.
std::vector<double> train_tiny(int workers) {
  Rng rng(77);
  ParameterSet ps;
  ps.add_he("w1", {8, 4}, 4, rng);
  ps.add_const("b1", {8}, 0.0);
  ps.add_he("w2", {1, 8}, 8, rng);
  std::vector<std::vector<double>> xs(32);
  for (auto& x : xs) {
    x.resize(4);
    for (double& v : x) v = rng.normal();
  }
  Adam adam({1e-2, 0.0, 20});
  for (int step = 0; step < 20; ++step) {
    std::vector<std::vector<std::vector<double>>> per(xs.size());
    parallel_for(xs.size(), workers, [&](std::size_t i) {
      const auto p = ps.leaves(true);
      const auto x = Tensor::constant({4}, xs[i]);
      const auto y = linear(relu(linear(x, p[0], p[1])), p[2], Tensor());
      square(sub(y, Tensor::constant({1}, {xs[i][0] * xs[i][1]}))).backward();
      for (const auto& t : p) per[i].push_back(t.grad());
    });
    std::vector<std::vector<double>> g(ps.size());
    for (std::size_t k = 0; k < ps.size(); ++k) {
      g[k].assign(ps.items()[k].value.size(), 0.0);
      for (const auto& s : per) {
        for (std::size_t j = 0; j < g[k].size(); ++j) g[k][j] += s[k][j] / 32.0;
      }
    }
    adam.step(ps, g);
  }
  std::vector<double> flat;
  for (const auto& p : ps.items()) flat.insert(flat.end(), p.value.begin(), p.value.end());
  return flat;
}

TEST(Determinism, WorkerCountDoesNotChangeParameters) {
  const auto a = train_tiny(1);
  EXPECT_EQ(a, train_tiny(4));
  EXPECT_EQ(a, train_tiny(1));
}

class CheckpointFile : public ::testing::Test {
 protected:
  std::filesystem::path path = std::filesystem::temp_directory_path() /
                               ("elsa_ckpt_" + std::to_string(::getpid()) + ".bin");
  void TearDown() override { std::filesystem::remove(path); }
};

TEST_F(CheckpointFile, RoundTrip) {
  Rng rng(5);
  Checkpoint ck;
  ck.meta_json = R"({"joint_dim": 64})";
  ck.params.add_he("enc.w", {3, 4}, 4, rng);
  ck.params.add_const("enc.b", {3}, 0.25);
  Adam adam({1e-3, 0.0, 10});
  adam.step(ck.params, {std::vector<double>(12, 0.1), std::vector<double>(3, -0.2)});
  ck.optimizer = adam.state();
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.meta_json, ck.meta_json);
  ASSERT_EQ(back.params.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& a = ck.params.items()[k];
    const auto& b = back.params.items()[k];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.shape, b.shape);
    for (std::size_t i = 0; i < a.value.size(); ++i) {
      EXPECT_EQ(b.value[i], static_cast<double>(static_cast<float>(a.value[i])));
    }
  }
  ASSERT_TRUE(back.optimizer);
  EXPECT_EQ(back.optimizer->step, 1u);
  EXPECT_EQ(back.optimizer->m[1].size(), 3u);
}

TEST_F(CheckpointFile, RejectsUnknownVersionAndGarbage) {
  Checkpoint ck;
  ck.params.add_const("x", {2}, 1.0);
  save_checkpoint(path, ck);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  save_checkpoint(path, ck);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

}  // namespace
}  // namespace elsa::nn
