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

#ifndef ELSA_NN_H_
#define ELSA_NN_H_

// Small reverse-mode autodiff engine in double precision. Every op records
// its parents and a backward closure; backward() walks the graph in reverse
// topological order from the root, so gradients are reproducible bit for
// bit. Graphs are per-thread objects: concurrent graphs must not share
// requires-grad leaves.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "elsa/errors.h"

namespace elsa::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class NumericError : public Error {
 public:
  using Error::Error;
};

struct Node;

class Tensor {
 public:
  using BackwardFn = std::function<void(Node& self)>;

  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor leaf(Shape shape, std::vector<double> values,
                     bool requires_grad = true);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  // Builds an op output. `backward` reads self.grad and accumulates into the
  // parents' grads; it is dropped when no parent requires a gradient.
  // Throws NumericError if any value is not finite.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t size() const;
  const std::vector<double>& value() const;
  std::vector<double>& mutable_value();
  // Empty until backward reaches this tensor.
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  double item() const;

  // Seeds a scalar root with 1.
  void backward() const;
  void backward(std::span<const double> seed) const;

  Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  Tensor::BackwardFn backward;

  // Zero-filled grad buffer of the right size.
  std::vector<double>& ensure_grad();
};

// Elementwise, same shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a times a one-element tensor.
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// Concatenates along the leading axis; trailing dims must agree.
Tensor concat(const std::vector<Tensor>& parts);
// Stacks equal-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

// x: [in] or [n, in]; w: [out, in]; b: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// [m, k] x [k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// x: [C, H, W]; w: [O, C, kh, kw]; b: [O] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride = 1, std::size_t padding = 0);
// Non-overlapping k x k max pooling over [C, H, W]; remainders dropped.
Tensor max_pool2d(const Tensor& x, std::size_t k);
// [C, H, W] -> [C].
Tensor global_mean_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);
// [n, d] -> [d].
Tensor mean_rows(const Tensor& x);

// Normalizes each row of a [d] or [n, d] tensor to zero mean and unit
// variance, then applies gain and bias of shape [d] when defined.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Each row scaled to unit L2 norm.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// Row-wise log-softmax of [n, m].
Tensor log_softmax_rows(const Tensor& x);
// Picks flat indices out of x, producing [indices.size()].
Tensor gather(const Tensor& x, std::vector<std::size_t> indices);
// Mean over rows of -log softmax(x)[i, target_i].
Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<std::size_t>& targets);

// Mean of rows table[ids[i]]: table [V, d] -> [d].
Tensor embedding_bag_mean(const Tensor& table,
                          const std::vector<std::size_t>& ids);

// Largest relative error between analytic and central-difference gradients
// of f over every element of every input. Non-scalar outputs are reduced
// with a fixed random projection.
double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                 const std::vector<Tensor>& inputs, double h = 1e-4);

}  // namespace elsa::nn

#endif  // ELSA_NN_H_
