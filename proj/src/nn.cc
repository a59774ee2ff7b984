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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "elsa/rng.h"

namespace elsa::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  if (t.shape().size() != rank) {
    throw ShapeError(op + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

// Grad buffer of a parent, or nullptr when it takes no gradient.
double* grad_of(const Tensor& t) {
  return t.requires_grad() ? t.node()->ensure_grad().data() : nullptr;
}

// View of a tensor as rows x last-dim.
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t, const std::string& op) {
  const Shape& s = t.shape();
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw ShapeError(op + ": expected a vector or matrix, got " + shape_str(s));
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ']';
  return os.str();
}

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values,
                       std::vector<Tensor> parents, BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in forward pass");
  }
  Tensor t = leaf(std::move(shape), std::move(values), false);
  for (const auto& p : parents) t.node_->requires_grad |= p.requires_grad();
  if (t.node_->requires_grad) {
    t.node_->parents = std::move(parents);
    t.node_->backward = std::move(backward);
  }
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
const std::vector<double>& Tensor::value() const { return node_->value; }
std::vector<double>& Tensor::mutable_value() { return node_->value; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::backward() const {
  if (size() != 1) throw ShapeError("backward() without seed needs a scalar, got " +
                                    shape_str(shape()));
  const double one = 1.0;
  backward(std::span<const double>(&one, 1));
}

void Tensor::backward(std::span<const double> seed) const {
  if (seed.size() != size()) {
    throw ShapeError("backward seed has " + std::to_string(seed.size()) +
                     " values for tensor " + shape_str(shape()));
  }
  if (!requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].node();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  auto& g = node_->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return Tensor::from_op(a.shape(), std::move(v), {a, b}, [a, b](Node& s) {
    for (const Tensor* p : {&a, &b}) {
      if (double* g = grad_of(*p)) {
        for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return Tensor::from_op(a.shape(), std::move(v), {a, b}, [a, b](Node& s) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] -= s.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return Tensor::from_op(a.shape(), std::move(v), {a, b}, [a, b](Node& s) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i] * b.value()[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i] * a.value()[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.value());
  for (double& x : v) x *= c;
  return Tensor::from_op(a.shape(), std::move(v), {a}, [a, c](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += c * s.grad[i];
  });
}

Tensor scale_by(const Tensor& a, const Tensor& sc) {
  if (sc.size() != 1) shape_error("scale_by", a.shape(), sc.shape());
  const double c = sc.item();
  std::vector<double> v(a.value());
  for (double& x : v) x *= c;
  return Tensor::from_op(a.shape(), std::move(v), {a, sc}, [a, sc, c](Node& s) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += c * s.grad[i];
    }
    if (double* g = grad_of(sc)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.grad.size(); ++i) acc += s.grad[i] * a.value()[i];
      g[0] += acc;
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.value());
  for (double& x : v) x = x > 0.0 ? x : 0.0;
  return Tensor::from_op(a.shape(), std::move(v), {a}, [a](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      if (a.value()[i] > 0.0) g[i] += s.grad[i];
    }
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> v(a.value());
  for (double& x : v) x = std::exp(x);
  return Tensor::from_op(a.shape(), std::move(v), {a}, [a](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i] * s.value[i];
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> v(a.value());
  for (double& x : v) x *= x;
  return Tensor::from_op(a.shape(), std::move(v), {a}, [a](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += 2.0 * a.value()[i] * s.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.value()) acc += x;
  return Tensor::from_op({1}, {acc}, {a}, [a](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < a.size(); ++i) g[i] += s.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  return Tensor::from_op(std::move(shape), a.value(), {a}, [a](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape out = parts[0].shape();
  if (out.empty()) throw ShapeError("concat of rank-0 tensors");
  const Shape tail(out.begin() + 1, out.end());
  out[0] = 0;
  std::vector<double> v;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.empty() || Shape(s.begin() + 1, s.end()) != tail) {
      shape_error("concat", parts[0].shape(), s);
    }
    out[0] += s[0];
    v.insert(v.end(), p.value().begin(), p.value().end());
  }
  return Tensor::from_op(std::move(out), std::move(v), parts, [parts](Node& s) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (double* g = grad_of(p)) {
        for (std::size_t i = 0; i < p.size(); ++i) g[i] += s.grad[off + i];
      }
      off += p.size();
    }
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  std::vector<Tensor> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    rows.push_back(reshape(p, std::move(s)));
  }
  return concat(rows);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear weight", w, 2);
  const auto [n, in] = rows_cols(x, "linear");
  const std::size_t out = w.dim(0);
  if (w.dim(1) != in) shape_error("linear", x.shape(), w.shape());
  if (b.defined() && b.shape() != Shape{out}) shape_error("linear bias", w.shape(), b.shape());
  std::vector<double> v(n * out);
  ConstMapMat X(x.value().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  ConstMapMat W(w.value().data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  MapMat Y(v.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  Y.noalias() = X * W.transpose();
  if (b.defined()) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < out; ++c) v[r * out + c] += b.value()[c];
    }
  }
  Shape shape = x.shape().size() == 1 ? Shape{out} : Shape{n, out};
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return Tensor::from_op(std::move(shape), std::move(v), std::move(parents),
                         [x, w, b, n, in, out](Node& s) {
    const auto N = static_cast<Eigen::Index>(n);
    const auto I = static_cast<Eigen::Index>(in);
    const auto O = static_cast<Eigen::Index>(out);
    ConstMapMat dY(s.grad.data(), N, O);
    if (double* g = grad_of(x)) {
      MapMat(g, N, I).noalias() += dY * ConstMapMat(w.value().data(), O, I);
    }
    if (double* g = grad_of(w)) {
      MapMat(g, O, I).noalias() += dY.transpose() * ConstMapMat(x.value().data(), N, I);
    }
    if (b.defined()) {
      if (double* g = grad_of(b)) {
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < out; ++c) g[c] += s.grad[r * out + c];
        }
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const auto M = static_cast<Eigen::Index>(a.dim(0));
  const auto K = static_cast<Eigen::Index>(a.dim(1));
  const auto N = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> v(static_cast<std::size_t>(M * N));
  MapMat(v.data(), M, N).noalias() =
      ConstMapMat(a.value().data(), M, K) * ConstMapMat(b.value().data(), K, N);
  return Tensor::from_op({a.dim(0), b.dim(1)}, std::move(v), {a, b},
                         [a, b, M, K, N](Node& s) {
    ConstMapMat dC(s.grad.data(), M, N);
    if (double* g = grad_of(a)) {
      MapMat(g, M, K).noalias() += dC * ConstMapMat(b.value().data(), K, N).transpose();
    }
    if (double* g = grad_of(b)) {
      MapMat(g, K, N).noalias() += ConstMapMat(a.value().data(), M, K).transpose() * dC;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = a.value()[i * c + j];
  }
  return Tensor::from_op({c, r}, std::move(v), {a}, [a, r, c](Node& s) {
    double* g = grad_of(a);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += s.grad[j * r + i];
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t padding) {
  require_rank("conv2d input", x, 3);
  require_rank("conv2d weight", w, 4);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C) shape_error("conv2d", x.shape(), w.shape());
  if (b.defined() && b.shape() != Shape{O}) shape_error("conv2d bias", w.shape(), b.shape());
  if (H + 2 * padding < kh || W + 2 * padding < kw) shape_error("conv2d", x.shape(), w.shape());
  const std::size_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kw) / stride + 1;
  const std::size_t K = C * kh * kw;
  const std::size_t P = Ho * Wo;

  // cols[(c, i, j), (oy, ox)] = x[c, oy*stride + i - pad, ox*stride + j - pad]
  auto cols = std::make_shared<std::vector<double>>(K * P, 0.0);
  const auto& xv = x.value();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* row = cols->data() + ((c * kh + i) * kw + j) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) -
                                    static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            row[oy * Wo + ox] = xv[(c * H + static_cast<std::size_t>(iy)) * W +
                                   static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  std::vector<double> v(O * P);
  const auto eO = static_cast<Eigen::Index>(O);
  const auto eK = static_cast<Eigen::Index>(K);
  const auto eP = static_cast<Eigen::Index>(P);
  MapMat(v.data(), eO, eP).noalias() =
      ConstMapMat(w.value().data(), eO, eK) * ConstMapMat(cols->data(), eK, eP);
  if (b.defined()) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t p = 0; p < P; ++p) v[o * P + p] += b.value()[o];
    }
  }
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return Tensor::from_op({O, Ho, Wo}, std::move(v), std::move(parents),
                         [=](Node& s) {
    ConstMapMat dY(s.grad.data(), eO, eP);
    if (double* g = grad_of(w)) {
      MapMat(g, eO, eK).noalias() += dY * ConstMapMat(cols->data(), eK, eP).transpose();
    }
    if (b.defined()) {
      if (double* g = grad_of(b)) {
        for (std::size_t o = 0; o < O; ++o) {
          double acc = 0.0;
          for (std::size_t p = 0; p < P; ++p) acc += s.grad[o * P + p];
          g[o] += acc;
        }
      }
    }
    if (double* g = grad_of(x)) {
      RowMat dcols = ConstMapMat(w.value().data(), eO, eK).transpose() * dY;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
          for (std::size_t j = 0; j < kw; ++j) {
            const double* row = dcols.data() + ((c * kh + i) * kw + j) * P;
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) -
                                          static_cast<std::ptrdiff_t>(padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                g[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] +=
                    row[oy * Wo + ox];
              }
            }
          }
        }
      }
    }
  });
}

Tensor max_pool2d(const Tensor& x, std::size_t k) {
  require_rank("max_pool2d", x, 3);
  if (k == 0) throw ShapeError("max_pool2d: window must be positive");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Ho = H / k, Wo = W / k;
  if (Ho == 0 || Wo == 0) throw ShapeError("max_pool2d: input " + shape_str(x.shape()) +
                                           " smaller than window " + std::to_string(k));
  std::vector<double> v(C * Ho * Wo);
  std::vector<std::size_t> arg(v.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (c * H + oy * k) * W + ox * k;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = (c * H + oy * k + i) * W + ox * k + j;
            if (x.value()[idx] > x.value()[best]) best = idx;
          }
        }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        v[o] = x.value()[best];
        arg[o] = best;
      }
    }
  }
  return Tensor::from_op({C, Ho, Wo}, std::move(v), {x},
                         [x, arg = std::move(arg)](Node& s) {
    double* g = grad_of(x);
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += s.grad[o];
  });
}

Tensor global_mean_pool(const Tensor& x) {
  require_rank("global_mean_pool", x, 3);
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  std::vector<double> v(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < HW; ++i) v[c] += x.value()[c * HW + i];
    v[c] /= static_cast<double>(HW);
  }
  return Tensor::from_op({C}, std::move(v), {x}, [x, C, HW](Node& s) {
    double* g = grad_of(x);
    for (std::size_t c = 0; c < C; ++c) {
      const double d = s.grad[c] / static_cast<double>(HW);
      for (std::size_t i = 0; i < HW; ++i) g[c * HW + i] += d;
    }
  });
}

Tensor global_max_pool(const Tensor& x) {
  require_rank("global_max_pool", x, 3);
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  std::vector<double> v(C);
  std::vector<std::size_t> arg(C);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t best = c * HW;
    for (std::size_t i = 1; i < HW; ++i) {
      if (x.value()[c * HW + i] > x.value()[best]) best = c * HW + i;
    }
    v[c] = x.value()[best];
    arg[c] = best;
  }
  return Tensor::from_op({C}, std::move(v), {x}, [x, arg = std::move(arg)](Node& s) {
    double* g = grad_of(x);
    for (std::size_t c = 0; c < arg.size(); ++c) g[arg[c]] += s.grad[c];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank("mean_rows", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw ShapeError("mean_rows of an empty matrix");
  std::vector<double> v(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) v[c] += x.value()[r * d + c];
  }
  for (double& e : v) e /= static_cast<double>(n);
  return Tensor::from_op({d}, std::move(v), {x}, [x, n, d](Node& s) {
    double* g = grad_of(x);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += s.grad[c] / static_cast<double>(n);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto [n, d] = rows_cols(x, "layer_norm");
  if (gain.defined() && gain.shape() != Shape{d}) shape_error("layer_norm gain", x.shape(), gain.shape());
  if (bias.defined() && bias.shape() != Shape{d}) shape_error("layer_norm bias", x.shape(), bias.shape());
  std::vector<double> xhat(n * d), inv_std(n), v(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.value().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t i = r * d + c;
      xhat[i] = (row[c] - mu) * inv_std[r];
      v[i] = xhat[i] * (gain.defined() ? gain.value()[c] : 1.0) +
             (bias.defined() ? bias.value()[c] : 0.0);
    }
  }
  std::vector<Tensor> parents{x};
  if (gain.defined()) parents.push_back(gain);
  if (bias.defined()) parents.push_back(bias);
  return Tensor::from_op(x.shape(), std::move(v), std::move(parents),
                         [x, gain, bias, n, d, xhat = std::move(xhat),
                          inv_std = std::move(inv_std)](Node& s) {
    double* gx = grad_of(x);
    double* gg = gain.defined() ? grad_of(gain) : nullptr;
    double* gb = bias.defined() ? grad_of(bias) : nullptr;
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < n; ++r) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t i = r * d + c;
        if (gg) gg[c] += s.grad[i] * xhat[i];
        if (gb) gb[c] += s.grad[i];
        dxhat[c] = s.grad[i] * (gain.defined() ? gain.value()[c] : 1.0);
        m1 += dxhat[c];
        m2 += dxhat[c] * xhat[i];
      }
      if (!gx) continue;
      m1 /= static_cast<double>(d);
      m2 /= static_cast<double>(d);
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t i = r * d + c;
        gx[i] += inv_std[r] * (dxhat[c] - m1 - xhat[i] * m2);
      }
    }
  });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  const auto [n, d] = rows_cols(x, "l2_normalize");
  std::vector<double> v(x.value()), norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) s2 += v[r * d + c] * v[r * d + c];
    norms[r] = std::max(std::sqrt(s2), eps);
    for (std::size_t c = 0; c < d; ++c) v[r * d + c] /= norms[r];
  }
  return Tensor::from_op(x.shape(), std::move(v), {x},
                         [x, n, d, eps, norms = std::move(norms)](Node& s) {
    double* g = grad_of(x);
    for (std::size_t r = 0; r < n; ++r) {
      const double* y = s.value.data() + r * d;
      const double* dy = s.grad.data() + r * d;
      if (norms[r] <= eps) {
        for (std::size_t c = 0; c < d; ++c) g[r * d + c] += dy[c] / norms[r];
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += (dy[c] - y[c] * dot) / norms[r];
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank("log_softmax_rows", x, 2);
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> v(x.value());
  for (std::size_t r = 0; r < n; ++r) {
    double* row = v.data() + r * m;
    const double mx = *std::max_element(row, row + m);
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += std::exp(row[c] - mx);
    const double lse = mx + std::log(acc);
    for (std::size_t c = 0; c < m; ++c) row[c] -= lse;
  }
  return Tensor::from_op(x.shape(), std::move(v), {x}, [x, n, m](Node& s) {
    double* g = grad_of(x);
    for (std::size_t r = 0; r < n; ++r) {
      double tot = 0.0;
      for (std::size_t c = 0; c < m; ++c) tot += s.grad[r * m + c];
      for (std::size_t c = 0; c < m; ++c) {
        g[r * m + c] += s.grad[r * m + c] - std::exp(s.value[r * m + c]) * tot;
      }
    }
  });
}

Tensor gather(const Tensor& x, std::vector<std::size_t> indices) {
  std::vector<double> v(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) {
      throw ShapeError("gather index " + std::to_string(indices[i]) + " outside " +
                       shape_str(x.shape()));
    }
    v[i] = x.value()[indices[i]];
  }
  const std::size_t n = indices.size();
  return Tensor::from_op({n}, std::move(v), {x}, [x, idx = std::move(indices)](Node& s) {
    double* g = grad_of(x);
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += s.grad[i];
  });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<std::size_t>& targets) {
  require_rank("cross_entropy_rows", logits, 2);
  if (targets.size() != logits.dim(0)) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_str(logits.shape()));
  }
  std::vector<std::size_t> flat(targets.size());
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= logits.dim(1)) throw ShapeError("cross_entropy_rows: target out of range");
    flat[r] = r * logits.dim(1) + targets[r];
  }
  return scale(mean(gather(log_softmax_rows(logits), std::move(flat))), -1.0);
}

Tensor embedding_bag_mean(const Tensor& table, const std::vector<std::size_t>& ids) {
  require_rank("embedding_bag_mean", table, 2);
  if (ids.empty()) throw ShapeError("embedding_bag_mean of no ids");
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<double> v(d, 0.0);
  for (std::size_t id : ids) {
    if (id >= V) throw ShapeError("embedding id " + std::to_string(id) + " outside table " +
                                  shape_str(table.shape()));
    for (std::size_t c = 0; c < d; ++c) v[c] += table.value()[id * d + c];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (double& e : v) e *= inv;
  return Tensor::from_op({d}, std::move(v), {table}, [table, ids, d, inv](Node& s) {
    double* g = grad_of(table);
    for (std::size_t id : ids) {
      for (std::size_t c = 0; c < d; ++c) g[id * d + c] += s.grad[c] * inv;
    }
  });
}

double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                 const std::vector<Tensor>& inputs, double h) {
  auto leaves = [&](bool grad) {
    std::vector<Tensor> out;
    for (const auto& t : inputs) out.push_back(Tensor::leaf(t.shape(), t.value(), grad));
    return out;
  };
  std::vector<double> proj;
  auto loss = [&](const std::vector<Tensor>& in) {
    Tensor y = f(in);
    if (y.size() == 1) return y;
    if (proj.size() != y.size()) {
      Rng rng(0x9e11, 7);
      proj.resize(y.size());
      for (double& p : proj) p = rng.uniform(-1.0, 1.0);
    }
    return sum(mul(y, Tensor::constant(y.shape(), proj)));
  };

  const auto analytic_in = leaves(true);
  loss(analytic_in).backward();
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& ga = analytic_in[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = leaves(false);
      auto minus = leaves(false);
      plus[k].mutable_value()[i] += h;
      minus[k].mutable_value()[i] -= h;
      const double numeric = (loss(plus).item() - loss(minus).item()) / (2.0 * h);
      const double a = ga.empty() ? 0.0 : ga[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace elsa::nn
