#pragma once

// Reverse-mode tape over dense tensors. Exactly the operators the three
// models need, nothing more: no broadcasting beyond what each op defines,
// no higher-order gradients, single-threaded per tape.
//
// Templated on the scalar type: float for training, double for the
// finite-difference test suites.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cycnpf/detail/fft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::ad {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> val;
  std::vector<T> grad;  // allocated lazily by backward
  bool requires_grad = false;
  std::string name;

  std::vector<std::shared_ptr<Tensor<T>>> parents;
  std::function<void(Tensor<T>&)> backward_fn;

  std::size_t numel() const { return val.size(); }
  bool is_leaf() const { return parents.empty(); }

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), T(0));
  }
  void zero_grad() { grad.assign(val.size(), T(0)); }

  T scalar() const {
    if (val.size() != 1) throw ShapeError("tensor is not a scalar");
    return val[0];
  }
};

template <typename T>
using Var = std::shared_ptr<Tensor<T>>;

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

template <typename T>
void check_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
}

}  // namespace detail

template <typename T>
Var<T> make_tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>();
  const std::size_t n = detail::shape_numel<T>(shape);
  if (data.empty()) data.assign(n, T(0));
  if (data.size() != n) throw ShapeError("tensor data does not match shape");
  t->shape = std::move(shape);
  t->val = std::move(data);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
Var<T> constant(std::vector<int> shape, std::vector<T> data = {}) {
  return make_tensor<T>(std::move(shape), std::move(data), false);
}

template <typename T>
Var<T> scalar_const(T v) {
  return make_tensor<T>({1}, {v}, false);
}

// Copy of x cut out of the tape; gradients do not flow past it.
template <typename T>
Var<T> detach(const Var<T>& x) {
  return make_tensor<T>(x->shape, x->val, false);
}

template <typename T>
Var<T> make_node(std::vector<int> shape, std::vector<Var<T>> parents) {
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->val.assign(detail::shape_numel<T>(t->shape), T(0));
  for (const auto& p : parents) t->requires_grad = t->requires_grad || p->requires_grad;
  t->parents = std::move(parents);
  return t;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Accumulates gradients of a scalar loss into every reachable requires_grad
// leaf. Interior gradients are zeroed per call; leaf gradients accumulate
// (callers zero them between steps). Topological order follows parent
// insertion order, so replays are bit-identical.
template <typename T>
void backward_from(const Var<T>& loss) {
  if (loss->numel() != 1) throw ShapeError("backward requires a scalar loss");

  std::vector<Tensor<T>*> topo;
  std::map<Tensor<T>*, int> state;  // 0 unseen, 1 in progress, 2 done
  std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  state[loss.get()] = 1;
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Tensor<T>* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && state[p] == 0) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      state[node] = 2;
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (Tensor<T>* n : topo) {
    n->ensure_grad();
    if (!n->is_leaf()) n->zero_grad();
  }
  loss->grad[0] += T(1);

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Tensor<T>* n = *it;
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// parameter registry
// ---------------------------------------------------------------------------

template <typename T>
class Graph {
 public:
  Var<T> param(const std::string& name, std::vector<int> shape, std::vector<T> data) {
    if (params_.count(name)) throw ShapeError("duplicate parameter name: " + name);
    auto t = make_tensor<T>(std::move(shape), std::move(data), true);
    t->name = name;
    params_[name] = t;
    return t;
  }

  Var<T> get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
  }

  const std::map<std::string, Var<T>>& params() const { return params_; }

  void zero_grad() {
    for (auto& [name, p] : params_) {
      p->ensure_grad();
      p->zero_grad();
    }
  }

  // Gradients of loss w.r.t. every registered parameter; parameters the loss
  // does not reach are left at zero.
  void backward(const Var<T>& loss) {
    zero_grad();
    backward_from(loss);
  }

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p->numel();
    return n;
  }

 private:
  std::map<std::string, Var<T>> params_;
};

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("add", a, b);
  auto out = make_node<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] + b->val[i];
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) {
      a.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) b.grad[i] += self.grad[i];
    }
  };
  return out;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("sub", a, b);
  auto out = make_node<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] - b->val[i];
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) {
      a.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) b.grad[i] -= self.grad[i];
    }
  };
  return out;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("mul", a, b);
  auto out = make_node<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] * b->val[i];
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) {
      a.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i] * b.val[i];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) b.grad[i] += self.grad[i] * a.val[i];
    }
  };
  return out;
}

template <typename T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("divide", a, b);
  auto out = make_node<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] / b->val[i];
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) {
      a.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i] / b.val[i];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < self.numel(); ++i)
        b.grad[i] -= self.grad[i] * a.val[i] / (b.val[i] * b.val[i]);
    }
  };
  return out;
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] * c;
  out->backward_fn = [c](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i] * c;
  };
  return out;
}

template <typename T>
Var<T> add_const(const Var<T>& a, T c) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] + c;
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i];
  };
  return out;
}

template <typename T>
Var<T> square(const Var<T>& a) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] * a->val[i];
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i) a.grad[i] += self.grad[i] * T(2) * a.val[i];
  };
  return out;
}

template <typename T>
Var<T> sqrt_op(const Var<T>& a) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = std::sqrt(a->val[i]);
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i)
      a.grad[i] += self.grad[i] * T(0.5) / std::max(self.val[i], T(1e-12));
  };
  return out;
}

// ln(max(a, floor)); clamped entries get zero gradient.
template <typename T>
Var<T> log_floored(const Var<T>& a, T floor) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = std::log(std::max(a->val[i], floor));
  out->backward_fn = [floor](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i)
      if (a.val[i] > floor) a.grad[i] += self.grad[i] / a.val[i];
  };
  return out;
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = std::tanh(a->val[i]);
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i)
      a.grad[i] += self.grad[i] * (T(1) - self.val[i] * self.val[i]);
  };
  return out;
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = T(1) / (T(1) + std::exp(-a->val[i]));
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i)
      a.grad[i] += self.grad[i] * self.val[i] * (T(1) - self.val[i]);
  };
  return out;
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] > T(0) ? a->val[i] : T(0);
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i)
      if (a.val[i] > T(0)) a.grad[i] += self.grad[i];
  };
  return out;
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2)) {
  auto out = make_node<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i)
    out->val[i] = a->val[i] > T(0) ? a->val[i] : slope * a->val[i];
  out->backward_fn = [slope](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < self.numel(); ++i)
      a.grad[i] += self.grad[i] * (a.val[i] > T(0) ? T(1) : slope);
  };
  return out;
}

// Halves of the channel axis gated against each other:
// out = tanh(x[:, :C]) * sigmoid(x[:, C:]) for x of shape [T x 2C].
template <typename T>
Var<T> gated_activation(const Var<T>& x) {
  if (x->shape.size() != 2 || x->shape[1] % 2 != 0)
    throw ShapeError("gated_activation needs [T x 2C], got " + detail::shape_str(x->shape));
  const int rows = x->shape[0];
  const int half = x->shape[1] / 2;
  auto out = make_node<T>({rows, half}, {x});
  auto gates = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows) * 2 * half);
  for (int t = 0; t < rows; ++t) {
    const T* in = &x->val[static_cast<std::size_t>(t) * 2 * half];
    T* o = &out->val[static_cast<std::size_t>(t) * half];
    T* gt = &(*gates)[static_cast<std::size_t>(t) * 2 * half];
    for (int c = 0; c < half; ++c) {
      const T th = std::tanh(in[c]);
      const T sg = T(1) / (T(1) + std::exp(-in[half + c]));
      gt[c] = th;
      gt[half + c] = sg;
      o[c] = th * sg;
    }
  }
  out->backward_fn = [rows, half, gates](Tensor<T>& self) {
    auto& x = *self.parents[0];
    x.ensure_grad();
    for (int t = 0; t < rows; ++t) {
      T* gin = &x.grad[static_cast<std::size_t>(t) * 2 * half];
      const T* g = &self.grad[static_cast<std::size_t>(t) * half];
      const T* gt = &(*gates)[static_cast<std::size_t>(t) * 2 * half];
      for (int c = 0; c < half; ++c) {
        const T th = gt[c];
        const T sg = gt[half + c];
        gin[c] += g[c] * sg * (T(1) - th * th);
        gin[half + c] += g[c] * th * sg * (T(1) - sg);
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& a) {
  auto out = make_node<T>({1}, {a});
  T acc = T(0);
  for (std::size_t i = 0; i < a->numel(); ++i) acc += a->val[i];
  out->val[0] = acc;
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < a.numel(); ++i) a.grad[i] += self.grad[0];
  };
  return out;
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  auto out = make_node<T>({1}, {a});
  T acc = T(0);
  for (std::size_t i = 0; i < a->numel(); ++i) acc += a->val[i];
  const T inv = T(1) / static_cast<T>(a->numel());
  out->val[0] = acc * inv;
  out->backward_fn = [inv](Tensor<T>& self) {
    auto& a = *self.parents[0];
    a.ensure_grad();
    for (std::size_t i = 0; i < a.numel(); ++i) a.grad[i] += self.grad[0] * inv;
  };
  return out;
}

// Mean absolute error over all elements. Subgradient at zero is zero.
template <typename T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("l1_loss", a, b);
  auto out = make_node<T>({1}, {a, b});
  T acc = T(0);
  for (std::size_t i = 0; i < a->numel(); ++i) acc += std::abs(a->val[i] - b->val[i]);
  const T inv = T(1) / static_cast<T>(a->numel());
  out->val[0] = acc * inv;
  out->backward_fn = [inv](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const T d = a.val[i] - b.val[i];
      const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      const T g = self.grad[0] * inv * s;
      if (a.requires_grad) {
        a.ensure_grad();
        a.grad[i] += g;
      }
      if (b.requires_grad) {
        b.ensure_grad();
        b.grad[i] -= g;
      }
    }
  };
  return out;
}

// Sum of squared errors (no mean).
template <typename T>
Var<T> l2_loss(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("l2_loss", a, b);
  auto out = make_node<T>({1}, {a, b});
  T acc = T(0);
  for (std::size_t i = 0; i < a->numel(); ++i) {
    const T d = a->val[i] - b->val[i];
    acc += d * d;
  }
  out->val[0] = acc;
  out->backward_fn = [](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const T g = self.grad[0] * T(2) * (a.val[i] - b.val[i]);
      if (a.requires_grad) {
        a.ensure_grad();
        a.grad[i] += g;
      }
      if (b.requires_grad) {
        b.ensure_grad();
        b.grad[i] -= g;
      }
    }
  };
  return out;
}

// Mean over rows of -log softmax(logits)[target]. logits [T x C].
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::vector<int> targets) {
  if (logits->shape.size() != 2)
    throw ShapeError("softmax_cross_entropy expects [T x C] logits, got " +
                     detail::shape_str(logits->shape));
  const int rows = logits->shape[0];
  const int cols = logits->shape[1];
  if (static_cast<int>(targets.size()) != rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(rows) + " rows");

  auto out = make_node<T>({1}, {logits});
  auto probs = std::make_shared<std::vector<T>>(logits->val.size());
  T acc = T(0);
  for (int t = 0; t < rows; ++t) {
    const T* row = &logits->val[static_cast<std::size_t>(t) * cols];
    T* p = &(*probs)[static_cast<std::size_t>(t) * cols];
    T mx = row[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T z = T(0);
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(row[c] - mx);
      z += p[c];
    }
    const T inv_z = T(1) / z;
    for (int c = 0; c < cols; ++c) p[c] *= inv_z;
    acc -= std::log(std::max(p[targets[static_cast<std::size_t>(t)]], T(1e-30)));
  }
  out->val[0] = acc / static_cast<T>(rows);
  out->backward_fn = [rows, cols, probs, targets = std::move(targets)](Tensor<T>& self) {
    auto& logits = *self.parents[0];
    logits.ensure_grad();
    const T g = self.grad[0] / static_cast<T>(rows);
    for (int t = 0; t < rows; ++t) {
      const T* p = &(*probs)[static_cast<std::size_t>(t) * cols];
      T* gl = &logits.grad[static_cast<std::size_t>(t) * cols];
      for (int c = 0; c < cols; ++c) gl[c] += g * p[c];
      gl[targets[static_cast<std::size_t>(t)]] -= g;
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat_vec(const Var<T>& a, const Var<T>& b) {
  if (a->shape.size() != 1 || b->shape.size() != 1)
    throw ShapeError("concat_vec expects two vectors, got " + detail::shape_str(a->shape) +
                     " and " + detail::shape_str(b->shape));
  auto out = make_node<T>({a->shape[0] + b->shape[0]}, {a, b});
  std::copy(a->val.begin(), a->val.end(), out->val.begin());
  std::copy(b->val.begin(), b->val.end(), out->val.begin() + a->shape[0]);
  const int na = a->shape[0];
  out->backward_fn = [na](Tensor<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) {
      a.ensure_grad();
      for (int i = 0; i < na; ++i) a.grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < b.numel(); ++i) b.grad[i] += self.grad[static_cast<std::size_t>(na) + i];
    }
  };
  return out;
}

// Row t of a [T x C] matrix as a [C] vector.
template <typename T>
Var<T> row(const Var<T>& x, int t) {
  if (x->shape.size() != 2) throw ShapeError("row expects a matrix, got " + detail::shape_str(x->shape));
  const int cols = x->shape[1];
  if (t < 0 || t >= x->shape[0]) throw ShapeError("row index out of range");
  auto out = make_node<T>({cols}, {x});
  std::copy(x->val.begin() + static_cast<std::size_t>(t) * cols,
            x->val.begin() + static_cast<std::size_t>(t + 1) * cols, out->val.begin());
  out->backward_fn = [t, cols](Tensor<T>& self) {
    auto& x = *self.parents[0];
    x.ensure_grad();
    for (int c = 0; c < cols; ++c)
      x.grad[static_cast<std::size_t>(t) * cols + c] += self.grad[static_cast<std::size_t>(c)];
  };
  return out;
}

// Stack T equal-length vectors into a [T x C] matrix.
template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty row list");
  const int cols = rows[0]->shape.size() == 1 ? rows[0]->shape[0] : -1;
  if (cols < 0) throw ShapeError("stack_rows expects vectors");
  auto out = make_node<T>({static_cast<int>(rows.size()), cols}, rows);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t]->shape != rows[0]->shape)
      throw ShapeError("stack_rows: inconsistent row shapes");
    std::copy(rows[t]->val.begin(), rows[t]->val.end(), out->val.begin() + t * cols);
  }
  out->backward_fn = [cols](Tensor<T>& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      auto& r = *self.parents[t];
      if (!r.requires_grad) continue;
      r.ensure_grad();
      for (int c = 0; c < cols; ++c)
        r.grad[static_cast<std::size_t>(c)] += self.grad[t * cols + c];
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// linear / conv / embedding / gru
// ---------------------------------------------------------------------------

// y = x W + b with x [T x I] (or [I]), W [I x O], b [O].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const bool vec = x->shape.size() == 1;
  const int rows = vec ? 1 : x->shape[0];
  const int in = vec ? x->shape[0] : x->shape[1];
  if (w->shape.size() != 2 || w->shape[0] != in)
    throw ShapeError("linear: x " + detail::shape_str(x->shape) + " incompatible with W " +
                     detail::shape_str(w->shape));
  const int out_dim = w->shape[1];
  if (b->shape.size() != 1 || b->shape[0] != out_dim)
    throw ShapeError("linear: bias " + detail::shape_str(b->shape) + " does not match W " +
                     detail::shape_str(w->shape));

  auto out = make_node<T>(vec ? std::vector<int>{out_dim} : std::vector<int>{rows, out_dim},
                          {x, w, b});
  for (int t = 0; t < rows; ++t) {
    const T* xr = &x->val[static_cast<std::size_t>(t) * in];
    T* yr = &out->val[static_cast<std::size_t>(t) * out_dim];
    for (int o = 0; o < out_dim; ++o) yr[o] = b->val[static_cast<std::size_t>(o)];
    for (int i = 0; i < in; ++i) {
      const T xv = xr[i];
      const T* wr = &w->val[static_cast<std::size_t>(i) * out_dim];
      for (int o = 0; o < out_dim; ++o) yr[o] += xv * wr[o];
    }
  }
  out->backward_fn = [rows, in, out_dim](Tensor<T>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    auto& b = *self.parents[2];
    if (x.requires_grad) x.ensure_grad();
    if (w.requires_grad) w.ensure_grad();
    if (b.requires_grad) b.ensure_grad();
    for (int t = 0; t < rows; ++t) {
      const T* gy = &self.grad[static_cast<std::size_t>(t) * out_dim];
      const T* xr = &x.val[static_cast<std::size_t>(t) * in];
      if (b.requires_grad)
        for (int o = 0; o < out_dim; ++o) b.grad[static_cast<std::size_t>(o)] += gy[o];
      for (int i = 0; i < in; ++i) {
        const T* wr = &w.val[static_cast<std::size_t>(i) * out_dim];
        if (x.requires_grad) {
          T acc = T(0);
          for (int o = 0; o < out_dim; ++o) acc += wr[o] * gy[o];
          x.grad[static_cast<std::size_t>(t) * in + i] += acc;
        }
        if (w.requires_grad) {
          T* gw = &w.grad[static_cast<std::size_t>(i) * out_dim];
          const T xv = xr[i];
          for (int o = 0; o < out_dim; ++o) gw[o] += xv * gy[o];
        }
      }
    }
  };
  return out;
}

// 1-D convolution over time. x [T x I], W [k x I x O], b [O].
// causal=true pads on the left only, so y[t] sees x[t], x[t-d], ...;
// causal=false needs odd k and pads symmetrically ("same" output length).
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int dilation, bool causal) {
  if (x->shape.size() != 2 || w->shape.size() != 3)
    throw ShapeError("conv1d: x " + detail::shape_str(x->shape) + ", W " +
                     detail::shape_str(w->shape));
  const int rows = x->shape[0];
  const int in = x->shape[1];
  const int k = w->shape[0];
  if (w->shape[1] != in)
    throw ShapeError("conv1d: W " + detail::shape_str(w->shape) + " does not match input " +
                     detail::shape_str(x->shape));
  const int out_dim = w->shape[2];
  if (b->shape.size() != 1 || b->shape[0] != out_dim)
    throw ShapeError("conv1d: bias " + detail::shape_str(b->shape) + " does not match W " +
                     detail::shape_str(w->shape));
  if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
  if (!causal && k % 2 == 0) throw ShapeError("conv1d: non-causal convolution needs odd kernel");

  const int base = causal ? -(k - 1) * dilation : -((k - 1) / 2) * dilation;
  auto out = make_node<T>({rows, out_dim}, {x, w, b});
  for (int t = 0; t < rows; ++t) {
    T* yr = &out->val[static_cast<std::size_t>(t) * out_dim];
    for (int o = 0; o < out_dim; ++o) yr[o] = b->val[static_cast<std::size_t>(o)];
    for (int tap = 0; tap < k; ++tap) {
      const int src = t + base + tap * dilation;
      if (src < 0 || src >= rows) continue;  // zero padding
      const T* xr = &x->val[static_cast<std::size_t>(src) * in];
      const T* wt = &w->val[static_cast<std::size_t>(tap) * in * out_dim];
      for (int i = 0; i < in; ++i) {
        const T xv = xr[i];
        const T* wr = &wt[static_cast<std::size_t>(i) * out_dim];
        for (int o = 0; o < out_dim; ++o) yr[o] += xv * wr[o];
      }
    }
  }
  out->backward_fn = [rows, in, k, out_dim, dilation, base](Tensor<T>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    auto& b = *self.parents[2];
    if (x.requires_grad) x.ensure_grad();
    if (w.requires_grad) w.ensure_grad();
    if (b.requires_grad) b.ensure_grad();
    for (int t = 0; t < rows; ++t) {
      const T* gy = &self.grad[static_cast<std::size_t>(t) * out_dim];
      if (b.requires_grad)
        for (int o = 0; o < out_dim; ++o) b.grad[static_cast<std::size_t>(o)] += gy[o];
      for (int tap = 0; tap < k; ++tap) {
        const int src = t + base + tap * dilation;
        if (src < 0 || src >= rows) continue;
        const T* xr = &x.val[static_cast<std::size_t>(src) * in];
        const T* wt = &w.val[static_cast<std::size_t>(tap) * in * out_dim];
        for (int i = 0; i < in; ++i) {
          if (x.requires_grad) {
            const T* wr = &wt[static_cast<std::size_t>(i) * out_dim];
            T acc = T(0);
            for (int o = 0; o < out_dim; ++o) acc += wr[o] * gy[o];
            x.grad[static_cast<std::size_t>(src) * in + i] += acc;
          }
          if (w.requires_grad) {
            T* gw = &w.grad[(static_cast<std::size_t>(tap) * in + i) * out_dim];
            const T xv = xr[i];
            for (int o = 0; o < out_dim; ++o) gw[o] += xv * gy[o];
          }
        }
      }
    }
  };
  return out;
}

// Table lookup, table [V x C], ids in [0, V). One-hot linear layer in effect.
template <typename T>
Var<T> embedding(const Var<T>& table, std::vector<int> ids) {
  if (table->shape.size() != 2)
    throw ShapeError("embedding table must be [V x C], got " + detail::shape_str(table->shape));
  const int vocab = table->shape[0];
  const int dim = table->shape[1];
  const int rows = static_cast<int>(ids.size());
  for (int id : ids)
    if (id < 0 || id >= vocab) throw ShapeError("embedding id out of range");
  auto out = make_node<T>({rows, dim}, {table});
  for (int t = 0; t < rows; ++t)
    std::copy(table->val.begin() + static_cast<std::size_t>(ids[static_cast<std::size_t>(t)]) * dim,
              table->val.begin() + static_cast<std::size_t>(ids[static_cast<std::size_t>(t)] + 1) * dim,
              out->val.begin() + static_cast<std::size_t>(t) * dim);
  out->backward_fn = [dim, ids = std::move(ids)](Tensor<T>& self) {
    auto& table = *self.parents[0];
    table.ensure_grad();
    for (std::size_t t = 0; t < ids.size(); ++t) {
      T* gt = &table.grad[static_cast<std::size_t>(ids[t]) * dim];
      const T* g = &self.grad[t * dim];
      for (int c = 0; c < dim; ++c) gt[c] += g[c];
    }
  };
  return out;
}

// One GRU step. x [I], h [H], wx [I x 3H], wh [H x 3H], b [3H].
// Gate layout along the 3H axis: update z, reset r, candidate n.
//   z = sigmoid(x Wx_z + h Wh_z + b_z)
//   r = sigmoid(x Wx_r + h Wh_r + b_r)
//   n = tanh(x Wx_n + b_n + r * (h Wh_n))
//   h' = (1 - z) * n + z * h
template <typename T>
Var<T> gru_cell(const Var<T>& x, const Var<T>& h, const Var<T>& wx, const Var<T>& wh,
                const Var<T>& b) {
  if (x->shape.size() != 1 || h->shape.size() != 1)
    throw ShapeError("gru_cell expects vector x and h");
  const int in = x->shape[0];
  const int hidden = h->shape[0];
  if (wx->shape != std::vector<int>{in, 3 * hidden})
    throw ShapeError("gru_cell: Wx " + detail::shape_str(wx->shape) + " does not match x " +
                     detail::shape_str(x->shape));
  if (wh->shape != std::vector<int>{hidden, 3 * hidden})
    throw ShapeError("gru_cell: Wh " + detail::shape_str(wh->shape) + " does not match h " +
                     detail::shape_str(h->shape));
  if (b->shape != std::vector<int>{3 * hidden})
    throw ShapeError("gru_cell: bias " + detail::shape_str(b->shape));

  auto out = make_node<T>({hidden}, {x, h, wx, wh, b});
  auto saved = std::make_shared<std::vector<T>>(static_cast<std::size_t>(4) * hidden);
  T* z = saved->data();
  T* r = z + hidden;
  T* n = r + hidden;
  T* q = n + hidden;  // h Wh_n before the reset gate

  std::vector<T> pre(static_cast<std::size_t>(3) * hidden);
  for (int j = 0; j < 3 * hidden; ++j) pre[static_cast<std::size_t>(j)] = b->val[static_cast<std::size_t>(j)];
  for (int i = 0; i < in; ++i) {
    const T xv = x->val[static_cast<std::size_t>(i)];
    const T* wr = &wx->val[static_cast<std::size_t>(i) * 3 * hidden];
    for (int j = 0; j < 3 * hidden; ++j) pre[static_cast<std::size_t>(j)] += xv * wr[j];
  }
  std::fill(q, q + hidden, T(0));
  for (int i = 0; i < hidden; ++i) {
    const T hv = h->val[static_cast<std::size_t>(i)];
    const T* wr = &wh->val[static_cast<std::size_t>(i) * 3 * hidden];
    for (int j = 0; j < 2 * hidden; ++j) pre[static_cast<std::size_t>(j)] += hv * wr[j];
    for (int j = 0; j < hidden; ++j) q[j] += hv * wr[2 * hidden + j];
  }
  for (int j = 0; j < hidden; ++j) {
    z[j] = T(1) / (T(1) + std::exp(-pre[static_cast<std::size_t>(j)]));
    r[j] = T(1) / (T(1) + std::exp(-pre[static_cast<std::size_t>(hidden + j)]));
    n[j] = std::tanh(pre[static_cast<std::size_t>(2 * hidden + j)] + r[j] * q[j]);
    out->val[static_cast<std::size_t>(j)] = (T(1) - z[j]) * n[j] + z[j] * h->val[static_cast<std::size_t>(j)];
  }

  out->backward_fn = [in, hidden, saved](Tensor<T>& self) {
    auto& x = *self.parents[0];
    auto& h = *self.parents[1];
    auto& wx = *self.parents[2];
    auto& wh = *self.parents[3];
    auto& b = *self.parents[4];
    const T* z = saved->data();
    const T* r = z + hidden;
    const T* n = r + hidden;
    const T* q = n + hidden;

    std::vector<T> dpre(static_cast<std::size_t>(3) * hidden);
    std::vector<T> dq(static_cast<std::size_t>(hidden));
    std::vector<T> dh_direct(static_cast<std::size_t>(hidden));
    for (int j = 0; j < hidden; ++j) {
      const T g = self.grad[static_cast<std::size_t>(j)];
      const T dz = g * (h.val[static_cast<std::size_t>(j)] - n[j]);
      const T dn = g * (T(1) - z[j]);
      dh_direct[static_cast<std::size_t>(j)] = g * z[j];
      const T dpre_n = dn * (T(1) - n[j] * n[j]);
      const T dr = dpre_n * q[j];
      dq[static_cast<std::size_t>(j)] = dpre_n * r[j];
      dpre[static_cast<std::size_t>(j)] = dz * z[j] * (T(1) - z[j]);
      dpre[static_cast<std::size_t>(hidden + j)] = dr * r[j] * (T(1) - r[j]);
      dpre[static_cast<std::size_t>(2 * hidden + j)] = dpre_n;
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (int j = 0; j < 3 * hidden; ++j) b.grad[static_cast<std::size_t>(j)] += dpre[static_cast<std::size_t>(j)];
    }
    if (x.requires_grad || wx.requires_grad) {
      if (x.requires_grad) x.ensure_grad();
      if (wx.requires_grad) wx.ensure_grad();
      for (int i = 0; i < in; ++i) {
        const T* wr = &wx.val[static_cast<std::size_t>(i) * 3 * hidden];
        if (x.requires_grad) {
          T acc = T(0);
          for (int j = 0; j < 3 * hidden; ++j) acc += wr[j] * dpre[static_cast<std::size_t>(j)];
          x.grad[static_cast<std::size_t>(i)] += acc;
        }
        if (wx.requires_grad) {
          T* gw = &wx.grad[static_cast<std::size_t>(i) * 3 * hidden];
          const T xv = x.val[static_cast<std::size_t>(i)];
          for (int j = 0; j < 3 * hidden; ++j) gw[j] += xv * dpre[static_cast<std::size_t>(j)];
        }
      }
    }
    if (h.requires_grad || wh.requires_grad) {
      if (h.requires_grad) h.ensure_grad();
      if (wh.requires_grad) wh.ensure_grad();
      for (int i = 0; i < hidden; ++i) {
        const T* wr = &wh.val[static_cast<std::size_t>(i) * 3 * hidden];
        if (h.requires_grad) {
          T acc = dh_direct[static_cast<std::size_t>(i)];
          for (int j = 0; j < 2 * hidden; ++j) acc += wr[j] * dpre[static_cast<std::size_t>(j)];
          for (int j = 0; j < hidden; ++j) acc += wr[2 * hidden + j] * dq[static_cast<std::size_t>(j)];
          h.grad[static_cast<std::size_t>(i)] += acc;
        }
        if (wh.requires_grad) {
          T* gw = &wh.grad[static_cast<std::size_t>(i) * 3 * hidden];
          const T hv = h.val[static_cast<std::size_t>(i)];
          for (int j = 0; j < 2 * hidden; ++j) gw[j] += hv * dpre[static_cast<std::size_t>(j)];
          for (int j = 0; j < hidden; ++j) gw[2 * hidden + j] += hv * dq[static_cast<std::size_t>(j)];
        }
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// differentiable STFT magnitude
// ---------------------------------------------------------------------------

// Same framing contract as dsp::stft_magnitude: reflect pad win/2, periodic
// Hann, |rFFT| bins 0..fft/2. x is a [N] sample vector.
template <typename T>
Var<T> stft_mag(const Var<T>& x, int fft_size, int hop_size, int win_size) {
  if (x->shape.size() != 1) throw ShapeError("stft_mag expects a sample vector");
  if (!(fft_size >= win_size && win_size >= hop_size && hop_size >= 1))
    throw ShapeError("stft_mag requires fft >= win >= hop >= 1");
  if (fft_size & (fft_size - 1)) throw ShapeError("stft_mag: fft_size must be a power of two");

  const int n = x->shape[0];
  const int pad = win_size / 2;
  if (n < pad + 1) throw ShapeError("stft_mag: signal too short for one centered frame");
  const int padded_len = n + 2 * pad;
  const int frames = (padded_len - win_size) / hop_size + 1;
  const int bins = fft_size / 2 + 1;

  std::vector<T> window(static_cast<std::size_t>(win_size));
  for (int i = 0; i < win_size; ++i)
    window[static_cast<std::size_t>(i)] =
        static_cast<T>(0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * i / win_size)));

  auto spectra = std::make_shared<std::vector<std::complex<T>>>(
      static_cast<std::size_t>(frames) * bins);

  auto out = make_node<T>({frames, bins}, {x});
  std::vector<std::complex<T>> buf(static_cast<std::size_t>(fft_size));
  auto padded_at = [&](int i) -> T {
    int src = i - pad;
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    return x->val[static_cast<std::size_t>(src)];
  };
  for (int f = 0; f < frames; ++f) {
    const int start = f * hop_size;
    for (int i = 0; i < win_size; ++i)
      buf[static_cast<std::size_t>(i)] = padded_at(start + i) * window[static_cast<std::size_t>(i)];
    for (int i = win_size; i < fft_size; ++i) buf[static_cast<std::size_t>(i)] = std::complex<T>(0, 0);
    cycnpf::detail::fft_radix2(buf, false);
    for (int bb = 0; bb < bins; ++bb) {
      (*spectra)[static_cast<std::size_t>(f) * bins + bb] = buf[static_cast<std::size_t>(bb)];
      out->val[static_cast<std::size_t>(f) * bins + bb] = std::abs(buf[static_cast<std::size_t>(bb)]);
    }
  }

  out->backward_fn = [n, pad, frames, bins, fft_size, hop_size, win_size, window,
                      spectra](Tensor<T>& self) {
    auto& x = *self.parents[0];
    x.ensure_grad();
    std::vector<std::complex<T>> buf(static_cast<std::size_t>(fft_size));
    std::vector<T> dpadded(static_cast<std::size_t>(n + 2 * pad), T(0));
    for (int f = 0; f < frames; ++f) {
      std::fill(buf.begin(), buf.end(), std::complex<T>(0, 0));
      bool any = false;
      for (int bb = 0; bb < bins; ++bb) {
        const T gmag = self.grad[static_cast<std::size_t>(f) * bins + bb];
        if (gmag == T(0)) continue;
        any = true;
        const std::complex<T> s = (*spectra)[static_cast<std::size_t>(f) * bins + bb];
        const T mag = std::max(std::abs(s), T(1e-12));
        buf[static_cast<std::size_t>(bb)] = std::complex<T>(gmag * s.real() / mag, gmag * s.imag() / mag);
      }
      if (!any) continue;
      // dL/dframe = Re(unnormalized inverse FFT of the one-sided bin grads)
      cycnpf::detail::fft_radix2(buf, true);
      const int start = f * hop_size;
      for (int i = 0; i < win_size; ++i)
        dpadded[static_cast<std::size_t>(start + i)] +=
            buf[static_cast<std::size_t>(i)].real() * window[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < n + 2 * pad; ++i) {
      int src = i - pad;
      if (src < 0) src = -src;
      if (src >= n) src = 2 * (n - 1) - src;
      x.grad[static_cast<std::size_t>(src)] += dpadded[static_cast<std::size_t>(i)];
    }
  };
  return out;
}

}  // namespace cycnpf::ad
