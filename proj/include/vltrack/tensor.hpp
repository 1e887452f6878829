#pragma once

// Dense double-precision tensors with reverse-mode differentiation.
// The tape is a DAG of shared nodes rebuilt on every forward pass; tensors
// are immutable once they participate in a tape, and gradients accumulate
// only inside a single-threaded backward().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace vltrack {

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Thread-local switch: when off, ops do not record tape nodes (inference).
inline bool& grad_enabled() {
  thread_local bool on = true;
  return on;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated lazily, same length as data
  // Tape linkage; empty for leaves.
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

constexpr long kParallelThreshold = 16384;  // elements; below this, stay serial

inline void check_finite(const std::vector<double>& v, const char* op) {
  const long n = static_cast<long>(v.size());
  bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok) if (n > kParallelThreshold)
  for (long i = 0; i < n; ++i) ok = ok && std::isfinite(v[static_cast<size_t>(i)]);
  if (!ok) throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

}  // namespace detail

class Tensor {
 public:
  std::shared_ptr<detail::TensorImpl> impl;

  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    check(shape_numel(shape) == static_cast<long>(data.size()),
          "tensor: shape " + shape_str(shape) + " does not match data length");
    detail::check_finite(data, "tensor construction");
    Tensor t;
    t.impl = std::make_shared<detail::TensorImpl>();
    t.impl->shape = std::move(shape);
    t.impl->data = std::move(data);
    t.impl->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape), value);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> d(shape_numel(shape));
    for (double& x : d) x = dist(rng);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi,
                        bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> d(shape_numel(shape));
    for (double& x : d) x = dist(rng);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const { return impl->shape; }
  long numel() const { return static_cast<long>(impl->data.size()); }
  long ndim() const { return static_cast<long>(impl->shape.size()); }
  long rows() const {
    check(ndim() == 2, "rows(): tensor is not 2-d");
    return impl->shape[0];
  }
  long cols() const {
    check(ndim() == 2, "cols(): tensor is not 2-d");
    return impl->shape[1];
  }

  const std::vector<double>& values() const { return impl->data; }
  // Mutable access is for leaves only (parameter updates between tapes).
  std::vector<double>& raw() {
    check(impl->parents.empty(), "raw(): in-place mutation of a tape node");
    return impl->data;
  }

  double operator[](long i) const { return impl->data[static_cast<size_t>(i)]; }
  double operator()(long i, long j) const {
    return impl->data[static_cast<size_t>(i * impl->shape[1] + j)];
  }
  double item() const {
    check(numel() == 1, "item(): tensor is not scalar");
    return impl->data[0];
  }

  bool requires_grad() const { return impl && impl->requires_grad; }
  bool has_grad() const { return impl && impl->grad.size() == impl->data.size(); }
  const std::vector<double>& grad() const {
    check(has_grad(), "grad(): no gradient recorded");
    return impl->grad;
  }
  double grad_at(long i) const { return grad()[static_cast<size_t>(i)]; }

  void zero_grad() {
    if (impl) impl->grad.clear();
  }

  Tensor detach() const {
    Tensor t;
    t.impl = std::make_shared<detail::TensorImpl>();
    t.impl->shape = impl->shape;
    t.impl->data = impl->data;
    t.impl->requires_grad = false;
    return t;
  }

  // Reverse pass from a scalar root. Single-threaded; deterministic order.
  void backward() const {
    check(defined() && numel() == 1, "backward(): root must be a scalar");
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    struct Frame {
      detail::TensorImpl* node;
      size_t next;
    };
    std::vector<Frame> stack{{impl.get(), 0}};
    seen.insert(impl.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.node->parents.size()) {
        detail::TensorImpl* p = f.node->parents[f.next++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    impl->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::TensorImpl* n = *it;
      if (n->backprop && n->grad.size() == n->data.size()) n->backprop(*n);
    }
    // Only leaves accumulate across backward passes; interior grads would
    // otherwise be re-propagated by a later backward through a shared
    // subgraph.
    for (detail::TensorImpl* n : order)
      if (!n->parents.empty()) n->grad.clear();
  }
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<Tensor> parents,
                          std::function<void(TensorImpl&)> backprop, const char* op) {
  check_finite(data, op);
  Tensor out;
  out.impl = std::make_shared<TensorImpl>();
  out.impl->shape = std::move(shape);
  out.impl->data = std::move(data);
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const Tensor& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    out.impl->requires_grad = true;
    out.impl->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.impl->parents.push_back(p.impl);
    out.impl->backprop = std::move(backprop);
  }
  return out;
}

inline bool wants_grad(const std::shared_ptr<TensorImpl>& p) { return p->requires_grad; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const long n = a.numel();
  std::vector<double> d(a.values());
#pragma omp parallel for schedule(static) if (n > detail::kParallelThreshold)
  for (long i = 0; i < n; ++i) d[static_cast<size_t>(i)] += b[i];
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, b},
      [pa, pb](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (detail::wants_grad(pb)) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
        }
      },
      "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  std::vector<double> d(a.values());
  for (size_t i = 0; i < d.size(); ++i) d[i] -= b[static_cast<long>(i)];
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, b},
      [pa, pb](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (detail::wants_grad(pb)) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
      },
      "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<double> d(a.values());
  for (size_t i = 0; i < d.size(); ++i) d[i] *= b[static_cast<long>(i)];
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, b},
      [pa, pb](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * pb->data[i];
        }
        if (detail::wants_grad(pb)) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb->grad[i] += self.grad[i] * pa->data[i];
        }
      },
      "mul");
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "div: shape mismatch");
  std::vector<double> d(a.values());
  for (size_t i = 0; i < d.size(); ++i) d[i] /= b[static_cast<long>(i)];
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, b},
      [pa, pb](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] / pb->data[i];
        }
        if (detail::wants_grad(pb)) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb->grad[i] -= self.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
        }
      },
      "div");
}

inline Tensor neg(const Tensor& a) {
  std::vector<double> d(a.values());
  for (double& x : d) x = -x;
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] -= self.grad[i];
      },
      "neg");
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> d(a.values());
  for (double& x : d) x += s;
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      },
      "add_scalar");
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> d(a.values());
  for (double& x : d) x *= s;
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa, s](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * s;
      },
      "mul_scalar");
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Matrix ops

namespace detail {

// C(m x n) += A(m x k) * B(k x n); deterministic under OpenMP (row partition).
inline void mm_acc(const double* A, const double* B, double* C, long m, long k, long n) {
#pragma omp parallel for schedule(static) if (m * n * k > 200000)
  for (long i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (long kk = 0; kk < k; ++kk) {
      const double a = A[i * k + kk];
      const double* brow = B + kk * n;
      for (long j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// dA(m x k) += G(m x n) * B^T(n x k)
inline void mm_acc_bt(const double* G, const double* B, double* dA, long m, long k, long n) {
#pragma omp parallel for schedule(static) if (m * n * k > 200000)
  for (long i = 0; i < m; ++i) {
    const double* grow = G + i * n;
    for (long kk = 0; kk < k; ++kk) {
      const double* brow = B + kk * n;
      double acc = 0.0;
      for (long j = 0; j < n; ++j) acc += grow[j] * brow[j];
      dA[i * k + kk] += acc;
    }
  }
}

// dB(k x n) += A^T(k x m) * G(m x n)
inline void mm_acc_at(const double* A, const double* G, double* dB, long m, long k, long n) {
#pragma omp parallel for schedule(static) if (m * n * k > 200000)
  for (long kk = 0; kk < k; ++kk) {
    double* brow = dB + kk * n;
    for (long i = 0; i < m; ++i) {
      const double a = A[i * k + kk];
      const double* grow = G + i * n;
      for (long j = 0; j < n; ++j) brow[j] += a * grow[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be 2-d");
  check(a.cols() == b.rows(), "matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
  const long m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> d(static_cast<size_t>(m * n), 0.0);
  detail::mm_acc(a.values().data(), b.values().data(), d.data(), m, k, n);
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      {m, n}, std::move(d), {a, b},
      [pa, pb, m, k, n](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          detail::mm_acc_bt(self.grad.data(), pb->data.data(), pa->grad.data(), m, k, n);
        }
        if (detail::wants_grad(pb)) {
          pb->ensure_grad();
          detail::mm_acc_at(pa->data.data(), self.grad.data(), pb->grad.data(), m, k, n);
        }
      },
      "matmul");
}

inline Tensor transpose(const Tensor& a) {
  check(a.ndim() == 2, "transpose: tensor must be 2-d");
  const long m = a.rows(), n = a.cols();
  std::vector<double> d(static_cast<size_t>(m * n));
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) d[static_cast<size_t>(j * m + i)] = a(i, j);
  auto pa = a.impl;
  return detail::make_result(
      {n, m}, std::move(d), {a},
      [pa, m, n](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (long j = 0; j < n; ++j)
          for (long i = 0; i < m; ++i)
            pa->grad[static_cast<size_t>(i * n + j)] += self.grad[static_cast<size_t>(j * m + i)];
      },
      "transpose");
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  check(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
  std::vector<double> d(a.values());
  auto pa = a.impl;
  return detail::make_result(
      std::move(shape), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      },
      "reshape");
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> d(a.values());
  for (double& x : d) {
    if (x >= 0.0) {
      x = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      x = e / (1.0 + e);
    }
  }
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.data[i];
          pa->grad[i] += self.grad[i] * y * (1.0 - y);
        }
      },
      "sigmoid");
}

inline Tensor gelu(const Tensor& a) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  const long total = a.numel();
  std::vector<double> d(a.values());
#pragma omp parallel for schedule(static) if (total > detail::kParallelThreshold)
  for (long i = 0; i < total; ++i) {
    double& x = d[static_cast<size_t>(i)];
    x = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa, total](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
#pragma omp parallel for schedule(static) if (total > detail::kParallelThreshold)
        for (long i = 0; i < total; ++i) {
          const double x = pa->data[static_cast<size_t>(i)];
          const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
          const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
          pa->grad[static_cast<size_t>(i)] += self.grad[static_cast<size_t>(i)] * (cdf + x * pdf);
        }
      },
      "gelu");
}

inline Tensor exp(const Tensor& a) {
  std::vector<double> d(a.values());
  for (double& x : d) x = std::exp(x);
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          pa->grad[i] += self.grad[i] * self.data[i];
      },
      "exp");
}

inline Tensor log(const Tensor& a) {
  std::vector<double> d(a.values());
  for (double& x : d) x = std::log(x);
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          pa->grad[i] += self.grad[i] / pa->data[i];
      },
      "log");
}

inline Tensor abs(const Tensor& a) {
  std::vector<double> d(a.values());
  for (double& x : d) x = std::fabs(x);
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const double x = pa->data[i];
          pa->grad[i] += self.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
      },
      "abs");
}

// Gradient passes through strictly inside [lo, hi] and is zero outside.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> d(a.values());
  for (double& x : d) x = std::min(std::max(x, lo), hi);
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa, lo, hi](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const double x = pa->data[i];
          if (x > lo && x < hi) pa->grad[i] += self.grad[i];
        }
      },
      "clamp");
}

// Elementwise min/max; ties route the gradient to the first argument.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "minimum: shape mismatch");
  std::vector<double> d(a.values());
  for (size_t i = 0; i < d.size(); ++i) d[i] = std::min(d[i], b[static_cast<long>(i)]);
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, b},
      [pa, pb](detail::TensorImpl& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const bool take_a = pa->data[i] <= pb->data[i];
          auto& p = take_a ? pa : pb;
          if (detail::wants_grad(p)) {
            p->ensure_grad();
            p->grad[i] += self.grad[i];
          }
        }
      },
      "minimum");
}

inline Tensor maximum(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "maximum: shape mismatch");
  std::vector<double> d(a.values());
  for (size_t i = 0; i < d.size(); ++i) d[i] = std::max(d[i], b[static_cast<long>(i)]);
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, b},
      [pa, pb](detail::TensorImpl& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const bool take_a = pa->data[i] >= pb->data[i];
          auto& p = take_a ? pa : pb;
          if (detail::wants_grad(p)) {
            p->ensure_grad();
            p->grad[i] += self.grad[i];
          }
        }
      },
      "maximum");
}

// Row-wise softmax, stabilized by per-row max subtraction.
inline Tensor softmax_rows(const Tensor& a) {
  check(a.ndim() == 2, "softmax_rows: tensor must be 2-d");
  const long m = a.rows(), n = a.cols();
  std::vector<double> d(static_cast<size_t>(m * n));
#pragma omp parallel for schedule(static) if (m * n > detail::kParallelThreshold)
  for (long i = 0; i < m; ++i) {
    double mx = a(i, 0);
    for (long j = 1; j < n; ++j) mx = std::max(mx, a(i, j));
    double sum = 0.0;
    for (long j = 0; j < n; ++j) {
      const double e = std::exp(a(i, j) - mx);
      d[static_cast<size_t>(i * n + j)] = e;
      sum += e;
    }
    for (long j = 0; j < n; ++j) d[static_cast<size_t>(i * n + j)] /= sum;
  }
  auto pa = a.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a},
      [pa, m, n](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
#pragma omp parallel for schedule(static) if (m * n > detail::kParallelThreshold)
        for (long i = 0; i < m; ++i) {
          const double* y = self.data.data() + i * n;
          const double* g = self.grad.data() + i * n;
          double dot = 0.0;
          for (long j = 0; j < n; ++j) dot += y[j] * g[j];
          double* out = pa->grad.data() + i * n;
          for (long j = 0; j < n; ++j) out[j] += y[j] * (g[j] - dot);
        }
      },
      "softmax_rows");
}

// Matrix product with a folded scalar factor: s * (A x B). Saves a full
// intermediate on the attention paths.
inline Tensor matmul_scaled(const Tensor& a, const Tensor& b, double s) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul_scaled: operands must be 2-d");
  check(a.cols() == b.rows(), "matmul_scaled: inner dimensions disagree");
  const long m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> d(static_cast<size_t>(m * n), 0.0);
  detail::mm_acc(a.values().data(), b.values().data(), d.data(), m, k, n);
  if (s != 1.0) {
#pragma omp parallel for schedule(static) if (m * n > detail::kParallelThreshold)
    for (long i = 0; i < m * n; ++i) d[static_cast<size_t>(i)] *= s;
  }
  auto pa = a.impl, pb = b.impl;
  return detail::make_result(
      {m, n}, std::move(d), {a, b},
      [pa, pb, m, k, n, s](detail::TensorImpl& self) {
        std::vector<double> g(self.grad);
        if (s != 1.0) {
          const long t = m * n;
#pragma omp parallel for schedule(static) if (t > detail::kParallelThreshold)
          for (long i = 0; i < t; ++i) g[static_cast<size_t>(i)] *= s;
        }
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          detail::mm_acc_bt(g.data(), pb->data.data(), pa->grad.data(), m, k, n);
        }
        if (detail::wants_grad(pb)) {
          pb->ensure_grad();
          detail::mm_acc_at(pa->data.data(), g.data(), pb->grad.data(), m, k, n);
        }
      },
      "matmul_scaled");
}

// Per-row layer normalization with learned gain/bias [1 x C].
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                              double eps = 1e-5) {
  check(x.ndim() == 2, "layer_norm_rows: input must be 2-d");
  const long m = x.rows(), n = x.cols();
  check(gain.ndim() == 2 && gain.rows() == 1 && gain.cols() == n, "layer_norm_rows: bad gain");
  check(bias.ndim() == 2 && bias.rows() == 1 && bias.cols() == n, "layer_norm_rows: bad bias");
  std::vector<double> d(static_cast<size_t>(m * n));
  std::vector<double> inv_sigma(static_cast<size_t>(m));
  std::vector<double> xhat(static_cast<size_t>(m * n));
#pragma omp parallel for schedule(static) if (m * n > detail::kParallelThreshold)
  for (long i = 0; i < m; ++i) {
    double mu = 0.0;
    for (long j = 0; j < n; ++j) mu += x(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (long j = 0; j < n; ++j) {
      const double c = x(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (long j = 0; j < n; ++j) {
      const double h = (x(i, j) - mu) * is;
      xhat[static_cast<size_t>(i * n + j)] = h;
      d[static_cast<size_t>(i * n + j)] = gain(0, j) * h + bias(0, j);
    }
  }
  auto px = x.impl, pg = gain.impl, pb = bias.impl;
  return detail::make_result(
      {m, n}, std::move(d), {x, gain, bias},
      [px, pg, pb, m, n, inv_sigma = std::move(inv_sigma),
       xhat = std::move(xhat)](detail::TensorImpl& self) {
        if (detail::wants_grad(px)) {
          px->ensure_grad();
          // dL/dx = (1/sigma) * (dyh - mean(dyh) - xhat * mean(dyh*xhat))
#pragma omp parallel for schedule(static) if (m * n > detail::kParallelThreshold)
          for (long i = 0; i < m; ++i) {
            const double* g = self.grad.data() + i * n;
            const double* h = xhat.data() + i * n;
            double mean_dyh = 0.0, mean_dyh_h = 0.0;
            for (long j = 0; j < n; ++j) {
              const double dyh = g[j] * pg->data[static_cast<size_t>(j)];
              mean_dyh += dyh;
              mean_dyh_h += dyh * h[j];
            }
            mean_dyh /= static_cast<double>(n);
            mean_dyh_h /= static_cast<double>(n);
            double* out = px->grad.data() + i * n;
            const double is = inv_sigma[static_cast<size_t>(i)];
            for (long j = 0; j < n; ++j) {
              const double dyh = g[j] * pg->data[static_cast<size_t>(j)];
              out[j] += is * (dyh - mean_dyh - h[j] * mean_dyh_h);
            }
          }
        }
        // Gain/bias gradients are shared across rows; keep them serial.
        for (long i = 0; i < m; ++i) {
          const double* g = self.grad.data() + i * n;
          const double* h = xhat.data() + i * n;
          if (detail::wants_grad(pg)) {
            pg->ensure_grad();
            for (long j = 0; j < n; ++j) pg->grad[static_cast<size_t>(j)] += g[j] * h[j];
          }
          if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (long j = 0; j < n; ++j) pb->grad[static_cast<size_t>(j)] += g[j];
          }
        }
      },
      "layer_norm_rows");
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto pa = a.impl;
  return detail::make_result(
      {1}, {s}, {a},
      [pa](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += self.grad[0];
      },
      "sum_all");
}

inline Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto pa = a.impl;
  return detail::make_result(
      {1}, {s * inv}, {a},
      [pa, inv](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += self.grad[0] * inv;
      },
      "mean_all");
}

// Max over all elements; gradient routes to the first attaining index.
inline Tensor max_all(const Tensor& a) {
  size_t arg = 0;
  double mx = a.values()[0];
  for (size_t i = 1; i < a.values().size(); ++i) {
    if (a.values()[i] > mx) {
      mx = a.values()[i];
      arg = i;
    }
  }
  auto pa = a.impl;
  return detail::make_result(
      {1}, {mx}, {a},
      [pa, arg](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        pa->grad[arg] += self.grad[0];
      },
      "max_all");
}

// Mean over rows: [N x C] -> [1 x C].
inline Tensor mean_rows(const Tensor& a) {
  check(a.ndim() == 2, "mean_rows: tensor must be 2-d");
  const long m = a.rows(), n = a.cols();
  std::vector<double> d(static_cast<size_t>(n), 0.0);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) d[static_cast<size_t>(j)] += a(i, j);
  const double inv = 1.0 / static_cast<double>(m);
  for (double& x : d) x *= inv;
  auto pa = a.impl;
  return detail::make_result(
      {1, n}, std::move(d), {a},
      [pa, m, n, inv](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (long i = 0; i < m; ++i)
          for (long j = 0; j < n; ++j)
            pa->grad[static_cast<size_t>(i * n + j)] += self.grad[static_cast<size_t>(j)] * inv;
      },
      "mean_rows");
}

// Per-column median: [R x C] -> [1 x C]. Even R averages the two middle
// order statistics; gradient routes to the selected entries.
inline Tensor columns_median(const Tensor& a) {
  check(a.ndim() == 2, "columns_median: tensor must be 2-d");
  const long m = a.rows(), n = a.cols();
  check(m >= 1, "columns_median: empty column");
  std::vector<double> d(static_cast<size_t>(n));
  std::vector<long> lo_idx(static_cast<size_t>(n)), hi_idx(static_cast<size_t>(n));
  std::vector<long> perm(static_cast<size_t>(m));
  for (long j = 0; j < n; ++j) {
    std::iota(perm.begin(), perm.end(), 0L);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](long r1, long r2) { return a(r1, j) < a(r2, j); });
    if (m % 2 == 1) {
      const long mid = perm[static_cast<size_t>(m / 2)];
      lo_idx[static_cast<size_t>(j)] = hi_idx[static_cast<size_t>(j)] = mid;
      d[static_cast<size_t>(j)] = a(mid, j);
    } else {
      const long l = perm[static_cast<size_t>(m / 2 - 1)];
      const long h = perm[static_cast<size_t>(m / 2)];
      lo_idx[static_cast<size_t>(j)] = l;
      hi_idx[static_cast<size_t>(j)] = h;
      d[static_cast<size_t>(j)] = 0.5 * (a(l, j) + a(h, j));
    }
  }
  auto pa = a.impl;
  return detail::make_result(
      {1, n}, std::move(d), {a},
      [pa, n, odd = (m % 2 == 1), lo_idx = std::move(lo_idx),
       hi_idx = std::move(hi_idx)](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (long j = 0; j < n; ++j) {
          const double g = self.grad[static_cast<size_t>(j)];
          if (odd) {
            pa->grad[static_cast<size_t>(lo_idx[static_cast<size_t>(j)] * n + j)] += g;
          } else {
            pa->grad[static_cast<size_t>(lo_idx[static_cast<size_t>(j)] * n + j)] += 0.5 * g;
            pa->grad[static_cast<size_t>(hi_idx[static_cast<size_t>(j)] * n + j)] += 0.5 * g;
          }
        }
      },
      "columns_median");
}

// Per-column population standard deviation: [R x C] -> [1 x C].
inline Tensor columns_std(const Tensor& a) {
  check(a.ndim() == 2, "columns_std: tensor must be 2-d");
  const long m = a.rows(), n = a.cols();
  std::vector<double> d(static_cast<size_t>(n));
  std::vector<double> mu(static_cast<size_t>(n));
  for (long j = 0; j < n; ++j) {
    double s = 0.0;
    for (long i = 0; i < m; ++i) s += a(i, j);
    const double mean = s / static_cast<double>(m);
    mu[static_cast<size_t>(j)] = mean;
    double var = 0.0;
    for (long i = 0; i < m; ++i) {
      const double c = a(i, j) - mean;
      var += c * c;
    }
    d[static_cast<size_t>(j)] = std::sqrt(var / static_cast<double>(m));
  }
  auto pa = a.impl;
  return detail::make_result(
      {1, n}, std::move(d), {a},
      [pa, m, n, mu = std::move(mu)](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (long j = 0; j < n; ++j) {
          const double s = self.data[static_cast<size_t>(j)];
          if (s == 0.0) continue;  // flat column: subgradient 0
          const double g = self.grad[static_cast<size_t>(j)] / (static_cast<double>(m) * s);
          for (long i = 0; i < m; ++i)
            pa->grad[static_cast<size_t>(i * n + j)] +=
                g * (pa->data[static_cast<size_t>(i * n + j)] - mu[static_cast<size_t>(j)]);
        }
      },
      "columns_std");
}

// ---------------------------------------------------------------------------
// Broadcast helpers

// [N x C] + [1 x C]
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  check(a.ndim() == 2 && v.ndim() == 2 && v.rows() == 1 && v.cols() == a.cols(),
        "add_rowvec: expected [NxC] and [1xC]");
  const long m = a.rows(), n = a.cols();
  std::vector<double> d(a.values());
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) d[static_cast<size_t>(i * n + j)] += v(0, j);
  auto pa = a.impl, pv = v.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, v},
      [pa, pv, m, n](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (detail::wants_grad(pv)) {
          pv->ensure_grad();
          for (long i = 0; i < m; ++i)
            for (long j = 0; j < n; ++j)
              pv->grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i * n + j)];
        }
      },
      "add_rowvec");
}

// [N x C] - [1 x C]
inline Tensor sub_rowvec(const Tensor& a, const Tensor& v) {
  return add_rowvec(a, neg(v));
}

// Row i of a scaled by s[i]; s is [N x 1] or [N].
inline Tensor scale_rows(const Tensor& a, const Tensor& s) {
  check(a.ndim() == 2, "scale_rows: input must be 2-d");
  check(s.numel() == a.rows(), "scale_rows: scale length must equal row count");
  const long m = a.rows(), n = a.cols();
  std::vector<double> d(a.values());
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) d[static_cast<size_t>(i * n + j)] *= s[i];
  auto pa = a.impl, ps = s.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, s},
      [pa, ps, m, n](detail::TensorImpl& self) {
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (long i = 0; i < m; ++i)
            for (long j = 0; j < n; ++j)
              pa->grad[static_cast<size_t>(i * n + j)] +=
                  self.grad[static_cast<size_t>(i * n + j)] * ps->data[static_cast<size_t>(i)];
        }
        if (detail::wants_grad(ps)) {
          ps->ensure_grad();
          for (long i = 0; i < m; ++i) {
            double acc = 0.0;
            for (long j = 0; j < n; ++j)
              acc += self.grad[static_cast<size_t>(i * n + j)] *
                     pa->data[static_cast<size_t>(i * n + j)];
            ps->grad[static_cast<size_t>(i)] += acc;
          }
        }
      },
      "scale_rows");
}

// Divide every element by a scalar tensor [1].
inline Tensor div_by(const Tensor& a, const Tensor& s) {
  check(s.numel() == 1, "div_by: divisor must be scalar");
  const double sv = s[0];
  std::vector<double> d(a.values());
  for (double& x : d) x /= sv;
  auto pa = a.impl, ps = s.impl;
  return detail::make_result(
      a.shape(), std::move(d), {a, s},
      [pa, ps](detail::TensorImpl& self) {
        const double sv = ps->data[0];
        if (detail::wants_grad(pa)) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / sv;
        }
        if (detail::wants_grad(ps)) {
          ps->ensure_grad();
          double acc = 0.0;
          for (size_t i = 0; i < self.grad.size(); ++i)
            acc -= self.grad[i] * pa->data[i] / (sv * sv);
          ps->grad[0] += acc;
        }
      },
      "div_by");
}

// ---------------------------------------------------------------------------
// Structural ops

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: empty list");
  const long n = parts[0].cols();
  long m = 0;
  for (const Tensor& p : parts) {
    check(p.ndim() == 2 && p.cols() == n, "concat_rows: column mismatch");
    m += p.rows();
  }
  std::vector<double> d;
  d.reserve(static_cast<size_t>(m * n));
  for (const Tensor& p : parts) d.insert(d.end(), p.values().begin(), p.values().end());
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const Tensor& p : parts) impls.push_back(p.impl);
  return detail::make_result(
      {m, n}, std::move(d), parts,
      [impls](detail::TensorImpl& self) {
        size_t off = 0;
        for (const auto& p : impls) {
          if (detail::wants_grad(p)) {
            p->ensure_grad();
            for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[off + i];
          }
          off += p->data.size();
        }
      },
      "concat_rows");
}

inline Tensor slice_rows(const Tensor& a, long r0, long r1) {
  check(a.ndim() == 2 && 0 <= r0 && r0 < r1 && r1 <= a.rows(), "slice_rows: bad range");
  const long n = a.cols();
  std::vector<double> d(a.values().begin() + r0 * n, a.values().begin() + r1 * n);
  auto pa = a.impl;
  return detail::make_result(
      {r1 - r0, n}, std::move(d), {a},
      [pa, r0, n](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        const size_t off = static_cast<size_t>(r0 * n);
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[off + i] += self.grad[i];
      },
      "slice_rows");
}

inline Tensor slice_cols(const Tensor& a, long c0, long c1) {
  check(a.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= a.cols(), "slice_cols: bad range");
  const long m = a.rows(), n = a.cols(), w = c1 - c0;
  std::vector<double> d(static_cast<size_t>(m * w));
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < w; ++j) d[static_cast<size_t>(i * w + j)] = a(i, c0 + j);
  auto pa = a.impl;
  return detail::make_result(
      {m, w}, std::move(d), {a},
      [pa, c0, m, n, w](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        for (long i = 0; i < m; ++i)
          for (long j = 0; j < w; ++j)
            pa->grad[static_cast<size_t>(i * n + c0 + j)] +=
                self.grad[static_cast<size_t>(i * w + j)];
      },
      "slice_cols");
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols: empty list");
  const long m = parts[0].rows();
  long n = 0;
  for (const Tensor& p : parts) {
    check(p.ndim() == 2 && p.rows() == m, "concat_cols: row mismatch");
    n += p.cols();
  }
  std::vector<double> d(static_cast<size_t>(m * n));
  long off = 0;
  for (const Tensor& p : parts) {
    const long w = p.cols();
    for (long i = 0; i < m; ++i)
      for (long j = 0; j < w; ++j) d[static_cast<size_t>(i * n + off + j)] = p(i, j);
    off += w;
  }
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  std::vector<long> widths;
  for (const Tensor& p : parts) {
    impls.push_back(p.impl);
    widths.push_back(p.cols());
  }
  return detail::make_result(
      {m, n}, std::move(d), parts,
      [impls, widths, m, n](detail::TensorImpl& self) {
        long off = 0;
        for (size_t k = 0; k < impls.size(); ++k) {
          const long w = widths[k];
          if (detail::wants_grad(impls[k])) {
            impls[k]->ensure_grad();
            for (long i = 0; i < m; ++i)
              for (long j = 0; j < w; ++j)
                impls[k]->grad[static_cast<size_t>(i * w + j)] +=
                    self.grad[static_cast<size_t>(i * n + off + j)];
          }
          off += w;
        }
      },
      "concat_cols");
}

// Single element by flat index, as a [1] tensor.
inline Tensor pick(const Tensor& a, long flat_index) {
  check(0 <= flat_index && flat_index < a.numel(), "pick: index out of range");
  auto pa = a.impl;
  return detail::make_result(
      {1}, {a[flat_index]}, {a},
      [pa, flat_index](detail::TensorImpl& self) {
        if (!detail::wants_grad(pa)) return;
        pa->ensure_grad();
        pa->grad[static_cast<size_t>(flat_index)] += self.grad[0];
      },
      "pick");
}

// Concatenate scalar [1] tensors into a [k] vector.
inline Tensor concat_vec(const std::vector<Tensor>& scalars) {
  check(!scalars.empty(), "concat_vec: empty list");
  std::vector<double> d;
  for (const Tensor& s : scalars) {
    check(s.numel() == 1, "concat_vec: entries must be scalars");
    d.push_back(s[0]);
  }
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const Tensor& s : scalars) impls.push_back(s.impl);
  return detail::make_result(
      {static_cast<long>(d.size())}, std::move(d), scalars,
      [impls](detail::TensorImpl& self) {
        for (size_t i = 0; i < impls.size(); ++i) {
          if (detail::wants_grad(impls[i])) {
            impls[i]->ensure_grad();
            impls[i]->grad[0] += self.grad[i];
          }
        }
      },
      "concat_vec");
}

// Rows of an embedding table selected by id: [V x C], ids[k] -> [k x C].
inline Tensor embedding_lookup(const Tensor& table, const std::vector<long>& ids) {
  check(table.ndim() == 2, "embedding_lookup: table must be 2-d");
  const long v = table.rows(), n = table.cols();
  std::vector<double> d;
  d.reserve(ids.size() * static_cast<size_t>(n));
  for (long id : ids) {
    check(0 <= id && id < v, "embedding_lookup: id out of range");
    d.insert(d.end(), table.values().begin() + id * n, table.values().begin() + (id + 1) * n);
  }
  auto pt = table.impl;
  return detail::make_result(
      {static_cast<long>(ids.size()), n}, std::move(d), {table},
      [pt, ids, n](detail::TensorImpl& self) {
        if (!detail::wants_grad(pt)) return;
        pt->ensure_grad();
        for (size_t r = 0; r < ids.size(); ++r)
          for (long j = 0; j < n; ++j)
            pt->grad[static_cast<size_t>(ids[r] * n + j)] +=
                self.grad[r * static_cast<size_t>(n) + static_cast<size_t>(j)];
      },
      "embedding_lookup");
}

// Non-overlapping p x p patches of an [H x W x 3] image, row-major patch
// order; each output row is the flattened (y, x, channel) patch.
inline Tensor extract_patches(const Tensor& img, long p) {
  check(img.ndim() == 3 && img.shape()[2] == 3, "extract_patches: image must be [HxWx3]");
  const long h = img.shape()[0], w = img.shape()[1];
  check(p > 0 && h % p == 0 && w % p == 0,
        "extract_patches: image sides must be divisible by patch size");
  const long gh = h / p, gw = w / p;
  const long cols = p * p * 3;
  std::vector<double> d(static_cast<size_t>(gh * gw * cols));
  const auto& src = img.values();
  for (long py = 0; py < gh; ++py)
    for (long px = 0; px < gw; ++px) {
      double* row = d.data() + (py * gw + px) * cols;
      for (long y = 0; y < p; ++y)
        for (long x = 0; x < p; ++x)
          for (long c = 0; c < 3; ++c)
            row[(y * p + x) * 3 + c] = src[static_cast<size_t>(((py * p + y) * w + px * p + x) * 3 + c)];
    }
  auto pi = img.impl;
  return detail::make_result(
      {gh * gw, cols}, std::move(d), {img},
      [pi, p, gh, gw, w, cols](detail::TensorImpl& self) {
        if (!detail::wants_grad(pi)) return;
        pi->ensure_grad();
        for (long py = 0; py < gh; ++py)
          for (long px = 0; px < gw; ++px) {
            const double* row = self.grad.data() + (py * gw + px) * cols;
            for (long y = 0; y < p; ++y)
              for (long x = 0; x < p; ++x)
                for (long c = 0; c < 3; ++c)
                  pi->grad[static_cast<size_t>(((py * p + y) * w + px * p + x) * 3 + c)] +=
                      row[(y * p + x) * 3 + c];
          }
      },
      "extract_patches");
}

// im2col for stride-1, zero-padded "same" convolution. Input [C x H x W],
// output [(H*W) x (C*k*k)] with k odd.
inline Tensor im2col(const Tensor& x, long k) {
  check(x.ndim() == 3, "im2col: input must be [CxHxW]");
  check(k % 2 == 1, "im2col: kernel size must be odd");
  const long c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const long r = k / 2, cols = c * k * k;
  std::vector<double> d(static_cast<size_t>(h * w * cols), 0.0);
  const auto& src = x.values();
  for (long y = 0; y < h; ++y)
    for (long xx = 0; xx < w; ++xx) {
      double* row = d.data() + (y * w + xx) * cols;
      for (long ci = 0; ci < c; ++ci)
        for (long ky = 0; ky < k; ++ky) {
          const long sy = y + ky - r;
          if (sy < 0 || sy >= h) continue;
          for (long kx = 0; kx < k; ++kx) {
            const long sx = xx + kx - r;
            if (sx < 0 || sx >= w) continue;
            row[(ci * k + ky) * k + kx] = src[static_cast<size_t>((ci * h + sy) * w + sx)];
          }
        }
    }
  auto px = x.impl;
  return detail::make_result(
      {h * w, cols}, std::move(d), {x},
      [px, c, h, w, k, r, cols](detail::TensorImpl& self) {
        if (!detail::wants_grad(px)) return;
        px->ensure_grad();
        for (long y = 0; y < h; ++y)
          for (long xx = 0; xx < w; ++xx) {
            const double* row = self.grad.data() + (y * w + xx) * cols;
            for (long ci = 0; ci < c; ++ci)
              for (long ky = 0; ky < k; ++ky) {
                const long sy = y + ky - r;
                if (sy < 0 || sy >= h) continue;
                for (long kx = 0; kx < k; ++kx) {
                  const long sx = xx + kx - r;
                  if (sx < 0 || sx >= w) continue;
                  px->grad[static_cast<size_t>((ci * h + sy) * w + sx)] +=
                      row[(ci * k + ky) * k + kx];
                }
              }
          }
      },
      "im2col");
}

// ---------------------------------------------------------------------------
// Attention and linear layers

inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check(q.ndim() == 2 && k.ndim() == 2 && v.ndim() == 2, "attention: operands must be 2-d");
  check(q.cols() == k.cols(), "attention: query/key width mismatch");
  check(k.rows() == v.rows(), "attention: key/value count mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(softmax_rows(matmul_scaled(q, transpose(k), scale)), v);
}

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]; undefined when absent

  Linear() = default;
  Linear(long in, long out, std::mt19937_64& rng, bool with_bias = true) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
    weight = Tensor::randn({in, out}, rng, stddev, true);
    if (with_bias) bias = Tensor::zeros({1, out}, true);
  }
  static Linear from(Tensor w, Tensor b = Tensor()) {
    Linear l;
    l.weight = std::move(w);
    l.bias = std::move(b);
    return l;
  }
  static Linear identity(long n) {
    std::vector<double> d(static_cast<size_t>(n * n), 0.0);
    for (long i = 0; i < n; ++i) d[static_cast<size_t>(i * n + i)] = 1.0;
    return from(Tensor::from({n, n}, std::move(d)));
  }

  long in_dim() const { return weight.rows(); }
  long out_dim() const { return weight.cols(); }

  Tensor operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    if (bias.defined()) y = add_rowvec(y, bias);
    return y;
  }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

// Max over coordinates of |analytic - central difference| / max(1, |cd|).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                         double eps = 1e-5) {
  check(eps >= 1e-6 && eps <= 1e-3, "grad_check: eps must lie in [1e-6, 1e-3]");
  Tensor x = Tensor::from(x0.shape(), x0.values(), true);
  Tensor y = f(x);
  check(y.numel() == 1, "grad_check: f must be scalar-valued");
  y.backward();
  std::vector<double> analytic(x.values().size(), 0.0);
  if (x.has_grad()) analytic = x.impl->grad;

  double max_err = 0.0;
  NoGradGuard ng;
  for (size_t i = 0; i < x0.values().size(); ++i) {
    std::vector<double> plus(x0.values()), minus(x0.values());
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(Tensor::from(x0.shape(), std::move(plus))).item();
    const double fm = f(Tensor::from(x0.shape(), std::move(minus))).item();
    const double cd = (fp - fm) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - cd) / std::max(1.0, std::fabs(cd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace vltrack
