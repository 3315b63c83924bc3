#include "qkd/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "qkd/errors.hpp"

namespace qkd::ops {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::span<double> grad(const std::shared_ptr<TensorImpl>& t) {
  return autograd::grad_of(*t);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  // Source offset for every output element; empty means identity mapping.
  std::vector<std::size_t> ia, ib;
};

std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t lead = rank - in.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    stride[lead + d] = in[d] == 1 ? 0 : s;
    s *= in[d];
  }
  const std::size_t n = numel(out);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      offset += stride[d];
      if (counter[d] < out[d]) break;
      offset -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return idx;
}

std::shared_ptr<Broadcast> plan(const Shape& a, const Shape& b,
                                const char* op) {
  auto bc = std::make_shared<Broadcast>();
  if (a == b) {
    bc->out = a;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc->out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " +
                       to_string(b) + " do not broadcast");
    }
    bc->out[i] = da == 1 ? db : da;
  }
  if (a != bc->out) bc->ia = broadcast_index(a, bc->out);
  if (b != bc->out) bc->ib = broadcast_index(b, bc->out);
  if (bc->ia.empty()) {
    bc->ia.resize(numel(bc->out));
    std::iota(bc->ia.begin(), bc->ia.end(), std::size_t{0});
  }
  if (bc->ib.empty()) {
    bc->ib.resize(numel(bc->out));
    std::iota(bc->ib.begin(), bc->ib.end(), std::size_t{0});
  }
  return bc;
}

// f(x, y) -> value; da(x, y, out) -> d out / d x; db likewise for y.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da,
              DB db) {
  auto bc = plan(a.shape(), b.shape(), op);
  const std::size_t n = numel(bc->out);
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  const bool direct = bc->ia.empty();
  if (direct) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(av[k], bv[k]);
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(av[bc->ia[k]], bv[bc->ib[k]]);
  }
  const bool rec = autograd::should_record({&a, &b});
  Tensor result = Tensor::from_op(bc->out, std::move(out), rec);
  if (rec) {
    auto pa = a.shared(), pb = b.shared(), po = result.shared();
    Graph::current()->record(
        op, {a, b}, result,
        [pa, pb, po, bc, da, db, direct](std::span<const double> g) {
          const auto& x = pa->values;
          const auto& y = pb->values;
          const auto& o = po->values;
          auto ga = grad(pa);
          auto gb = grad(pb);
          const std::size_t n = g.size();
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = direct ? k : bc->ia[k];
            const std::size_t j = direct ? k : bc->ib[k];
            if (!ga.empty()) ga[i] += g[k] * da(x[i], y[j], o[k]);
            if (!gb.empty()) gb[j] += g[k] * db(x[i], y[j], o[k]);
          }
        });
  }
  return result;
}

// f(x) -> value; df(x, out) -> derivative.
template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op(a.shape(), std::move(out), rec);
  if (rec) {
    auto pa = a.shared(), po = result.shared();
    Graph::current()->record(op, {a}, result,
                             [pa, po, df](std::span<const double> g) {
                               auto ga = grad(pa);
                               const auto& x = pa->values;
                               const auto& o = po->values;
                               for (std::size_t k = 0; k < g.size(); ++k) {
                                 ga[k] += g[k] * df(x[k], o[k]);
                               }
                             });
  }
  return result;
}

// Decomposes `shape` around `axis` into outer * len * inner.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values()) {
    if (y == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return x * s; },
      [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) {
  return unary(
      a, "neg", [](double x) { return -x; },
      [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) {
        return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      });
}

Tensor log(const Tensor& a) {
  for (double x : a.values()) {
    if (!(x > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x));
    }
  }
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double o) { return o; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double o) { return 1.0 - o * o; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.values()) {
    if (x < 0.0) throw DomainError("sqrt: negative input " + std::to_string(x));
  }
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double o) { return o > 0.0 ? 0.5 / o : 0.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      a, "clamp_min", [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op({}, {s}, rec);
  if (rec) {
    auto pa = a.shared();
    Graph::current()->record("sum", {a}, result,
                             [pa](std::span<const double> g) {
                               for (double& v : grad(pa)) v += g[0];
                             });
  }
  return result;
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis, "sum");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto av = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* src = av.data() + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op(std::move(out_shape), std::move(out), rec);
  if (rec) {
    auto pa = a.shared();
    Graph::current()->record("sum_axis", {a}, result,
                             [pa, s](std::span<const double> g) {
                               auto ga = grad(pa);
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                 for (std::size_t l = 0; l < s.len; ++l) {
                                   double* dst =
                                       ga.data() + (o * s.len + l) * s.inner;
                                   const double* src = g.data() + o * s.inner;
                                   for (std::size_t i = 0; i < s.inner; ++i) {
                                     dst[i] += src[i];
                                   }
                                 }
                               }
                             });
  }
  return result;
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const auto len = a.dim(axis);
  if (len == 0) throw ShapeError("mean over an empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(len));
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " +
                     to_string(shape));
  }
  const bool rec = autograd::should_record({&a});
  std::vector<double> values(a.values().begin(), a.values().end());
  Tensor result = Tensor::from_op(std::move(shape), std::move(values), rec);
  if (rec) {
    auto pa = a.shared();
    Graph::current()->record("reshape", {a}, result,
                             [pa](std::span<const double> g) {
                               auto ga = grad(pa);
                               for (std::size_t k = 0; k < g.size(); ++k) {
                                 ga[k] += g[k];
                               }
                             });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2 && a.rank() != 3) {
    throw ShapeError("transpose: expected rank 2 or 3, got " +
                     to_string(a.shape()));
  }
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t rows = a.dim(a.rank() - 2);
  const std::size_t cols = a.dim(a.rank() - 1);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = av.data() + b * rows * cols;
    double* dst = out.data() + b * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op(std::move(shape), std::move(out), rec);
  if (rec) {
    auto pa = a.shared();
    Graph::current()->record(
        "transpose", {a}, result,
        [pa, batch, rows, cols](std::span<const double> g) {
          auto ga = grad(pa);
          for (std::size_t b = 0; b < batch; ++b) {
            double* dst = ga.data() + b * rows * cols;
            const double* src = g.data() + b * rows * cols;
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < cols; ++c) {
                dst[r * cols + c] += src[c * rows + r];
              }
            }
          }
        });
  }
  return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length) {
  const auto s = split_axis(a.shape(), axis, "slice");
  if (start + length > s.len) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis " +
                     std::to_string(axis) + " of " + to_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  const auto av = a.values();
  const std::size_t block = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = av.data() + (o * s.len + start) * s.inner;
    std::copy(src, src + block, out.data() + o * block);
  }
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op(std::move(shape), std::move(out), rec);
  if (rec) {
    auto pa = a.shared();
    Graph::current()->record(
        "slice", {a}, result, [pa, s, start, block](std::span<const double> g) {
          auto ga = grad(pa);
          for (std::size_t o = 0; o < s.outer; ++o) {
            double* dst = ga.data() + (o * s.len + start) * s.inner;
            const double* src = g.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  split_axis(ref, axis, "concat");
  Shape shape = ref;
  shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t d = 0; ok && d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: " + to_string(p.shape()) +
                       " incompatible with " + to_string(ref) + " on axis " +
                       std::to_string(axis));
    }
    shape[axis] += p.dim(axis);
  }
  const auto total = split_axis(shape, axis, "concat");
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.dim(axis) * total.inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < total.outer; ++o) {
      std::copy(pv.data() + o * block, pv.data() + (o + 1) * block,
                out.data() + (o * total.len + offset) * total.inner);
    }
    offset += p.dim(axis);
  }
  const bool rec = autograd::should_record(parts);
  Tensor result = Tensor::from_op(std::move(shape), std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const auto& p : parts) ins.push_back(p.shared());
    Graph::current()->record(
        "concat", std::vector<Tensor>(parts.begin(), parts.end()), result,
        [ins, offsets, total, axis](std::span<const double> g) {
          for (std::size_t n = 0; n < ins.size(); ++n) {
            auto gi = grad(ins[n]);
            if (gi.empty()) continue;
            const std::size_t block = ins[n]->shape[axis] * total.inner;
            for (std::size_t o = 0; o < total.outer; ++o) {
              const double* src =
                  g.data() + (o * total.len + offsets[n]) * total.inner;
              double* dst = gi.data() + o * block;
              for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
        });
  }
  return result;
}

Tensor pad_end(const Tensor& a, std::size_t count) {
  if (count == 0) return a;
  Shape zshape = a.shape();
  zshape.back() = count;
  const Tensor parts[] = {a, Tensor::zeros(zshape)};
  return concat(parts, a.rank() - 1);
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3 ||
      (b.rank() == 3 && a.rank() != 3)) {
    throw ShapeError("matmul: unsupported ranks " + to_string(a.shape()) +
                     " * " + to_string(b.shape()));
  }
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const bool shared_rhs = b.rank() == 2;
  if (!shared_rhs && b.dim(0) != batch) {
    throw ShapeError("matmul: batch mismatch " + to_string(a.shape()) + " * " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t k2 = b.dim(b.rank() - 2);
  const std::size_t n = b.dim(b.rank() - 1);
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ in " +
                     to_string(a.shape()) + " * " + to_string(b.shape()));
  }
  Shape shape = a.rank() == 3 ? Shape{batch, m, n} : Shape{m, n};
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MapC A(a.values().data() + i * m * k, m, k);
    MapC B(b.values().data() + (shared_rhs ? 0 : i * k * n), k, n);
    MapM C(out.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  const bool rec = autograd::should_record({&a, &b});
  Tensor result = Tensor::from_op(std::move(shape), std::move(out), rec);
  if (rec) {
    auto pa = a.shared(), pb = b.shared();
    Graph::current()->record(
        "matmul", {a, b}, result,
        [pa, pb, batch, shared_rhs, m, k, n](std::span<const double> g) {
          auto ga = grad(pa);
          auto gb = grad(pb);
          for (std::size_t i = 0; i < batch; ++i) {
            MapC G(g.data() + i * m * n, m, n);
            const std::size_t boff = shared_rhs ? 0 : i * k * n;
            if (!ga.empty()) {
              MapC B(pb->values.data() + boff, k, n);
              MapM GA(ga.data() + i * m * k, m, k);
              GA.noalias() += G * B.transpose();
            }
            if (!gb.empty()) {
              MapC A(pa->values.data() + i * m * k, m, k);
              MapM GB(gb.data() + boff, k, n);
              GB.noalias() += A.transpose() * G;
            }
          }
        });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Normalisation and classification

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax of a scalar");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op(a.shape(), std::move(out), rec);
  if (rec) {
    auto pa = a.shared(), po = result.shared();
    Graph::current()->record(
        "softmax", {a}, result, [pa, po, rows, cols](std::span<const double> g) {
          auto ga = grad(pa);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* y = po->values.data() + r * cols;
            const double* gr = g.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
            double* dst = ga.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) dst[c] += y[c] * (gr[c] - dot);
          }
        });
  }
  return result;
}

Tensor log_softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("log_softmax of a scalar");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
  }
  const bool rec = autograd::should_record({&a});
  Tensor result = Tensor::from_op(a.shape(), std::move(out), rec);
  if (rec) {
    auto pa = a.shared(), po = result.shared();
    Graph::current()->record(
        "log_softmax", {a}, result,
        [pa, po, rows, cols](std::span<const double> g) {
          auto ga = grad(pa);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* y = po->values.data() + r * cols;
            const double* gr = g.data() + r * cols;
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) total += gr[c];
            double* dst = ga.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
              dst[c] += gr[c] - std::exp(y[c]) * total;
            }
          }
        });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm of a scalar");
  const std::size_t cols = x.shape().back();
  if (gain.numel() != cols || bias.numel() != cols) {
    throw ShapeError("layer_norm: gain/bias length must be " +
                     std::to_string(cols));
  }
  const std::size_t rows = x.numel() / cols;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += src[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (src[c] - mu) * (src[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (src[c] - mu) * is;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  const bool rec = autograd::should_record({&x, &gain, &bias});
  Tensor result = Tensor::from_op(x.shape(), std::move(out), rec);
  if (rec) {
    auto px = x.shared(), pg = gain.shared(), pb = bias.shared();
    Graph::current()->record(
        "layer_norm", {x, gain, bias}, result,
        [px, pg, pb, xhat, inv_std, rows, cols](std::span<const double> g) {
          auto gx = grad(px);
          auto gg = grad(pg);
          auto gb = grad(pb);
          const auto& gain_v = pg->values;
          std::vector<double> dh(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * cols;
            const double* h = xhat->data() + r * cols;
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              if (!gg.empty()) gg[c] += gr[c] * h[c];
              if (!gb.empty()) gb[c] += gr[c];
              dh[c] = gr[c] * gain_v[c];
              mean_dh += dh[c];
              mean_dh_h += dh[c] * h[c];
            }
            if (gx.empty()) continue;
            mean_dh /= static_cast<double>(cols);
            mean_dh_h /= static_cast<double>(cols);
            double* dst = gx.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
              dst[c] += (*inv_std)[r] * (dh[c] - mean_dh - h[c] * mean_dh_h);
            }
          }
        });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(rows) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= cols) {
      throw ShapeError("cross_entropy: label " + std::to_string(l) +
                       " outside [0, " + std::to_string(cols) + ")");
    }
  }
  Tensor lsm = log_softmax(logits);
  std::vector<double> mask(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    mask[r * cols + static_cast<std::size_t>(labels[r])] =
        -1.0 / static_cast<double>(rows);
  }
  return sum(mul(lsm, Tensor({rows, cols}, std::move(mask))));
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_rank(x, 2, "conv1d input");
  require_rank(weight, 3, "conv1d weight");
  if (stride == 0) throw ShapeError("conv1d: stride must be >= 1");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = weight.dim(0), width = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv1d: weight " + to_string(weight.shape()) +
                     " does not match input channels " + std::to_string(cin));
  }
  if (bias.defined() && bias.numel() != cout) {
    throw ShapeError("conv1d: bias length must be " + std::to_string(cout));
  }
  if (len + 2 * padding < width) {
    throw ShapeError("conv1d: input length " + std::to_string(len) +
                     " shorter than kernel " + std::to_string(width) +
                     " after padding");
  }
  const std::size_t out_len = (len + 2 * padding - width) / stride + 1;
  const std::size_t rows = cin * width;
  auto cols = std::make_shared<std::vector<double>>(rows * out_len, 0.0);
  const auto xv = x.values();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t k = 0; k < width; ++k) {
      double* dst = cols->data() + (ci * width + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                   static_cast<std::ptrdiff_t>(padding);
        if (src >= 0 && static_cast<std::size_t>(src) < len) {
          dst[t] = xv[ci * len + static_cast<std::size_t>(src)];
        }
      }
    }
  }
  std::vector<double> out(cout * out_len);
  {
    MapC W(weight.values().data(), cout, rows);
    MapC C(cols->data(), rows, out_len);
    MapM Y(out.data(), cout, out_len);
    Y.noalias() = W * C;
    if (bias.defined()) {
      for (std::size_t co = 0; co < cout; ++co) Y.row(co).array() += bias[co];
    }
  }
  const bool rec = bias.defined() ? autograd::should_record({&x, &weight, &bias})
                                  : autograd::should_record({&x, &weight});
  Tensor result = Tensor::from_op({cout, out_len}, std::move(out), rec);
  if (rec) {
    auto px = x.shared(), pw = weight.shared();
    auto pb = bias.defined() ? bias.shared() : nullptr;
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    Graph::current()->record(
        "conv1d", std::move(inputs), result,
        [px, pw, pb, cols, cin, len, cout, width, stride, padding, out_len,
         rows](std::span<const double> g) {
          MapC G(g.data(), cout, out_len);
          if (auto gw = grad(pw); !gw.empty()) {
            MapC C(cols->data(), rows, out_len);
            MapM GW(gw.data(), cout, rows);
            GW.noalias() += G * C.transpose();
          }
          if (pb) {
            if (auto gb = grad(pb); !gb.empty()) {
              for (std::size_t co = 0; co < cout; ++co) gb[co] += G.row(co).sum();
            }
          }
          if (auto gx = grad(px); !gx.empty()) {
            MapC W(pw->values.data(), cout, rows);
            RowMat dcols = W.transpose() * G;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              for (std::size_t k = 0; k < width; ++k) {
                const double* src = dcols.data() + (ci * width + k) * out_len;
                for (std::size_t t = 0; t < out_len; ++t) {
                  const std::ptrdiff_t pos =
                      static_cast<std::ptrdiff_t>(t * stride + k) -
                      static_cast<std::ptrdiff_t>(padding);
                  if (pos >= 0 && static_cast<std::size_t>(pos) < len) {
                    gx[ci * len + static_cast<std::size_t>(pos)] += src[t];
                  }
                }
              }
            }
          }
        });
  }
  return result;
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, std::size_t stride,
                        std::size_t padding) {
  require_rank(x, 2, "conv_transpose1d input");
  require_rank(weight, 3, "conv_transpose1d weight");
  if (stride == 0) throw ShapeError("conv_transpose1d: stride must be >= 1");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  if (len == 0) throw ShapeError("conv_transpose1d: empty input");
  if (weight.dim(0) != cin) {
    throw ShapeError("conv_transpose1d: weight " + to_string(weight.shape()) +
                     " does not match input channels " + std::to_string(cin));
  }
  const std::size_t cout = weight.dim(1), width = weight.dim(2);
  if (bias.defined() && bias.numel() != cout) {
    throw ShapeError("conv_transpose1d: bias length must be " +
                     std::to_string(cout));
  }
  const std::size_t full = (len - 1) * stride + width;
  if (full <= 2 * padding) {
    throw ShapeError("conv_transpose1d: padding crops the whole output");
  }
  const std::size_t out_len = full - 2 * padding;
  const std::size_t rows = cout * width;
  RowMat cols(rows, len);
  {
    MapC W(weight.values().data(), cin, rows);
    MapC X(x.values().data(), cin, len);
    cols.noalias() = W.transpose() * X;
  }
  std::vector<double> out(cout * out_len, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t k = 0; k < width; ++k) {
      const double* src = cols.data() + (co * width + k) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) -
                                   static_cast<std::ptrdiff_t>(padding);
        if (pos >= 0 && static_cast<std::size_t>(pos) < out_len) {
          out[co * out_len + static_cast<std::size_t>(pos)] += src[t];
        }
      }
    }
    if (bias.defined()) {
      for (std::size_t t = 0; t < out_len; ++t) out[co * out_len + t] += bias[co];
    }
  }
  const bool rec = bias.defined() ? autograd::should_record({&x, &weight, &bias})
                                  : autograd::should_record({&x, &weight});
  Tensor result = Tensor::from_op({cout, out_len}, std::move(out), rec);
  if (rec) {
    auto px = x.shared(), pw = weight.shared();
    auto pb = bias.defined() ? bias.shared() : nullptr;
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    Graph::current()->record(
        "conv_transpose1d", std::move(inputs), result,
        [px, pw, pb, cin, len, cout, width, stride, padding, out_len,
         rows](std::span<const double> g) {
          if (pb) {
            if (auto gb = grad(pb); !gb.empty()) {
              for (std::size_t co = 0; co < cout; ++co) {
                double s = 0.0;
                for (std::size_t t = 0; t < out_len; ++t) s += g[co * out_len + t];
                gb[co] += s;
              }
            }
          }
          auto gx = grad(px);
          auto gw = grad(pw);
          if (gx.empty() && gw.empty()) return;
          RowMat dcols = RowMat::Zero(rows, len);
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t k = 0; k < width; ++k) {
              double* dst = dcols.data() + (co * width + k) * len;
              for (std::size_t t = 0; t < len; ++t) {
                const std::ptrdiff_t pos =
                    static_cast<std::ptrdiff_t>(t * stride + k) -
                    static_cast<std::ptrdiff_t>(padding);
                if (pos >= 0 && static_cast<std::size_t>(pos) < out_len) {
                  dst[t] = g[co * out_len + static_cast<std::size_t>(pos)];
                }
              }
            }
          }
          if (!gx.empty()) {
            MapC W(pw->values.data(), cin, rows);
            MapM GX(gx.data(), cin, len);
            GX.noalias() += W * dcols;
          }
          if (!gw.empty()) {
            MapC X(px->values.data(), cin, len);
            MapM GW(gw.data(), cin, rows);
            GW.noalias() += X * dcols.transpose();
          }
        });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Recurrent

namespace {

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor lstm(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh,
            const Tensor& bias, bool reverse) {
  require_rank(x, 2, "lstm input");
  require_rank(w_ih, 2, "lstm w_ih");
  require_rank(w_hh, 2, "lstm w_hh");
  const std::size_t steps = x.dim(0), din = x.dim(1);
  if (steps == 0) throw ShapeError("lstm: empty sequence");
  const std::size_t hidden = w_hh.dim(0);
  const std::size_t g4 = 4 * hidden;
  if (w_ih.dim(0) != din || w_ih.dim(1) != g4 || w_hh.dim(1) != g4 ||
      bias.numel() != g4) {
    throw ShapeError("lstm: weights " + to_string(w_ih.shape()) + ", " +
                     to_string(w_hh.shape()) + ", " + to_string(bias.shape()) +
                     " inconsistent with input " + to_string(x.shape()));
  }
  // Saved activations: gates after nonlinearity, cell state, tanh(cell).
  auto gates = std::make_shared<RowMat>(steps, g4);
  auto cell = std::make_shared<RowMat>(steps, hidden);
  auto cell_tanh = std::make_shared<RowMat>(steps, hidden);
  std::vector<double> out(steps * hidden);
  {
    MapC X(x.values().data(), steps, din);
    MapC Wih(w_ih.values().data(), din, g4);
    MapC Whh(w_hh.values().data(), hidden, g4);
    Eigen::Map<const Eigen::RowVectorXd> b(bias.values().data(),
                                           static_cast<Eigen::Index>(g4));
    RowMat pre = X * Wih;
    pre.rowwise() += b;
    MapM H(out.data(), steps, hidden);
    Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(hidden);
    Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(hidden);
    Eigen::RowVectorXd z(g4);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t t = reverse ? steps - 1 - s : s;
      z.noalias() = pre.row(t) + h_prev * Whh;
      auto gt = gates->row(t);
      for (std::size_t j = 0; j < hidden; ++j) {
        const double i = logistic(z[j]);
        const double f = logistic(z[hidden + j]);
        const double g = std::tanh(z[2 * hidden + j]);
        const double o = logistic(z[3 * hidden + j]);
        gt[j] = i;
        gt[hidden + j] = f;
        gt[2 * hidden + j] = g;
        gt[3 * hidden + j] = o;
        const double c = f * c_prev[j] + i * g;
        const double tc = std::tanh(c);
        (*cell)(t, j) = c;
        (*cell_tanh)(t, j) = tc;
        H(t, j) = o * tc;
      }
      h_prev = H.row(t);
      c_prev = cell->row(t);
    }
  }
  const bool rec = autograd::should_record({&x, &w_ih, &w_hh, &bias});
  Tensor result = Tensor::from_op({steps, hidden}, std::move(out), rec);
  if (rec) {
    auto px = x.shared(), pih = w_ih.shared(), phh = w_hh.shared(),
         pb = bias.shared(), po = result.shared();
    Graph::current()->record(
        "lstm", {x, w_ih, w_hh, bias}, result,
        [px, pih, phh, pb, po, gates, cell, cell_tanh, steps, din, hidden,
         g4, reverse](std::span<const double> gout) {
          MapC Whh(phh->values.data(), hidden, g4);
          MapC H(po->values.data(), steps, hidden);
          MapC G(gout.data(), steps, hidden);
          RowMat dz(steps, g4);
          Eigen::RowVectorXd dh_rec = Eigen::RowVectorXd::Zero(hidden);
          Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(hidden);
          auto gw_hh = grad(phh);
          for (std::size_t s = steps; s-- > 0;) {
            const std::size_t t = reverse ? steps - 1 - s : s;
            const bool first = s == 0;
            const std::size_t t_prev = reverse ? t + 1 : t - 1;
            for (std::size_t j = 0; j < hidden; ++j) {
              const double i = (*gates)(t, j);
              const double f = (*gates)(t, hidden + j);
              const double g = (*gates)(t, 2 * hidden + j);
              const double o = (*gates)(t, 3 * hidden + j);
              const double tc = (*cell_tanh)(t, j);
              const double c_prev = first ? 0.0 : (*cell)(t_prev, j);
              const double dh = G(t, j) + dh_rec[j];
              const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
              dz(t, j) = dc * g * i * (1.0 - i);
              dz(t, hidden + j) = dc * c_prev * f * (1.0 - f);
              dz(t, 2 * hidden + j) = dc * i * (1.0 - g * g);
              dz(t, 3 * hidden + j) = dh * tc * o * (1.0 - o);
              dc_next[j] = dc * f;
            }
            dh_rec.noalias() = dz.row(t) * Whh.transpose();
            if (!first && !gw_hh.empty()) {
              MapM GWhh(gw_hh.data(), hidden, g4);
              GWhh.noalias() += H.row(t_prev).transpose() * dz.row(t);
            }
          }
          if (auto g = grad(pih); !g.empty()) {
            MapC X(px->values.data(), steps, din);
            MapM GW(g.data(), din, g4);
            GW.noalias() += X.transpose() * dz;
          }
          if (auto g = grad(pb); !g.empty()) {
            for (std::size_t c = 0; c < g4; ++c) g[c] += dz.col(c).sum();
          }
          if (auto g = grad(px); !g.empty()) {
            MapC Wih(pih->values.data(), din, g4);
            MapM GX(g.data(), steps, din);
            GX.noalias() += dz * Wih.transpose();
          }
        });
  }
  return result;
}

}  // namespace qkd::ops
