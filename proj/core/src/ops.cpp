#include "rap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rap/error.hpp"

namespace rap {
namespace {

using NodePtr = std::shared_ptr<detail::TensorNode>;

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) throw ContractViolation("op mixes tensors from different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor make_result(Tape* tape, Shape shape, std::vector<double> values) {
  if (tape) return tape->make_output(std::move(shape), std::move(values));
  return Tensor(std::move(shape), std::move(values));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_to_string(a.shape()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.numel() != 1) {
    throw DimensionError(std::string(op) + ": expected one-element tensor, got " +
                         shape_to_string(s.shape()));
  }
}

// Applies an elementwise map y = f(x) with local derivative df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  Tape* tape = common_tape({&a});
  std::vector<double> out(a.numel());
  const auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn, df] {
      for (std::size_t i = 0; i < yn->value.size(); ++i) {
        an->grad[i] += yn->grad[i] * df(an->value[i], yn->value[i]);
      }
    });
  }
  return y;
}

// c[m x n] += a[m x k] * b[k x n]; k ascending per output element.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("reduction axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Tensor reduce_axis(const Tensor& a, std::size_t axis, bool average) {
  const AxisSplit s = split_axis(a.shape(), axis);
  if (average && s.extent == 0) throw DimensionError("mean over an empty axis");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const double factor = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto x = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = x.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (average) {
    for (double& v : out) v *= factor;
  }
  Tape* tape = common_tape({&a});
  Tensor y = make_result(tape, std::move(out_shape), std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn, s, factor] {
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* g = yn->grad.data() + o * s.inner;
        for (std::size_t e = 0; e < s.extent; ++e) {
          double* dst = an->grad.data() + (o * s.extent + e) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * factor;
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    tape->record([an, bn, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->tape) an->grad[i] += yn->grad[i];
        if (bn->tape) bn->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    tape->record([an, bn, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->tape) an->grad[i] += yn->grad[i];
        if (bn->tape) bn->grad[i] -= yn->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    tape->record([an, bn, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->tape) an->grad[i] += yn->grad[i] * bn->value[i];
        if (bn->tape) bn->grad[i] += yn->grad[i] * an->value[i];
      }
    });
  }
  return y;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double u = kC * (x + kA * x * x * x);
        const double t = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractViolation("clamp: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_scalar(s, "mul_scalar");
  Tape* tape = common_tape({&a, &s});
  const double sv = s.values()[0];
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * sv;
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), sn = s.node(), yn = y.node();
    tape->record([an, sn, yn] {
      const double v = sn->value[0];
      double gs = 0.0;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->tape) an->grad[i] += yn->grad[i] * v;
        gs += yn->grad[i] * an->value[i];
      }
      if (sn->tape) sn->grad[0] += gs;
    });
  }
  return y;
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  require_scalar(s, "div_scalar");
  Tape* tape = common_tape({&a, &s});
  const double sv = s.values()[0];
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / sv;
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), sn = s.node(), yn = y.node();
    tape->record([an, sn, yn] {
      const double v = sn->value[0];
      double gs = 0.0;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->tape) an->grad[i] += yn->grad[i] / v;
        gs -= yn->grad[i] * yn->value[i] / v;
      }
      if (sn->tape) sn->grad[0] += gs;
    });
  }
  return y;
}

Tensor add_rowwise(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_rowwise");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.numel() != n) {
    throw DimensionError("add_rowwise: row of " + shape_to_string(row.shape()) +
                         " does not match " + shape_to_string(a.shape()));
  }
  Tape* tape = common_tape({&a, &row});
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + row[j];
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), rn = row.node(), yn = y.node();
    tape->record([an, rn, yn, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = yn->grad[i * n + j];
          if (an->tape) an->grad[i * n + j] += g;
          if (rn->tape) rn->grad[j] += g;
        }
      }
    });
  }
  return y;
}

Tensor mul_rowwise(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "mul_rowwise");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.numel() != n) {
    throw DimensionError("mul_rowwise: row of " + shape_to_string(row.shape()) +
                         " does not match " + shape_to_string(a.shape()));
  }
  Tape* tape = common_tape({&a, &row});
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] * row[j];
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), rn = row.node(), yn = y.node();
    tape->record([an, rn, yn, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = yn->grad[i * n + j];
          if (an->tape) an->grad[i * n + j] += g * rn->value[j];
          if (rn->tape) rn->grad[j] += g * an->value[i * n + j];
        }
      }
    });
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor y = make_result(tape, Shape{m, n}, std::move(out));
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    tape->record([an, bn, yn, m, k, n] {
      // dA = dY B^T, dB = A^T dY
      if (an->tape) gemm_nt(yn->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      if (bn->tape) gemm_tn(an->value.data(), yn->grad.data(), bn->grad.data(), k, m, n);
    });
  }
  return y;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const auto fail = [&] {
    throw DimensionError("batched_matmul: cannot multiply " + shape_to_string(a.shape()) +
                         " by " + shape_to_string(b.shape()) +
                         (transpose_b ? " (transposed)" : ""));
  };
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) fail();
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) fail();

  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(g * m * n, 0.0);
  for (std::size_t q = 0; q < g; ++q) {
    const double* aq = a.values().data() + q * m * k;
    const double* bq = b.values().data() + q * k * n;
    double* cq = out.data() + q * m * n;
    if (transpose_b)
      gemm_nt(aq, bq, cq, m, k, n);
    else
      gemm_nn(aq, bq, cq, m, k, n);
  }
  Tensor y = make_result(tape, Shape{g, m, n}, std::move(out));
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    tape->record([an, bn, yn, g, m, k, n, transpose_b] {
      for (std::size_t q = 0; q < g; ++q) {
        const double* dy = yn->grad.data() + q * m * n;
        const double* av = an->value.data() + q * m * k;
        const double* bv = bn->value.data() + q * k * n;
        if (transpose_b) {
          // Y = A B^T with B [n x k]: dA = dY B, dB = dY^T A
          if (an->tape) gemm_nn(dy, bv, an->grad.data() + q * m * k, m, n, k);
          if (bn->tape) gemm_tn(dy, av, bn->grad.data() + q * k * n, n, m, k);
        } else {
          if (an->tape) gemm_nt(dy, bv, an->grad.data() + q * m * k, m, n, k);
          if (bn->tape) gemm_tn(av, dy, bn->grad.data() + q * k * n, k, m, n);
        }
      }
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tape* tape = common_tape({&a});
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  Tensor y = make_result(tape, Shape{n, m}, std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += yn->grad[j * m + i];
    });
  }
  return y;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                         shape_to_string(shape));
  }
  Tape* tape = common_tape({&a});
  Tensor y = make_result(tape, std::move(shape),
                         std::vector<double>(a.values().begin(), a.values().end()));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin > end || end > a.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_to_string(a.shape()));
  }
  const std::size_t row = a.dim(0) ? a.numel() / a.dim(0) : 0;
  Shape shape = a.shape();
  shape[0] = end - begin;
  Tape* tape = common_tape({&a});
  const auto x = a.values();
  Tensor y = make_result(tape, std::move(shape),
                         std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                             x.begin() + static_cast<std::ptrdiff_t>(end * row)));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn, begin, row] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[begin * row + i] += yn->grad[i];
    });
  }
  return y;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw DimensionError("concat_rows: scalar input");
  Tape* tape = nullptr;
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw DimensionError("concat_rows: incompatible shapes " + shape_to_string(shape) + " and " +
                           shape_to_string(p.shape()));
    }
    if (p.on_tape()) {
      if (tape && tape != p.tape()) throw ContractViolation("op mixes tensors from different tapes");
      tape = p.tape();
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y = make_result(tape, std::move(shape), std::move(out));
  if (tape) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    NodePtr yn = y.node();
    tape->record([nodes, yn] {
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        if (pn->tape)
          for (std::size_t i = 0; i < pn->value.size(); ++i) pn->grad[i] += yn->grad[offset + i];
        offset += pn->value.size();
      }
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  require_rank(a, 2, "gather_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                           shape_to_string(a.shape()));
    }
    std::copy_n(a.values().data() + idx[r] * n, n, out.data() + r * n);
  }
  Tape* tape = common_tape({&a});
  Tensor y = make_result(tape, Shape{idx.size(), n}, std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    std::vector<std::size_t> rows(idx.begin(), idx.end());
    tape->record([an, yn, rows = std::move(rows), n] {
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) an->grad[rows[r] * n + j] += yn->grad[r * n + j];
    });
  }
  return y;
}

Tensor sum(const Tensor& a) {
  Tape* tape = common_tape({&a});
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor y = make_result(tape, Shape{}, {acc});
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn] {
      for (double& g : an->grad) g += yn->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, false); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, true); }

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() < 1) throw DimensionError("softmax_rows: scalar input");
  const std::size_t n = a.shape().back();
  const std::size_t m = n ? a.numel() / n : 0;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double* y = out.data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  Tape* tape = common_tape({&a});
  Tensor result = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = result.node();
    tape->record([an, yn, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = yn->value.data() + i * n;
        const double* gy = yn->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        double* gx = an->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return result;
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  require_rank(a, 2, "layer_norm_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DimensionError("layer_norm_rows: zero-width rows");
  std::vector<double> out(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (x[j] - mu) * inv_std[i];
  }
  Tape* tape = common_tape({&a});
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn, m, n, inv_std = std::move(inv_std)] {
      const double dn = static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        const double* yv = yn->value.data() + i * n;
        const double* gy = yn->grad.data() + i * n;
        double mean_g = 0.0, mean_gy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          mean_g += gy[j];
          mean_gy += gy[j] * yv[j];
        }
        mean_g /= dn;
        mean_gy /= dn;
        double* gx = an->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += inv_std[i] * (gy[j] - mean_g - yv[j] * mean_gy);
      }
    });
  }
  return y;
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_rank(a, 2, "l2_normalize_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += x[j] * x[j];
    norms[i] = std::sqrt(ss);
    if (!std::isfinite(norms[i])) {
      throw NumericFault("l2_normalize_rows: row " + std::to_string(i) + " is not finite");
    }
    if (!(norms[i] >= 1e-12)) {
      throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) +
                                     " has near-zero norm",
                                 i);
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[j] / norms[i];
  }
  Tape* tape = common_tape({&a});
  Tensor y = make_result(tape, a.shape(), std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = y.node();
    tape->record([an, yn, m, n, norms = std::move(norms)] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* yv = yn->value.data() + i * n;
        const double* gy = yn->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * yv[j];
        double* gx = an->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += (gy[j] - yv[j] * dot) / norms[i];
      }
    });
  }
  return y;
}

RowMin row_min(const Tensor& a) {
  require_rank(a, 2, "row_min");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DimensionError("row_min: rows are empty " + shape_to_string(a.shape()));
  RowMin r;
  r.argmins.resize(m);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (x[j] < x[best]) best = j;
    r.argmins[i] = best;
    out[i] = x[best];
  }
  Tape* tape = common_tape({&a});
  r.values = make_result(tape, Shape{m}, std::move(out));
  if (tape) {
    NodePtr an = a.node(), yn = r.values.node();
    tape->record([an, yn, n, argmins = r.argmins] {
      for (std::size_t i = 0; i < argmins.size(); ++i) an->grad[i * n + argmins[i]] += yn->grad[i];
    });
  }
  return r;
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace rap
