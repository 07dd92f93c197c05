#include "trimix/ops.hpp"

#include <cmath>

#include "trimix/error.hpp"

namespace trimix::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(a.shape()));
}

// c[p x r] += a[p x q] * b[q x r], fixed loop order.
void gemm_acc(const double* a, const double* b, double* c, std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    double* crow = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      const double* brow = b + k * r;
      for (std::size_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

std::vector<double> transposed(std::span<const double> a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

bool taped(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if (t->on_tape()) return true;
  return false;
}

template <typename F>
Tensor unary(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(p * r, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), p, q, r);
  if (!taped({&a, &b})) return Tensor({p, r}, std::move(out));

  return record_op(Tensor({p, r}, std::move(out)), {&a, &b},
                   [av = a.values(), bv = b.values(), p, q, r](std::span<const double> g,
                                                               std::span<std::vector<double>* const> pg) {
                     if (pg[0]) {  // dA = dC * B^T
                       const auto bt = transposed(bv, q, r);
                       gemm_acc(g.data(), bt.data(), pg[0]->data(), p, r, q);
                     }
                     if (pg[1]) {  // dB = A^T * dC
                       const auto at = transposed(av, p, q);
                       gemm_acc(at.data(), g.data(), pg[1]->data(), q, p, r);
                     }
                   });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  return record_op(Tensor({n, m}, transposed(a.data(), m, n)), {&a},
                   [m, n](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     auto& d = *pg[0];
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return record_op(Tensor(a.shape(), std::move(out)), {&a, &b},
                   [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (auto* d : pg)
                       if (d)
                         for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return record_op(Tensor(a.shape(), std::move(out)), {&a, &b},
                   [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                     if (pg[1])
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
                   });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  if (!taped({&a, &b})) return Tensor(a.shape(), std::move(out));
  return record_op(Tensor(a.shape(), std::move(out)), {&a, &b},
                   [av = a.values(), bv = b.values()](std::span<const double> g,
                                                      std::span<std::vector<double>* const> pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bv[i];
                     if (pg[1])
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * av[i];
                   });
}

Tensor scalar_mul(const Tensor& a, double s) {
  return record_op(unary(a, [s](double x) { return s * x; }), {&a},
                   [s](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += s * g[i];
                   });
}

Tensor add_scalar(const Tensor& a, double s) {
  return record_op(unary(a, [s](double x) { return x + s; }), {&a},
                   [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   });
}

Tensor add_row_vector(const Tensor& a, const Tensor& row) {
  require_matrix(a, "add_row_vector");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (row.size() != n || (row.rank() == 2 && row.dim(0) != 1) || row.rank() > 2) {
    throw DimensionError("add_row_vector: cannot add " + shape_str(row.shape()) + " to rows of " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + row[j];
  return record_op(Tensor(a.shape(), std::move(out)), {&a, &row},
                   [m, n](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                     if (pg[1])
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) (*pg[1])[j] += g[i * n + j];
                   });
}

Tensor relu(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
  if (!a.on_tape()) return out;
  return record_op(std::move(out), {&a},
                   [av = a.values()](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (av[i] > 0.0) (*pg[0])[i] += g[i];
                   });
}

Tensor abs(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return std::fabs(x); });
  if (!a.on_tape()) return out;
  return record_op(std::move(out), {&a},
                   [av = a.values()](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     // subgradient 0 at the origin
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (av[i] > 0.0) (*pg[0])[i] += g[i];
                       else if (av[i] < 0.0) (*pg[0])[i] -= g[i];
                     }
                   });
}

Tensor square(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return x * x; });
  if (!a.on_tape()) return out;
  return record_op(std::move(out), {&a},
                   [av = a.values()](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += 2.0 * av[i] * g[i];
                   });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record_op(Tensor::scalar(s), {&a}, [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
    for (auto& d : *pg[0]) d += g[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = static_cast<double>(a.size());
  return record_op(Tensor::scalar(s / n), {&a},
                   [n](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (auto& d : *pg[0]) d += g[0] / n;
                   });
}

Tensor flip_rows(const Tensor& a) {
  const std::size_t b = a.rows(), w = a.row_size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[(b - 1 - i) * w + j];
  return record_op(Tensor(a.shape(), std::move(out)), {&a},
                   [b, w](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (std::size_t i = 0; i < b; ++i)
                       for (std::size_t j = 0; j < w; ++j) (*pg[0])[(b - 1 - i) * w + j] += g[i * w + j];
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return record_op(Tensor(std::move(shape), a.values()), {&a},
                   [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   });
}

Tensor flatten_rows(const Tensor& a) {
  if (a.rank() == 2) return a;
  return reshape(a, {a.rows(), a.row_size()});
}

}  // namespace trimix::ops
