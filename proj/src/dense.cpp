#include "bilu/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace bilu {

DenseBlock DenseBlock::from_rows(index_t rows, index_t cols, std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) throw DimensionError("DenseBlock::from_rows: wrong length");
  DenseBlock b(rows, cols);
  for (index_t i = 0; i < rows; ++i)
    for (index_t j = 0; j < cols; ++j) b(i, j) = values[static_cast<std::size_t>(i) * cols + j];
  return b;
}

DenseBlock DenseBlock::identity(index_t n) {
  DenseBlock b(n, n);
  for (index_t i = 0; i < n; ++i) b(i, i) = 1.0;
  return b;
}

double DenseBlock::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double DenseBlock::norm_1() const {
  double m = 0.0;
  for (index_t j = 0; j < cols_; ++j) {
    double s = 0.0;
    for (index_t i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
    m = std::max(m, s);
  }
  return m;
}

double DenseBlock::norm_inf() const {
  double m = 0.0;
  for (index_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (index_t j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
    m = std::max(m, s);
  }
  return m;
}

void gemm_acc(MatrixView c, ConstMatrixView a, ConstMatrixView b, double sign) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) throw DimensionError("gemm_acc: dimension mismatch");
  // j-p-i order: the innermost loop runs down contiguous columns of A and C.
  for (index_t j = 0; j < c.cols; ++j) {
    double* cj = c.data + static_cast<std::size_t>(j) * c.ld;
    const double* bj = b.data + static_cast<std::size_t>(j) * b.ld;
    for (index_t p = 0; p < a.cols; ++p) {
      const double s = sign * bj[p];
      if (s == 0.0) continue;
      const double* ap = a.data + static_cast<std::size_t>(p) * a.ld;
      for (index_t i = 0; i < c.rows; ++i) cj[i] += ap[i] * s;
    }
  }
}

void gemm_acc(DenseBlock& c, const DenseBlock& a, const DenseBlock& b, double sign) {
  gemm_acc(c.view(), a.view(), b.view(), sign);
}

DenseBlock multiply(const DenseBlock& a, const DenseBlock& b) {
  DenseBlock c(a.rows(), b.cols());
  gemm_acc(c, a, b, 1.0);
  return c;
}

void gemv_acc(std::span<double> y, ConstMatrixView a, std::span<const double> x, double sign) {
  if (x.size() != static_cast<std::size_t>(a.cols) || y.size() != static_cast<std::size_t>(a.rows))
    throw DimensionError("gemv_acc: dimension mismatch");
  for (index_t p = 0; p < a.cols; ++p) {
    const double s = sign * x[p];
    if (s == 0.0) continue;
    const double* ap = a.data + static_cast<std::size_t>(p) * a.ld;
    for (index_t i = 0; i < a.rows; ++i) y[i] += ap[i] * s;
  }
}

const char* to_string(InvertStatus s) {
  switch (s) {
    case InvertStatus::ok: return "ok";
    case InvertStatus::singular: return "singular";
    case InvertStatus::ill_conditioned: return "ill_conditioned";
  }
  return "?";
}

LuFactors lu_factor(const DenseBlock& d) {
  if (d.rows() != d.cols()) throw DimensionError("lu_factor: matrix must be square");
  const index_t n = d.rows();
  LuFactors f{d, std::vector<index_t>(n), false};
  DenseBlock& a = f.lu;
  for (index_t k = 0; k < n; ++k) {
    index_t piv = k;
    double best = std::abs(a(k, k));
    for (index_t i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        piv = i;
      }
    }
    f.pivot[k] = piv;
    if (piv != k)
      for (index_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
    if (best == 0.0) {
      f.singular = true;
      continue;
    }
    const double inv = 1.0 / a(k, k);
    for (index_t i = k + 1; i < n; ++i) a(i, k) *= inv;
    for (index_t j = k + 1; j < n; ++j) {
      const double akj = a(k, j);
      if (akj == 0.0) continue;
      for (index_t i = k + 1; i < n; ++i) a(i, j) -= a(i, k) * akj;
    }
  }
  return f;
}

void LuFactors::solve(std::span<double> x) const {
  const index_t n = lu.rows();
  for (index_t k = 0; k < n; ++k) std::swap(x[k], x[pivot[k]]);
  for (index_t j = 0; j < n; ++j)
    for (index_t i = j + 1; i < n; ++i) x[i] -= lu(i, j) * x[j];
  for (index_t j = n - 1; j >= 0; --j) {
    x[j] /= lu(j, j);
    for (index_t i = 0; i < j; ++i) x[i] -= lu(i, j) * x[j];
  }
}

void LuFactors::solve_transpose(std::span<double> x) const {
  // A^T = U^T L^T P, so solve U^T y = b, L^T z = y, then undo the row swaps.
  const index_t n = lu.rows();
  for (index_t i = 0; i < n; ++i) {
    double s = x[i];
    for (index_t k = 0; k < i; ++k) s -= lu(k, i) * x[k];
    x[i] = s / lu(i, i);
  }
  for (index_t i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (index_t k = i + 1; k < n; ++k) s -= lu(k, i) * x[k];
    x[i] = s;
  }
  for (index_t k = n - 1; k >= 0; --k) std::swap(x[k], x[pivot[k]]);
}

double cond_estimate_1norm(const DenseBlock& d, const LuFactors& factors) {
  const index_t n = d.rows();
  if (n == 0) return 1.0;
  if (factors.singular) return std::numeric_limits<double>::infinity();
  std::vector<double> x(n, 1.0 / n), xi(n), z(n);
  double est = 0.0;
  index_t last_j = -1;
  for (int iter = 0; iter < 5; ++iter) {
    std::copy(x.begin(), x.end(), xi.begin());
    factors.solve(xi);
    double norm_y = 0.0;
    for (double v : xi) norm_y += std::abs(v);
    if (!std::isfinite(norm_y)) return std::numeric_limits<double>::infinity();
    if (iter > 0 && norm_y <= est) break;
    est = norm_y;
    for (index_t i = 0; i < n; ++i) z[i] = xi[i] >= 0.0 ? 1.0 : -1.0;
    factors.solve_transpose(z);
    index_t j = 0;
    double zmax = std::abs(z[0]);
    double ztx = 0.0;
    for (index_t i = 0; i < n; ++i) {
      ztx += z[i] * x[i];
      if (std::abs(z[i]) > zmax) {
        zmax = std::abs(z[i]);
        j = i;
      }
    }
    if (zmax <= ztx || j == last_j) break;
    last_j = j;
    std::fill(x.begin(), x.end(), 0.0);
    x[j] = 1.0;
  }
  return est * d.norm_1();
}

InverseResult lu_invert(const DenseBlock& d, double cond_threshold) {
  if (d.rows() != d.cols() || d.rows() < 1) throw DimensionError("lu_invert: need a nonempty square block");
  const index_t n = d.rows();
  const LuFactors f = lu_factor(d);
  InverseResult out;
  if (f.singular) {
    out.status = InvertStatus::singular;
    out.cond = std::numeric_limits<double>::infinity();
    return out;
  }
  out.inverse = DenseBlock(n, n);
  std::vector<double> col(n);
  for (index_t j = 0; j < n; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = 1.0;
    f.solve(col);
    for (index_t i = 0; i < n; ++i) out.inverse(i, j) = col[i];
  }
  out.cond = cond_estimate_1norm(d, f);
  if (!(out.cond <= cond_threshold)) out.status = InvertStatus::ill_conditioned;
  return out;
}

}  // namespace bilu
