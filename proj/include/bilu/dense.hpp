#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bilu/sparse.hpp"

namespace bilu {

/// Non-owning column-major view with a leading dimension.
struct ConstMatrixView {
  const double* data = nullptr;
  index_t rows = 0;
  index_t cols = 0;
  index_t ld = 0;

  double operator()(index_t i, index_t j) const { return data[static_cast<std::size_t>(j) * ld + i]; }
  ConstMatrixView block(index_t r0, index_t c0, index_t nr, index_t nc) const {
    return {data + static_cast<std::size_t>(c0) * ld + r0, nr, nc, ld};
  }
};

struct MatrixView {
  double* data = nullptr;
  index_t rows = 0;
  index_t cols = 0;
  index_t ld = 0;

  double& operator()(index_t i, index_t j) const { return data[static_cast<std::size_t>(j) * ld + i]; }
  operator ConstMatrixView() const { return {data, rows, cols, ld}; }
  MatrixView block(index_t r0, index_t c0, index_t nr, index_t nc) const {
    return {data + static_cast<std::size_t>(c0) * ld + r0, nr, nc, ld};
  }
};

/// Owning dense matrix, column-major.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(index_t rows, index_t cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {}
  /// `values` given row by row (reads naturally in tests).
  static DenseBlock from_rows(index_t rows, index_t cols, std::span<const double> values);
  static DenseBlock identity(index_t n);

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }
  double& operator()(index_t i, index_t j) { return data_[static_cast<std::size_t>(j) * rows_ + i]; }
  double operator()(index_t i, index_t j) const { return data_[static_cast<std::size_t>(j) * rows_ + i]; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  MatrixView view() { return {data_.data(), rows_, cols_, rows_}; }
  ConstMatrixView view() const { return {data_.data(), rows_, cols_, rows_}; }

  double max_abs() const;
  double norm_1() const;
  double norm_inf() const;

  bool operator==(const DenseBlock& other) const = default;

 private:
  index_t rows_ = 0;
  index_t cols_ = 0;
  std::vector<double> data_;
};

/// C <- C + sign * A * B.
void gemm_acc(MatrixView c, ConstMatrixView a, ConstMatrixView b, double sign);
void gemm_acc(DenseBlock& c, const DenseBlock& a, const DenseBlock& b, double sign);
DenseBlock multiply(const DenseBlock& a, const DenseBlock& b);

/// y <- y + sign * A * x.
void gemv_acc(std::span<double> y, ConstMatrixView a, std::span<const double> x, double sign);

enum class InvertStatus { ok, singular, ill_conditioned };

const char* to_string(InvertStatus s);

/// Packed LU with partial pivoting: PA = LU, L unit lower, both stored in `lu`.
struct LuFactors {
  DenseBlock lu;
  std::vector<index_t> pivot;  // row swapped with i at step i
  bool singular = false;       // some pivot was exactly zero

  /// Solves A x = b in place (or A^T x = b).
  void solve(std::span<double> x) const;
  void solve_transpose(std::span<double> x) const;
};

LuFactors lu_factor(const DenseBlock& d);

/// Hager/Higham lower bound of the 1-norm condition number from existing factors.
double cond_estimate_1norm(const DenseBlock& d, const LuFactors& factors);

struct InverseResult {
  DenseBlock inverse;
  InvertStatus status = InvertStatus::ok;
  double cond = 1.0;  // estimate; +inf when singular
};

InverseResult lu_invert(const DenseBlock& d, double cond_threshold = 1e12);

}  // namespace bilu
