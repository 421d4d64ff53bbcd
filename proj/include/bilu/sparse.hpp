#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bilu {

using index_t = int;

/// Raised when operands have incompatible shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the Matrix Market reader; `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triplet {
  index_t row;
  index_t col;
  double value;
};

/*
 * Compressed sparse column matrix. Row indices are strictly increasing inside
 * every column and there are no duplicate entries. Row access is obtained by
 * transposing (the CSC arrays of A^T are the CSR arrays of A).
 */
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(index_t rows, index_t cols);
  /// Takes ownership of CSC arrays; validates every structural invariant.
  SparseMatrix(index_t rows, index_t cols, std::vector<index_t> col_ptr,
               std::vector<index_t> row_idx, std::vector<double> values);

  /// Builds a canonical matrix; duplicates are summed, explicit zeros kept.
  static SparseMatrix from_triplets(index_t rows, index_t cols, std::vector<Triplet> entries);
  static SparseMatrix identity(index_t n);

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  std::size_t nnz() const { return row_idx_.size(); }
  bool square() const { return rows_ == cols_; }

  std::span<const index_t> col_ptr() const { return col_ptr_; }
  std::span<const index_t> row_idx() const { return row_idx_; }
  std::span<const double> values() const { return values_; }

  std::span<const index_t> col_rows(index_t j) const {
    return {row_idx_.data() + col_ptr_[j], row_idx_.data() + col_ptr_[j + 1]};
  }
  std::span<const double> col_values(index_t j) const {
    return {values_.data() + col_ptr_[j], values_.data() + col_ptr_[j + 1]};
  }

  /// Stored value at (i, j) or 0 (binary search in column j).
  double at(index_t i, index_t j) const;

  SparseMatrix transpose() const;
  std::vector<double> multiply(std::span<const double> x) const;
  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> to_dense_colmajor() const;
  double max_abs() const;
  double norm_inf() const;

  bool operator==(const SparseMatrix& other) const = default;

 private:
  index_t rows_ = 0;
  index_t cols_ = 0;
  std::vector<index_t> col_ptr_{0};
  std::vector<index_t> row_idx_;
  std::vector<double> values_;
};

/// A bijection on {0..n-1}; entry i names the old index placed at new position i.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<index_t> map);
  static Permutation identity(index_t n);

  index_t size() const { return static_cast<index_t>(map_.size()); }
  index_t operator[](index_t i) const { return map_[i]; }
  std::span<const index_t> map() const { return map_; }

  Permutation inverse() const;
  /// (p.then(q))[i] = p[q[i]]: apply p first, then q on the result.
  Permutation then(const Permutation& q) const;
  bool is_identity() const;

  bool operator==(const Permutation& other) const = default;

 private:
  std::vector<index_t> map_;
};

/// Positive diagonal scaling matrix.
class DiagonalScaling {
 public:
  DiagonalScaling() = default;
  explicit DiagonalScaling(std::vector<double> d);
  static DiagonalScaling identity(index_t n) { return DiagonalScaling(std::vector<double>(n, 1.0)); }

  index_t size() const { return static_cast<index_t>(d_.size()); }
  double operator[](index_t i) const { return d_[i]; }
  std::span<const double> values() const { return d_; }

 private:
  std::vector<double> d_;
};

/// Contiguous diagonal blocks of variable size.
class BlockPartition {
 public:
  BlockPartition() = default;
  explicit BlockPartition(std::vector<index_t> sizes);
  static BlockPartition scalar(index_t n) { return BlockPartition(std::vector<index_t>(n, 1)); }

  index_t num_blocks() const { return static_cast<index_t>(sizes_.size()); }
  index_t dim() const { return offsets_.back(); }
  index_t size(index_t b) const { return sizes_[b]; }
  index_t begin(index_t b) const { return offsets_[b]; }
  index_t end(index_t b) const { return offsets_[b + 1]; }
  std::span<const index_t> sizes() const { return sizes_; }
  std::span<const index_t> offsets() const { return offsets_; }
  /// Block owning each scalar index.
  std::vector<index_t> block_of() const;

  index_t max_size() const;
  double mean_size() const;
  double stddev_size() const;

  bool operator==(const BlockPartition& other) const = default;

 private:
  std::vector<index_t> sizes_;
  std::vector<index_t> offsets_{0};
};

SparseMatrix read_matrix_market(const std::filesystem::path& path);
SparseMatrix read_matrix_market(std::istream& in);
void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& a);
void write_matrix_market(std::ostream& out, const SparseMatrix& a);
/// `pattern general` header, used for the external ordering exchange.
void write_matrix_market_pattern(const std::filesystem::path& path, const SparseMatrix& a);

/// D_l * A * D_r * Pi: column j of the result is d_l .* A(:, pi[j]) * d_r[pi[j]].
SparseMatrix apply_matching_transform(const SparseMatrix& a, const DiagonalScaling& row_scaling,
                                      const DiagonalScaling& col_scaling, const Permutation& perm);

/// P^T A P with result(i, j) = A(p[i], p[j]).
SparseMatrix symmetric_permute(const SparseMatrix& a, const Permutation& p);

/// General row/column permutation: result(i, j) = A(row_perm[i], col_perm[j]).
SparseMatrix permute(const SparseMatrix& a, const Permutation& row_perm, const Permutation& col_perm);

/// Pattern-only matrix with one entry per nonzero block of `a`.
SparseMatrix compress_companion(const SparseMatrix& a, const BlockPartition& partition);

struct ExpandedPermutation {
  Permutation perm;
  BlockPartition partition;
};

/// Lifts a block permutation to scalars, keeping blocks contiguous and ordered inside.
ExpandedPermutation expand_permutation(const Permutation& block_perm, const BlockPartition& partition);

}  // namespace bilu
