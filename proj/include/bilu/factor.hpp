#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bilu/blocking.hpp"
#include "bilu/dense.hpp"
#include "bilu/sparse.hpp"

namespace bilu {

/// A diagonal block stayed singular after every perturbation attempt.
class BreakdownError : public std::runtime_error {
 public:
  BreakdownError(const std::string& what, index_t block) : std::runtime_error(what), block(block) {}
  index_t block;
};

/// Pattern sizes entering the aggregation test of blocks k-1 (p columns) and k (q columns).
struct MergeCounts {
  index_t p = 0, q = 0;
  index_t r = 0, s = 0, t = 0;     // nonzero rows of L(k,k-1), L(k+1:,k-1), L(k+1:,k)
  index_t r2 = 0, s2 = 0, t2 = 0;  // nonzero cols of U(k-1,k), U(k-1,k+1:), U(k,k+1:)
  index_t u = 0, v = 0;            // rows / cols of the merged off-diagonal parts

  long long mu() const {
    return static_cast<long long>(p) * (p + r + s + r2 + s2) + static_cast<long long>(q) * (q + t + t2);
  }
  long long nu() const { return static_cast<long long>(p + q) * (p + q + u + v); }
};

/// nu <= 1.2 mu or nu <= mu + 2 (p + q), with p + q capped at max_block.
bool aggregate_test(const MergeCounts& c, index_t max_block = 256);

struct FactorConfig {
  double drop_tau = 1e-2;  // 0 disables dropping
  bool aggregate = false;
  double perturb_tau = 1e-2;
  double perturb_rho = 1e-1;
  bool perturb = true;
  double cond_threshold = 1e12;
  index_t max_block = 256;
  /// Replaces aggregate_test when set (and `aggregate` is on).
  std::function<bool(const MergeCounts&)> merge_predicate;
  /// Verify the traversal lists after every step (throws std::logic_error).
  bool check_invariants = false;
};

/// One block column of L (or block row of U): sorted scalar indices + dense values.
struct HybridBlock {
  std::vector<index_t> indices;
  DenseBlock values;  // L: indices.size() x m;  U: m x indices.size()
};

struct PerturbResult {
  DenseBlock block;
  index_t count = 0;
};

/*
 * Shifts entries of a singular or ill-conditioned diagonal block. Every
 * flagged column j has its largest entry d (or the diagonal, when
 * 2|d_jj| >= |d|) replaced by d (1 + rho delta_j) + sign(d) tau alpha, where
 * delta_j is the column's largest modulus and sign(0) = +1. Rows are handled
 * the same way afterwards.
 */
PerturbResult perturb_diagonal(const DenseBlock& d, double alpha, double tau, double rho,
                               std::span<const index_t> flagged_cols, std::span<const index_t> flagged_rows);

/// Flags zero columns/rows, plus the small-pivot columns/rows when the block is singular or ill-conditioned.
PerturbResult perturb_diagonal(const DenseBlock& d, double alpha, double tau, double rho,
                               double cond_threshold = 1e12);

/*
 * Block incomplete factorization Acheck ~ L * Dinv^{-1} * U.
 *
 * L is unit block lower triangular; lower()[k] holds block column k below the
 * diagonal. dinv()[k] is the inverse of the k-th pivot block. upper()[k]
 * holds block row k right of the diagonal multiplied by the pivot block, i.e.
 * the unit upper factor is dinv()[k] * upper()[k].values (see unit_upper).
 */
class BlockFactorization {
 public:
  index_t dim() const { return partition_.dim(); }
  const BlockPartition& partition() const { return partition_; }
  std::span<const HybridBlock> lower() const { return lower_; }
  std::span<const HybridBlock> upper() const { return upper_; }
  std::span<const DenseBlock> dinv() const { return dinv_; }
  const PreprocessResult& preprocess() const { return preprocess_; }
  index_t perturbation_count() const { return perturbations_; }
  double drop_tau() const { return drop_tau_; }

  DenseBlock unit_upper(index_t k) const { return multiply(dinv_[k], upper_[k].values); }
  /// Stored entries of L + D + U (dense blocks counted in full).
  std::size_t nnz() const;
  /// Bytes of index and value arrays.
  std::size_t memory_bytes() const;

  /// Applies (L Dinv^{-1} U)^{-1} in the preprocessed index space.
  void solve_in_place(std::span<double> x) const;
  /// Applies the full preconditioner, including scalings and permutations.
  void apply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> apply(std::span<const double> x) const;

  /// Replaces the preprocessing (factorize() leaves it at identity).
  void set_preprocess(PreprocessResult p) { preprocess_ = std::move(p); }

 private:
  friend BlockFactorization factorize(const SparseMatrix&, const BlockPartition&, const FactorConfig&);

  BlockPartition partition_;
  std::vector<HybridBlock> lower_;
  std::vector<HybridBlock> upper_;
  std::vector<DenseBlock> dinv_;
  PreprocessResult preprocess_;
  index_t perturbations_ = 0;
  double drop_tau_ = 0.0;
};

BlockFactorization factorize(const SparseMatrix& a, const BlockPartition& partition, const FactorConfig& config = {});

std::vector<double> apply_preconditioner(const BlockFactorization& f, std::span<const double> x);

/// Dense L * Dinv^{-1} * U for testing on small matrices (column-major n x n).
std::vector<double> reconstruct_dense(const BlockFactorization& f);

/// Text dump: partition sizes, then per block its L indices/values, pivot inverse and U indices/values.
void write_factor_dump(std::ostream& out, const BlockFactorization& f);

}  // namespace bilu
