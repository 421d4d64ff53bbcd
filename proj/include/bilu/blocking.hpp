#pragma once

#include <string>
#include <vector>

#include "bilu/matching.hpp"
#include "bilu/sparse.hpp"

namespace bilu {

struct CosineConfig {
  double tau_cos = 0.8;
  /// Rows/columns with more than mean + sigmas * stddev nonzeros are left out.
  double dense_filter_sigmas = 2.0;
};

struct CosineBlocking {
  BlockPartition partition;
  Permutation perm;  // Q: Q^T Ahat Q keeps every group contiguous
};

/// Groups rows whose patterns satisfy nz(ai & aj)^2 >= tau * nz(ai) * nz(aj).
CosineBlocking cosine_blocks(const SparseMatrix& a, const CosineConfig& config = {});

/*
 * Fill-reducing symmetric ordering of the pattern of B + B^T.
 *
 * With an empty `external_command` the native approximate minimum degree
 * ordering is used. Otherwise the pattern is written to a temporary Matrix
 * Market file, `<external_command> <in> <out>` is executed and `out` must
 * hold a whitespace separated 0-based permutation.
 */
struct OrderingConfig {
  std::string external_command;
};

Permutation fill_reducing_ordering(const SparseMatrix& b, const OrderingConfig& config = {});

enum class CountSets { filtered, raw };

struct Ilu1tConfig {
  double tau = 1e-2;
  index_t max_block = 256;
  bool aggregate = true;
  CountSets count_sets = CountSets::filtered;
};

/// Threshold/level-1 pattern of one step, indices >= the step.
struct PatternEstimate {
  std::vector<index_t> i_hat, j_hat;      // filtered original pattern
  std::vector<index_t> i_tilde, j_tilde;  // plus simulated level-1 fill
};

/// Simulated pattern of column k of L and row k of U.
PatternEstimate estimate_step_pattern(const SparseMatrix& a, const SparseMatrix& a_rows, index_t k, double tau,
                                      double alpha_max);

/// Running state of the block-growing recurrence (f = (r+s+l)*l, c = wasted zeros).
struct AggregationBudget {
  index_t l = 0;
  index_t r = 0;
  index_t s = 0;
  long long f = 0;
  long long c = 0;
};

/// Decides whether a block of current footprint f_next may absorb the next step.
bool ilu1t_accept(long long f_next, long long scalar_next, index_t l_next);

/// Enlarges `partition` (never splitting blocks) by simulating ILU(1, tau).
BlockPartition ilu1t_block_guess(const SparseMatrix& a, const BlockPartition& partition, const Ilu1tConfig& config = {});

struct PipelineFlags {
  bool cosine = false;
  bool ilu1t = false;
};

/// Parses the two leading characters of a method tag such as "ci", "c--" or "-ip".
PipelineFlags parse_pipeline_flags(const std::string& tag);

struct PipelineConfig {
  PipelineFlags flags;
  double tau = 1e-2;  // ILU(1, tau) threshold
  CosineConfig cosine;
  OrderingConfig ordering;
  Ilu1tConfig ilu1t;  // tau inside is overridden by `tau`
  bool matching = true;
};

/*
 * Every permutation and scaling collected while preprocessing. The
 * preprocessed matrix is Acheck(i, j) = dl[r_i] * A(r_i, c_j) * dr[c_j] with
 * r = row_perm = Q P and c = col_perm = Pi Q P.
 */
struct PreprocessResult {
  DiagonalScaling row_scaling;  // D_l
  DiagonalScaling col_scaling;  // D_r
  Permutation matching_perm;    // Pi
  Permutation cosine_perm;      // Q
  Permutation ordering_perm;    // P
  Permutation row_perm;         // P_l
  Permutation col_perm;         // P_r

  static PreprocessResult identity(index_t n);
};

struct PipelineResult {
  SparseMatrix matrix;  // Acheck
  BlockPartition partition;
  PreprocessResult preprocess;
  BlockPartition cosine_partition;  // before reordering/ILU(1,tau); scalar without cosine
};

PipelineResult build_pipeline_partition(const SparseMatrix& a, const PipelineConfig& config);

}  // namespace bilu
