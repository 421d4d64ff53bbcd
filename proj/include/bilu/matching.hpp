#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "bilu/sparse.hpp"

namespace bilu {

/// No perfect matching exists; `columns` can only reach the (fewer) `rows`.
class StructuralSingularityError : public std::runtime_error {
 public:
  StructuralSingularityError(const std::string& what, std::vector<index_t> columns, std::vector<index_t> rows)
      : std::runtime_error(what), columns(std::move(columns)), rows(std::move(rows)) {}
  std::vector<index_t> columns;
  std::vector<index_t> rows;
};

/*
 * Maximum product transversal with its dual scalings. With
 * Ahat = D_l * A * D_r * Pi every stored entry satisfies |ahat_ij| <= 1 and the
 * diagonal of Ahat consists of the matched entries with |ahat_ii| = 1.
 *
 * perm[i] is the column matched to row i. row_dual/col_dual are the
 * potentials u, v of the assignment problem on costs
 * c_ij = log(max_k |a_kj|) - log|a_ij|.
 */
struct MatchingResult {
  Permutation perm;
  DiagonalScaling row_scaling;
  DiagonalScaling col_scaling;
  std::vector<double> row_dual;
  std::vector<double> col_dual;
};

MatchingResult max_weight_matching(const SparseMatrix& a);

/// Cost used by the matching for entry a_ij, or +inf for an exact zero.
double matching_cost(double a_ij, double col_max);

struct MatchingReport {
  double offdiag_violation = 0.0;   // max(|ahat_ij| - 1, 0)
  double diag_violation = 0.0;      // max | |ahat_ii| - 1 |
  bool pass = false;
};

MatchingReport verify_matching(const SparseMatrix& a, const MatchingResult& m, double tol = 1e-8);

}  // namespace bilu
