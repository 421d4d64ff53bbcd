#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bilu/sparse.hpp"

namespace bilu {

struct GmresConfig {
  index_t restart = 30;
  double rel_tol = 1e-6;
  index_t max_outer = 100;
};

struct SolveStats {
  index_t iterations = 0;  // Arnoldi steps over all cycles
  bool converged = false;
  double final_relres = 0.0;
  /// Relative residuals: the true one at every cycle start, then the in-cycle estimates.
  /// The last entry is the final true residual.
  std::vector<double> residual_history;
  /// Index into residual_history where each cycle starts.
  std::vector<std::size_t> cycle_starts;
};

struct GmresResult {
  std::vector<double> x;
  SolveStats stats;
};

/// y = M^{-1} x.
using PreconditionerFn = std::function<void(std::span<const double>, std::span<double>)>;

/// Restarted, right-preconditioned GMRES with x0 = 0. An empty `precond` means no preconditioning.
GmresResult gmres(const SparseMatrix& a, std::span<const double> b, const PreconditionerFn& precond = {},
                  const GmresConfig& config = {});

}  // namespace bilu
