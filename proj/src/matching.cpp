#include "bilu/matching.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

namespace bilu {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTiny = 1e-300;

std::string format_set(const std::vector<index_t>& s) {
  std::ostringstream os;
  os << '{';
  for (std::size_t k = 0; k < s.size() && k < 16; ++k) os << (k ? "," : "") << s[k];
  if (s.size() > 16) os << ",...";
  os << '}';
  return os.str();
}

}  // namespace

double matching_cost(double a_ij, double col_max) {
  if (a_ij == 0.0) return kInf;
  return std::log(std::max(col_max, kTiny)) - std::log(std::max(std::abs(a_ij), kTiny));
}

MatchingResult max_weight_matching(const SparseMatrix& a) {
  if (!a.square()) throw DimensionError("matching needs a square matrix");
  const index_t n = a.rows();

  // Cost graph in CSC form without exact zeros.
  std::vector<index_t> ptr(static_cast<std::size_t>(n) + 1, 0);
  std::vector<index_t> idx;
  std::vector<double> cost;
  std::vector<double> col_max(n, 0.0);
  idx.reserve(a.nnz());
  cost.reserve(a.nnz());
  std::vector<char> row_seen(n, 0);
  for (index_t j = 0; j < n; ++j) {
    for (double v : a.col_values(j)) col_max[j] = std::max(col_max[j], std::abs(v));
    if (col_max[j] == 0.0)
      throw StructuralSingularityError("structurally singular: column " + std::to_string(j) + " has no nonzero entry",
                                       {j}, {});
    auto rows = a.col_rows(j);
    auto vals = a.col_values(j);
    for (std::size_t p = 0; p < rows.size(); ++p) {
      if (vals[p] == 0.0) continue;
      idx.push_back(rows[p]);
      cost.push_back(matching_cost(vals[p], col_max[j]));
      row_seen[rows[p]] = 1;
    }
    ptr[j + 1] = static_cast<index_t>(idx.size());
  }
  for (index_t i = 0; i < n; ++i)
    if (!row_seen[i])
      throw StructuralSingularityError("structurally singular: row " + std::to_string(i) + " has no nonzero entry", {},
                                       {i});

  // Feasible initial duals: v_j = min_i c_ij, u_i = min_j (c_ij - v_j).
  std::vector<double> u(n, kInf), v(n, kInf);
  for (index_t j = 0; j < n; ++j)
    for (index_t p = ptr[j]; p < ptr[j + 1]; ++p) v[j] = std::min(v[j], cost[p]);
  for (index_t j = 0; j < n; ++j)
    for (index_t p = ptr[j]; p < ptr[j + 1]; ++p) u[idx[p]] = std::min(u[idx[p]], cost[p] - v[j]);

  std::vector<index_t> row_to_col(n, -1), col_to_row(n, -1);
  // Cheap assignment along tight edges.
  for (index_t j = 0; j < n; ++j) {
    for (index_t p = ptr[j]; p < ptr[j + 1]; ++p) {
      const index_t i = idx[p];
      if (row_to_col[i] < 0 && cost[p] - u[i] - v[j] <= 0.0) {
        row_to_col[i] = j;
        col_to_row[j] = i;
        break;
      }
    }
  }

  // Shortest augmenting paths (Dijkstra on reduced costs) for the rest.
  std::vector<double> dist(n, kInf);
  std::vector<index_t> pred(n, -1);
  std::vector<char> done(n, 0);
  std::vector<index_t> touched, finalized;
  using Entry = std::pair<double, index_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  for (index_t j0 = 0; j0 < n; ++j0) {
    if (col_to_row[j0] >= 0) continue;
    touched.clear();
    finalized.clear();
    heap = {};
    index_t free_row = -1;
    double found = kInf;

    index_t j = j0;
    double dj = 0.0;
    while (true) {
      for (index_t p = ptr[j]; p < ptr[j + 1]; ++p) {
        const index_t i = idx[p];
        if (done[i]) continue;
        const double nd = dj + std::max(0.0, cost[p] - u[i] - v[j]);
        if (nd < dist[i]) {
          if (dist[i] == kInf) touched.push_back(i);
          dist[i] = nd;
          pred[i] = j;
          heap.emplace(nd, i);
        }
      }
      index_t next = -1;
      while (!heap.empty()) {
        auto [d, i] = heap.top();
        heap.pop();
        if (done[i] || d > dist[i]) continue;
        next = i;
        break;
      }
      if (next < 0) break;
      if (row_to_col[next] < 0) {
        free_row = next;
        found = dist[next];
        break;
      }
      done[next] = 1;
      finalized.push_back(next);
      j = row_to_col[next];
      dj = dist[next];
    }

    if (free_row < 0) {
      std::vector<index_t> cols{j0}, rows;
      for (index_t i : finalized) {
        rows.push_back(i);
        cols.push_back(row_to_col[i]);
      }
      std::sort(cols.begin(), cols.end());
      std::sort(rows.begin(), rows.end());
      throw StructuralSingularityError("structurally singular: columns " + format_set(cols) + " only reach rows " +
                                           format_set(rows),
                                       std::move(cols), std::move(rows));
    }

    // Potential update keeps reduced costs nonnegative and makes the path tight.
    v[j0] += found;
    for (index_t i : finalized) {
      const double delta = found - dist[i];
      u[i] -= delta;
      v[row_to_col[i]] += delta;
    }

    index_t i = free_row;
    while (true) {
      const index_t jc = pred[i];
      const index_t prev = col_to_row[jc];
      col_to_row[jc] = i;
      row_to_col[i] = jc;
      if (jc == j0) break;
      i = prev;
    }

    for (index_t t : touched) {
      dist[t] = kInf;
      done[t] = 0;
    }
  }

  std::vector<double> dl(n), dr(n);
  for (index_t i = 0; i < n; ++i) dl[i] = std::exp(u[i]);
  for (index_t j = 0; j < n; ++j) dr[j] = std::exp(v[j]) / col_max[j];
  return {Permutation(row_to_col), DiagonalScaling(std::move(dl)), DiagonalScaling(std::move(dr)), std::move(u),
          std::move(v)};
}

MatchingReport verify_matching(const SparseMatrix& a, const MatchingResult& m, double tol) {
  const SparseMatrix ahat = apply_matching_transform(a, m.row_scaling, m.col_scaling, m.perm);
  MatchingReport r;
  for (index_t j = 0; j < ahat.cols(); ++j) {
    auto rows = ahat.col_rows(j);
    auto vals = ahat.col_values(j);
    bool has_diag = false;
    for (std::size_t p = 0; p < rows.size(); ++p) {
      const double mag = std::abs(vals[p]);
      r.offdiag_violation = std::max(r.offdiag_violation, std::max(mag - 1.0, 0.0));
      if (rows[p] == j) {
        has_diag = true;
        r.diag_violation = std::max(r.diag_violation, std::abs(mag - 1.0));
      }
    }
    if (!has_diag) r.diag_violation = std::max(r.diag_violation, 1.0);
  }
  r.pass = r.offdiag_violation <= tol && r.diag_violation <= tol;
  return r;
}

}  // namespace bilu
