#include "bilu/blocking.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace bilu {

// ---------------------------------------------------------------------------
// Cosine blocking

namespace {

struct CountStats {
  double mean = 0.0;
  double stddev = 0.0;
};

CountStats count_stats(const std::vector<index_t>& counts) {
  CountStats st;
  if (counts.empty()) return st;
  for (index_t c : counts) st.mean += c;
  st.mean /= static_cast<double>(counts.size());
  for (index_t c : counts) st.stddev += (c - st.mean) * (c - st.mean);
  st.stddev = std::sqrt(st.stddev / static_cast<double>(counts.size()));
  return st;
}

}  // namespace

CosineBlocking cosine_blocks(const SparseMatrix& a, const CosineConfig& config) {
  if (!a.square()) throw DimensionError("cosine blocking needs a square matrix");
  if (config.tau_cos < 0.0 || config.tau_cos > 1.0) throw std::invalid_argument("tau_cos must lie in [0, 1]");
  const index_t n = a.rows();
  const SparseMatrix rows = a.transpose();  // column i of `rows` is row i of a

  std::vector<index_t> row_nnz(n), col_nnz(n);
  for (index_t i = 0; i < n; ++i) {
    row_nnz[i] = static_cast<index_t>(rows.col_rows(i).size());
    col_nnz[i] = static_cast<index_t>(a.col_rows(i).size());
  }
  const CountStats rs = count_stats(row_nnz), cs = count_stats(col_nnz);
  const double row_limit = rs.mean + config.dense_filter_sigmas * rs.stddev;
  const double col_limit = cs.mean + config.dense_filter_sigmas * cs.stddev;
  std::vector<char> skip_row(n), skip_col(n);
  for (index_t i = 0; i < n; ++i) {
    skip_row[i] = row_nnz[i] > row_limit;
    skip_col[i] = col_nnz[i] > col_limit;
  }
  // Pattern sizes restricted to the columns that take part.
  std::vector<index_t> nz(n, 0);
  for (index_t i = 0; i < n; ++i)
    for (index_t c : rows.col_rows(i))
      if (!skip_col[c]) ++nz[i];

  std::vector<index_t> group(n, -1);
  std::vector<index_t> overlap(n, 0);
  std::vector<index_t> candidates;
  std::vector<index_t> order;
  std::vector<index_t> sizes;
  order.reserve(n);
  for (index_t i = 0; i < n; ++i) {
    if (group[i] >= 0) continue;
    const index_t g = static_cast<index_t>(sizes.size());
    group[i] = g;
    order.push_back(i);
    index_t size = 1;
    if (!skip_row[i]) {
      // Row i of the upper triangle of Ahat * Ahat^T, unassigned rows only.
      candidates.clear();
      for (index_t c : rows.col_rows(i)) {
        if (skip_col[c]) continue;
        for (index_t j : a.col_rows(c)) {
          if (j <= i || group[j] >= 0 || skip_row[j]) continue;
          if (overlap[j]++ == 0) candidates.push_back(j);
        }
      }
      std::sort(candidates.begin(), candidates.end());
      for (index_t j : candidates) {
        const double common = overlap[j];
        overlap[j] = 0;
        if (common * common >= config.tau_cos * static_cast<double>(nz[i]) * static_cast<double>(nz[j])) {
          group[j] = g;
          order.push_back(j);
          ++size;
        }
      }
    }
    sizes.push_back(size);
  }
  return {BlockPartition(std::move(sizes)), Permutation(std::move(order))};
}

// ---------------------------------------------------------------------------
// Fill-reducing ordering

namespace {

Permutation native_amd(const SparseMatrix& b) {
  const index_t n = b.rows();
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> m(n, n);
  std::vector<Eigen::Triplet<double, int>> trips;
  trips.reserve(b.nnz());
  for (index_t j = 0; j < n; ++j)
    for (index_t i : b.col_rows(j)) trips.emplace_back(i, j, 1.0);
  m.setFromTriplets(trips.begin(), trips.end());
  Eigen::AMDOrdering<int> amd;
  Eigen::AMDOrdering<int>::PermutationType perm;
  amd(m, perm);
  // Eigen returns new-to-old indices, the convention of Permutation.
  return Permutation(std::vector<index_t>(perm.indices().data(), perm.indices().data() + n));
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

Permutation external_ordering(const SparseMatrix& b, const std::string& command) {
  static std::atomic<int> counter{0};
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();
  const std::string stem = "bilu_order_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
  const fs::path in = dir / (stem + ".mtx");
  const fs::path out = dir / (stem + ".perm");
  write_matrix_market_pattern(in, b);
  const std::string cmd = command + " " + shell_quote(in.string()) + " " + shell_quote(out.string());
  const int rc = std::system(cmd.c_str());
  std::error_code ec;
  fs::remove(in, ec);
  if (rc != 0) {
    fs::remove(out, ec);
    throw std::runtime_error("ordering command failed (exit status " + std::to_string(rc) + "): " + command);
  }
  std::ifstream is(out);
  std::vector<index_t> map;
  index_t v;
  while (is >> v) map.push_back(v);
  const bool clean_eof = is.eof();
  is.close();
  fs::remove(out, ec);
  if (!clean_eof || static_cast<index_t>(map.size()) != b.rows())
    throw std::runtime_error("ordering command produced an invalid permutation file");
  return Permutation(std::move(map));
}

}  // namespace

Permutation fill_reducing_ordering(const SparseMatrix& b, const OrderingConfig& config) {
  if (!b.square()) throw DimensionError("ordering needs a square matrix");
  if (b.rows() <= 1) return Permutation::identity(b.rows());
  if (!config.external_command.empty()) return external_ordering(b, config.external_command);
  return native_amd(b);
}

// ---------------------------------------------------------------------------
// ILU(1, tau) simulation

namespace {

/// Reusable marker-based evaluation of the simulated pattern of step k.
class StepSimulator {
 public:
  StepSimulator(const SparseMatrix& a, const SparseMatrix& a_rows, double tau, double alpha_max)
      : a_(a), rows_(a_rows), tau_(tau), n_(a.rows()), diag_(n_, 0.0), mark_col_(n_, -1), mark_row_(n_, -1) {
    for (index_t j = 0; j < n_; ++j) diag_[j] = std::abs(a.at(j, j));
    degenerate_ = tau * alpha_max;
  }

  double pivot(index_t k) const { return diag_[k] != 0.0 ? diag_[k] : degenerate_; }

  /// Fills col_hat/col_tilde (i >= k) and row_hat/row_tilde (j >= k).
  void run(index_t k, PatternEstimate& out) {
    out.i_hat.clear();
    out.j_hat.clear();
    out.i_tilde.clear();
    out.j_tilde.clear();
    const double akk = pivot(k);
    const double thr = tau_ * akk;

    auto col_rows = a_.col_rows(k);
    auto col_vals = a_.col_values(k);
    for (std::size_t p = 0; p < col_rows.size(); ++p) {
      const index_t i = col_rows[p];
      if (i >= k && std::abs(col_vals[p]) >= thr) {
        out.i_hat.push_back(i);
        mark_col_[i] = k;
      }
    }
    out.i_tilde = out.i_hat;
    // Level-1 fill l_ik from a_ij * a_jk, j < k < i.
    for (std::size_t p = 0; p < col_rows.size(); ++p) {
      const index_t j = col_rows[p];
      if (j >= k) break;
      const double ajk = std::abs(col_vals[p]);
      if (ajk == 0.0) continue;
      const double bound = tau_ * pivot(j) * akk;
      auto jr = a_.col_rows(j);
      auto jv = a_.col_values(j);
      for (std::size_t q = 0; q < jr.size(); ++q) {
        const index_t i = jr[q];
        if (i <= k || mark_col_[i] == k) continue;
        if (std::abs(jv[q]) * ajk >= bound) {
          mark_col_[i] = k;
          out.i_tilde.push_back(i);
        }
      }
    }

    auto row_cols = rows_.col_rows(k);
    auto row_vals = rows_.col_values(k);
    for (std::size_t p = 0; p < row_cols.size(); ++p) {
      const index_t j = row_cols[p];
      if (j >= k && std::abs(row_vals[p]) >= thr) {
        out.j_hat.push_back(j);
        mark_row_[j] = k;
      }
    }
    out.j_tilde = out.j_hat;
    // Level-1 fill u_kj from a_ki * a_ij, i < k < j.
    for (std::size_t p = 0; p < row_cols.size(); ++p) {
      const index_t i = row_cols[p];
      if (i >= k) break;
      const double aki = std::abs(row_vals[p]);
      if (aki == 0.0) continue;
      const double bound = tau_ * pivot(i) * akk;
      auto ir = rows_.col_rows(i);
      auto iv = rows_.col_values(i);
      for (std::size_t q = 0; q < ir.size(); ++q) {
        const index_t j = ir[q];
        if (j <= k || mark_row_[j] == k) continue;
        if (aki * std::abs(iv[q]) >= bound) {
          mark_row_[j] = k;
          out.j_tilde.push_back(j);
        }
      }
    }
    std::sort(out.i_tilde.begin(), out.i_tilde.end());
    std::sort(out.j_tilde.begin(), out.j_tilde.end());
  }

 private:
  const SparseMatrix& a_;
  const SparseMatrix& rows_;
  double tau_;
  index_t n_;
  std::vector<double> diag_;
  double degenerate_ = 0.0;
  std::vector<index_t> mark_col_, mark_row_;
};

/// Off-diagonal index sets of one atomic unit [begin, end).
struct UnitSets {
  std::vector<index_t> lower;  // rows >= end (L side)
  std::vector<index_t> upper;  // cols >= end (U side)
  long long raw_lower = 0;
  long long raw_upper = 0;
};

}  // namespace

PatternEstimate estimate_step_pattern(const SparseMatrix& a, const SparseMatrix& a_rows, index_t k, double tau,
                                      double alpha_max) {
  StepSimulator sim(a, a_rows, tau, alpha_max);
  PatternEstimate out;
  sim.run(k, out);
  return out;
}

bool ilu1t_accept(long long f_next, long long scalar_next, index_t l_next) {
  return 3 * f_next <= 4 * scalar_next || f_next <= scalar_next + 4LL * l_next;
}

BlockPartition ilu1t_block_guess(const SparseMatrix& a, const BlockPartition& partition, const Ilu1tConfig& config) {
  if (!a.square() || partition.dim() != a.rows()) throw DimensionError("ILU(1,tau): partition does not match matrix");
  const index_t n = a.rows();
  const index_t nb = partition.num_blocks();
  if (nb == 0) return partition;
  const SparseMatrix a_rows = a.transpose();
  StepSimulator sim(a, a_rows, config.tau, a.max_abs());

  std::vector<index_t> unit_mark_l(n, -1), unit_mark_u(n, -1);
  PatternEstimate step;
  auto unit_sets = [&](index_t b) {
    UnitSets u;
    const index_t lo = partition.begin(b), hi = partition.end(b);
    for (index_t k = lo; k < hi; ++k) {
      sim.run(k, step);
      for (index_t i : step.i_tilde)
        if (i >= hi && unit_mark_l[i] != b) {
          unit_mark_l[i] = b;
          u.lower.push_back(i);
        }
      for (index_t j : step.j_tilde)
        if (j >= hi && unit_mark_u[j] != b) {
          unit_mark_u[j] = b;
          u.upper.push_back(j);
        }
    }
    if (config.count_sets == CountSets::raw) {
      // Unfiltered original pattern below/right of the unit.
      std::vector<index_t> seen;
      for (index_t k = lo; k < hi; ++k)
        for (index_t i : a.col_rows(k))
          if (i >= hi) seen.push_back(i);
      std::sort(seen.begin(), seen.end());
      u.raw_lower = std::unique(seen.begin(), seen.end()) - seen.begin();
      seen.clear();
      for (index_t k = lo; k < hi; ++k)
        for (index_t j : a_rows.col_rows(k))
          if (j >= hi) seen.push_back(j);
      std::sort(seen.begin(), seen.end());
      u.raw_upper = std::unique(seen.begin(), seen.end()) - seen.begin();
    } else {
      u.raw_lower = static_cast<long long>(u.lower.size());
      u.raw_upper = static_cast<long long>(u.upper.size());
    }
    return u;
  };
  auto unit_scalar = [](const UnitSets& u, index_t w) { return (u.raw_lower + u.raw_upper + w) * w; };

  // Current aggregated block: rows in R / cols in S are marked with `stamp`.
  std::vector<index_t> in_r(n, -1), in_s(n, -1);
  index_t stamp = 0;
  AggregationBudget budget;
  long long scalar = 0;
  std::vector<index_t> sizes;

  auto start_block = [&](index_t b, const UnitSets& u) {
    ++stamp;
    const index_t w = partition.size(b);
    for (index_t i : u.lower) in_r[i] = stamp;
    for (index_t j : u.upper) in_s[j] = stamp;
    budget.l = w;
    budget.r = static_cast<index_t>(u.lower.size());
    budget.s = static_cast<index_t>(u.upper.size());
    budget.f = static_cast<long long>(budget.r + budget.s + w) * w;
    scalar = unit_scalar(u, w);
    budget.c = budget.f - scalar;
  };

  start_block(0, unit_sets(0));
  for (index_t b = 1; b < nb; ++b) {
    const UnitSets u = unit_sets(b);
    const index_t lo = partition.begin(b), hi = partition.end(b), w = hi - lo;
    bool merge = config.aggregate && budget.l + w <= config.max_block;
    index_t r_next = 0, s_next = 0;
    long long f_next = 0, scalar_next = 0;
    if (merge) {
      index_t r_inside = 0, s_inside = 0;
      for (index_t i = lo; i < hi; ++i) {
        r_inside += in_r[i] == stamp;
        s_inside += in_s[i] == stamp;
      }
      r_next = budget.r - r_inside;
      s_next = budget.s - s_inside;
      for (index_t i : u.lower) r_next += in_r[i] != stamp;
      for (index_t j : u.upper) s_next += in_s[j] != stamp;
      const index_t l_next = budget.l + w;
      f_next = static_cast<long long>(r_next + s_next + l_next) * l_next;
      scalar_next = scalar + unit_scalar(u, w);
      merge = ilu1t_accept(f_next, scalar_next, l_next);
    }
    if (merge) {
      for (index_t i = lo; i < hi; ++i) {
        if (in_r[i] == stamp) in_r[i] = -1;
        if (in_s[i] == stamp) in_s[i] = -1;
      }
      for (index_t i : u.lower) in_r[i] = stamp;
      for (index_t j : u.upper) in_s[j] = stamp;
      budget.l += w;
      budget.r = r_next;
      budget.s = s_next;
      budget.f = f_next;
      scalar = scalar_next;
      budget.c = budget.f - scalar;
    } else {
      sizes.push_back(budget.l);
      start_block(b, u);
    }
  }
  sizes.push_back(budget.l);
  return BlockPartition(std::move(sizes));
}

// ---------------------------------------------------------------------------
// Pipeline

PipelineFlags parse_pipeline_flags(const std::string& tag) {
  PipelineFlags f;
  if (tag.size() < 2) throw std::invalid_argument("method tag needs at least two characters: '" + tag + "'");
  if (tag[0] == 'c')
    f.cosine = true;
  else if (tag[0] != '-')
    throw std::invalid_argument("bad method tag '" + tag + "'");
  if (tag[1] == 'i')
    f.ilu1t = true;
  else if (tag[1] != '-')
    throw std::invalid_argument("bad method tag '" + tag + "'");
  return f;
}

PreprocessResult PreprocessResult::identity(index_t n) {
  const Permutation id = Permutation::identity(n);
  return {DiagonalScaling::identity(n), DiagonalScaling::identity(n), id, id, id, id, id};
}

PipelineResult build_pipeline_partition(const SparseMatrix& a, const PipelineConfig& config) {
  if (!a.square()) throw DimensionError("pipeline needs a square matrix");
  const index_t n = a.rows();
  PreprocessResult pre = PreprocessResult::identity(n);

  SparseMatrix ahat = a;
  if (config.matching) {
    MatchingResult m = max_weight_matching(a);
    ahat = apply_matching_transform(a, m.row_scaling, m.col_scaling, m.perm);
    pre.row_scaling = std::move(m.row_scaling);
    pre.col_scaling = std::move(m.col_scaling);
    pre.matching_perm = std::move(m.perm);
  }

  BlockPartition partition = BlockPartition::scalar(n);
  SparseMatrix atilde;
  if (config.flags.cosine) {
    CosineBlocking cb = cosine_blocks(ahat, config.cosine);
    partition = std::move(cb.partition);
    pre.cosine_perm = std::move(cb.perm);
    atilde = symmetric_permute(ahat, pre.cosine_perm);
  } else {
    atilde = std::move(ahat);
  }
  BlockPartition cosine_partition = partition;

  const SparseMatrix companion = compress_companion(atilde, partition);
  const Permutation block_perm = fill_reducing_ordering(companion, config.ordering);
  ExpandedPermutation ex = expand_permutation(block_perm, partition);
  pre.ordering_perm = std::move(ex.perm);
  partition = std::move(ex.partition);
  SparseMatrix acheck = symmetric_permute(atilde, pre.ordering_perm);

  if (config.flags.ilu1t) {
    Ilu1tConfig ic = config.ilu1t;
    ic.tau = config.tau;
    partition = ilu1t_block_guess(acheck, partition, ic);
  }

  pre.row_perm = pre.cosine_perm.then(pre.ordering_perm);
  pre.col_perm = pre.matching_perm.then(pre.row_perm);
  return {std::move(acheck), std::move(partition), std::move(pre), std::move(cosine_partition)};
}

}  // namespace bilu
