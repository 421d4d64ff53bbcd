#include "bilu/factor.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace bilu {

bool aggregate_test(const MergeCounts& c, index_t max_block) {
  if (c.p + c.q > max_block) return false;
  const long long mu = c.mu(), nu = c.nu();
  // nu <= 1.2 mu, kept in integers: 5 nu <= 6 mu.
  return 5 * nu <= 6 * mu || nu <= mu + 2LL * (c.p + c.q);
}

// ---------------------------------------------------------------------------
// Diagonal perturbation

namespace {

double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

std::vector<index_t> small_pivots(const LuFactors& f, double cond_threshold) {
  const index_t n = f.lu.rows();
  double pmax = 0.0;
  for (index_t j = 0; j < n; ++j) pmax = std::max(pmax, std::abs(f.lu(j, j)));
  const double limit = pmax / std::sqrt(cond_threshold);
  std::vector<index_t> out;
  index_t argmin = 0;
  for (index_t j = 0; j < n; ++j) {
    const double pj = std::abs(f.lu(j, j));
    if (pj <= limit) out.push_back(j);
    if (pj < std::abs(f.lu(argmin, argmin))) argmin = j;
  }
  if (out.empty()) out.push_back(argmin);
  return out;
}

bool needs_attention(const DenseBlock& d, const LuFactors& f, double cond_threshold) {
  if (f.singular) return true;
  return !(cond_estimate_1norm(d, f) <= cond_threshold);
}

DenseBlock transposed(const DenseBlock& d) {
  DenseBlock t(d.cols(), d.rows());
  for (index_t j = 0; j < d.cols(); ++j)
    for (index_t i = 0; i < d.rows(); ++i) t(j, i) = d(i, j);
  return t;
}

}  // namespace

PerturbResult perturb_diagonal(const DenseBlock& d, double alpha, double tau, double rho,
                               std::span<const index_t> flagged_cols, std::span<const index_t> flagged_rows) {
  if (d.rows() != d.cols()) throw DimensionError("perturb_diagonal: block must be square");
  PerturbResult res{d, 0};
  DenseBlock& b = res.block;
  const index_t m = b.rows();
  for (index_t j : flagged_cols) {
    index_t kmax = 0;
    double delta = 0.0;
    for (index_t i = 0; i < m; ++i)
      if (std::abs(b(i, j)) > delta) {
        delta = std::abs(b(i, j));
        kmax = i;
      }
    const index_t target = 2.0 * std::abs(b(j, j)) >= std::abs(b(kmax, j)) ? j : kmax;
    const double x = b(target, j);
    b(target, j) = x * (1.0 + rho * delta) + sign_of(x) * tau * alpha;
    ++res.count;
  }
  for (index_t i : flagged_rows) {
    index_t kmax = 0;
    double delta = 0.0;
    for (index_t j = 0; j < m; ++j)
      if (std::abs(b(i, j)) > delta) {
        delta = std::abs(b(i, j));
        kmax = j;
      }
    const index_t target = 2.0 * std::abs(b(i, i)) >= std::abs(b(i, kmax)) ? i : kmax;
    const double x = b(i, target);
    b(i, target) = x * (1.0 + rho * delta) + sign_of(x) * tau * alpha;
    ++res.count;
  }
  return res;
}

PerturbResult perturb_diagonal(const DenseBlock& d, double alpha, double tau, double rho, double cond_threshold) {
  if (d.rows() != d.cols()) throw DimensionError("perturb_diagonal: block must be square");
  const index_t m = d.rows();

  std::vector<index_t> cols;
  for (index_t j = 0; j < m; ++j) {
    bool zero = true;
    for (index_t i = 0; i < m && zero; ++i) zero = d(i, j) == 0.0;
    if (zero) cols.push_back(j);
  }
  const LuFactors fc = lu_factor(d);
  if (needs_attention(d, fc, cond_threshold)) {
    for (index_t j : small_pivots(fc, cond_threshold))
      if (!std::binary_search(cols.begin(), cols.end(), j)) cols.push_back(j);
    std::sort(cols.begin(), cols.end());
  }
  PerturbResult res = perturb_diagonal(d, alpha, tau, rho, cols, {});

  std::vector<index_t> rows;
  for (index_t i = 0; i < m; ++i) {
    bool zero = true;
    for (index_t j = 0; j < m && zero; ++j) zero = res.block(i, j) == 0.0;
    if (zero) rows.push_back(i);
  }
  const DenseBlock t = transposed(res.block);
  const LuFactors fr = lu_factor(t);
  if (needs_attention(t, fr, cond_threshold)) {
    for (index_t i : small_pivots(fr, cond_threshold))
      if (!std::binary_search(rows.begin(), rows.end(), i)) rows.push_back(i);
    std::sort(rows.begin(), rows.end());
  }
  PerturbResult second = perturb_diagonal(res.block, alpha, tau, rho, {}, rows);
  second.count += res.count;
  return second;
}

// ---------------------------------------------------------------------------
// Crout-type block factorization

namespace {

/// Linked lists threading block columns through the block holding their next unprocessed index.
struct Chains {
  std::vector<index_t> head, next, first;

  explicit Chains(index_t nb) : head(nb, -1), next(nb, -1), first(nb, 0) {}

  void link(index_t j, index_t blk) {
    next[j] = head[blk];
    head[blk] = j;
  }
  void take(index_t blk, std::vector<index_t>& out) {
    out.clear();
    for (index_t j = head[blk]; j >= 0; j = next[j]) out.push_back(j);
    head[blk] = -1;
  }
};

class CroutFactorizer {
 public:
  CroutFactorizer(const SparseMatrix& a, const BlockPartition& partition, const FactorConfig& config)
      : a_(a), at_(a.transpose()), config_(config), n_(a.rows()), nb_(partition.num_blocks()),
        begin_(partition.offsets().begin(), partition.offsets().end() - 1),
        end_(partition.offsets().begin() + 1, partition.offsets().end()), owner_(partition.block_of()),
        lower_(nb_), upper_(nb_), dinv_(nb_), lchains_(nb_), uchains_(nb_), row_pos_(n_, -1), col_pos_(n_, -1) {
    alpha_ = a.max_abs();
    if (alpha_ == 0.0) alpha_ = 1.0;
    if (config.check_invariants) last_first_[0] = last_first_[1] = std::vector<index_t>(nb_, 0);
  }

  struct Parts {
    BlockPartition partition;
    std::vector<HybridBlock> lower, upper;
    std::vector<DenseBlock> dinv;
    index_t perturbations = 0;
  };

  Parts run() {
    for (index_t k = 0; k < nb_; ++k) {
      step(k);
      if (config_.check_invariants) check_chains(k);
    }
    Parts out;
    std::vector<index_t> sizes;
    for (index_t k = 0; k < nb_; ++k) {
      if (end_[k] == begin_[k]) continue;
      sizes.push_back(end_[k] - begin_[k]);
      out.lower.push_back(std::move(lower_[k]));
      out.upper.push_back(std::move(upper_[k]));
      out.dinv.push_back(std::move(dinv_[k]));
    }
    out.partition = BlockPartition(std::move(sizes));
    out.perturbations = perturbations_;
    return out;
  }

 private:
  void add_row(index_t i) {
    if (row_pos_[i] < 0) {
      row_pos_[i] = 0;
      rows_loc_.push_back(i);
    }
  }
  void add_col(index_t c) {
    if (col_pos_[c] < 0) {
      col_pos_[c] = 0;
      cols_loc_.push_back(c);
    }
  }

  void step(index_t k) {
    const index_t s = begin_[k], e = end_[k], m = e - s;
    uchains_.take(k, ucontrib_);
    lchains_.take(k, lcontrib_);

    // Block column k of L (rows >= s), diagonal block included.
    rows_loc_.clear();
    for (index_t i = s; i < e; ++i) add_row(i);
    for (index_t c = s; c < e; ++c)
      for (index_t i : a_.col_rows(c))
        if (i >= e) add_row(i);
    for (index_t j : ucontrib_) {
      const HybridBlock& lj = lower_[j];
      for (std::size_t p = lchains_.first[j]; p < lj.indices.size(); ++p) add_row(lj.indices[p]);
    }
    std::sort(rows_loc_.begin(), rows_loc_.end());
    const index_t nl = static_cast<index_t>(rows_loc_.size());
    for (index_t p = 0; p < nl; ++p) row_pos_[rows_loc_[p]] = p;
    work_col_.assign(static_cast<std::size_t>(nl) * m, 0.0);
    MatrixView w{work_col_.data(), nl, m, nl};
    for (index_t c = s; c < e; ++c) {
      auto rows = a_.col_rows(c);
      auto vals = a_.col_values(c);
      for (std::size_t p = 0; p < rows.size(); ++p)
        if (rows[p] >= s) w(row_pos_[rows[p]], c - s) += vals[p];
    }
    // Gather -> GEMM -> scatter for every earlier block row of U touching block k.
    for (index_t j : ucontrib_) {
      const HybridBlock& lj = lower_[j];
      const HybridBlock& uj = upper_[j];
      const index_t lf = lchains_.first[j], uf = uchains_.first[j];
      const index_t la = static_cast<index_t>(lj.indices.size()) - lf;
      index_t cu = 0;
      while (uf + cu < static_cast<index_t>(uj.indices.size()) && uj.indices[uf + cu] < e) ++cu;
      if (la <= 0 || cu == 0) continue;
      const index_t mj = lj.values.cols();
      tmp_.assign(static_cast<std::size_t>(la) * cu, 0.0);
      MatrixView t{tmp_.data(), la, cu, la};
      gemm_acc(t, lj.values.view().block(lf, 0, la, mj), uj.values.view().block(0, uf, mj, cu), 1.0);
      for (index_t cc = 0; cc < cu; ++cc) {
        const index_t col = uj.indices[uf + cc] - s;
        for (index_t rr = 0; rr < la; ++rr) w(row_pos_[lj.indices[lf + rr]], col) -= t(rr, cc);
      }
    }

    // Block row k of U (columns >= e).
    cols_loc_.clear();
    for (index_t r = s; r < e; ++r)
      for (index_t c : at_.col_rows(r))
        if (c >= e) add_col(c);
    for (index_t j : lcontrib_) {
      const HybridBlock& uj = upper_[j];
      for (std::size_t p = uchains_.first[j]; p < uj.indices.size(); ++p)
        if (uj.indices[p] >= e) add_col(uj.indices[p]);
    }
    std::sort(cols_loc_.begin(), cols_loc_.end());
    const index_t nu = static_cast<index_t>(cols_loc_.size());
    for (index_t p = 0; p < nu; ++p) col_pos_[cols_loc_[p]] = p;
    work_row_.assign(static_cast<std::size_t>(m) * nu, 0.0);
    MatrixView v{work_row_.data(), m, nu, m};
    for (index_t r = s; r < e; ++r) {
      auto cols = at_.col_rows(r);
      auto vals = at_.col_values(r);
      for (std::size_t p = 0; p < cols.size(); ++p)
        if (cols[p] >= e) v(r - s, col_pos_[cols[p]]) += vals[p];
    }
    for (index_t j : lcontrib_) {
      const HybridBlock& lj = lower_[j];
      const HybridBlock& uj = upper_[j];
      const index_t lf = lchains_.first[j];
      index_t cl = 0;
      while (lf + cl < static_cast<index_t>(lj.indices.size()) && lj.indices[lf + cl] < e) ++cl;
      index_t uf = uchains_.first[j];
      while (uf < static_cast<index_t>(uj.indices.size()) && uj.indices[uf] < e) ++uf;
      const index_t cr = static_cast<index_t>(uj.indices.size()) - uf;
      if (cl == 0 || cr <= 0) continue;
      const index_t mj = lj.values.cols();
      tmp_.assign(static_cast<std::size_t>(cl) * cr, 0.0);
      MatrixView t{tmp_.data(), cl, cr, cl};
      gemm_acc(t, lj.values.view().block(lf, 0, cl, mj), uj.values.view().block(0, uf, mj, cr), 1.0);
      for (index_t cc = 0; cc < cr; ++cc) {
        const index_t col = col_pos_[uj.indices[uf + cc]];
        for (index_t rr = 0; rr < cl; ++rr) v(lj.indices[lf + rr] - s, col) -= t(rr, cc);
      }
    }

    // Pivot block: the diagonal rows are the m smallest indices of rows_loc_.
    DenseBlock pivot(m, m);
    for (index_t c = 0; c < m; ++c)
      for (index_t i = 0; i < m; ++i) pivot(i, c) = w(i, c);
    DenseBlock dinv = invert_pivot(pivot, k);

    const double tau = config_.drop_tau;
    HybridBlock lk;
    {
      const index_t noff = nl - m;
      DenseBlock lunit(noff, m);
      if (noff > 0) gemm_acc(lunit.view(), ConstMatrixView(w).block(m, 0, noff, m), dinv.view(), 1.0);
      std::vector<index_t> keep;
      keep.reserve(noff);
      for (index_t r = 0; r < noff; ++r) {
        double mx = 0.0;
        for (index_t c = 0; c < m; ++c) mx = std::max(mx, std::abs(lunit(r, c)));
        if (tau == 0.0 || mx > tau) keep.push_back(r);
      }
      lk.indices.reserve(keep.size());
      lk.values = DenseBlock(static_cast<index_t>(keep.size()), m);
      for (std::size_t q = 0; q < keep.size(); ++q) {
        lk.indices.push_back(rows_loc_[m + keep[q]]);
        for (index_t c = 0; c < m; ++c) lk.values(static_cast<index_t>(q), c) = lunit(keep[q], c);
      }
    }
    HybridBlock uk;
    {
      std::vector<index_t> keep;
      keep.reserve(nu);
      if (tau == 0.0) {
        for (index_t c = 0; c < nu; ++c) keep.push_back(c);
      } else {
        DenseBlock uunit(m, nu);
        gemm_acc(uunit.view(), dinv.view(), v, 1.0);
        for (index_t c = 0; c < nu; ++c) {
          double mx = 0.0;
          for (index_t r = 0; r < m; ++r) mx = std::max(mx, std::abs(uunit(r, c)));
          if (mx > tau) keep.push_back(c);
        }
      }
      uk.indices.reserve(keep.size());
      uk.values = DenseBlock(m, static_cast<index_t>(keep.size()));
      for (std::size_t q = 0; q < keep.size(); ++q) {
        uk.indices.push_back(cols_loc_[keep[q]]);
        for (index_t r = 0; r < m; ++r) uk.values(r, static_cast<index_t>(q)) = v(r, keep[q]);
      }
    }
    for (index_t i : rows_loc_) row_pos_[i] = -1;
    for (index_t c : cols_loc_) col_pos_[c] = -1;

    lower_[k] = std::move(lk);
    upper_[k] = std::move(uk);
    dinv_[k] = std::move(dinv);

    if (config_.aggregate && k > 0 && end_[k - 1] > begin_[k - 1]) try_merge(k, pivot);
    prev_pivot_ = std::move(pivot);

    // Advance the visited chains past block k and relink them.
    for (index_t j : ucontrib_) {
      const auto& idx = upper_[j].indices;
      index_t& f = uchains_.first[j];
      while (f < static_cast<index_t>(idx.size()) && idx[f] < e) ++f;
      if (f < static_cast<index_t>(idx.size())) uchains_.link(j, owner_[idx[f]]);
    }
    for (index_t j : lcontrib_) {
      const auto& idx = lower_[j].indices;
      index_t& f = lchains_.first[j];
      while (f < static_cast<index_t>(idx.size()) && idx[f] < e) ++f;
      if (f < static_cast<index_t>(idx.size())) lchains_.link(j, owner_[idx[f]]);
    }
    lchains_.first[k] = 0;
    uchains_.first[k] = 0;
    if (!lower_[k].indices.empty()) lchains_.link(k, owner_[lower_[k].indices.front()]);
    if (!upper_[k].indices.empty()) uchains_.link(k, owner_[upper_[k].indices.front()]);
  }

  DenseBlock invert_pivot(DenseBlock& pivot, index_t k) {
    const index_t m = pivot.rows();
    InverseResult inv = lu_invert(pivot, config_.cond_threshold);
    bool zero_line = false;
    for (index_t j = 0; j < m && !zero_line; ++j) {
      bool zc = true, zr = true;
      for (index_t i = 0; i < m; ++i) {
        zc = zc && pivot(i, j) == 0.0;
        zr = zr && pivot(j, i) == 0.0;
      }
      zero_line = zc || zr;
    }
    if (inv.status == InvertStatus::ok && !zero_line) return std::move(inv.inverse);
    if (!config_.perturb)
      throw BreakdownError("diagonal block " + std::to_string(k) + " is " + to_string(inv.status) +
                               " and perturbation is disabled",
                           k);
    PerturbResult pr =
        perturb_diagonal(pivot, alpha_, config_.perturb_tau, config_.perturb_rho, config_.cond_threshold);
    perturbations_ += pr.count;
    pivot = std::move(pr.block);
    inv = lu_invert(pivot, config_.cond_threshold);
    if (inv.status == InvertStatus::ok) return std::move(inv.inverse);
    for (index_t i = 0; i < m; ++i) pivot(i, i) += sign_of(pivot(i, i)) * config_.perturb_tau * alpha_;
    perturbations_ += m;
    inv = lu_invert(pivot, config_.cond_threshold);
    if (inv.status == InvertStatus::ok) return std::move(inv.inverse);
    throw BreakdownError("diagonal block " + std::to_string(k) + " stays " + to_string(inv.status) +
                             " after perturbation",
                         k);
  }

  /// Merges block k-1 into block k when the aggregation test accepts; k-1 becomes void.
  void try_merge(index_t k, DenseBlock& pivot) {
    const index_t sk = begin_[k], e = end_[k];
    const index_t p = end_[k - 1] - begin_[k - 1], q = e - sk;
    const HybridBlock& lp = lower_[k - 1];
    const HybridBlock& up = upper_[k - 1];
    const HybridBlock& lk = lower_[k];
    const HybridBlock& uk = upper_[k];

    MergeCounts c;
    c.p = p;
    c.q = q;
    c.r = static_cast<index_t>(std::lower_bound(lp.indices.begin(), lp.indices.end(), e) - lp.indices.begin());
    c.s = static_cast<index_t>(lp.indices.size()) - c.r;
    c.t = static_cast<index_t>(lk.indices.size());
    c.r2 = static_cast<index_t>(std::lower_bound(up.indices.begin(), up.indices.end(), e) - up.indices.begin());
    c.s2 = static_cast<index_t>(up.indices.size()) - c.r2;
    c.t2 = static_cast<index_t>(uk.indices.size());
    std::vector<index_t> urows, ucols;
    std::set_union(lp.indices.begin() + c.r, lp.indices.end(), lk.indices.begin(), lk.indices.end(),
                   std::back_inserter(urows));
    std::set_union(up.indices.begin() + c.r2, up.indices.end(), uk.indices.begin(), uk.indices.end(),
                   std::back_inserter(ucols));
    c.u = static_cast<index_t>(urows.size());
    c.v = static_cast<index_t>(ucols.size());
    if (p + q > config_.max_block) return;
    const bool accept = config_.merge_predicate ? config_.merge_predicate(c) : aggregate_test(c, config_.max_block);
    if (!accept) return;

    // L(k,k-1) as q x p, U(k-1,k) (pivot-scaled) as p x q.
    DenseBlock l_kp(q, p), u_pk(p, q);
    for (index_t rr = 0; rr < c.r; ++rr)
      for (index_t cc = 0; cc < p; ++cc) l_kp(lp.indices[rr] - sk, cc) = lp.values(rr, cc);
    for (index_t cc = 0; cc < c.r2; ++cc)
      for (index_t rr = 0; rr < p; ++rr) u_pk(rr, up.indices[cc] - sk) = up.values(rr, cc);

    const index_t mm = p + q;
    DenseBlock merged_pivot(mm, mm);
    {
      MatrixView mp = merged_pivot.view();
      for (index_t j = 0; j < p; ++j)
        for (index_t i = 0; i < p; ++i) mp(i, j) = prev_pivot_(i, j);
      for (index_t j = 0; j < q; ++j)
        for (index_t i = 0; i < p; ++i) mp(i, p + j) = u_pk(i, j);
      for (index_t j = 0; j < q; ++j)
        for (index_t i = 0; i < q; ++i) mp(p + i, p + j) = pivot(i, j);
      gemm_acc(mp.block(p, 0, q, p), l_kp.view(), prev_pivot_.view(), 1.0);
      gemm_acc(mp.block(p, p, q, q), l_kp.view(), u_pk.view(), 1.0);
    }

    // [L(k+1,k-1) - L(k+1,k) L(k,k-1),  L(k+1,k)] on the union of row patterns.
    HybridBlock lm;
    lm.values = DenseBlock(c.u, mm);
    for (index_t i = 0; i < c.u; ++i) row_pos_[urows[i]] = i;
    for (index_t rr = 0; rr < c.s; ++rr) {
      const index_t dst = row_pos_[lp.indices[c.r + rr]];
      for (index_t cc = 0; cc < p; ++cc) lm.values(dst, cc) = lp.values(c.r + rr, cc);
    }
    if (c.t > 0) {
      DenseBlock prod(c.t, p);
      gemm_acc(prod, lk.values, l_kp, 1.0);
      for (index_t rr = 0; rr < c.t; ++rr) {
        const index_t dst = row_pos_[lk.indices[rr]];
        for (index_t cc = 0; cc < p; ++cc) lm.values(dst, cc) -= prod(rr, cc);
        for (index_t cc = 0; cc < q; ++cc) lm.values(dst, p + cc) = lk.values(rr, cc);
      }
    }
    for (index_t i : urows) row_pos_[i] = -1;
    lm.indices = std::move(urows);

    // Pivot-scaled rows: [U(k-1,k+1); L(k,k-1) U(k-1,k+1) + U(k,k+1)].
    HybridBlock um;
    um.values = DenseBlock(mm, c.v);
    for (index_t i = 0; i < c.v; ++i) col_pos_[ucols[i]] = i;
    for (index_t cc = 0; cc < c.s2; ++cc) {
      const index_t dst = col_pos_[up.indices[c.r2 + cc]];
      for (index_t rr = 0; rr < p; ++rr) um.values(rr, dst) = up.values(rr, c.r2 + cc);
    }
    for (index_t cc = 0; cc < c.t2; ++cc) {
      const index_t dst = col_pos_[uk.indices[cc]];
      for (index_t rr = 0; rr < q; ++rr) um.values(p + rr, dst) += uk.values(rr, cc);
    }
    if (c.s2 > 0) {
      DenseBlock prod(q, c.s2);
      gemm_acc(prod.view(), l_kp.view(), up.values.view().block(0, c.r2, p, c.s2), 1.0);
      for (index_t cc = 0; cc < c.s2; ++cc) {
        const index_t dst = col_pos_[up.indices[c.r2 + cc]];
        for (index_t rr = 0; rr < q; ++rr) um.values(p + rr, dst) += prod(rr, cc);
      }
    }
    for (index_t i : ucols) col_pos_[i] = -1;
    um.indices = std::move(ucols);

    DenseBlock merged_inv = invert_pivot(merged_pivot, k);

    begin_[k] = begin_[k - 1];
    begin_[k - 1] = end_[k - 1];
    lower_[k] = std::move(lm);
    upper_[k] = std::move(um);
    dinv_[k] = std::move(merged_inv);
    lower_[k - 1] = {};
    upper_[k - 1] = {};
    dinv_[k - 1] = {};
    lchains_.first[k - 1] = 0;
    uchains_.first[k - 1] = 0;
    pivot = std::move(merged_pivot);
  }

  void check_chains(index_t k) const {
    auto verify = [&](const Chains& ch, const std::vector<HybridBlock>& store, const char* name) {
      std::vector<char> seen(nb_, 0);
      for (index_t b = k + 1; b < nb_; ++b) {
        for (index_t j = ch.head[b]; j >= 0; j = ch.next[j]) {
          if (j > k) throw std::logic_error(std::string(name) + " chain holds an unfinished block");
          // Blocks voided by a merge stay linked and are skipped.
          if (end_[j] == begin_[j]) continue;
          if (seen[j]) throw std::logic_error(std::string(name) + " chain holds a block twice");
          seen[j] = 1;
          const auto& idx = store[j].indices;
          const index_t f = ch.first[j];
          if (f >= static_cast<index_t>(idx.size()) || owner_[idx[f]] != b)
            throw std::logic_error(std::string(name) + " chain entry does not point into its block");
          if (f > 0 && idx[f - 1] >= end_[k]) throw std::logic_error(std::string(name) + " first pointer lags");
        }
      }
      for (index_t j = 0; j <= k; ++j) {
        const auto& idx = store[j].indices;
        const bool pending = ch.first[j] < static_cast<index_t>(idx.size());
        if (pending != static_cast<bool>(seen[j]))
          throw std::logic_error(std::string(name) + " chain misses a block with pending entries");
      }
      for (index_t j = 0; j <= k; ++j)
        if (ch.first[j] < last_first_[name[0] == 'L' ? 0 : 1][j] && !store[j].indices.empty())
          throw std::logic_error(std::string(name) + " first pointer moved backward");
    };
    verify(lchains_, lower_, "L");
    verify(uchains_, upper_, "U");
    last_first_[0] = lchains_.first;
    last_first_[1] = uchains_.first;
  }

  const SparseMatrix& a_;
  const SparseMatrix at_;
  const FactorConfig& config_;
  index_t n_, nb_;
  std::vector<index_t> begin_, end_, owner_;
  std::vector<HybridBlock> lower_, upper_;
  std::vector<DenseBlock> dinv_;
  DenseBlock prev_pivot_;
  Chains lchains_, uchains_;
  std::vector<index_t> row_pos_, col_pos_;
  std::vector<index_t> rows_loc_, cols_loc_, ucontrib_, lcontrib_;
  std::vector<double> work_col_, work_row_, tmp_;
  double alpha_ = 1.0;
  index_t perturbations_ = 0;
  mutable std::vector<index_t> last_first_[2];
};

}  // namespace

BlockFactorization factorize(const SparseMatrix& a, const BlockPartition& partition, const FactorConfig& config) {
  if (!a.square()) throw DimensionError("factorize: matrix must be square");
  if (partition.dim() != a.rows()) throw DimensionError("factorize: partition does not match the matrix");
  if (config.drop_tau < 0.0 || config.perturb_tau < 0.0 || config.perturb_rho < 0.0)
    throw std::invalid_argument("factorize: tolerances must be nonnegative");
  CroutFactorizer::Parts parts = CroutFactorizer(a, partition, config).run();
  BlockFactorization out;
  out.partition_ = std::move(parts.partition);
  out.lower_ = std::move(parts.lower);
  out.upper_ = std::move(parts.upper);
  out.dinv_ = std::move(parts.dinv);
  out.perturbations_ = parts.perturbations;
  out.drop_tau_ = config.drop_tau;
  out.preprocess_ = PreprocessResult::identity(a.rows());
  return out;
}

// ---------------------------------------------------------------------------
// Application

std::size_t BlockFactorization::nnz() const {
  std::size_t total = 0;
  for (index_t k = 0; k < partition_.num_blocks(); ++k) {
    const std::size_t m = partition_.size(k);
    total += m * m + m * lower_[k].indices.size() + m * upper_[k].indices.size();
  }
  return total;
}

std::size_t BlockFactorization::memory_bytes() const {
  std::size_t bytes = sizeof(index_t) * static_cast<std::size_t>(partition_.num_blocks());
  for (index_t k = 0; k < partition_.num_blocks(); ++k) {
    bytes += sizeof(index_t) * (lower_[k].indices.size() + upper_[k].indices.size());
    bytes += sizeof(double) * (lower_[k].values.data().size() + upper_[k].values.data().size() + dinv_[k].data().size());
  }
  return bytes;
}

void BlockFactorization::solve_in_place(std::span<double> x) const {
  if (x.size() != static_cast<std::size_t>(dim())) throw DimensionError("preconditioner: length mismatch");
  const index_t nb = partition_.num_blocks();
  std::vector<double> t, u;
  for (index_t k = 0; k < nb; ++k) {
    const HybridBlock& l = lower_[k];
    if (l.indices.empty()) continue;
    const index_t s = partition_.begin(k), m = partition_.size(k);
    t.assign(l.indices.size(), 0.0);
    gemv_acc(t, l.values.view(), x.subspan(s, m), 1.0);
    for (std::size_t r = 0; r < l.indices.size(); ++r) x[l.indices[r]] -= t[r];
  }
  for (index_t k = nb - 1; k >= 0; --k) {
    const HybridBlock& up = upper_[k];
    const index_t s = partition_.begin(k), m = partition_.size(k);
    t.assign(x.begin() + s, x.begin() + s + m);
    if (!up.indices.empty()) {
      u.resize(up.indices.size());
      for (std::size_t c = 0; c < up.indices.size(); ++c) u[c] = x[up.indices[c]];
      gemv_acc(t, up.values.view(), u, -1.0);
    }
    auto xs = x.subspan(s, m);
    std::fill(xs.begin(), xs.end(), 0.0);
    gemv_acc(xs, dinv_[k].view(), t, 1.0);
  }
}

void BlockFactorization::apply(std::span<const double> x, std::span<double> y) const {
  const index_t n = dim();
  if (x.size() != static_cast<std::size_t>(n) || y.size() != static_cast<std::size_t>(n))
    throw DimensionError("preconditioner: length mismatch");
  const auto& pre = preprocess_;
  std::vector<double> z(n);
  for (index_t i = 0; i < n; ++i) {
    const index_t r = pre.row_perm[i];
    z[i] = pre.row_scaling[r] * x[r];
  }
  solve_in_place(z);
  for (index_t j = 0; j < n; ++j) {
    const index_t c = pre.col_perm[j];
    y[c] = pre.col_scaling[c] * z[j];
  }
}

std::vector<double> BlockFactorization::apply(std::span<const double> x) const {
  std::vector<double> y(x.size());
  apply(x, y);
  return y;
}

std::vector<double> apply_preconditioner(const BlockFactorization& f, std::span<const double> x) {
  return f.apply(x);
}

std::vector<double> reconstruct_dense(const BlockFactorization& f) {
  const index_t n = f.dim();
  const BlockPartition& part = f.partition();
  std::vector<double> lmat(static_cast<std::size_t>(n) * n, 0.0), umat(static_cast<std::size_t>(n) * n, 0.0);
  auto L = [&](index_t i, index_t j) -> double& { return lmat[static_cast<std::size_t>(j) * n + i]; };
  auto U = [&](index_t i, index_t j) -> double& { return umat[static_cast<std::size_t>(j) * n + i]; };
  for (index_t k = 0; k < part.num_blocks(); ++k) {
    const index_t s = part.begin(k), m = part.size(k);
    for (index_t i = 0; i < m; ++i) L(s + i, s + i) = 1.0;
    const HybridBlock& l = f.lower()[k];
    for (std::size_t r = 0; r < l.indices.size(); ++r)
      for (index_t c = 0; c < m; ++c) L(l.indices[r], s + c) = l.values(static_cast<index_t>(r), c);
    // Row block k of L * (Dinv^{-1} U) is the pivot block followed by the stored scaled rows.
    const InverseResult piv = lu_invert(f.dinv()[k], std::numeric_limits<double>::infinity());
    for (index_t c = 0; c < m; ++c)
      for (index_t r = 0; r < m; ++r) U(s + r, s + c) = piv.inverse(r, c);
    const HybridBlock& u = f.upper()[k];
    for (std::size_t c = 0; c < u.indices.size(); ++c)
      for (index_t r = 0; r < m; ++r) U(s + r, u.indices[c]) = u.values(r, static_cast<index_t>(c));
  }
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  gemm_acc(MatrixView{out.data(), n, n, n}, ConstMatrixView{lmat.data(), n, n, n}, ConstMatrixView{umat.data(), n, n, n},
           1.0);
  return out;
}

void write_factor_dump(std::ostream& out, const BlockFactorization& f) {
  const BlockPartition& part = f.partition();
  out << "bilu-factor 1\n";
  out << "n " << f.dim() << " blocks " << part.num_blocks() << " perturbations " << f.perturbation_count() << '\n';
  out << "sizes";
  for (index_t s : part.sizes()) out << ' ' << s;
  out << '\n' << std::setprecision(17);
  auto dump_block = [&](const DenseBlock& b) {
    for (index_t i = 0; i < b.rows(); ++i) {
      for (index_t j = 0; j < b.cols(); ++j) out << (j ? " " : "") << b(i, j);
      out << '\n';
    }
  };
  for (index_t k = 0; k < part.num_blocks(); ++k) {
    out << "block " << k << " begin " << part.begin(k) << " size " << part.size(k) << '\n';
    const HybridBlock& l = f.lower()[k];
    out << "L " << l.indices.size();
    for (index_t i : l.indices) out << ' ' << i;
    out << '\n';
    dump_block(l.values);
    out << "Dinv\n";
    dump_block(f.dinv()[k]);
    const HybridBlock& u = f.upper()[k];
    out << "U " << u.indices.size();
    for (index_t i : u.indices) out << ' ' << i;
    out << '\n';
    dump_block(u.values);
  }
}

}  // namespace bilu
