#include "bilu/gmres.hpp"

#include <cmath>
#include <stdexcept>

namespace bilu {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

GmresResult gmres(const SparseMatrix& a, std::span<const double> b, const PreconditionerFn& precond,
                  const GmresConfig& config) {
  if (!a.square()) throw DimensionError("gmres: matrix must be square");
  const index_t n = a.rows();
  if (b.size() != static_cast<std::size_t>(n)) throw DimensionError("gmres: right-hand side length mismatch");
  if (config.restart < 1) throw std::invalid_argument("gmres: restart must be at least 1");
  if (!(config.rel_tol > 0.0 && config.rel_tol < 1.0)) throw std::invalid_argument("gmres: rel_tol must be in (0,1)");

  GmresResult res;
  res.x.assign(n, 0.0);
  SolveStats& st = res.stats;
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    st.converged = true;
    st.residual_history = {0.0};
    st.cycle_starts = {0};
    return res;
  }

  auto apply_m = [&](std::span<const double> in, std::span<double> out) {
    if (precond)
      precond(in, out);
    else
      std::copy(in.begin(), in.end(), out.begin());
  };

  const index_t m = config.restart;
  std::vector<std::vector<double>> v(m + 1, std::vector<double>(n));
  std::vector<double> h(static_cast<std::size_t>(m + 1) * m);
  auto H = [&](index_t i, index_t j) -> double& { return h[static_cast<std::size_t>(j) * (m + 1) + i]; };
  std::vector<double> cs(m), sn(m), g(m + 1), y(m), r(n), z(n), w(n);

  for (index_t outer = 0;; ++outer) {
    a.multiply(res.x, r);
    for (index_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    const double beta = norm2(r);
    st.final_relres = beta / bnorm;
    st.cycle_starts.push_back(st.residual_history.size());
    st.residual_history.push_back(st.final_relres);
    if (st.final_relres <= config.rel_tol) {
      st.converged = true;
      break;
    }
    if (outer == config.max_outer) break;

    for (index_t i = 0; i < n; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    index_t steps = 0;
    for (index_t j = 0; j < m; ++j) {
      apply_m(v[j], z);
      a.multiply(z, w);
      const double wnorm = norm2(w);
      for (index_t i = 0; i <= j; ++i) {
        const double hij = dot(w, v[i]);
        H(i, j) = hij;
        for (index_t q = 0; q < n; ++q) w[q] -= hij * v[i][q];
      }
      const double hnext = norm2(w);
      H(j + 1, j) = hnext;
      const bool breakdown = hnext <= 1e-14 * wnorm;
      if (!breakdown)
        for (index_t q = 0; q < n; ++q) v[j + 1][q] = w[q] / hnext;

      for (index_t i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double rho = std::hypot(H(j, j), H(j + 1, j));
      if (rho == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = H(j, j) / rho;
        sn[j] = H(j + 1, j) / rho;
      }
      H(j, j) = rho;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];

      ++st.iterations;
      steps = j + 1;
      st.residual_history.push_back(std::abs(g[j + 1]) / bnorm);
      if (breakdown || std::abs(g[j + 1]) / bnorm <= config.rel_tol) break;
    }

    // Back substitution on the rotated Hessenberg system, skipping a singular tail.
    index_t k = steps;
    while (k > 0 && H(k - 1, k - 1) == 0.0) --k;
    for (index_t i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (index_t q = i + 1; q < k; ++q) s -= H(i, q) * y[q];
      y[i] = s / H(i, i);
    }
    std::fill(r.begin(), r.end(), 0.0);
    for (index_t i = 0; i < k; ++i)
      for (index_t q = 0; q < n; ++q) r[q] += y[i] * v[i][q];
    apply_m(r, z);
    for (index_t q = 0; q < n; ++q) res.x[q] += z[q];
  }
  return res;
}

}  // namespace bilu
