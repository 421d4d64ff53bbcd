#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "bilu/bench.hpp"
#include "bilu/blocking.hpp"
#include "bilu/factor.hpp"
#include "bilu/gmres.hpp"
#include "bilu/matching.hpp"
#include "report.hpp"
#include "support/test_support.hpp"

using namespace bilu;
using bilu::acceptance::Report;
using bilu::acceptance::Stopwatch;

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

PreconditionerFn as_fn(const BlockFactorization& f) {
  return [&f](std::span<const double> x, std::span<double> y) { f.apply(x, y); };
}

void exact_factorization_oracle(Report& rep) {
  Stopwatch sw;
  testkit::Rng rng(1001);
  const index_t sizes[] = {10, 50, 200};
  double worst_res = 0.0, worst_l = 0.0, worst_u = 0.0;
  index_t worst_iters = 0;
  bool all_converged = true;
  for (int trial = 0; trial < 50; ++trial) {
    const index_t n = sizes[trial % 3];
    const auto a = testkit::random_diag_dominant(n, 0.1, rng);
    FactorConfig cfg;
    cfg.drop_tau = 0.0;
    cfg.aggregate = false;
    const auto f = factorize(a, BlockPartition::scalar(n), cfg);

    const auto ad = testkit::dense(a);
    const double anorm = testkit::dense_norm_inf(ad, n);
    const auto rec = reconstruct_dense(f);
    std::vector<double> diff(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) diff[i] = ad[i] - rec[i];
    worst_res = std::max(worst_res, testkit::dense_norm_inf(diff, n) / anorm);

    const auto lu = testkit::dense_lu_nopivot(ad, n);
    for (index_t k = 0; k < n; ++k) {
      const auto& l = f.lower()[k];
      for (std::size_t r = 0; r < l.indices.size(); ++r)
        worst_l = std::max(worst_l, std::abs(l.values(static_cast<index_t>(r), 0) -
                                             lu.l[static_cast<std::size_t>(k) * n + l.indices[r]]));
      const double ukk = lu.u[static_cast<std::size_t>(k) * n + k];
      worst_u = std::max(worst_u, std::abs(1.0 / f.dinv()[k](0, 0) - ukk) / anorm);
      const auto uu = f.unit_upper(k);
      const auto& u = f.upper()[k];
      for (std::size_t c = 0; c < u.indices.size(); ++c)
        worst_u = std::max(worst_u, std::abs(uu(0, static_cast<index_t>(c)) -
                                             lu.u[static_cast<std::size_t>(u.indices[c]) * n + k] / ukk));
    }

    const auto sol = gmres(a, std::vector<double>(n, 1.0), as_fn(f));
    all_converged = all_converged && sol.stats.converged;
    worst_iters = std::max(worst_iters, sol.stats.iterations);
  }
  const double t = sw.seconds();
  const bool pass = worst_res <= 1e-10 && worst_l <= 1e-10 && worst_u <= 1e-10 && all_converged && worst_iters <= 2 &&
                    t < 10.0;
  rep.line("exact_factorization_oracle", pass,
           fmt("max ||A-LD^-1U||/||A|| = %.2e, max factor deviation = %.2e, ", worst_res, std::max(worst_l, worst_u)) +
               "max GMRES iterations = " + std::to_string(worst_iters) + (all_converged ? "" : " (not converged)") +
               fmt(", %.2f s (limit 10 s)", t));
}

void matching_optimality(Report& rep) {
  Stopwatch sw;
  testkit::Rng rng(2002);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const index_t n = 1 + trial % 7;
    const auto a = testkit::random_matchable(n, trial % 3 == 0 ? 1.0 : 0.4, rng);
    const auto m = max_weight_matching(a);
    if (testkit::transversal_product(a, m.perm) != testkit::brute_force_max_product(a)) ++mismatches;
  }
  double worst_off = 0.0, worst_diag = 0.0;
  bool all_pass = true;
  for (const auto& [name, a] : testkit::corpus()) {
    const auto r = verify_matching(a, max_weight_matching(a));
    worst_off = std::max(worst_off, r.offdiag_violation);
    worst_diag = std::max(worst_diag, r.diag_violation);
    all_pass = all_pass && r.pass;
  }
  const double t = sw.seconds();
  rep.line("matching_optimality", mismatches == 0 && all_pass && t < 5.0,
           std::to_string(mismatches) + "/200 products differ from brute force; " +
               fmt("corpus violations off=%.1e diag=%.1e; %.2f s (limit 5 s)", worst_off, worst_diag, t));
}

void aggregation_rule_traces(Report& rep) {
  bool ok = true;
  std::ostringstream detail;
  for (double tau : {1e-1, 1e-2, 1e-4}) {
    Ilu1tConfig cfg;
    cfg.tau = tau;
    const auto p = ilu1t_block_guess(SparseMatrix::identity(20), BlockPartition::scalar(20), cfg);
    const bool uniform = p == BlockPartition(std::vector<index_t>(4, 5));
    ok = ok && uniform;
    detail << "identity tau=" << tau << " blocks=" << p.num_blocks() << " max=" << p.max_size() << "; ";
  }
  MergeCounts c;
  c.p = c.q = 1;
  const bool first = aggregate_test(c) && c.mu() == 2 && c.nu() == 4;
  c.r = c.s = c.t = c.r2 = c.s2 = c.t2 = 5;
  c.u = c.v = 10;
  const bool second = !aggregate_test(c) && c.mu() == 32 && c.nu() == 44;
  detail << "merge(mu=2,nu=4)=" << (first ? "accept" : "WRONG") << " merge(mu=32,nu=44)=" << (second ? "reject" : "WRONG");
  rep.line("aggregation_rule_traces", ok && first && second, detail.str());
}

void profile_mathematics(Report& rep) {
  auto mk = [](const std::string& s, const std::string& m, double t) {
    RunRecord r;
    r.matrix = s;
    r.method = m;
    r.status = RunStatus::ok;
    r.factor_time_s = t;
    r.peak_mem_bytes = 1;
    return r;
  };
  const auto cs = performance_profile({mk("s1", "m1", 1), mk("s2", "m1", 2), mk("s1", "m2", 2), mk("s2", "m2", 2)},
                                      Statistic::time);
  auto p_at = [&](const std::string& m, double alpha) {
    double p = -1.0;
    for (const auto& c : cs)
      if (c.method == m)
        for (const auto& pt : c.points)
          if (pt.alpha <= alpha) p = pt.p;
    return p;
  };
  const bool hand = p_at("m1", 1.0) == 1.0 && p_at("m2", 1.0) == 0.5 && p_at("m2", 2.0) == 1.0;

  // Synthetic suite: ten corpus matrices, four methods.
  const auto dir = std::filesystem::temp_directory_path() / "bilu_acceptance_suite";
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& [name, a] : testkit::corpus()) {
    const auto p = dir / (name + ".mtx");
    write_matrix_market(p, a);
    paths.push_back(p.string());
  }
  SuiteConfig cfg{{"---", "c--", "ci-", "cip"}, {1e-1, 1e-2}, {}, 1};
  const auto records = run_suite(paths, cfg);
  std::filesystem::remove_all(dir);

  const auto best = select_best(records);
  bool curves_ok = true;
  std::size_t n_curves = 0, n_points = 0;
  for (Statistic s : {Statistic::time, Statistic::memory, Statistic::time_x_memory}) {
    std::vector<std::string> warnings;
    const auto curves = performance_profile(records, s, &warnings);
    const std::size_t kept = paths.size() - warnings.size();
    for (const auto& c : curves) {
      ++n_curves;
      n_points += c.points.size();
      for (std::size_t i = 0; i < c.points.size(); ++i) {
        const auto& pt = c.points[i];
        curves_ok = curves_ok && pt.p >= 0.0 && pt.p <= 1.0;
        if (i > 0) curves_ok = curves_ok && pt.p >= c.points[i - 1].p && pt.alpha > c.points[i - 1].alpha;
      }
      std::size_t solved = 0;
      for (const auto& r : best)
        if (r.method == c.method && r.status == RunStatus::ok) ++solved;
      curves_ok = curves_ok && c.points.back().p == static_cast<double>(solved) / static_cast<double>(kept);
    }
  }
  std::size_t ok_runs = 0;
  for (const auto& r : records) ok_runs += r.status == RunStatus::ok;
  rep.line("profile_mathematics", hand && curves_ok && n_curves == 12,
           std::string("hand example p={") + fmt("%.1f, %.1f, %.1f}", p_at("m1", 1.0), p_at("m2", 1.0), p_at("m2", 2.0)) +
               "; " + std::to_string(n_curves) + " curves / " + std::to_string(n_points) + " points " +
               (curves_ok ? "monotone and bounded" : "VIOLATE invariants") + "; " + std::to_string(ok_runs) + "/" +
               std::to_string(records.size()) + " runs converged");
}

void dropping_monotonicity(Report& rep) {
  int violations = 0;
  std::ostringstream detail;
  for (const auto& [name, a] : testkit::corpus()) {
    PipelineConfig pc;
    pc.flags = parse_pipeline_flags("c-");
    const auto pipe = build_pipeline_partition(a, pc);
    std::size_t prev = 0;
    bool first = true;
    std::size_t lo = 0, hi = 0;
    for (double tau : {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}) {
      FactorConfig cfg;
      cfg.drop_tau = tau;
      cfg.aggregate = false;
      const std::size_t nnz = factorize(pipe.matrix, pipe.partition, cfg).nnz();
      if (!first && nnz > prev) ++violations;
      if (first) hi = nnz;
      lo = nnz;
      prev = nnz;
      first = false;
    }
    detail << name << ' ' << hi << "->" << lo << "; ";
  }
  rep.line("dropping_monotonicity", violations == 0,
           std::to_string(violations) + " increases over 10 matrices (nnz at tau=0 -> 1e-1: " + detail.str() + ")");
}

void perturbation_robustness(Report& rep) {
  testkit::Rng rng(3003);
  const index_t n = 60;
  auto base = testkit::random_diag_dominant(n, 0.08, rng);
  std::vector<Triplet> t;
  for (index_t j = 0; j < n; ++j) {
    auto rows = base.col_rows(j);
    auto vals = base.col_values(j);
    for (std::size_t p = 0; p < rows.size(); ++p)
      if (!(rows[p] < 2 && j < 2)) t.push_back({rows[p], j, vals[p]});
  }
  // The leading 2x2 diagonal block is structurally zero; couple it to the next block instead.
  t.push_back({0, 2, 8.0});
  t.push_back({1, 3, 8.0});
  t.push_back({2, 0, 8.0});
  t.push_back({3, 1, 8.0});
  const auto a = SparseMatrix::from_triplets(n, n, std::move(t));
  std::vector<index_t> sizes{2};
  for (index_t i = 2; i < n; ++i) sizes.push_back(1);

  std::vector<double> x_true(n), b;
  for (index_t i = 0; i < n; ++i) x_true[i] = 1.0 + 0.01 * i;
  b = a.multiply(x_true);
  try {
    FactorConfig cfg;
    cfg.drop_tau = 1e-2;
    const auto f = factorize(a, BlockPartition(sizes), cfg);
    const auto sol = gmres(a, b, as_fn(f));
    const double rr = testkit::relative_residual(a, sol.x, b);
    rep.line("perturbation_robustness", f.perturbation_count() >= 1 && sol.stats.converged && rr <= 1e-6,
             "perturbations=" + std::to_string(f.perturbation_count()) +
                 ", GMRES iterations=" + std::to_string(sol.stats.iterations) + fmt(", relres=%.2e", rr));
  } catch (const std::exception& e) {
    rep.line("perturbation_robustness", false, std::string("breakdown: ") + e.what());
  }
}

}  // namespace

int main() {
  Report rep;
  exact_factorization_oracle(rep);
  matching_optimality(rep);
  aggregation_rule_traces(rep);
  profile_mathematics(rep);
  dropping_monotonicity(rep);
  perturbation_robustness(rep);
  return rep.exit_code();
}
