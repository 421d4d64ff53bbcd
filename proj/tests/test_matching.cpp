#include <gtest/gtest.h>

#include <cmath>

#include "bilu/matching.hpp"
#include "support/test_support.hpp"

using namespace bilu;

TEST(Matching, IdentityIsTrivial) {
  const auto m = max_weight_matching(SparseMatrix::identity(4));
  EXPECT_TRUE(m.perm.is_identity());
  for (index_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(m.row_scaling[i], 1.0);
    EXPECT_DOUBLE_EQ(m.col_scaling[i], 1.0);
  }
}

TEST(Matching, AntiDiagonal) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 1, 2.0}, {1, 0, 3.0}});
  const auto m = max_weight_matching(a);
  EXPECT_EQ(m.perm, Permutation({1, 0}));
  EXPECT_DOUBLE_EQ(testkit::transversal_product(a, m.perm), 6.0);
  const auto ahat = apply_matching_transform(a, m.row_scaling, m.col_scaling, m.perm);
  EXPECT_NEAR(ahat.at(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(ahat.at(1, 1), 1.0, 1e-14);
  const auto rep = verify_matching(a, m);
  EXPECT_TRUE(rep.pass);
}

TEST(Matching, EmptyColumnIsStructurallySingular) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 0, 1.0}});
  try {
    max_weight_matching(a);
    FAIL();
  } catch (const StructuralSingularityError& e) {
    EXPECT_EQ(e.columns, std::vector<index_t>{1});
  }
}

TEST(Matching, HallViolatorIsReported) {
  // Columns 1 and 2 both reach only row 0.
  const auto a = SparseMatrix::from_triplets(3, 3, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {0, 1, 1}, {0, 2, 1}});
  try {
    max_weight_matching(a);
    FAIL();
  } catch (const StructuralSingularityError& e) {
    EXPECT_GT(e.columns.size(), e.rows.size());
  }
}

TEST(VerifyMatching, IdentityScalingOnTwiceIdentityFails) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 2.0}, {1, 1, 2.0}});
  MatchingResult m{Permutation::identity(2), DiagonalScaling::identity(2), DiagonalScaling::identity(2), {}, {}};
  const auto rep = verify_matching(a, m);
  EXPECT_FALSE(rep.pass);
  EXPECT_DOUBLE_EQ(rep.diag_violation, 1.0);
}

TEST(VerifyMatching, HandBuiltOptimumHasZeroViolation) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 1, 2.0}, {1, 0, 3.0}});
  MatchingResult m{Permutation({1, 0}), DiagonalScaling({0.5, 1.0 / 3.0}), DiagonalScaling::identity(2), {}, {}};
  const auto rep = verify_matching(a, m);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.offdiag_violation, 0.0);
  EXPECT_EQ(rep.diag_violation, 0.0);
}

TEST(Matching, OptimalAgainstBruteForce) {
  testkit::Rng rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    const index_t n = 1 + trial % 7;
    const auto a = testkit::random_matchable(n, trial % 2 ? 1.0 : 0.35, rng);
    const auto m = max_weight_matching(a);
    const double got = testkit::transversal_product(a, m.perm);
    const double best = testkit::brute_force_max_product(a);
    EXPECT_NEAR(got, best, 1e-12 * best) << "trial " << trial;
  }
}

TEST(Matching, DualsSatisfyComplementarySlackness) {
  testkit::Rng rng(202);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = testkit::random_matchable(40, 0.1, rng);
    const auto m = max_weight_matching(a);
    for (index_t j = 0; j < a.cols(); ++j) {
      double colmax = 0.0;
      for (double v : a.col_values(j)) colmax = std::max(colmax, std::abs(v));
      auto rows = a.col_rows(j);
      auto vals = a.col_values(j);
      for (std::size_t p = 0; p < rows.size(); ++p) {
        const double c = matching_cost(vals[p], colmax);
        EXPECT_LE(m.row_dual[rows[p]] + m.col_dual[j], c + 1e-10);
      }
    }
    for (index_t i = 0; i < a.rows(); ++i) {
      const index_t j = m.perm[i];
      double colmax = 0.0;
      for (double v : a.col_values(j)) colmax = std::max(colmax, std::abs(v));
      EXPECT_NEAR(m.row_dual[i] + m.col_dual[j], matching_cost(a.at(i, j), colmax), 1e-10);
    }
  }
}

TEST(Matching, InvariantsHoldOnCorpus) {
  for (const auto& [name, a] : testkit::corpus()) {
    const auto m = max_weight_matching(a);
    const auto rep = verify_matching(a, m);
    EXPECT_TRUE(rep.pass) << name << " off=" << rep.offdiag_violation << " diag=" << rep.diag_violation;
  }
}

TEST(Matching, CostOfZeroIsInfinite) {
  EXPECT_TRUE(std::isinf(matching_cost(0.0, 1.0)));
  EXPECT_EQ(matching_cost(-2.0, 2.0), 0.0);
  EXPECT_TRUE(std::isfinite(matching_cost(1e-320, 1.0)));
}
