#include <gtest/gtest.h>

#include <sstream>

#include "bilu/sparse.hpp"
#include "support/test_support.hpp"

using namespace bilu;

namespace {

SparseMatrix parse(const std::string& text) {
  std::istringstream in(text);
  return read_matrix_market(in);
}

}  // namespace

TEST(MatrixMarket, ReadsDiagonal) {
  const auto a = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2.0\n2 2 3.0\n");
  EXPECT_EQ(a.rows(), 2);
  EXPECT_EQ(a.nnz(), 2u);
  EXPECT_EQ(a.at(0, 0), 2.0);
  EXPECT_EQ(a.at(1, 1), 3.0);
  EXPECT_EQ(a.at(0, 1), 0.0);
}

TEST(MatrixMarket, SortsRowsInsideColumns) {
  const auto a = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n2 1 5.0\n1 1 1.0\n");
  ASSERT_EQ(a.col_rows(0).size(), 2u);
  EXPECT_EQ(a.col_rows(0)[0], 0);
  EXPECT_EQ(a.col_rows(0)[1], 1);
  EXPECT_EQ(a.col_values(0)[1], 5.0);
}

TEST(MatrixMarket, ExpandsSymmetric) {
  const auto a = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n2 1 4.0\n2 2 1\n");
  EXPECT_EQ(a.at(1, 0), 4.0);
  EXPECT_EQ(a.at(0, 1), 4.0);
  EXPECT_EQ(a.nnz(), 4u);
}

TEST(MatrixMarket, SumsDuplicates) {
  const auto a = parse("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.5\n1 1 2.5\n");
  EXPECT_EQ(a.nnz(), 1u);
  EXPECT_EQ(a.at(0, 0), 4.0);
}

TEST(MatrixMarket, RejectsPatternAndComplex) {
  EXPECT_THROW(parse("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n"), UnsupportedFormatError);
  EXPECT_THROW(parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n"), UnsupportedFormatError);
}

TEST(MatrixMarket, ReportsLineOfBadEntry) {
  try {
    parse("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n3 1 2.0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
  try {
    parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n"), ParseError);
  EXPECT_THROW(parse("not a header\n"), ParseError);
}

TEST(MatrixMarket, RoundTripIsIdentity) {
  for (const auto& [name, a] : testkit::corpus()) {
    std::stringstream ss;
    write_matrix_market(ss, a);
    EXPECT_EQ(read_matrix_market(ss), a) << name;
  }
}

TEST(SparseMatrix, ConstructorValidates) {
  EXPECT_THROW(SparseMatrix(2, 2, {0, 1, 1}, {0, 0}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(SparseMatrix(2, 1, {0, 2}, {1, 0}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(SparseMatrix(2, 1, {0, 1}, {2}, {1.0}), std::invalid_argument);
  EXPECT_NO_THROW(SparseMatrix(2, 1, {0, 2}, {0, 1}, {1.0, 2.0}));
}

TEST(SparseMatrix, TransposeAndMultiply) {
  const auto a = SparseMatrix::from_triplets(2, 3, {{0, 0, 1.0}, {0, 2, 2.0}, {1, 1, 3.0}});
  const auto at = a.transpose();
  EXPECT_EQ(at.rows(), 3);
  EXPECT_EQ(at.at(2, 0), 2.0);
  const std::vector<double> x{1.0, 1.0, 1.0};
  const auto y = a.multiply(x);
  EXPECT_EQ(y, (std::vector<double>{3.0, 3.0}));
  EXPECT_EQ(a.max_abs(), 3.0);
  EXPECT_EQ(a.norm_inf(), 3.0);
}

TEST(Permutation, RejectsNonBijection) {
  EXPECT_THROW(Permutation({0, 0}), std::invalid_argument);
  EXPECT_THROW(Permutation({0, 2}), std::invalid_argument);
}

TEST(Permutation, ComposeAndInvert) {
  const Permutation p({2, 0, 1}), q({1, 2, 0});
  const Permutation pq = p.then(q);
  for (index_t i = 0; i < 3; ++i) EXPECT_EQ(pq[i], p[q[i]]);
  EXPECT_TRUE(p.then(p.inverse()).is_identity());
}

TEST(MatchingTransform, Identity) {
  const auto a = SparseMatrix::identity(3);
  EXPECT_EQ(apply_matching_transform(a, DiagonalScaling::identity(3), DiagonalScaling::identity(3),
                                     Permutation::identity(3)),
            a);
}

TEST(MatchingTransform, AntiDiagonalBecomesIdentity) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 1, 2.0}, {1, 0, 3.0}});
  const auto ahat = apply_matching_transform(a, DiagonalScaling({0.5, 1.0 / 3.0}), DiagonalScaling::identity(2),
                                             Permutation({1, 0}));
  EXPECT_DOUBLE_EQ(ahat.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(ahat.at(1, 1), 1.0);
  EXPECT_EQ(ahat.nnz(), 2u);
  EXPECT_THROW(apply_matching_transform(a, DiagonalScaling::identity(3), DiagonalScaling::identity(2),
                                        Permutation({1, 0})),
               DimensionError);
}

TEST(SymmetricPermute, Examples) {
  const auto d = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, 2.0}});
  EXPECT_EQ(symmetric_permute(d, Permutation::identity(2)), d);
  const auto s = symmetric_permute(d, Permutation({1, 0}));
  EXPECT_EQ(s.at(0, 0), 2.0);
  EXPECT_EQ(s.at(1, 1), 1.0);
}

TEST(SymmetricPermute, MatchesDenseReferenceAndInverts) {
  testkit::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = testkit::random_matchable(5, 0.4, rng);
    std::vector<index_t> map{0, 1, 2, 3, 4};
    std::shuffle(map.begin(), map.end(), rng);
    const Permutation p(map);
    const auto b = symmetric_permute(a, p);
    for (index_t i = 0; i < 5; ++i)
      for (index_t j = 0; j < 5; ++j) EXPECT_EQ(b.at(i, j), a.at(p[i], p[j]));
    EXPECT_EQ(symmetric_permute(b, p.inverse()), a);
  }
}

TEST(Companion, ScalarPartitionKeepsPattern) {
  for (const auto& [name, a] : testkit::corpus()) {
    const auto b = compress_companion(a, BlockPartition::scalar(a.rows()));
    EXPECT_TRUE(std::equal(b.col_ptr().begin(), b.col_ptr().end(), a.col_ptr().begin())) << name;
    EXPECT_TRUE(std::equal(b.row_idx().begin(), b.row_idx().end(), a.row_idx().begin())) << name;
    for (double v : b.values()) EXPECT_EQ(v, 1.0);
  }
}

namespace {

// Six by six pattern with three 2x2 blocks, compressed, reordered and expanded by hand.
SparseMatrix sketch_matrix() {
  const std::vector<std::vector<index_t>> rows{{0, 1, 2, 3}, {0, 1, 3}, {0, 1, 2, 4, 5},
                                               {1, 2, 3, 4}, {2, 4, 5}, {2, 3, 5}};
  std::vector<Triplet> t;
  for (index_t i = 0; i < 6; ++i)
    for (index_t j : rows[i]) t.push_back({i, j, 1.0});
  return SparseMatrix::from_triplets(6, 6, std::move(t));
}

}  // namespace

TEST(Companion, SketchCompressesToTridiagonal) {
  const auto b = compress_companion(sketch_matrix(), BlockPartition({2, 2, 2}));
  const auto expected =
      SparseMatrix::from_triplets(3, 3, {{0, 0, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, 1}, {1, 2, 1}, {2, 1, 1}, {2, 2, 1}});
  EXPECT_EQ(b, expected);
  EXPECT_THROW(compress_companion(sketch_matrix(), BlockPartition({2, 2})), DimensionError);
}

TEST(Companion, BlockDiagonalGivesIdentityPattern) {
  const auto a = SparseMatrix::from_triplets(4, 4, {{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {2, 2, 4}, {3, 3, 5}, {2, 3, 6}});
  EXPECT_EQ(compress_companion(a, BlockPartition({2, 2})), SparseMatrix::identity(2));
}

TEST(ExpandPermutation, Examples) {
  const auto id = expand_permutation(Permutation::identity(2), BlockPartition({2, 1}));
  EXPECT_TRUE(id.perm.is_identity());
  const auto sw = expand_permutation(Permutation({1, 0}), BlockPartition({2, 1}));
  EXPECT_EQ(sw.perm, Permutation({2, 0, 1}));
  EXPECT_EQ(sw.partition, BlockPartition({1, 2}));
  EXPECT_THROW(expand_permutation(Permutation::identity(3), BlockPartition({2, 1})), DimensionError);
}

TEST(ExpandPermutation, SketchReproducesReorderedPattern) {
  const auto ex = expand_permutation(Permutation({0, 2, 1}), BlockPartition({2, 2, 2}));
  EXPECT_EQ(ex.perm, Permutation({0, 1, 4, 5, 2, 3}));
  const auto r = symmetric_permute(sketch_matrix(), ex.perm);
  const std::vector<std::vector<index_t>> expected_rows{{0, 1, 4, 5}, {0, 1, 5}, {2, 3, 4},
                                                        {3, 4, 5},    {0, 1, 2, 3, 4}, {1, 2, 4, 5}};
  const auto rt = r.transpose();
  for (index_t i = 0; i < 6; ++i) {
    const auto cols = rt.col_rows(i);
    EXPECT_EQ(std::vector<index_t>(cols.begin(), cols.end()), expected_rows[i]) << "row " << i;
  }
}

TEST(ExpandPermutation, KeepsBlocksContiguous) {
  testkit::Rng rng(3);
  const BlockPartition part({3, 1, 4, 2, 2});
  std::vector<index_t> map{0, 1, 2, 3, 4};
  std::shuffle(map.begin(), map.end(), rng);
  const auto ex = expand_permutation(Permutation(map), part);
  EXPECT_EQ(ex.partition.dim(), part.dim());
  for (index_t b = 0; b < ex.partition.num_blocks(); ++b) {
    const index_t old = map[b];
    EXPECT_EQ(ex.partition.size(b), part.size(old));
    for (index_t k = 0; k < ex.partition.size(b); ++k) EXPECT_EQ(ex.perm[ex.partition.begin(b) + k], part.begin(old) + k);
  }
}

TEST(BlockPartition, Statistics) {
  const BlockPartition p({1, 2, 3});
  EXPECT_EQ(p.dim(), 6);
  EXPECT_EQ(p.max_size(), 3);
  EXPECT_DOUBLE_EQ(p.mean_size(), 2.0);
  EXPECT_NEAR(p.stddev_size(), std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_EQ(p.block_of(), (std::vector<index_t>{0, 1, 1, 2, 2, 2}));
  EXPECT_THROW(BlockPartition({1, 0}), std::invalid_argument);
}
