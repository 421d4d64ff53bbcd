#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bilu/dense.hpp"
#include "bilu/sparse.hpp"

namespace bilu::testkit {

using Rng = std::mt19937_64;

/// Random pattern with given density, values in [-1,1], diagonal set to row-sum + margin.
SparseMatrix random_diag_dominant(index_t n, double density, Rng& rng, double margin = 1.0);

/// Random nonsymmetric matrix that always has a perfect matching (a hidden permuted diagonal),
/// with entry magnitudes spread over several decades.
SparseMatrix random_matchable(index_t n, double density, Rng& rng);
/// Row-permuted diagonally dominant matrix with row/column scales spanning 10^[-3,3].
SparseMatrix scrambled_diag_dominant(index_t n, double density, Rng& rng);

/// 2D convection-diffusion, 5-point stencil on an m x m grid.
SparseMatrix convection_diffusion_2d(index_t m, double wind);

/// 3D 7-point Laplacian on an m^3 grid.
SparseMatrix laplace_3d(index_t m);

/// Grid operator coupling `dofs` unknowns per node through dense random blocks.
SparseMatrix coupled_grid(index_t m, index_t dofs, Rng& rng);

/// Arrow matrix: diagonal plus a dense first row and column.
SparseMatrix arrow(index_t n);

struct NamedMatrix {
  std::string name;
  SparseMatrix matrix;
};

/// Ten small nonsingular test matrices of different structure (deterministic).
std::vector<NamedMatrix> corpus();

/// Column-major dense copy.
std::vector<double> dense(const SparseMatrix& a);

/// Unpivoted dense LU: returns unit-lower L and upper U (column-major n x n).
struct DenseLu {
  std::vector<double> l, u;
};
DenseLu dense_lu_nopivot(std::vector<double> a, index_t n);

/// Max-row-sum norm of a column-major n x n matrix.
double dense_norm_inf(const std::vector<double>& a, index_t n);

/// max over all permutations of prod_i |a(i, sigma(i))| by enumeration.
double brute_force_max_product(const SparseMatrix& a);

/// Product of |a(i, perm[i])| in row order.
double transversal_product(const SparseMatrix& a, const Permutation& row_to_col);

/// Fill entries of the symbolic Cholesky factor of the pattern of P^T (B + B^T) P, diagonal excluded.
long long symbolic_cholesky_fill(const SparseMatrix& b, const Permutation& p);

/// Triple-loop C += sign * A * B.
void naive_gemm(DenseBlock& c, const DenseBlock& a, const DenseBlock& b, double sign);

DenseBlock random_block(index_t rows, index_t cols, Rng& rng);

std::vector<double> random_vector(index_t n, Rng& rng);

/// ||A x - b||_2 / ||b||_2
double relative_residual(const SparseMatrix& a, const std::vector<double>& x, const std::vector<double>& b);

}  // namespace bilu::testkit
