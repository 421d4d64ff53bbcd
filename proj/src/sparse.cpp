#include "bilu/sparse.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace bilu {

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix::SparseMatrix(index_t rows, index_t cols)
    : rows_(rows), cols_(cols), col_ptr_(static_cast<std::size_t>(cols) + 1, 0) {
  if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension");
}

SparseMatrix::SparseMatrix(index_t rows, index_t cols, std::vector<index_t> col_ptr,
                           std::vector<index_t> row_idx, std::vector<double> values)
    : rows_(rows), cols_(cols), col_ptr_(std::move(col_ptr)), row_idx_(std::move(row_idx)),
      values_(std::move(values)) {
  if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension");
  if (col_ptr_.size() != static_cast<std::size_t>(cols) + 1 || col_ptr_.front() != 0)
    throw DimensionError("col_ptr must have n_cols+1 entries starting at 0");
  if (row_idx_.size() != values_.size() || static_cast<std::size_t>(col_ptr_.back()) != row_idx_.size())
    throw DimensionError("col_ptr[n_cols], row_idx and values disagree on nnz");
  for (index_t j = 0; j < cols; ++j) {
    if (col_ptr_[j] > col_ptr_[j + 1]) throw DimensionError("col_ptr must be non-decreasing");
    for (index_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      if (row_idx_[p] < 0 || row_idx_[p] >= rows) throw DimensionError("row index out of range");
      if (p > col_ptr_[j] && row_idx_[p] <= row_idx_[p - 1])
        throw DimensionError("row indices must be strictly increasing within a column");
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(index_t rows, index_t cols, std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw DimensionError("triplet index out of range");
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  std::vector<index_t> ptr(static_cast<std::size_t>(cols) + 1, 0);
  std::vector<index_t> idx;
  std::vector<double> val;
  idx.reserve(entries.size());
  val.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& t = entries[k];
    if (k > 0 && entries[k - 1].col == t.col && entries[k - 1].row == t.row) {
      val.back() += t.value;
      continue;
    }
    idx.push_back(t.row);
    val.push_back(t.value);
    ++ptr[t.col + 1];
  }
  std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
  return SparseMatrix(rows, cols, std::move(ptr), std::move(idx), std::move(val));
}

SparseMatrix SparseMatrix::identity(index_t n) {
  std::vector<index_t> ptr(static_cast<std::size_t>(n) + 1);
  std::iota(ptr.begin(), ptr.end(), 0);
  std::vector<index_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return SparseMatrix(n, n, std::move(ptr), std::move(idx), std::vector<double>(n, 1.0));
}

double SparseMatrix::at(index_t i, index_t j) const {
  auto rows = col_rows(j);
  auto it = std::lower_bound(rows.begin(), rows.end(), i);
  if (it == rows.end() || *it != i) return 0.0;
  return values_[col_ptr_[j] + (it - rows.begin())];
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<index_t> ptr(static_cast<std::size_t>(rows_) + 1, 0);
  for (index_t r : row_idx_) ++ptr[r + 1];
  std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
  std::vector<index_t> next(ptr.begin(), ptr.end() - 1);
  std::vector<index_t> idx(nnz());
  std::vector<double> val(nnz());
  // Scanning columns in order keeps the transposed rows sorted.
  for (index_t j = 0; j < cols_; ++j) {
    for (index_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      index_t q = next[row_idx_[p]]++;
      idx[q] = j;
      val[q] = values_[p];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(ptr), std::move(idx), std::move(val));
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != static_cast<std::size_t>(cols_) || y.size() != static_cast<std::size_t>(rows_))
    throw DimensionError("matrix-vector product: length mismatch");
  std::fill(y.begin(), y.end(), 0.0);
  for (index_t j = 0; j < cols_; ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    for (index_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) y[row_idx_[p]] += values_[p] * xj;
  }
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(rows_);
  multiply(x, y);
  return y;
}

std::vector<double> SparseMatrix::to_dense_colmajor() const {
  std::vector<double> d(static_cast<std::size_t>(rows_) * cols_, 0.0);
  for (index_t j = 0; j < cols_; ++j)
    for (index_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
      d[static_cast<std::size_t>(j) * rows_ + row_idx_[p]] = values_[p];
  return d;
}

double SparseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double SparseMatrix::norm_inf() const {
  std::vector<double> row_sum(rows_, 0.0);
  for (std::size_t p = 0; p < nnz(); ++p) row_sum[row_idx_[p]] += std::abs(values_[p]);
  return row_sum.empty() ? 0.0 : *std::max_element(row_sum.begin(), row_sum.end());
}

// ---------------------------------------------------------------------------
// Permutation, scaling, partition

Permutation::Permutation(std::vector<index_t> map) : map_(std::move(map)) {
  std::vector<char> seen(map_.size(), 0);
  for (index_t v : map_) {
    if (v < 0 || static_cast<std::size_t>(v) >= map_.size() || seen[v])
      throw DimensionError("permutation is not a bijection");
    seen[v] = 1;
  }
}

Permutation Permutation::identity(index_t n) {
  std::vector<index_t> m(n);
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<index_t> inv(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) inv[map_[i]] = static_cast<index_t>(i);
  return Permutation(std::move(inv));
}

Permutation Permutation::then(const Permutation& q) const {
  if (q.size() != size()) throw DimensionError("permutation composition: size mismatch");
  std::vector<index_t> m(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) m[i] = map_[q.map_[i]];
  return Permutation(std::move(m));
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < map_.size(); ++i)
    if (map_[i] != static_cast<index_t>(i)) return false;
  return true;
}

DiagonalScaling::DiagonalScaling(std::vector<double> d) : d_(std::move(d)) {
  for (double v : d_)
    if (!(std::isfinite(v) && v > 0.0)) throw std::invalid_argument("scaling entries must be finite and positive");
}

BlockPartition::BlockPartition(std::vector<index_t> sizes) : sizes_(std::move(sizes)) {
  offsets_.assign(sizes_.size() + 1, 0);
  for (std::size_t b = 0; b < sizes_.size(); ++b) {
    if (sizes_[b] < 1) throw std::invalid_argument("block sizes must be positive");
    offsets_[b + 1] = offsets_[b] + sizes_[b];
  }
}

std::vector<index_t> BlockPartition::block_of() const {
  std::vector<index_t> owner(dim());
  for (index_t b = 0; b < num_blocks(); ++b) std::fill(owner.begin() + begin(b), owner.begin() + end(b), b);
  return owner;
}

index_t BlockPartition::max_size() const {
  return sizes_.empty() ? 0 : *std::max_element(sizes_.begin(), sizes_.end());
}

double BlockPartition::mean_size() const {
  return sizes_.empty() ? 0.0 : static_cast<double>(dim()) / num_blocks();
}

double BlockPartition::stddev_size() const {
  if (sizes_.empty()) return 0.0;
  const double mean = mean_size();
  double acc = 0.0;
  for (index_t s : sizes_) acc += (s - mean) * (s - mean);
  return std::sqrt(acc / num_blocks());
}

// ---------------------------------------------------------------------------
// Matrix Market

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

const char* skip_ws(const char* p, const char* end) {
  while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  return p;
}

template <class T>
const char* parse_number(const char* p, const char* end, T& out, std::size_t line) {
  p = skip_ws(p, end);
  auto [next, ec] = std::from_chars(p, end, out);
  if (ec != std::errc() || next == p) throw ParseError("expected a number", line);
  return next;
}

}  // namespace

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty input", 0);
  ++lineno;
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", lineno);
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix") throw ParseError("unsupported object '" + object + "'", lineno);
  if (field == "pattern" || field == "complex")
    throw UnsupportedFormatError("Matrix Market field '" + field + "' is not supported");
  if (format != "coordinate") throw UnsupportedFormatError("only coordinate Matrix Market files are supported");
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError("unknown field '" + field + "'", lineno);
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    throw UnsupportedFormatError("Matrix Market symmetry '" + symmetry + "' is not supported");

  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '%') continue;
    break;
  }
  long long rows = 0, cols = 0, nnz = 0;
  {
    const char* p = line.data();
    const char* end = p + line.size();
    p = parse_number(p, end, rows, lineno);
    p = parse_number(p, end, cols, lineno);
    parse_number(p, end, nnz, lineno);
    if (rows < 0 || cols < 0 || nnz < 0) throw ParseError("negative size line", lineno);
    if (symmetric && rows != cols) throw ParseError("symmetric matrix must be square", lineno);
  }

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(symmetric ? 2 * nnz : nnz));
  long long read = 0;
  while (read < nnz && std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '%') continue;
    const char* p = line.data();
    const char* end = p + line.size();
    long long i = 0, j = 0;
    double v = 0.0;
    p = parse_number(p, end, i, lineno);
    p = parse_number(p, end, j, lineno);
    p = parse_number(p, end, v, lineno);
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("index out of range", lineno);
    entries.push_back({static_cast<index_t>(i - 1), static_cast<index_t>(j - 1), v});
    if (symmetric && i != j) entries.push_back({static_cast<index_t>(j - 1), static_cast<index_t>(i - 1), v});
    ++read;
  }
  if (read < nnz) throw ParseError("file ends before all " + std::to_string(nnz) + " entries", lineno);
  return SparseMatrix::from_triplets(static_cast<index_t>(rows), static_cast<index_t>(cols), std::move(entries));
}

SparseMatrix read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  return read_matrix_market(in);
}

void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  out << std::setprecision(17);
  for (index_t j = 0; j < a.cols(); ++j) {
    auto rows = a.col_rows(j);
    auto vals = a.col_values(j);
    for (std::size_t p = 0; p < rows.size(); ++p) out << rows[p] + 1 << ' ' << j + 1 << ' ' << vals[p] << '\n';
  }
}

void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_matrix_market(out, a);
}

void write_matrix_market_pattern(const std::filesystem::path& path, const SparseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "%%MatrixMarket matrix coordinate pattern general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  for (index_t j = 0; j < a.cols(); ++j)
    for (index_t r : a.col_rows(j)) out << r + 1 << ' ' << j + 1 << '\n';
}

// ---------------------------------------------------------------------------
// Transforms

SparseMatrix permute(const SparseMatrix& a, const Permutation& row_perm, const Permutation& col_perm) {
  if (row_perm.size() != a.rows() || col_perm.size() != a.cols())
    throw DimensionError("permutation size does not match matrix");
  const Permutation row_inv = row_perm.inverse();
  std::vector<index_t> ptr(static_cast<std::size_t>(a.cols()) + 1, 0);
  std::vector<index_t> idx(a.nnz());
  std::vector<double> val(a.nnz());
  std::vector<std::pair<index_t, double>> scratch;
  index_t pos = 0;
  for (index_t j = 0; j < a.cols(); ++j) {
    const index_t src = col_perm[j];
    auto rows = a.col_rows(src);
    auto vals = a.col_values(src);
    scratch.clear();
    for (std::size_t p = 0; p < rows.size(); ++p) scratch.emplace_back(row_inv[rows[p]], vals[p]);
    std::sort(scratch.begin(), scratch.end(), [](auto& x, auto& y) { return x.first < y.first; });
    for (auto& [r, v] : scratch) {
      idx[pos] = r;
      val[pos] = v;
      ++pos;
    }
    ptr[j + 1] = pos;
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(ptr), std::move(idx), std::move(val));
}

SparseMatrix symmetric_permute(const SparseMatrix& a, const Permutation& p) {
  if (!a.square()) throw DimensionError("symmetric permutation needs a square matrix");
  return permute(a, p, p);
}

SparseMatrix apply_matching_transform(const SparseMatrix& a, const DiagonalScaling& row_scaling,
                                      const DiagonalScaling& col_scaling, const Permutation& perm) {
  if (row_scaling.size() != a.rows() || col_scaling.size() != a.cols() || perm.size() != a.cols())
    throw DimensionError("matching transform: dimension mismatch");
  SparseMatrix out = permute(a, Permutation::identity(a.rows()), perm);
  std::vector<double> val(out.values().begin(), out.values().end());
  for (index_t j = 0; j < out.cols(); ++j) {
    const double dr = col_scaling[perm[j]];
    for (index_t p = out.col_ptr()[j]; p < out.col_ptr()[j + 1]; ++p)
      val[p] *= row_scaling[out.row_idx()[p]] * dr;
  }
  return SparseMatrix(out.rows(), out.cols(), std::vector<index_t>(out.col_ptr().begin(), out.col_ptr().end()),
                      std::vector<index_t>(out.row_idx().begin(), out.row_idx().end()), std::move(val));
}

SparseMatrix compress_companion(const SparseMatrix& a, const BlockPartition& partition) {
  if (!a.square() || partition.dim() != a.rows())
    throw DimensionError("partition does not cover the matrix dimension");
  const index_t nb = partition.num_blocks();
  const std::vector<index_t> owner = partition.block_of();
  std::vector<index_t> ptr(static_cast<std::size_t>(nb) + 1, 0);
  std::vector<index_t> idx;
  std::vector<index_t> mark(nb, -1);
  for (index_t bj = 0; bj < nb; ++bj) {
    const std::size_t start = idx.size();
    for (index_t j = partition.begin(bj); j < partition.end(bj); ++j) {
      for (index_t r : a.col_rows(j)) {
        const index_t bi = owner[r];
        if (mark[bi] != bj) {
          mark[bi] = bj;
          idx.push_back(bi);
        }
      }
    }
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(start), idx.end());
    ptr[bj + 1] = static_cast<index_t>(idx.size());
  }
  std::vector<double> val(idx.size(), 1.0);
  return SparseMatrix(nb, nb, std::move(ptr), std::move(idx), std::move(val));
}

ExpandedPermutation expand_permutation(const Permutation& block_perm, const BlockPartition& partition) {
  if (block_perm.size() != partition.num_blocks())
    throw DimensionError("block permutation size does not match the partition");
  std::vector<index_t> map;
  std::vector<index_t> sizes;
  map.reserve(partition.dim());
  sizes.reserve(partition.num_blocks());
  for (index_t b = 0; b < block_perm.size(); ++b) {
    const index_t src = block_perm[b];
    sizes.push_back(partition.size(src));
    for (index_t i = partition.begin(src); i < partition.end(src); ++i) map.push_back(i);
  }
  return {Permutation(std::move(map)), BlockPartition(std::move(sizes))};
}

}  // namespace bilu
