#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bilu/blocking.hpp"
#include "bilu/factor.hpp"
#include "bilu/gmres.hpp"

namespace bilu {

enum class RunStatus { ok, breakdown, no_convergence, error };

std::string to_string(RunStatus s);
RunStatus parse_run_status(const std::string& s);

struct RunRecord {
  std::string matrix;
  std::string method;
  double tau = 0.0;
  RunStatus status = RunStatus::error;
  double factor_time_s = 0.0;  // preprocessing + factorization
  double solve_time_s = 0.0;
  index_t iterations = 0;
  double fill_ratio = 0.0;
  std::size_t peak_mem_bytes = 0;
  index_t perturbations = 0;
  index_t n_blocks = 0;
  index_t max_block = 0;
  double mean_block = 0.0;
  std::string message;  // diagnostic for failed runs, not serialized

  double total_time() const { return factor_time_s + solve_time_s; }
  bool operator==(const RunRecord& o) const;
};

/// Three-character method tag: cosine blocking 'c', ILU(1,tau) 'i', progressive aggregation 'p', '-' for off.
struct MethodTag {
  PipelineFlags pipeline;
  bool aggregate = false;
};
MethodTag parse_method_tag(const std::string& tag);

struct RunOptions {
  GmresConfig gmres;
  OrderingConfig ordering;
  CosineConfig cosine;
  FactorConfig factor;  // drop_tau and aggregate are taken from the run
  std::vector<double> rhs;  // empty: all ones
  index_t repeats = 1;      // minimum time over repeats
};

/// Full pipeline (matching, blocking, ordering, factorization) followed by GMRES on one matrix.
RunRecord run_single(const SparseMatrix& a, const std::string& name, const std::string& method, double tau,
                     const RunOptions& options = {});

struct SuiteConfig {
  std::vector<std::string> methods;
  std::vector<double> taus;
  RunOptions run;
  unsigned jobs = 1;
};

/// Every (matrix, method, tau) cell; failures are recorded, never thrown. Records follow the input order.
std::vector<RunRecord> run_suite(const std::vector<std::string>& matrix_paths, const SuiteConfig& config);

/// One record per (matrix, method): the converged run of minimal total time, or a failed one.
std::vector<RunRecord> select_best(const std::vector<RunRecord>& records);

extern const char* const kRecordCsvHeader;
void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records_csv(std::istream& in);
std::string format_record_kv(const RunRecord& r);

enum class Statistic { time, memory, time_x_memory };
Statistic parse_statistic(const std::string& s);
/// Value used for profiling; +inf for failed runs.
double statistic_value(const RunRecord& r, Statistic s);

struct ProfilePoint {
  double alpha;
  double p;
};

struct ProfileCurve {
  std::string method;
  std::vector<ProfilePoint> points;  // ascending alpha
};

/*
 * Performance profiles over the (matrix x method) grid. Several records for
 * one cell are first reduced with select_best. Matrices failed by every
 * method are dropped and reported through `warnings`.
 */
std::vector<ProfileCurve> performance_profile(const std::vector<RunRecord>& records, Statistic statistic,
                                              std::vector<std::string>* warnings = nullptr);

void write_profile_csv(std::ostream& out, const std::vector<ProfileCurve>& curves);

/// One path per line; blank lines and '#' comments are skipped. Relative paths resolve against the list's directory.
std::vector<std::string> read_corpus_list(const std::string& path);

}  // namespace bilu
