#include "bilu/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace bilu {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

RunRecord run_once(const SparseMatrix& a, const std::string& name, const std::string& method, double tau,
                   const RunOptions& options) {
  RunRecord rec;
  rec.matrix = name;
  rec.method = method;
  rec.tau = tau;
  try {
    const MethodTag tag = parse_method_tag(method);
    const index_t n = a.rows();
    std::vector<double> b = options.rhs.empty() ? std::vector<double>(n, 1.0) : options.rhs;
    if (b.size() != static_cast<std::size_t>(n)) throw DimensionError("right-hand side length mismatch");

    const auto t0 = Clock::now();
    PipelineConfig pc;
    pc.flags = tag.pipeline;
    pc.tau = tau;
    pc.cosine = options.cosine;
    pc.ordering = options.ordering;
    PipelineResult pipe = build_pipeline_partition(a, pc);
    FactorConfig fc = options.factor;
    fc.drop_tau = tau;
    fc.aggregate = tag.aggregate;
    BlockFactorization f = factorize(pipe.matrix, pipe.partition, fc);
    f.set_preprocess(std::move(pipe.preprocess));
    rec.factor_time_s = seconds_since(t0);

    rec.fill_ratio = a.nnz() > 0 ? static_cast<double>(f.nnz()) / static_cast<double>(a.nnz()) : 0.0;
    rec.peak_mem_bytes = f.memory_bytes();
    rec.perturbations = f.perturbation_count();
    rec.n_blocks = f.partition().num_blocks();
    rec.max_block = f.partition().max_size();
    rec.mean_block = f.partition().mean_size();

    const auto t1 = Clock::now();
    const GmresResult sol =
        gmres(a, b, [&f](std::span<const double> x, std::span<double> y) { f.apply(x, y); }, options.gmres);
    rec.solve_time_s = seconds_since(t1);
    rec.iterations = sol.stats.iterations;
    rec.status = sol.stats.converged ? RunStatus::ok : RunStatus::no_convergence;
    if (!sol.stats.converged) rec.message = "relative residual " + fmt(sol.stats.final_relres);
  } catch (const BreakdownError& e) {
    rec.status = RunStatus::breakdown;
    rec.message = e.what();
  } catch (const std::exception& e) {
    rec.status = RunStatus::error;
    rec.message = e.what();
  }
  return rec;
}

}  // namespace

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::breakdown: return "breakdown";
    case RunStatus::no_convergence: return "no_convergence";
    case RunStatus::error: return "error";
  }
  return "error";
}

RunStatus parse_run_status(const std::string& s) {
  if (s == "ok") return RunStatus::ok;
  if (s == "breakdown") return RunStatus::breakdown;
  if (s == "no_convergence") return RunStatus::no_convergence;
  if (s == "error") return RunStatus::error;
  throw std::invalid_argument("unknown run status '" + s + "'");
}

bool RunRecord::operator==(const RunRecord& o) const {
  return matrix == o.matrix && method == o.method && tau == o.tau && status == o.status &&
         factor_time_s == o.factor_time_s && solve_time_s == o.solve_time_s && iterations == o.iterations &&
         fill_ratio == o.fill_ratio && peak_mem_bytes == o.peak_mem_bytes && perturbations == o.perturbations &&
         n_blocks == o.n_blocks && max_block == o.max_block && mean_block == o.mean_block;
}

MethodTag parse_method_tag(const std::string& tag) {
  MethodTag m;
  m.pipeline = parse_pipeline_flags(tag);
  if (tag.size() > 3) throw std::invalid_argument("bad method tag '" + tag + "'");
  if (tag.size() == 3) {
    if (tag[2] == 'p')
      m.aggregate = true;
    else if (tag[2] != '-')
      throw std::invalid_argument("bad method tag '" + tag + "'");
  }
  return m;
}

RunRecord run_single(const SparseMatrix& a, const std::string& name, const std::string& method, double tau,
                     const RunOptions& options) {
  RunRecord best = run_once(a, name, method, tau, options);
  for (index_t r = 1; r < options.repeats && best.status == RunStatus::ok; ++r) {
    RunRecord again = run_once(a, name, method, tau, options);
    best.factor_time_s = std::min(best.factor_time_s, again.factor_time_s);
    best.solve_time_s = std::min(best.solve_time_s, again.solve_time_s);
  }
  return best;
}

std::vector<RunRecord> run_suite(const std::vector<std::string>& matrix_paths, const SuiteConfig& config) {
  struct Cell {
    std::size_t matrix;
    std::string method;
    double tau;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < matrix_paths.size(); ++m)
    for (const auto& method : config.methods)
      for (double tau : config.taus) cells.push_back({m, method, tau});

  std::vector<RunRecord> out(cells.size());
  std::mutex sink;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      const Cell& cell = cells[c];
      const std::string& path = matrix_paths[cell.matrix];
      const std::string name = std::filesystem::path(path).stem().string();
      RunRecord rec;
      try {
        // Each cell reads its own copy so runs never share state.
        const SparseMatrix a = read_matrix_market(path);
        rec = run_single(a, name, cell.method, cell.tau, config.run);
      } catch (const std::exception& e) {
        rec.matrix = name;
        rec.method = cell.method;
        rec.tau = cell.tau;
        rec.status = RunStatus::error;
        rec.message = e.what();
      }
      std::lock_guard lock(sink);
      out[c] = std::move(rec);
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(config.jobs, static_cast<unsigned>(cells.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<RunRecord> select_best(const std::vector<RunRecord>& records) {
  std::vector<RunRecord> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const RunRecord& r : records) {
    auto key = std::make_pair(r.matrix, r.method);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(key, out.size());
      out.push_back(r);
      continue;
    }
    RunRecord& cur = out[it->second];
    const double tc = cur.status == RunStatus::ok ? cur.total_time() : kInf;
    const double tr = r.status == RunStatus::ok ? r.total_time() : kInf;
    if (tr < tc) cur = r;
  }
  return out;
}

const char* const kRecordCsvHeader =
    "matrix,method,tau,status,factor_time_s,solve_time_s,iterations,fill_ratio,peak_mem_bytes,perturbations,n_blocks,"
    "max_block,mean_block";

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kRecordCsvHeader << '\n';
  for (const RunRecord& r : records) {
    if (r.matrix.find(',') != std::string::npos || r.method.find(',') != std::string::npos)
      throw std::invalid_argument("names must not contain commas: " + r.matrix);
    out << r.matrix << ',' << r.method << ',' << fmt(r.tau) << ',' << to_string(r.status) << ','
        << fmt(r.factor_time_s) << ',' << fmt(r.solve_time_s) << ',' << r.iterations << ',' << fmt(r.fill_ratio)
        << ',' << r.peak_mem_bytes << ',' << r.perturbations << ',' << r.n_blocks << ',' << r.max_block << ','
        << fmt(r.mean_block) << '\n';
  }
}

std::vector<RunRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV input", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordCsvHeader) throw ParseError("unexpected CSV header", 1);
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw ParseError("expected 13 fields", lineno);
    try {
      RunRecord r;
      r.matrix = f[0];
      r.method = f[1];
      r.tau = std::stod(f[2]);
      r.status = parse_run_status(f[3]);
      r.factor_time_s = std::stod(f[4]);
      r.solve_time_s = std::stod(f[5]);
      r.iterations = std::stoi(f[6]);
      r.fill_ratio = std::stod(f[7]);
      r.peak_mem_bytes = std::stoull(f[8]);
      r.perturbations = std::stoi(f[9]);
      r.n_blocks = std::stoi(f[10]);
      r.max_block = std::stoi(f[11]);
      r.mean_block = std::stod(f[12]);
      out.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("bad field: ") + e.what(), lineno);
    } catch (const std::out_of_range& e) {
      throw ParseError(std::string("field out of range: ") + e.what(), lineno);
    }
  }
  return out;
}

std::string format_record_kv(const RunRecord& r) {
  std::ostringstream os;
  os << "matrix=" << r.matrix << " method=" << r.method << " tau=" << r.tau << " status=" << to_string(r.status)
     << " factor_time_s=" << r.factor_time_s << " solve_time_s=" << r.solve_time_s << " iterations=" << r.iterations
     << " fill_ratio=" << r.fill_ratio << " peak_mem_bytes=" << r.peak_mem_bytes
     << " perturbations=" << r.perturbations << " n_blocks=" << r.n_blocks << " max_block=" << r.max_block
     << " mean_block=" << r.mean_block;
  return os.str();
}

Statistic parse_statistic(const std::string& s) {
  if (s == "time") return Statistic::time;
  if (s == "memory") return Statistic::memory;
  if (s == "time_x_memory") return Statistic::time_x_memory;
  throw std::invalid_argument("unknown statistic '" + s + "' (time, memory, time_x_memory)");
}

double statistic_value(const RunRecord& r, Statistic s) {
  if (r.status != RunStatus::ok) return kInf;
  switch (s) {
    case Statistic::time: return r.total_time();
    case Statistic::memory: return static_cast<double>(r.peak_mem_bytes);
    case Statistic::time_x_memory: return r.total_time() * static_cast<double>(r.peak_mem_bytes);
  }
  return kInf;
}

std::vector<ProfileCurve> performance_profile(const std::vector<RunRecord>& records, Statistic statistic,
                                              std::vector<std::string>* warnings) {
  const std::vector<RunRecord> best = select_best(records);
  std::vector<std::string> methods, matrices;
  for (const RunRecord& r : best) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(matrices.begin(), matrices.end(), r.matrix) == matrices.end()) matrices.push_back(r.matrix);
  }
  // Missing cells count as failures.
  std::vector<std::vector<double>> t(methods.size(), std::vector<double>(matrices.size(), kInf));
  for (const RunRecord& r : best) {
    const auto mi = std::find(methods.begin(), methods.end(), r.method) - methods.begin();
    const auto si = std::find(matrices.begin(), matrices.end(), r.matrix) - matrices.begin();
    t[mi][si] = statistic_value(r, statistic);
  }

  std::vector<std::size_t> kept;
  std::vector<double> best_t;
  for (std::size_t s = 0; s < matrices.size(); ++s) {
    double b = kInf;
    for (std::size_t m = 0; m < methods.size(); ++m) b = std::min(b, t[m][s]);
    if (b == kInf) {
      if (warnings) warnings->push_back("matrix " + matrices[s] + " failed for every method; dropped from profile");
      continue;
    }
    kept.push_back(s);
    best_t.push_back(b);
  }

  std::vector<std::vector<double>> ratio(methods.size());
  std::vector<double> alphas{1.0};
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t q = 0; q < kept.size(); ++q) {
      const double v = t[m][kept[q]];
      double r;
      if (v == kInf)
        r = kInf;
      else if (best_t[q] == 0.0)
        r = v == 0.0 ? 1.0 : kInf;
      else
        r = v / best_t[q];
      ratio[m].push_back(r);
      if (r != kInf) alphas.push_back(r);
    }
  }
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  std::vector<ProfileCurve> curves;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    ProfileCurve c{methods[m], {}};
    std::vector<double> sorted = ratio[m];
    std::sort(sorted.begin(), sorted.end());
    for (double a : alphas) {
      const auto cnt = std::upper_bound(sorted.begin(), sorted.end(), a) - sorted.begin();
      const double p = kept.empty() ? 0.0 : static_cast<double>(cnt) / static_cast<double>(kept.size());
      c.points.push_back({a, p});
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

void write_profile_csv(std::ostream& out, const std::vector<ProfileCurve>& curves) {
  out << "method,alpha,p\n";
  for (const ProfileCurve& c : curves)
    for (const ProfilePoint& pt : c.points) out << c.method << ',' << fmt(pt.alpha) << ',' << fmt(pt.p) << '\n';
}

std::vector<std::string> read_corpus_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus list " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::filesystem::path p = line.substr(b, e - b + 1);
    if (p.is_relative() && !base.empty()) p = base / p;
    out.push_back(p.string());
  }
  return out;
}

}  // namespace bilu
