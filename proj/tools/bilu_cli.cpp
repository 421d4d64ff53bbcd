#include <CLI11.hpp>
#include <algorithm>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "bilu/bench.hpp"

namespace {

std::vector<double> read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  // A Matrix Market array file (its size line is skipped) or a plain whitespace separated list.
  std::string line;
  bool skip_size = false;
  std::vector<double> v;
  while (std::getline(in, line)) {
    if (line.rfind("%%MatrixMarket", 0) == 0) {
      skip_size = true;
      continue;
    }
    if (line.empty() || line[0] == '%') continue;
    if (skip_size) {
      skip_size = false;
      continue;
    }
    std::istringstream is(line);
    double x;
    while (is >> x) v.push_back(x);
  }
  return v;
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

/*
 * Replaces "--config FILE" by "--key value" pairs for every key not given on
 * the command line. Returned in CLI11's reversed order for App::parse.
 */
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> in(argv + 1, argv + argc), out;
  std::set<std::string> given;
  for (const auto& a : in)
    if (a.starts_with("--")) given.insert(a.substr(0, a.find('=')));
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != "--config" && !in[i].starts_with("--config=")) {
      out.push_back(in[i]);
      continue;
    }
    std::string path;
    if (in[i] == "--config") {
      if (i + 1 >= in.size()) throw std::runtime_error("--config needs a file");
      path = in[++i];
    } else {
      path = in[i].substr(9);
    }
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    for (const auto& item : CLI::ConfigINI().from_config(f)) {
      const std::string key = "--" + item.name;
      if (item.name.empty() || item.name == "++" || item.name == "--" || given.count(key)) continue;
      std::string value;
      for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
      out.push_back(key + "=" + value);
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block incomplete LU preconditioning with restarted GMRES"};
  app.require_subcommand(1);

  std::string ordering_cmd, config_unused;
  double cos_tau = 0.8;
  int restart = 30, max_outer = 100;
  double rel_tol = 1e-6;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_unused, "File of 'key = value' lines mirroring the flags");
    sub->add_option("--ordering-cmd", ordering_cmd, "External ordering command '<cmd> <in.mtx> <out.txt>'");
    sub->add_option("--cos-tau", cos_tau, "Cosine blocking threshold")->capture_default_str();
    sub->add_option("--restart", restart, "GMRES restart length")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--rel-tol", rel_tol, "GMRES relative residual tolerance")->capture_default_str();
    sub->add_option("--max-outer", max_outer, "GMRES restart cycles")->capture_default_str();
  };

  auto* solve = app.add_subcommand("solve", "Factorize one matrix and solve with GMRES");
  std::string matrix_path, blocking = "cip", rhs_path;
  double tau = 1e-2;
  solve->add_option("--matrix", matrix_path, "Matrix Market file")->required();
  solve->add_option("--tau", tau, "Drop tolerance")->capture_default_str();
  solve->add_option("--blocking", blocking, "Method tag, e.g. cip, c--, ---")->capture_default_str();
  solve->add_option("--rhs", rhs_path, "Right-hand side (default: all ones)");
  add_common(solve);

  auto* bench = app.add_subcommand("bench", "Run a matrix corpus over methods and drop tolerances");
  std::string list_path, out_path;
  std::vector<std::string> blockings{"---", "c--", "ci-", "cip"};
  std::vector<std::string> taus_raw{"1e-1", "1e-2", "1e-3", "1e-4", "1e-5", "1e-6"};
  unsigned jobs = 1;
  int repeats = 1;
  bool best_only = false;
  bench->add_option("--list", list_path, "Corpus list file")->required();
  bench->add_option("--blockings", blockings, "Comma separated method tags")->delimiter(',');
  bench->add_option("--taus", taus_raw, "Comma separated drop tolerances")->delimiter(',');
  bench->add_option("--out", out_path, "Output CSV")->required();
  bench->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  bench->add_option("--repeats", repeats, "Timing repeats (minimum is kept)")->capture_default_str();
  bench->add_flag("--best", best_only, "Keep only the fastest converged tau per matrix and method");
  add_common(bench);

  auto* profile = app.add_subcommand("profile", "Performance profiles from a results CSV");
  std::string in_path, metric = "time", prof_out;
  profile->add_option("--in", in_path, "Results CSV")->required();
  profile->add_option("--metric", metric, "time, memory or time_x_memory")
      ->capture_default_str()
      ->check(CLI::IsMember({"time", "memory", "time_x_memory"}));
  profile->add_option("--out", prof_out, "Profile CSV")->required();
  profile->add_option("--config", config_unused, "File of 'key = value' lines mirroring the flags");

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  bilu::RunOptions run;
  run.ordering.external_command = ordering_cmd;
  run.cosine.tau_cos = cos_tau;
  run.gmres.restart = restart;
  run.gmres.rel_tol = rel_tol;
  run.gmres.max_outer = max_outer;

  try {
    if (*solve) {
      const bilu::SparseMatrix a = bilu::read_matrix_market(matrix_path);
      if (!rhs_path.empty()) run.rhs = read_vector(rhs_path);
      const std::string name = std::filesystem::path(matrix_path).stem().string();
      const bilu::RunRecord rec = bilu::run_single(a, name, blocking, tau, run);
      std::cout << bilu::format_record_kv(rec) << '\n';
      if (rec.status == bilu::RunStatus::error) {
        std::cerr << "error: " << rec.message << '\n';
        return 1;
      }
      return 0;
    }
    if (*bench) {
      bilu::SuiteConfig cfg;
      cfg.methods = split_list(blockings);
      for (const auto& t : split_list(taus_raw)) cfg.taus.push_back(std::stod(t));
      for (const auto& m : cfg.methods) bilu::parse_method_tag(m);
      cfg.run = run;
      cfg.run.repeats = repeats;
      cfg.jobs = jobs;
      std::vector<bilu::RunRecord> recs = bilu::run_suite(bilu::read_corpus_list(list_path), cfg);
      for (const auto& r : recs)
        if (r.status != bilu::RunStatus::ok)
          std::cerr << "warning: " << r.matrix << ' ' << r.method << " tau=" << r.tau << ": "
                    << bilu::to_string(r.status) << (r.message.empty() ? "" : " (" + r.message + ")") << '\n';
      if (best_only) recs = bilu::select_best(recs);
      std::ofstream out(out_path);
      if (!out) throw std::runtime_error("cannot write " + out_path);
      bilu::write_records_csv(out, recs);
      return 0;
    }
    if (*profile) {
      std::ifstream in(in_path);
      if (!in) throw std::runtime_error("cannot open " + in_path);
      const auto recs = bilu::read_records_csv(in);
      std::vector<std::string> warnings;
      const auto curves = bilu::performance_profile(recs, bilu::parse_statistic(metric), &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      std::ofstream out(prof_out);
      if (!out) throw std::runtime_error("cannot write " + prof_out);
      bilu::write_profile_csv(out, curves);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
