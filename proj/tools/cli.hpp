#ifndef LPRE_TOOLS_CLI_HPP
#define LPRE_TOOLS_CLI_HPP

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lpre/lpre.hpp"

/**
 * The `lpre` command line. `run` takes the arguments without the program
 * name and returns the process exit code: 0 on success, 2 for configuration
 * errors (bad or conflicting flags), 1 for failures while running.
 */
namespace lpre::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct SolverFlags {
  double tol = 1e-10;
  int max_iter = 100;
  std::string hessian = "frozen";

  void add_to(CLI::App& app) {
    app.add_option("--tol", tol, "Newton convergence tolerance (sup-norm of the increment)")->capture_default_str();
    app.add_option("--max-iter", max_iter, "Newton iteration limit per solve")->capture_default_str();
    app.add_option("--hessian", hessian, "Renewable Newton matrix: frozen or refreshed")
        ->check(CLI::IsMember({"frozen", "refreshed"}))
        ->capture_default_str();
  }

  SolverConfig resolve() const {
    SolverConfig cfg;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.hessian = hessian == "refreshed" ? HessianMode::Refreshed : HessianMode::Frozen;
    cfg.validate();
    return cfg;
  }

  void echo(std::ostream& err) const {
    err << "config: tol=" << lpre::detail::fmt_g(tol) << " max_iter=" << max_iter << " hessian=" << hessian << '\n';
  }
};

struct InputFlags {
  std::string input;
  std::string response;
  bool no_intercept = false;

  void add_to(CLI::App& app, bool required) {
    auto* o = app.add_option("--input", input, "CSV file or directory of CSV files (one batch per file)");
    if (required) o->required();
    app.add_option("--response", response, "Response column name (default: first column)");
    app.add_flag("--no-intercept", no_intercept, "Do not prepend an intercept column");
  }

  CsvOptions resolve() const {
    CsvOptions opts;
    opts.response = response;
    opts.intercept = !no_intercept;
    return opts;
  }

  void echo(std::ostream& err) const {
    err << "config: input=" << input << " response=" << (response.empty() ? "<first column>" : response)
        << " intercept=" << (no_intercept ? "off" : "on") << '\n';
  }
};

struct DgpFlags {
  int covariate_case = 1;
  std::string error = "lognormal";
  long long n_total = 0;
  unsigned long long seed = 1;
  std::string methods = "full,cee,cuee,renew";

  void add_to(CLI::App& app) {
    app.add_option("--case", covariate_case, "Covariate design 1-4")->check(CLI::Range(1, 4))->capture_default_str();
    app.add_option("--error", error, "Error law: lognormal, uniform or none")
        ->check(CLI::IsMember({"lognormal", "uniform", "none"}))
        ->capture_default_str();
    app.add_option("--N", n_total, "Total number of observations")->required();
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--methods", methods, "Comma-separated list of full, cee, cuee, renew")->capture_default_str();
  }

  sim::DgpConfig resolve() const {
    sim::DgpConfig cfg;
    cfg.covariate_case = sim::parse_case(covariate_case);
    cfg.error_law = sim::parse_error_law(error);
    cfg.seed = seed;
    return cfg;
  }

  std::vector<Method> method_list() const {
    std::vector<Method> out;
    std::stringstream ss(methods);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const Method m = parse_method(item);
      if (std::find(out.begin(), out.end(), m) != out.end()) {
        throw Error(ErrorCode::InvalidConfig, "method '" + item + "' listed twice");
      }
      out.push_back(m);
    }
    if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no methods given");
    return out;
  }

  void echo(std::ostream& err) const {
    err << "config: case=" << covariate_case << " error=" << error << " N=" << n_total << " seed=" << seed
        << " methods=" << methods << '\n';
  }
};

inline void check_format(const std::string& format, bool allow_records) {
  if (format == "text" || format == "csv") return;
  if (allow_records && format == "records") return;
  throw ConfigError("unknown --format '" + format + "'");
}

inline void write_report(std::ostream& out, const EstimateReport& r, const std::string& format) {
  if (format == "csv") {
    write_report_csv(out, r);
  } else if (format == "records") {
    write_report_records(out, r);
  } else {
    write_report_table(out, r);
  }
}

inline void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidLevel, "--level must lie in (0, 1)");
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return f;
}

/// All batches of a CSV file (one batch) or directory (one per file).
inline std::vector<Batch> read_all(const InputFlags& in, std::vector<std::string>& names) {
  BatchSource src = BatchSource::open(in.input, 0, in.resolve());
  std::vector<Batch> batches;
  while (auto b = src.next_batch()) batches.push_back(std::move(*b));
  names = src.names();
  return batches;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming LPRE estimation for multiplicative regression", "lpre"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string format = "text";
  double level = 0.95;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study: BIAS, SSE, ESE and CP per method");
  detail::DgpFlags sim_dgp;
  detail::SolverFlags sim_solver;
  long long sim_nb = 0;
  long long sim_b = 0;
  long long sim_reps = 200;
  unsigned sim_workers = 1;
  std::string sim_out;
  sim_dgp.add_to(*simulate);
  sim_solver.add_to(*simulate);
  auto* nb_opt = simulate->add_option("--nb", sim_nb, "Batch size n_b");
  auto* b_opt = simulate->add_option("--B", sim_b, "Number of batches B");
  nb_opt->excludes(b_opt);
  simulate->add_option("--reps", sim_reps, "Monte Carlo replications")->capture_default_str();
  simulate->add_option("--workers", sim_workers, "Worker threads (0 = hardware concurrency)")->capture_default_str();
  simulate->add_option("--level", level, "Confidence level for CP")->capture_default_str();
  simulate->add_option("--out", sim_out, "Directory for mc_table.txt and mc.csv");
  simulate->add_option("--format", format, "text or csv")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Full-data LPRE fit on all input pooled");
  detail::InputFlags fit_in;
  detail::SolverFlags fit_solver;
  fit_in.add_to(*fit, true);
  fit_solver.add_to(*fit);
  fit->add_option("--level", level, "Confidence level")->capture_default_str();
  fit->add_option("--format", format, "text, csv or records")->capture_default_str();

  // stream
  auto* stream = app.add_subcommand("stream", "Process batches in order with a streaming estimator");
  detail::InputFlags st_in;
  detail::SolverFlags st_solver;
  std::string st_method;
  std::size_t st_chunk = 0;
  std::string st_ckpt_in;
  std::string st_ckpt_out;
  bool st_every = false;
  bool st_progress = false;
  st_in.add_to(*stream, true);
  st_solver.add_to(*stream);
  stream->add_option("--method", st_method, "renew (default), cee or cuee");
  stream->add_option("--chunk", st_chunk, "Rows per batch when --input is a single file (default: whole file)");
  stream->add_option("--checkpoint-in", st_ckpt_in, "Resume from this checkpoint");
  auto* ck_out = stream->add_option("--checkpoint-out", st_ckpt_out, "Write the state here");
  stream->add_flag("--checkpoint-every-batch", st_every, "Save after every batch instead of only at the end")
      ->needs(ck_out);
  stream->add_flag("--progress", st_progress, "Per-batch status line on stderr");
  stream->add_option("--level", level, "Confidence level")->capture_default_str();
  stream->add_option("--format", format, "text, csv or records")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Inference report from a saved checkpoint");
  std::string rep_ckpt;
  report->add_option("--checkpoint", rep_ckpt, "Checkpoint file")->required();
  report->add_option("--level", level, "Confidence level")->capture_default_str();
  report->add_option("--format", format, "text, csv or records")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "C.Time and R.Time per method");
  detail::DgpFlags bench_dgp;
  detail::SolverFlags bench_solver;
  std::vector<long long> bench_b;
  long long bench_reps = 10;
  std::string bench_out;
  bench_dgp.add_to(*bench);
  bench_solver.add_to(*bench);
  bench->add_option("--B", bench_b, "Batch counts, comma separated")->delimiter(',')->required();
  bench->add_option("--reps", bench_reps, "Timing replications")->capture_default_str();
  bench->add_option("--out", bench_out, "Directory for bench_table.txt and bench.csv");
  bench->add_option("--format", format, "text or csv")->capture_default_str();

  long long current_batch = 0;  // set while a stream update runs, for error context
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      if ((sim_nb > 0) == (sim_b > 0)) throw ConfigError("exactly one of --nb and --B is required");
      detail::check_format(format, false);
      detail::check_level(level);
      const sim::DgpConfig cfg = sim_dgp.resolve();
      const auto methods = sim_dgp.method_list();
      sim::Scenario sc{sim_dgp.n_total, sim_nb, sim_b};
      sc.batch_sizes();
      sim::RunOptions opts;
      opts.level = level;
      opts.workers = sim_workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : sim_workers;
      opts.solver = sim_solver.resolve();
      if (sim_reps < 1) throw Error(ErrorCode::InvalidConfig, "--reps must be >= 1");

      err << "command: simulate\n";
      sim_dgp.echo(err);
      err << "config: nb=" << sim_nb << " B=" << sim_b << " reps=" << sim_reps << " workers=" << opts.workers
          << " level=" << lpre::detail::fmt_g(level) << " out=" << (sim_out.empty() ? "<none>" : sim_out)
          << " format=" << format << '\n';
      sim_solver.echo(err);

      const auto summaries = sim::run_scenario(cfg, sc, methods, sim_reps, opts);
      if (format == "csv") {
        sim::write_mc_csv(out, summaries);
      } else {
        sim::write_mc_table(out, summaries);
      }
      if (!sim_out.empty()) {
        std::filesystem::create_directories(sim_out);
        auto table = detail::open_output(std::filesystem::path(sim_out) / "mc_table.txt");
        sim::write_mc_table(table, summaries);
        auto csv = detail::open_output(std::filesystem::path(sim_out) / "mc.csv");
        sim::write_mc_csv(csv, summaries);
      }
      return kExitOk;
    }

    if (fit->parsed()) {
      detail::check_format(format, true);
      detail::check_level(level);
      const SolverConfig solver = fit_solver.resolve();
      err << "command: fit\n";
      fit_in.echo(err);
      err << "config: level=" << lpre::detail::fmt_g(level) << " format=" << format << '\n';
      fit_solver.echo(err);

      std::vector<std::string> names;
      const auto batches = detail::read_all(fit_in, names);
      const Vector beta = fit_full(batches, solver);
      detail::write_report(out, full_report(batches, beta, level, names), format);
      return kExitOk;
    }

    if (stream->parsed()) {
      detail::check_format(format, true);
      detail::check_level(level);
      const SolverConfig solver = st_solver.resolve();

      std::optional<Checkpoint> resumed;
      if (!st_ckpt_in.empty()) resumed = load_checkpoint(st_ckpt_in);
      Method method = Method::Renewable;
      if (!st_method.empty()) {
        method = parse_method(st_method);
        if (method == Method::FullLPRE) throw ConfigError("full is not a streaming method; use fit");
      }
      if (resumed) {
        const Method saved = state_method(resumed->state);
        if (!st_method.empty() && saved != method) {
          throw Error(ErrorCode::MethodMismatch, st_ckpt_in + " holds a " + std::string(method_name(saved)) +
                                                     " checkpoint but --method is " + st_method);
        }
        method = saved;
      }

      err << "command: stream\n";
      st_in.echo(err);
      err << "config: method=" << method_name(method) << " chunk=" << (st_chunk == 0 ? std::string("<whole file>")
                                                                                    : std::to_string(st_chunk))
          << " checkpoint_in=" << (st_ckpt_in.empty() ? "<none>" : st_ckpt_in)
          << " checkpoint_out=" << (st_ckpt_out.empty() ? "<none>" : st_ckpt_out)
          << " checkpoint_every_batch=" << (st_every ? "on" : "off") << " progress=" << (st_progress ? "on" : "off")
          << " level=" << lpre::detail::fmt_g(level) << " format=" << format << '\n';
      st_solver.echo(err);

      BatchSource src = BatchSource::open(st_in.input, st_chunk, st_in.resolve());
      std::optional<EstimatorState> state;
      std::vector<std::string> names;
      if (resumed) {
        state = resumed->state;
        names = resumed->names;
      }
      while (auto batch = src.next_batch()) {
        if (!state) state = zero_state(method, batch->p);
        if (names.empty()) names = src.names();
        const Vector before = std::visit([](const auto& s) { return s.beta; }, *state);
        current_batch = batch->id;
        state = update(*state, *batch, solver);
        current_batch = 0;
        if (st_progress) {
          const Vector& after = std::visit([](const auto& s) -> const Vector& { return s.beta; }, *state);
          err << "batch " << batch->id << " n=" << batch->n()
              << " delta=" << lpre::detail::fmt_g(before.size() == after.size() ? norm_inf(after - before) : 0.0, 4)
              << '\n';
        }
        if (st_every) save_checkpoint(Checkpoint{*state, names}, st_ckpt_out);
      }
      if (!state) throw Error(ErrorCode::InvalidConfig, "input holds no batches");
      if (!st_ckpt_out.empty() && !st_every) save_checkpoint(Checkpoint{*state, names}, st_ckpt_out);
      const EstimateReport r =
          std::visit([&](const auto& s) { return estimate_report(s, level, names); }, *state);
      detail::write_report(out, r, format);
      return kExitOk;
    }

    if (report->parsed()) {
      detail::check_format(format, true);
      detail::check_level(level);
      err << "command: report\n";
      err << "config: checkpoint=" << rep_ckpt << " level=" << lpre::detail::fmt_g(level) << " format=" << format
          << '\n';
      const Checkpoint cp = load_checkpoint(rep_ckpt);
      const EstimateReport r =
          std::visit([&](const auto& s) { return estimate_report(s, level, cp.names); }, cp.state);
      detail::write_report(out, r, format);
      return kExitOk;
    }

    if (bench->parsed()) {
      detail::check_format(format, false);
      const sim::DgpConfig cfg = bench_dgp.resolve();
      const auto methods = bench_dgp.method_list();
      const SolverConfig solver = bench_solver.resolve();
      if (bench_reps < 1) throw Error(ErrorCode::InvalidConfig, "--reps must be >= 1");
      for (long long b : bench_b) sim::Scenario{bench_dgp.n_total, 0, b}.batch_sizes();

      err << "command: bench\n";
      bench_dgp.echo(err);
      err << "config: B=";
      for (std::size_t i = 0; i < bench_b.size(); ++i) err << (i ? "," : "") << bench_b[i];
      err << " reps=" << bench_reps << " out=" << (bench_out.empty() ? "<none>" : bench_out) << " format=" << format
          << '\n';
      bench_solver.echo(err);

      std::vector<sim::BenchRow> rows;
      for (long long b : bench_b) {
        const auto r = sim::bench(cfg, sim::Scenario{bench_dgp.n_total, 0, b}, methods, bench_reps, solver);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      if (format == "csv") {
        sim::write_bench_csv(out, rows);
      } else {
        sim::write_bench_table(out, rows);
      }
      if (!bench_out.empty()) {
        std::filesystem::create_directories(bench_out);
        auto table = detail::open_output(std::filesystem::path(bench_out) / "bench_table.txt");
        sim::write_bench_table(table, rows);
        auto csv = detail::open_output(std::filesystem::path(bench_out) / "bench.csv");
        sim::write_bench_csv(csv, rows);
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    const auto active = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (active.empty() ? app.help() : active.front()->help()) << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: ";
    if (current_batch > 0) err << "batch " << current_batch << ": ";
    err << e.what();
    if (e.row() && std::string_view(e.what()).find("row") == std::string_view::npos) err << " (row " << *e.row() << ")";
    err << '\n';
    const bool config = e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::InvalidLevel;
    return config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace lpre::cli

#endif  // LPRE_TOOLS_CLI_HPP
