#ifndef LPRE_SIMULATE_HPP
#define LPRE_SIMULATE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lpre/error.hpp"
#include "lpre/estimators.hpp"
#include "lpre/inference.hpp"
#include "lpre/linalg.hpp"
#include "lpre/model.hpp"
#include "lpre/streaming.hpp"

/**
 * Simulation apparatus: the four covariate designs, two error laws, a Monte
 * Carlo driver reporting BIAS / SSE / ESE / CP and a timing harness.
 *
 * Random numbers: every batch owns an independent std::mt19937_64 stream
 * seeded with splitmix64(seed ^ splitmix64(batch_index)). A replication r of a
 * run with master seed s uses seed s ^ r. Batches are therefore reproducible
 * in isolation and replications can run on any worker in any order.
 */
namespace lpre::sim {

/// SplitMix64 output function (Steele, Lea & Flood 2014).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t batch_seed(std::uint64_t seed, long long batch_index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(batch_index)));
}

inline std::uint64_t replication_seed(std::uint64_t seed, long long replication) {
  return seed ^ static_cast<std::uint64_t>(replication);
}

enum class CovariateCase { NormalAR = 1, GaussianMixture = 2, StudentT5 = 3, IidExponential = 4 };

enum class ErrorLaw {
  LogNormal01,   // log ε ~ N(0, 1)
  LogUniform22,  // log ε ~ U(-2, 2)
  Unit,          // ε ≡ 1, noiseless
};

inline CovariateCase parse_case(int c) {
  if (c < 1 || c > 4) throw Error(ErrorCode::InvalidConfig, "covariate case must be 1..4");
  return static_cast<CovariateCase>(c);
}

inline ErrorLaw parse_error_law(std::string_view s) {
  if (s == "lognormal" || s == "normal") return ErrorLaw::LogNormal01;
  if (s == "uniform" || s == "loguniform") return ErrorLaw::LogUniform22;
  if (s == "none" || s == "unit") return ErrorLaw::Unit;
  throw Error(ErrorCode::InvalidConfig, "unknown error law '" + std::string(s) + "'");
}

inline std::string_view error_law_name(ErrorLaw e) {
  switch (e) {
    case ErrorLaw::LogNormal01: return "lognormal";
    case ErrorLaw::LogUniform22: return "uniform";
    case ErrorLaw::Unit: return "none";
  }
  return "?";
}

struct DgpConfig {
  Vector beta_true{0.2, -0.2, 0.2, -0.2, 0.2};
  CovariateCase covariate_case = CovariateCase::NormalAR;
  ErrorLaw error_law = ErrorLaw::LogNormal01;
  std::uint64_t seed = 1;

  std::size_t p() const noexcept { return beta_true.size(); }
};

/// Σ_ij = 0.5^{|i-j|}.
inline Matrix ar_covariance(std::size_t dim, double rho = 0.5) {
  Matrix s(dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) s(i, j) = std::pow(rho, std::abs(static_cast<double>(i) - double(j)));
  return s;
}

/// n rows of the design (intercept first) and responses y = exp(βᵀx)·ε.
inline Batch gen_batch(const DgpConfig& cfg, std::size_t n, long long batch_index) {
  const std::size_t p = cfg.p();
  if (p < 1) throw Error(ErrorCode::InvalidConfig, "beta_true must be non-empty");
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
  const std::size_t d = p - 1;

  std::mt19937_64 rng(batch_seed(cfg.seed, batch_index));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::chi_squared_distribution<double> chi2(5.0);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);

  Matrix chol;
  if (d > 0) chol = Cholesky(ar_covariance(d)).lower();

  Batch b;
  b.p = p;
  b.id = batch_index;
  b.x.resize(n * p);
  b.y.resize(n);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = b.x.data() + i * p;
    row[0] = 1.0;
    if (cfg.covariate_case == CovariateCase::IidExponential) {
      for (std::size_t j = 0; j < d; ++j) row[1 + j] = expo(rng);
    } else {
      for (std::size_t j = 0; j < d; ++j) z[j] = normal(rng);
      double shift = 0.0;
      double scale = 1.0;
      if (cfg.covariate_case == CovariateCase::GaussianMixture) shift = coin(rng) ? 1.0 : -1.0;
      if (cfg.covariate_case == CovariateCase::StudentT5) scale = 1.0 / std::sqrt(chi2(rng) / 5.0);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k <= j; ++k) s += chol(j, k) * z[k];
        row[1 + j] = shift + scale * s;
      }
    }
    double eta = 0.0;
    for (std::size_t j = 0; j < p; ++j) eta += cfg.beta_true[j] * row[j];
    double log_eps = 0.0;
    switch (cfg.error_law) {
      case ErrorLaw::LogNormal01: log_eps = normal(rng); break;
      case ErrorLaw::LogUniform22: log_eps = unif(rng); break;
      case ErrorLaw::Unit: break;
    }
    b.y[i] = std::exp(eta + log_eps);
  }
  return b;
}

/// Either n_b or batches is set; the last batch takes any remainder.
struct Scenario {
  long long n_total = 0;
  long long n_b = 0;
  long long batches = 0;

  std::vector<std::size_t> batch_sizes() const {
    if (n_total < 1) throw Error(ErrorCode::InvalidConfig, "N must be >= 1");
    if ((n_b > 0) == (batches > 0)) throw Error(ErrorCode::InvalidConfig, "exactly one of n_b and B must be set");
    long long size = n_b;
    long long count = 0;
    if (n_b > 0) {
      count = (n_total + n_b - 1) / n_b;
    } else {
      if (batches > n_total) throw Error(ErrorCode::InvalidConfig, "B exceeds N");
      count = batches;
      size = n_total / batches;
    }
    std::vector<std::size_t> sizes(static_cast<std::size_t>(count), static_cast<std::size_t>(size));
    sizes.back() = static_cast<std::size_t>(n_total - size * (count - 1));
    return sizes;
  }
};

/// Generates the full stream of one replication as a list of batches.
inline std::vector<Batch> gen_stream(const DgpConfig& cfg, const Scenario& sc) {
  std::vector<Batch> out;
  long long idx = 0;
  for (std::size_t n : sc.batch_sizes()) out.push_back(gen_batch(cfg, n, ++idx));
  return out;
}

struct RunOptions {
  double level = 0.95;
  unsigned workers = 1;
  SolverConfig solver{};
};

struct MethodOutcome {
  Method method = Method::Renewable;
  bool ok = false;
  std::string error;
  Vector beta;
  std::vector<double> se;
  std::vector<bool> hit;
  double r_time = 0.0;  // estimation only, seconds
  double c_time = 0.0;  // data generation + estimation
};

struct ReplicationResult {
  long long replication = 0;
  std::vector<MethodOutcome> outcomes;  // same order as the requested methods
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace detail

/// Streams one replication's batches through every requested method.
inline ReplicationResult run_replication(const DgpConfig& base, const Scenario& sc, std::span<const Method> methods,
                                         long long replication, const RunOptions& opts = {}) {
  DgpConfig cfg = base;
  cfg.seed = replication_seed(base.seed, replication);
  const std::size_t p = cfg.p();

  ReplicationResult res;
  res.replication = replication;
  std::vector<std::optional<EstimatorState>> states(methods.size());
  bool want_full = false;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodOutcome o;
    o.method = methods[m];
    o.ok = true;
    res.outcomes.push_back(std::move(o));
    if (methods[m] == Method::FullLPRE) {
      want_full = true;
    } else {
      states[m] = zero_state(methods[m], p);
    }
  }

  std::vector<Batch> pooled;
  double gen_time = 0.0;
  long long idx = 0;
  for (std::size_t n : sc.batch_sizes()) {
    auto t0 = detail::Clock::now();
    Batch batch = gen_batch(cfg, n, ++idx);
    gen_time += detail::seconds_since(t0);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto& o = res.outcomes[m];
      if (!states[m] || !o.ok) continue;
      auto t1 = detail::Clock::now();
      try {
        states[m] = update(*states[m], batch, opts.solver);
      } catch (const Error& e) {
        o.ok = false;
        o.error = "batch " + std::to_string(idx) + ": " + e.what();
      }
      o.r_time += detail::seconds_since(t1);
    }
    if (want_full) pooled.push_back(std::move(batch));
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    auto& o = res.outcomes[m];
    if (!o.ok) continue;
    auto t1 = detail::Clock::now();
    try {
      EstimateReport rep;
      if (methods[m] == Method::FullLPRE) {
        const Vector beta_hat = fit_full(pooled, opts.solver);
        rep = full_report(pooled, beta_hat, opts.level);
      } else {
        rep = std::visit([&](const auto& s) { return estimate_report(s, opts.level); }, *states[m]);
      }
      o.beta = rep.beta;
      o.se = rep.se;
      o.hit = cp_hit(rep, cfg.beta_true);
    } catch (const Error& e) {
      o.ok = false;
      o.error = e.what();
    }
    o.r_time += detail::seconds_since(t1);
    o.c_time = o.r_time + gen_time;
  }
  return res;
}

struct McSummary {
  Method method = Method::Renewable;
  std::vector<double> bias;
  std::vector<double> sse;
  std::vector<double> ese;
  std::vector<double> cp;
  long long replications = 0;  // successful replications entering the aggregates
  long long failures = 0;
  std::string first_failure;
  double c_time = 0.0;  // mean per replication
  double r_time = 0.0;
};

/// Aggregates in replication order. SSE uses the R-1 denominator and is 0 for R = 1.
inline std::vector<McSummary> aggregate(const std::vector<ReplicationResult>& results, std::span<const Method> methods,
                                        const Vector& beta_true) {
  const std::size_t p = beta_true.size();
  std::vector<McSummary> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    McSummary s;
    s.method = methods[m];
    std::vector<double> sum(p), sum_se(p), hits(p);
    std::vector<const Vector*> betas;
    for (const auto& r : results) {
      const auto& o = r.outcomes[m];
      if (!o.ok) {
        if (s.failures++ == 0) s.first_failure = "replication " + std::to_string(r.replication) + ": " + o.error;
        continue;
      }
      betas.push_back(&o.beta);
      for (std::size_t j = 0; j < p; ++j) {
        sum[j] += o.beta[j];
        sum_se[j] += o.se[j];
        hits[j] += o.hit[j] ? 1.0 : 0.0;
      }
      s.c_time += o.c_time;
      s.r_time += o.r_time;
    }
    const auto count = static_cast<double>(betas.size());
    s.replications = static_cast<long long>(betas.size());
    s.bias.assign(p, NAN);
    s.sse.assign(p, NAN);
    s.ese.assign(p, NAN);
    s.cp.assign(p, NAN);
    if (!betas.empty()) {
      s.c_time /= count;
      s.r_time /= count;
      for (std::size_t j = 0; j < p; ++j) {
        const double mean = sum[j] / count;
        double ss = 0.0;
        for (const Vector* b : betas) ss += ((*b)[j] - mean) * ((*b)[j] - mean);
        s.bias[j] = mean - beta_true[j];
        s.sse[j] = betas.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
        s.ese[j] = sum_se[j] / count;
        s.cp[j] = hits[j] / count;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Runs replications 0..R-1 on `opts.workers` threads and aggregates.
inline std::vector<ReplicationResult> run_replications(const DgpConfig& cfg, const Scenario& sc,
                                                       std::span<const Method> methods, long long replications,
                                                       const RunOptions& opts = {}) {
  if (replications < 1) throw Error(ErrorCode::InvalidConfig, "replications must be >= 1");
  if (methods.empty()) throw Error(ErrorCode::InvalidConfig, "no methods requested");
  sc.batch_sizes();
  opts.solver.validate();
  std::vector<ReplicationResult> results(static_cast<std::size_t>(replications));
  std::atomic<long long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (long long r = next++; r < replications; r = next++) {
        results[static_cast<std::size_t>(r)] = run_replication(cfg, sc, methods, r, opts);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(replications)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

inline std::vector<McSummary> run_scenario(const DgpConfig& cfg, const Scenario& sc, std::span<const Method> methods,
                                           long long replications, const RunOptions& opts = {}) {
  return aggregate(run_replications(cfg, sc, methods, replications, opts), methods, cfg.beta_true);
}

struct BenchRow {
  Method method = Method::Renewable;
  long long batches = 0;
  long long n_total = 0;
  long long replications = 0;
  double c_time = 0.0;  // wall seconds, mean over replications
  double r_time = 0.0;
  double c_cpu = 0.0;  // process CPU seconds, same boundaries
  double r_cpu = 0.0;
};

namespace detail {

inline double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

/// Times one method on one replication. C brackets generation + estimation,
/// R brackets estimation only.
inline void time_method(const DgpConfig& cfg, const Scenario& sc, Method method, const SolverConfig& solver,
                        double& c_wall, double& r_wall, double& c_cpu, double& r_cpu) {
  const auto sizes = sc.batch_sizes();
  const auto c0 = Clock::now();
  const double c0_cpu = cpu_seconds();
  double r = 0.0;
  double r_c = 0.0;
  if (method == Method::FullLPRE) {
    std::vector<Batch> pooled;
    pooled.reserve(sizes.size());
    long long idx = 0;
    for (std::size_t n : sizes) pooled.push_back(gen_batch(cfg, n, ++idx));
    const auto t = Clock::now();
    const double t_cpu = cpu_seconds();
    const Vector beta = fit_full(pooled, solver);
    const Matrix cov = batch_variance(summarize(pooled, beta, kInfo | kCmat));
    (void)cov;
    r += seconds_since(t);
    r_c += cpu_seconds() - t_cpu;
  } else {
    EstimatorState state = zero_state(method, cfg.p());
    long long idx = 0;
    for (std::size_t n : sizes) {
      const Batch batch = gen_batch(cfg, n, ++idx);
      const auto t = Clock::now();
      const double t_cpu = cpu_seconds();
      state = update(state, batch, solver);
      r += seconds_since(t);
      r_c += cpu_seconds() - t_cpu;
    }
    const auto t = Clock::now();
    const double t_cpu = cpu_seconds();
    if (auto* s = std::get_if<RenewableState>(&state)) (void)renewable_variance(*s);
    r += seconds_since(t);
    r_c += cpu_seconds() - t_cpu;
  }
  c_wall += seconds_since(c0);
  c_cpu += cpu_seconds() - c0_cpu;
  r_wall += r;
  r_cpu += r_c;
}

}  // namespace detail

/// Mean C.Time / R.Time per method over `replications` sequential runs.
/// Methods are interleaved within each replication so drift affects all alike.
inline std::vector<BenchRow> bench(const DgpConfig& cfg, const Scenario& sc, std::span<const Method> methods,
                                   long long replications = 10, const SolverConfig& solver = {}) {
  if (replications < 1) throw Error(ErrorCode::InvalidConfig, "replications must be >= 1");
  const auto sizes = sc.batch_sizes();
  std::vector<BenchRow> rows;
  for (Method m : methods) {
    BenchRow row;
    row.method = m;
    row.batches = static_cast<long long>(sizes.size());
    row.n_total = sc.n_total;
    row.replications = replications;
    rows.push_back(row);
  }
  for (long long r = 0; r < replications; ++r) {
    DgpConfig c = cfg;
    c.seed = replication_seed(cfg.seed, r);
    for (auto& row : rows) detail::time_method(c, sc, row.method, solver, row.c_time, row.r_time, row.c_cpu, row.r_cpu);
  }
  for (auto& row : rows) {
    const auto k = static_cast<double>(replications);
    row.c_time /= k;
    row.r_time /= k;
    row.c_cpu /= k;
    row.r_cpu /= k;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// One block per coefficient: BIAS×10⁻⁴, SSE×10⁻³, ESE×10⁻³ and CP rows, one column per method.
inline void write_mc_table(std::ostream& os, std::span<const McSummary> summaries) {
  if (summaries.empty()) return;
  const std::size_t p = summaries.front().bias.size();
  char buf[64];
  for (std::size_t j = 0; j < p; ++j) {
    os << "beta" << (j + 1) << '\n';
    std::snprintf(buf, sizeof buf, "%-14s", "");
    os << buf;
    for (const auto& s : summaries) {
      std::snprintf(buf, sizeof buf, "%10s", std::string(method_label(s.method)).c_str());
      os << buf;
    }
    os << '\n';
    auto row = [&](const char* label, auto value, const char* fmt) {
      std::snprintf(buf, sizeof buf, "%-14s", label);
      os << buf;
      for (const auto& s : summaries) {
        std::snprintf(buf, sizeof buf, fmt, value(s));
        os << buf;
      }
      os << '\n';
    };
    row("BIAS x 1e-4", [&](const McSummary& s) { return s.bias[j] * 1e4; }, "%10.2f");
    row("SSE x 1e-3", [&](const McSummary& s) { return s.sse[j] * 1e3; }, "%10.2f");
    row("ESE x 1e-3", [&](const McSummary& s) { return s.ese[j] * 1e3; }, "%10.2f");
    row("CP", [&](const McSummary& s) { return s.cp[j]; }, "%10.3f");
    os << '\n';
  }
  for (const auto& s : summaries) {
    os << method_label(s.method) << ": replications=" << s.replications << " failures=" << s.failures;
    if (s.failures > 0) os << " (first: " << s.first_failure << ")";
    os << '\n';
  }
}

inline void write_mc_csv(std::ostream& os, std::span<const McSummary> summaries) {
  os << "method,coefficient,BIAS_x1e-4,SSE_x1e-3,ESE_x1e-3,CP,replications,failures\n";
  for (const auto& s : summaries) {
    for (std::size_t j = 0; j < s.bias.size(); ++j) {
      os << method_label(s.method) << ",beta" << (j + 1) << ',' << lpre::detail::fmt_g(s.bias[j] * 1e4, 12) << ','
         << lpre::detail::fmt_g(s.sse[j] * 1e3, 12) << ',' << lpre::detail::fmt_g(s.ese[j] * 1e3, 12) << ','
         << lpre::detail::fmt_g(s.cp[j], 12) << ',' << s.replications << ',' << s.failures << '\n';
    }
  }
}

/// Rows keyed by (B, N), C.Time and R.Time per method, like the timing tables.
inline void write_bench_table(std::ostream& os, std::span<const BenchRow> rows) {
  std::vector<Method> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%10s %12s", "B", "N");
  os << buf;
  for (Method m : methods) {
    std::snprintf(buf, sizeof buf, "  %8s C.Time  %8s R.Time", std::string(method_label(m)).c_str(),
                  std::string(method_label(m)).c_str());
    os << buf;
  }
  os << '\n';
  std::vector<std::pair<long long, long long>> keys;
  for (const auto& r : rows) {
    const std::pair k{r.batches, r.n_total};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [b, n] : keys) {
    std::snprintf(buf, sizeof buf, "%10lld %12lld", b, n);
    os << buf;
    for (Method m : methods) {
      for (const auto& r : rows) {
        if (r.method == m && r.batches == b && r.n_total == n) {
          std::snprintf(buf, sizeof buf, "  %15.3f  %15.3f", r.c_time, r.r_time);
          os << buf;
        }
      }
    }
    os << '\n';
  }
}

inline void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows) {
  os << "method,B,N,replications,c_time,r_time,c_cpu,r_cpu\n";
  for (const auto& r : rows) {
    os << method_label(r.method) << ',' << r.batches << ',' << r.n_total << ',' << r.replications << ','
       << lpre::detail::fmt_g(r.c_time, 6) << ',' << lpre::detail::fmt_g(r.r_time, 6) << ','
       << lpre::detail::fmt_g(r.c_cpu, 6) << ',' << lpre::detail::fmt_g(r.r_cpu, 6) << '\n';
  }
}

}  // namespace lpre::sim

#endif  // LPRE_SIMULATE_HPP
