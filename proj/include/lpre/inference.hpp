#ifndef LPRE_INFERENCE_HPP
#define LPRE_INFERENCE_HPP

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lpre/error.hpp"
#include "lpre/estimators.hpp"
#include "lpre/linalg.hpp"
#include "lpre/model.hpp"

namespace lpre {

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Upper tail 1 - Φ(z), accurate for large z.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/**
 * Standard normal quantile Φ⁻¹(prob), Wichura's algorithm AS 241 (PPND16).
 * Relative accuracy is about 1e-16 over (0, 1).
 */
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    if (prob == 0.0) return -INFINITY;
    if (prob == 1.0) return INFINITY;
    throw Error(ErrorCode::InvalidLevel, "probability outside [0, 1]");
  }
  const double q = prob - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
             4.5921953931549871457e+4) * r + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
             2.1213794301586595867e+4) * r + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? prob : 1.0 - prob;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
             1.27045825245236838258e+0) * r + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
             1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
             2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
             7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

/**
 * (Qᵀ C⁻¹ Q)⁻¹ for symmetric Q and C, evaluated as Q⁻¹ C Q⁻¹. The two agree
 * whenever C is invertible; the second form stays defined when C is singular,
 * e.g. on noiseless data where every residual vanishes and the covariance is 0.
 */
inline Matrix sandwich(const Matrix& q, const Matrix& c) {
  detail::require_same(q.dim(), c.dim(), "sandwich");
  return detail::as_singular(
      [&] {
        const Cholesky factor(q);
        const Matrix q_inv_c = factor.solve(c);
        return symmetrize(transpose(factor.solve(transpose(q_inv_c))));
      },
      "sandwich covariance");
}

/// Covariance of β̃_b: (Q̃_bᵀ C̃_b⁻¹ Q̃_b)⁻¹. Already on the 1/N_b scale.
inline Matrix renewable_variance(const RenewableState& state) { return sandwich(state.q_agg, state.c_agg); }

/// Single-batch sandwich (Q_b C_b⁻¹ Q_bᵀ)⁻¹.
inline Matrix batch_variance(const BatchSummaries& summ) { return sandwich(summ.info, summ.cmat); }

struct EstimateReport {
  Vector beta;
  std::vector<double> se;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<double> p_values;
  Matrix cov;
  double level = 0.95;
  long long n_total = 0;
  long long batches_seen = 0;
  Method method = Method::Renewable;
  std::vector<std::string> names;
};

struct ReportMeta {
  long long n_total = 0;
  long long batches_seen = 0;
  Method method = Method::Renewable;
  std::vector<std::string> names;
};

inline EstimateReport wald_report(const Vector& beta, const Matrix& cov, double level, ReportMeta meta = {}) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::InvalidLevel, "confidence level " + std::to_string(level) + " not in (0, 1)");
  }
  detail::require_same(beta.size(), cov.dim(), "wald_report");
  const std::size_t p = beta.size();
  const double z = normal_quantile(0.5 * (1.0 + level));

  EstimateReport r;
  r.beta = beta;
  r.cov = cov;
  r.level = level;
  r.n_total = meta.n_total;
  r.batches_seen = meta.batches_seen;
  r.method = meta.method;
  r.names = std::move(meta.names);
  if (r.names.size() != p) {
    r.names.clear();
    for (std::size_t j = 0; j < p; ++j) r.names.push_back("beta" + std::to_string(j + 1));
  }
  double max_var = 0.0;
  for (std::size_t j = 0; j < p; ++j) max_var = std::max(max_var, std::abs(cov(j, j)));
  for (std::size_t j = 0; j < p; ++j) {
    double var = cov(j, j);
    // Rounding can leave an exactly-zero variance slightly negative.
    if (var < 0.0 && var >= -64.0 * std::numeric_limits<double>::epsilon() * max_var) var = 0.0;
    if (var < 0.0 || !std::isfinite(var)) {
      throw Error(ErrorCode::Singular, "covariance has invalid diagonal entry " + std::to_string(var));
    }
    const double se = std::sqrt(var);
    r.se.push_back(se);
    r.ci_low.push_back(beta[j] - z * se);
    r.ci_high.push_back(beta[j] + z * se);
    double pv;
    if (se > 0.0) {
      pv = 2.0 * normal_sf(std::abs(beta[j]) / se);
    } else {
      pv = beta[j] == 0.0 ? 1.0 : 0.0;
    }
    r.p_values.push_back(std::min(1.0, pv));
  }
  return r;
}

/// Closed-interval coverage of the true coefficients.
inline std::vector<bool> cp_hit(const EstimateReport& report, const Vector& beta_true) {
  detail::require_same(report.beta.size(), beta_true.size(), "cp_hit");
  std::vector<bool> hit(beta_true.size());
  for (std::size_t j = 0; j < beta_true.size(); ++j) {
    hit[j] = report.ci_low[j] <= beta_true[j] && beta_true[j] <= report.ci_high[j];
  }
  return hit;
}

inline EstimateReport estimate_report(const RenewableState& s, double level, std::vector<std::string> names = {}) {
  return wald_report(s.beta, renewable_variance(s), level,
                     {s.n_total, s.batches_seen, Method::Renewable, std::move(names)});
}

inline EstimateReport estimate_report(const CeeState& s, double level, std::vector<std::string> names = {}) {
  return wald_report(s.beta, s.v, level, {s.n_total, s.batches_seen, Method::CEE, std::move(names)});
}

inline EstimateReport estimate_report(const CueeState& s, double level, std::vector<std::string> names = {}) {
  return wald_report(s.beta, s.v, level, {s.n_total, s.batches_seen, Method::CUEE, std::move(names)});
}

/// Full-data report: the sandwich evaluated on the pooled data at β̂.
inline EstimateReport full_report(std::span<const Batch> batches, const Vector& beta_hat, double level,
                                  std::vector<std::string> names = {}) {
  const BatchSummaries s = summarize(batches, beta_hat, kInfo | kCmat);
  return wald_report(beta_hat, batch_variance(s), level,
                     {static_cast<long long>(s.n), static_cast<long long>(batches.size()), Method::FullLPRE,
                      std::move(names)});
}

namespace detail {

inline std::string fmt_g(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string fmt_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace detail

/// One `key=value` record per coefficient.
inline void write_report_records(std::ostream& os, const EstimateReport& r) {
  os << "method=" << method_label(r.method) << " n_total=" << r.n_total << " batches=" << r.batches_seen
     << " level=" << detail::fmt_g(r.level) << '\n';
  for (std::size_t j = 0; j < r.beta.size(); ++j) {
    os << "name=" << r.names[j] << " est=" << detail::fmt_g(r.beta[j]) << " sd=" << detail::fmt_g(r.se[j])
       << " ci_low=" << detail::fmt_g(r.ci_low[j]) << " ci_high=" << detail::fmt_g(r.ci_high[j])
       << " p_value=" << detail::fmt_g(r.p_values[j]) << '\n';
  }
}

/// CSV with the est, sd, p-value column order of the real-data tables, CI bounds appended.
inline void write_report_csv(std::ostream& os, const EstimateReport& r) {
  os << "method,name,est,sd,p-value,ci_low,ci_high\n";
  for (std::size_t j = 0; j < r.beta.size(); ++j) {
    os << method_label(r.method) << ',' << r.names[j] << ',' << detail::fmt_g(r.beta[j], 17) << ','
       << detail::fmt_g(r.se[j], 17) << ',' << detail::fmt_g(r.p_values[j], 17) << ','
       << detail::fmt_g(r.ci_low[j], 17) << ',' << detail::fmt_g(r.ci_high[j], 17) << '\n';
  }
}

/// Aligned text table: name, est, sd, p-value, CI.
inline void write_report_table(std::ostream& os, const EstimateReport& r) {
  char line[256];
  os << method_label(r.method) << "  (N=" << r.n_total << ", B=" << r.batches_seen
     << ", level=" << detail::fmt_g(r.level) << ")\n";
  std::snprintf(line, sizeof line, "%-16s %12s %10s %12s %12s %12s\n", "", "est", "sd", "p-value", "ci_low",
                "ci_high");
  os << line;
  for (std::size_t j = 0; j < r.beta.size(); ++j) {
    const std::string pv = r.p_values[j] < 1e-9 ? std::string("<1e-9") : detail::fmt_g(r.p_values[j], 3);
    std::snprintf(line, sizeof line, "%-16s %12.6f %10.6f %12s %12.6f %12.6f\n", r.names[j].c_str(), r.beta[j],
                  r.se[j], pv.c_str(), r.ci_low[j], r.ci_high[j]);
    os << line;
  }
}

}  // namespace lpre

#endif  // LPRE_INFERENCE_HPP
