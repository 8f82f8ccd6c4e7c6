#ifndef LPRE_ESTIMATORS_HPP
#define LPRE_ESTIMATORS_HPP

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "lpre/error.hpp"
#include "lpre/linalg.hpp"
#include "lpre/model.hpp"

namespace lpre {

enum class Method { FullLPRE, Renewable, CEE, CUEE };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::FullLPRE: return "full";
    case Method::Renewable: return "renew";
    case Method::CEE: return "cee";
    case Method::CUEE: return "cuee";
  }
  return "?";
}

/// Column label used in tables ("LPRE", "CEE", "CUEE", "Renew").
inline std::string_view method_label(Method m) {
  switch (m) {
    case Method::FullLPRE: return "LPRE";
    case Method::Renewable: return "Renew";
    case Method::CEE: return "CEE";
    case Method::CUEE: return "CUEE";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "full" || s == "lpre") return Method::FullLPRE;
  if (s == "renew" || s == "renewable") return Method::Renewable;
  if (s == "cee") return Method::CEE;
  if (s == "cuee") return Method::CUEE;
  throw Error(ErrorCode::InvalidConfig, "unknown method '" + std::string(s) + "'");
}

/// Which Hessian the renewable Newton iteration uses for the current batch.
enum class HessianMode {
  Frozen,     // Q_b evaluated once at the previous estimate
  Refreshed,  // Q_b re-evaluated at every iterate
};

struct SolverConfig {
  double tol = 1e-10;  // sup-norm of the Newton increment
  int max_iter = 100;
  int max_step_halvings = 30;
  HessianMode hessian = HessianMode::Frozen;

  void validate() const {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "solver tol must be positive");
    if (max_iter < 1) throw Error(ErrorCode::InvalidConfig, "solver max_iter must be >= 1");
    if (max_step_halvings < 0) throw Error(ErrorCode::InvalidConfig, "max_step_halvings must be >= 0");
  }
};

/// Everything retained between batches by the renewable estimator. O(p²).
struct RenewableState {
  Vector beta;
  Matrix q_agg;  // Σ_k Q_k(D_k, β̃_k)
  Matrix c_agg;  // Σ_k C_k(D_k, β̃_k)
  long long n_total = 0;
  long long batches_seen = 0;

  static RenewableState zero(std::size_t p) { return {Vector(p), Matrix(p), Matrix(p), 0, 0}; }
  std::size_t p() const noexcept { return beta.size(); }
};

struct CeeState {
  Vector beta;
  Matrix q_agg;
  Matrix v;
  long long n_total = 0;
  long long batches_seen = 0;

  static CeeState zero(std::size_t p) { return {Vector(p), Matrix(p), Matrix(p), 0, 0}; }
  std::size_t p() const noexcept { return beta.size(); }
};

struct CueeState {
  Vector beta;
  Matrix q_agg;
  Vector qb_sum;  // Σ_k Q_k β̌_k
  Vector s_sum;   // Σ_k S_k(D_k, β̌_k)
  Matrix v;
  CeeState cee_companion;  // advanced in lockstep; supplies β̌_b
  long long n_total = 0;
  long long batches_seen = 0;

  static CueeState zero(std::size_t p) {
    return {Vector(p), Matrix(p), Vector(p), Vector(p), Matrix(p), CeeState::zero(p), 0, 0};
  }
  std::size_t p() const noexcept { return beta.size(); }
};

namespace detail {

/// Converts a failed factorization into the estimator-level Singular error.
template <class F>
auto as_singular(F&& f, const char* context) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotPositiveDefinite) {
      throw Error(ErrorCode::Singular, std::string(context) + ": " + e.what());
    }
    throw;
  }
}

inline void require_width(std::size_t state_p, const Batch& batch) {
  if (state_p != batch.p) {
    throw Error(ErrorCode::InconsistentWidth, "state has p=" + std::to_string(state_p) + " but batch " +
                                                  std::to_string(batch.id) + " has width " +
                                                  std::to_string(batch.p));
  }
}

/**
 * Damped Newton iteration for F(β) = 0.
 *
 * `residual(β)` returns F(β) and may cache whatever `direction` needs at that
 * point; it is always called on the iterate that `direction` is asked about
 * next. `direction(F)` returns d with J d ≈ F and the update is β - t·d.
 * The step is halved while it overflows or increases ‖F‖₂; if every halving
 * fails without overflow the smallest step is taken anyway. Convergence is
 * declared on the sup-norm of the undamped increment.
 */
template <class Residual, class Direction>
Vector damped_newton(Vector beta, Residual&& residual, Direction&& direction, const SolverConfig& cfg) {
  Vector f = residual(beta);
  double f_norm = norm2(f);
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    const Vector d = direction(f);
    const double step_norm = norm_inf(d);
    if (!std::isfinite(step_norm)) throw Error(ErrorCode::NotConverged, "non-finite Newton increment");
    double t = 1.0;
    Vector trial;
    Vector f_trial;
    bool accepted = false;
    bool overflowed = false;
    for (int h = 0; h <= cfg.max_step_halvings; ++h, t *= 0.5) {
      trial = beta - t * d;
      try {
        f_trial = residual(trial);
        overflowed = false;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Overflow) throw;
        overflowed = true;
        continue;
      }
      if (norm2(f_trial) <= f_norm || step_norm <= cfg.tol) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (overflowed) throw Error(ErrorCode::Overflow, "Newton step overflows after all step halvings");
    }
    beta = std::move(trial);
    f = std::move(f_trial);
    f_norm = norm2(f);
    if (step_norm <= cfg.tol) return beta;
  }
  throw Error(ErrorCode::NotConverged,
              "Newton iteration did not converge in " + std::to_string(cfg.max_iter) + " iterations");
}

}  // namespace detail

/// LPRE estimate on the pooled batches by Newton-Raphson from β = 0.
inline Vector fit_full(std::span<const Batch> batches, const SolverConfig& cfg = {}) {
  cfg.validate();
  if (batches.empty()) throw Error(ErrorCode::InvalidConfig, "fit_full needs at least one batch");
  const std::size_t p = batches.front().p;
  for (const Batch& b : batches) detail::require_width(p, b);

  Matrix info_at_last;
  auto residual = [&](const Vector& beta) {
    BatchSummaries s = summarize(batches, beta, kScore | kInfo);
    info_at_last = std::move(s.info);
    return std::move(s.score);
  };
  auto direction = [&](const Vector& f) {
    return detail::as_singular([&] { return solve_spd(info_at_last, f); }, "information matrix");
  };
  return detail::damped_newton(Vector(p), residual, direction, cfg);
}

inline Vector fit_full(const Batch& batch, const SolverConfig& cfg = {}) {
  return fit_full(std::span<const Batch>(&batch, 1), cfg);
}

/**
 * One renewable update. The new estimate solves the incremental estimating
 * equation
 *
 *   Q̃_{b-1} (β - β̃_{b-1}) + S_b(D_b, β) = 0
 *
 * with Q̃ the accumulated positive definite information. By default the
 * Newton matrix Q̃_{b-1} + Q_b(D_b, β̃_{b-1}) is factored once and reused for
 * every iterate. If that chord iteration fails to converge within max_iter
 * (or overflows), the equation is re-solved from β̃_{b-1} with the Hessian
 * refreshed at each iterate. The first batch has Q̃_0 = 0, where the equation
 * reduces to the batch score equation; it is solved by full Newton from β = 0.
 */
inline RenewableState renew_update(const RenewableState& state, const Batch& batch, const SolverConfig& cfg = {}) {
  cfg.validate();
  detail::require_width(state.p(), batch);

  auto refreshed = [&] {
    Matrix info_at_last;
    auto residual = [&](const Vector& b) {
      BatchSummaries s = summarize(batch, b, kScore | kInfo);
      info_at_last = std::move(s.info);
      return state.q_agg * (b - state.beta) + s.score;
    };
    auto direction = [&](const Vector& f) {
      return detail::as_singular([&] { return solve_spd(state.q_agg + info_at_last, f); },
                                 "renewable Newton matrix");
    };
    return detail::damped_newton(state.beta, residual, direction, cfg);
  };

  Vector beta;
  if (state.batches_seen == 0) {
    beta = fit_full(batch, cfg);
  } else if (cfg.hessian == HessianMode::Frozen) {
    const Matrix newton_matrix = state.q_agg + information(batch, state.beta);
    const Cholesky factor =
        detail::as_singular([&] { return Cholesky(newton_matrix); }, "renewable Newton matrix");
    auto residual = [&](const Vector& b) { return state.q_agg * (b - state.beta) + score(batch, b); };
    auto direction = [&](const Vector& f) { return factor.solve(f); };
    try {
      beta = detail::damped_newton(state.beta, residual, direction, cfg);
    } catch (const Error& e) {
      // A frozen matrix built at a poor β̃_{b-1} can contract very slowly.
      if (e.code() != ErrorCode::NotConverged && e.code() != ErrorCode::Overflow) throw;
      beta = refreshed();
    }
  } else {
    beta = refreshed();
  }

  const BatchSummaries at_new = summarize(batch, beta, kInfo | kCmat);
  RenewableState next;
  next.beta = std::move(beta);
  next.q_agg = state.q_agg + at_new.info;
  next.c_agg = state.c_agg + at_new.cmat;
  next.n_total = state.n_total + static_cast<long long>(batch.n());
  next.batches_seen = state.batches_seen + 1;
  return next;
}

/// Residual of the incremental estimating equation at `next`, given the state it was updated from.
inline Vector renew_residual(const RenewableState& prev, const RenewableState& next, const Batch& batch) {
  return prev.q_agg * (next.beta - prev.beta) + score(batch, next.beta);
}

namespace detail {

/// A⁻¹ (Q̃ V Q̃ᵀ + Q_b V̂_b Q_bᵀ) A⁻ᵀ with A = Q̃ + Q_b and V̂_b = (Q_b C_b⁻¹ Q_bᵀ)⁻¹ = Q_b⁻¹ C_b Q_b⁻¹.
inline Matrix cumulative_variance(const Matrix& q_prev, const Matrix& v_prev, const Matrix& q_b, const Matrix& c_b,
                                  const Cholesky& a_factor) {
  const Cholesky q_factor(q_b);
  const Matrix v_hat = symmetrize(transpose(q_factor.solve(transpose(q_factor.solve(c_b)))));  // Q_b⁻¹ C_b Q_b⁻¹
  const Matrix middle = q_prev * v_prev * transpose(q_prev) + q_b * v_hat * transpose(q_b);
  const Matrix left = a_factor.solve(middle);                      // A⁻¹ M
  return symmetrize(transpose(a_factor.solve(transpose(left))));   // (A⁻¹ (A⁻¹ M)ᵀ)ᵀ
}

}  // namespace detail

/// Cumulative estimating equation update: a matrix-weighted average of the
/// batch-wise LPRE estimates. Requires every batch to support its own fit.
inline CeeState cee_update(const CeeState& state, const Batch& batch, const SolverConfig& cfg = {}) {
  cfg.validate();
  detail::require_width(state.p(), batch);
  const Vector beta_hat = detail::as_singular([&] { return fit_full(batch, cfg); }, "batch-wise LPRE fit");
  const BatchSummaries s = summarize(batch, beta_hat, kInfo | kCmat);

  return detail::as_singular(
      [&] {
        const Matrix a = state.q_agg + s.info;
        const Cholesky a_factor(a);
        CeeState next;
        next.beta = a_factor.solve(state.q_agg * state.beta + s.info * beta_hat);
        next.v = detail::cumulative_variance(state.q_agg, state.v, s.info, s.cmat, a_factor);
        next.q_agg = a;
        next.n_total = state.n_total + static_cast<long long>(batch.n());
        next.batches_seen = state.batches_seen + 1;
        return next;
      },
      "CEE update");
}

/// Cumulatively updated estimating equation update. β̌_b is the CEE estimate
/// after this batch, produced by the embedded companion state.
inline CueeState cuee_update(const CueeState& state, const Batch& batch, const SolverConfig& cfg = {}) {
  cfg.validate();
  detail::require_width(state.p(), batch);
  CeeState companion = cee_update(state.cee_companion, batch, cfg);
  const Vector& check = companion.beta;
  const BatchSummaries s = summarize(batch, check, kScore | kInfo | kCmat);

  return detail::as_singular(
      [&] {
        const Matrix a = state.q_agg + s.info;
        const Cholesky a_factor(a);
        const Vector qb = s.info * check;
        CueeState next;
        next.qb_sum = state.qb_sum + qb;
        next.s_sum = state.s_sum + s.score;
        next.beta = a_factor.solve(next.qb_sum - next.s_sum);
        next.v = detail::cumulative_variance(state.q_agg, state.v, s.info, s.cmat, a_factor);
        next.q_agg = a;
        next.cee_companion = std::move(companion);
        next.n_total = state.n_total + static_cast<long long>(batch.n());
        next.batches_seen = state.batches_seen + 1;
        return next;
      },
      "CUEE update");
}

}  // namespace lpre

#endif  // LPRE_ESTIMATORS_HPP
