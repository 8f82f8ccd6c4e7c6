#ifndef LPRE_MODEL_HPP
#define LPRE_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lpre/error.hpp"
#include "lpre/linalg.hpp"

/**
 * Multiplicative regression Y = exp(βᵀX)·ε with positive responses, fitted
 * under the least product relative error criterion
 *
 *   ℓ(β) = Σ { Y e^{-βᵀX} + Y⁻¹ e^{βᵀX} - 2 }.
 *
 * Writing u = Y e^{-βᵀX}, each observation contributes u + 1/u - 2 to the
 * loss, (1/u - u)·X to the score, (u + 1/u)·XXᵀ to the information and
 * (1/u - u)²·XXᵀ to the score outer-product matrix.
 */
namespace lpre {

/// Linear predictors beyond this magnitude are treated as divergence.
inline constexpr double kMaxLinearPredictor = 700.0;

/// One block of (covariate row, positive response) pairs. Rows are stored
/// row-major in `x`; when an intercept is used it is already the first column.
struct Batch {
  std::size_t p = 0;
  std::vector<double> x;
  std::vector<double> y;
  long long id = 1;

  Batch() = default;
  Batch(std::size_t p_, std::vector<double> x_, std::vector<double> y_, long long id_ = 1)
      : p(p_), x(std::move(x_)), y(std::move(y_)), id(id_) {}

  std::size_t n() const noexcept { return y.size(); }
  std::span<const double> row(std::size_t i) const noexcept { return {x.data() + i * p, p}; }

  /// Throws on violated invariants: positive y, n >= 1, consistent width, finite entries.
  void validate() const {
    if (p == 0) throw Error(ErrorCode::InconsistentWidth, "batch has zero covariates");
    if (y.empty()) throw Error(ErrorCode::InvalidConfig, "batch " + std::to_string(id) + " is empty");
    if (x.size() != y.size() * p) {
      throw Error(ErrorCode::InconsistentWidth, "batch " + std::to_string(id) + " has " +
                                                    std::to_string(x.size()) + " covariate values for " +
                                                    std::to_string(y.size()) + " rows of width " +
                                                    std::to_string(p));
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!(y[i] > 0.0) || !std::isfinite(y[i])) {
        throw Error(ErrorCode::NonPositiveResponse, "response " + std::to_string(y[i]), i + 1);
      }
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!std::isfinite(x[k])) throw Error(ErrorCode::ParseError, "non-finite covariate", k / p + 1);
    }
  }
};

/// Per-batch sufficient statistics at a coefficient vector.
struct BatchSummaries {
  Vector score;
  Matrix info;
  Matrix cmat;
  double loss = 0.0;
  std::size_t n = 0;
  Vector at_beta;
};

enum SummaryParts : unsigned {
  kLoss = 1u << 0,
  kScore = 1u << 1,
  kInfo = 1u << 2,
  kCmat = 1u << 3,
  kAll = kLoss | kScore | kInfo | kCmat,
};

/// Single pass over the batch computing the requested parts.
inline BatchSummaries summarize(const Batch& batch, const Vector& beta, unsigned parts = kAll) {
  const std::size_t p = batch.p;
  if (beta.size() != p) {
    throw Error(ErrorCode::InconsistentWidth, "coefficient vector has length " + std::to_string(beta.size()) +
                                                  " but batch rows have width " + std::to_string(p));
  }
  BatchSummaries out;
  out.n = batch.n();
  out.at_beta = beta;
  if (parts & kScore) out.score = Vector(p);
  const bool want_info = parts & kInfo;
  const bool want_cmat = parts & kCmat;
  if (want_info) out.info = Matrix(p);
  if (want_cmat) out.cmat = Matrix(p);

  const double* b = beta.span().data();
  double* s = (parts & kScore) ? out.score.span().data() : nullptr;
  double* q = want_info ? out.info.span().data() : nullptr;
  double* c = want_cmat ? out.cmat.span().data() : nullptr;
  double loss = 0.0;

  for (std::size_t i = 0; i < batch.n(); ++i) {
    const double* xi = batch.x.data() + i * p;
    double eta = 0.0;
    for (std::size_t j = 0; j < p; ++j) eta += b[j] * xi[j];
    if (!(std::abs(eta) <= kMaxLinearPredictor)) {
      throw Error(ErrorCode::Overflow, "linear predictor " + std::to_string(eta) + " in batch " +
                                           std::to_string(batch.id),
                  i + 1);
    }
    const double t = std::exp(eta);
    const double yi = batch.y[i];
    const double u = yi / t;      // Y e^{-η}
    const double inv_u = t / yi;  // Y⁻¹ e^{η}
    const double r = inv_u - u;
    if (parts & kLoss) loss += u + inv_u - 2.0;
    if (s) {
      for (std::size_t j = 0; j < p; ++j) s[j] += r * xi[j];
    }
    if (q) {
      const double w = u + inv_u;
      for (std::size_t j = 0; j < p; ++j) {
        const double wx = w * xi[j];
        for (std::size_t k = j; k < p; ++k) q[j * p + k] += wx * xi[k];
      }
    }
    if (c) {
      const double w = r * r;
      for (std::size_t j = 0; j < p; ++j) {
        const double wx = w * xi[j];
        for (std::size_t k = j; k < p; ++k) c[j * p + k] += wx * xi[k];
      }
    }
  }
  out.loss = loss;
  if (want_info) out.info = mirror_upper(std::move(out.info));
  if (want_cmat) out.cmat = mirror_upper(std::move(out.cmat));
  return out;
}

inline double lpre_loss(const Batch& batch, const Vector& beta) { return summarize(batch, beta, kLoss).loss; }

inline Vector score(const Batch& batch, const Vector& beta) { return summarize(batch, beta, kScore).score; }

/// Positive definite Hessian of the loss.
inline Matrix information(const Batch& batch, const Vector& beta) { return summarize(batch, beta, kInfo).info; }

inline Matrix cmat(const Batch& batch, const Vector& beta) { return summarize(batch, beta, kCmat).cmat; }

/// Sums over several batches at the same coefficient vector.
inline BatchSummaries summarize(std::span<const Batch> batches, const Vector& beta, unsigned parts = kAll) {
  if (batches.empty()) throw Error(ErrorCode::InvalidConfig, "no batches");
  BatchSummaries total = summarize(batches.front(), beta, parts);
  for (std::size_t k = 1; k < batches.size(); ++k) {
    const BatchSummaries s = summarize(batches[k], beta, parts);
    total.loss += s.loss;
    total.n += s.n;
    if (parts & kScore) total.score += s.score;
    if (parts & kInfo) total.info += s.info;
    if (parts & kCmat) total.cmat += s.cmat;
  }
  return total;
}

}  // namespace lpre

#endif  // LPRE_MODEL_HPP
