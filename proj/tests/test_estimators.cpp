#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lpre/lpre.hpp"
#include "test_support.hpp"

using namespace lpre;
using lpre::test::random_batch;

namespace {

// Reference values from tests/oracles/reference_values.py (40-digit arithmetic).
Batch batch1() { return Batch(2, {1, 0.5, 1, -1.0, 1, 1.5, 1, 0.2, 1, -0.7}, {1.3, 0.6, 2.8, 0.9, 0.75}, 1); }
Batch batch2() { return Batch(2, {1, 1.0, 1, -0.3, 1, 0.8, 1, -1.2}, {2.1, 0.8, 1.1, 0.5}, 2); }

const Vector kFit1{0.018777733500731862, 0.58494132933301244};
const Vector kFit2{-0.061044305813519419, 0.54732595293363436};
const Vector kFitPooled{-0.01679968928989947, 0.5686199079133385};
const Vector kRenew2{-0.016808036975911043, 0.56857539284176924};
const Vector kCee2{-0.016799333882188892, 0.56856822396999968};
const Vector kCuee2{-0.016808036975649572, 0.5685753928419356};

void expect_near(const Vector& a, const Vector& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], tol) << "component " << j;
}

Batch intercept_only(const std::vector<double>& y) { return Batch(1, std::vector<double>(y.size(), 1.0), y); }

// Golden-section minimization of the one-parameter loss, independent of the Newton solver.
double golden_section(const Batch& b, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
  for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
    if (lpre_loss(b, Vector{c}) < lpre_loss(b, Vector{d})) {
      hi = d;
    } else {
      lo = c;
    }
    c = hi - g * (hi - lo);
    d = lo + g * (hi - lo);
  }
  return 0.5 * (lo + hi);
}

Batch noiseless(std::mt19937_64& rng, std::size_t n, const Vector& beta) {
  Batch b = random_batch(rng, n, beta.size());
  for (std::size_t i = 0; i < n; ++i) {
    double eta = 0;
    for (std::size_t j = 0; j < beta.size(); ++j) eta += beta[j] * b.x[i * beta.size() + j];
    b.y[i] = std::exp(eta);
  }
  return b;
}

}  // namespace

TEST(FitFull, HighPrecisionReference) {
  expect_near(fit_full(batch1()), kFit1, 1e-12);
  expect_near(fit_full(batch2()), kFit2, 1e-12);
  const std::vector<Batch> both{batch1(), batch2()};
  expect_near(fit_full(both), kFitPooled, 1e-12);
}

TEST(FitFull, InterceptOnlyExamples) {
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(fit_full(intercept_only({e2, e2}))[0], 2.0, 1e-12);
  EXPECT_EQ(fit_full(intercept_only({1, 1, 1}))[0], 0.0);
}

TEST(FitFull, InterceptOnlyAgreesWithGoldenSection) {
  std::mt19937_64 rng(31);
  std::lognormal_distribution<double> ln(0.3, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> y(5 + t);
    for (auto& v : y) v = ln(rng);
    const Batch b = intercept_only(y);
    EXPECT_NEAR(fit_full(b)[0], golden_section(b, -10, 10), 1e-6);
  }
}

TEST(FitFull, ZeroNoiseRecovery) {
  std::mt19937_64 rng(32);
  const Vector beta{0.2, -0.2, 0.2, -0.2, 0.2};
  const Batch b = noiseless(rng, 60, beta);
  expect_near(fit_full(b), beta, 1e-10);
}

TEST(FitFull, StationarityAndErrors) {
  std::mt19937_64 rng(33);
  const Batch b = random_batch(rng, 200, 5);
  const Vector beta = fit_full(b);
  EXPECT_LE(norm_inf(score(b, beta)), 1e-6 * (1 + 200));

  SolverConfig one;
  one.max_iter = 1;
  try {
    fit_full(b, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotConverged);
  }
  // Two rows cannot identify five coefficients.
  try {
    fit_full(random_batch(rng, 2, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Singular);
  }
  SolverConfig bad;
  bad.tol = 0;
  EXPECT_THROW(fit_full(b, bad), Error);
}

TEST(RenewUpdate, HighPrecisionReference) {
  const RenewableState s1 = renew_update(RenewableState::zero(2), batch1());
  expect_near(s1.beta, kFit1, 1e-12);
  const RenewableState s2 = renew_update(s1, batch2());
  expect_near(s2.beta, kRenew2, 1e-12);
  EXPECT_EQ(s2.n_total, 9);
  EXPECT_EQ(s2.batches_seen, 2);
  const Matrix v = renewable_variance(s2);
  EXPECT_NEAR(v(0, 0), 0.0026600024152542069, 1e-14);
  EXPECT_NEAR(v(0, 1), 0.0018588176952214733, 1e-14);
  EXPECT_NEAR(v(1, 1), 0.0026517227224314034, 1e-14);
}

TEST(RenewUpdate, FirstBatchEqualsFullFit) {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 10; ++t) {
    const Batch b = random_batch(rng, 200, 5);
    expect_near(renew_update(RenewableState::zero(5), b).beta, fit_full(b), 1e-8);
  }
}

TEST(RenewUpdate, NoiselessBatchIsFixedPoint) {
  std::mt19937_64 rng(35);
  const RenewableState s1 = renew_update(RenewableState::zero(3), random_batch(rng, 50, 3));
  const Batch exact = noiseless(rng, 40, s1.beta);
  const RenewableState s2 = renew_update(s1, exact);
  expect_near(s2.beta, s1.beta, 1e-12);
}

TEST(RenewUpdate, SolvesIncrementalEquation) {
  std::mt19937_64 rng(36);
  RenewableState s = RenewableState::zero(4);
  for (int b = 0; b < 6; ++b) {
    const Batch batch = random_batch(rng, 30, 4);
    const RenewableState next = renew_update(s, batch);
    EXPECT_LE(norm_inf(renew_residual(s, next, batch)), 1e-8 * (1.0 + static_cast<double>(next.n_total)));
    s = next;
  }
}

TEST(RenewUpdate, RefreshedHessianReachesSameRoot) {
  std::mt19937_64 rng(37);
  SolverConfig refreshed;
  refreshed.hessian = HessianMode::Refreshed;
  RenewableState a = RenewableState::zero(3), b = RenewableState::zero(3);
  for (int k = 0; k < 5; ++k) {
    const Batch batch = random_batch(rng, 25, 3);
    a = renew_update(a, batch);
    b = renew_update(b, batch, refreshed);
    expect_near(a.beta, b.beta, 1e-8);
  }
}

TEST(RenewUpdate, SlowChordIterationFallsBackToRefreshedNewton) {
  // Mixture design, 25-row batches: the first estimate is poor and the matrix
  // frozen there contracts at about 0.8 per step, too slow for 100 iterations.
  sim::DgpConfig cfg;
  cfg.covariate_case = sim::CovariateCase::GaussianMixture;
  cfg.seed = sim::replication_seed(7, 1);
  const Batch b1 = sim::gen_batch(cfg, 25, 1);
  const Batch b2 = sim::gen_batch(cfg, 25, 2);
  const RenewableState s1 = renew_update(RenewableState::zero(5), b1);

  const Matrix chord = s1.q_agg + information(b2, s1.beta);
  const Cholesky factor(chord);
  auto residual = [&](const Vector& b) { return s1.q_agg * (b - s1.beta) + score(b2, b); };
  auto direction = [&](const Vector& f) { return factor.solve(f); };
  EXPECT_THROW(detail::damped_newton(s1.beta, residual, direction, SolverConfig{}), Error);

  const RenewableState s2 = renew_update(s1, b2);
  EXPECT_LE(norm_inf(renew_residual(s1, s2, b2)), 1e-8 * (1.0 + 50));
}

TEST(RenewUpdate, ProceedsOnBatchSmallerThanDimension) {
  std::mt19937_64 rng(38);
  const RenewableState s1 = renew_update(RenewableState::zero(5), random_batch(rng, 100, 5));
  const RenewableState s2 = renew_update(s1, random_batch(rng, 2, 5));
  EXPECT_EQ(s2.batches_seen, 2);
  EXPECT_TRUE(all_finite(s2.beta));
}

TEST(RenewUpdate, LeavesInputStateUntouchedAndChecksWidth) {
  std::mt19937_64 rng(39);
  const RenewableState s1 = renew_update(RenewableState::zero(3), random_batch(rng, 40, 3));
  const RenewableState copy = s1;
  (void)renew_update(s1, random_batch(rng, 40, 3));
  EXPECT_EQ(s1.beta, copy.beta);
  EXPECT_EQ(s1.q_agg, copy.q_agg);
  EXPECT_EQ(s1.c_agg, copy.c_agg);
  try {
    renew_update(s1, random_batch(rng, 40, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentWidth);
  }
}

TEST(CeeUpdate, HighPrecisionReference) {
  const CeeState s1 = cee_update(CeeState::zero(2), batch1());
  expect_near(s1.beta, kFit1, 1e-12);
  const CeeState s2 = cee_update(s1, batch2());
  expect_near(s2.beta, kCee2, 1e-12);
  EXPECT_NEAR(s2.v(0, 0), 0.0025334671159502064, 1e-14);
  EXPECT_NEAR(s2.v(0, 1), 0.0018248174664247616, 1e-14);
  EXPECT_NEAR(s2.v(1, 1), 0.0027508049683246463, 1e-14);
}

TEST(CeeUpdate, ScalarConvexCombination) {
  std::mt19937_64 rng(40);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> y1(8), y2(11);
    for (auto& v : y1) v = ln(rng);
    for (auto& v : y2) v = ln(rng);
    const double f1 = fit_full(intercept_only(y1))[0];
    const double f2 = fit_full(intercept_only(y2))[0];
    const CeeState s = cee_update(cee_update(CeeState::zero(1), intercept_only(y1)), intercept_only(y2));
    EXPECT_GE(s.beta[0], std::min(f1, f2) - 1e-15);
    EXPECT_LE(s.beta[0], std::max(f1, f2) + 1e-15);
  }
}

TEST(CeeUpdate, IdenticalBatches) {
  const CeeState s = cee_update(cee_update(CeeState::zero(2), batch1()), batch1());
  expect_near(s.beta, kFit1, 1e-12);
}

TEST(CeeUpdate, DefiningIdentity) {
  std::mt19937_64 rng(41);
  CeeState s = CeeState::zero(3);
  for (int k = 0; k < 5; ++k) {
    const Batch batch = random_batch(rng, 40, 3);
    const CeeState next = cee_update(s, batch);
    const Vector beta_hat = fit_full(batch);
    const Matrix qb = information(batch, beta_hat);
    const Vector r = (s.q_agg + qb) * next.beta - s.q_agg * s.beta - qb * beta_hat;
    EXPECT_LE(norm_inf(r), 1e-8 * (1.0 + static_cast<double>(next.n_total)));
    s = next;
  }
}

TEST(CeeUpdate, SingularOnTinyBatch) {
  std::mt19937_64 rng(42);
  const CeeState s1 = cee_update(CeeState::zero(5), random_batch(rng, 100, 5));
  try {
    cee_update(s1, random_batch(rng, 3, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Singular);
  }
}

TEST(CueeUpdate, HighPrecisionReference) {
  const CueeState s1 = cuee_update(CueeState::zero(2), batch1());
  expect_near(s1.beta, kFit1, 1e-12);
  const CueeState s2 = cuee_update(s1, batch2());
  expect_near(s2.beta, kCuee2, 1e-12);
  expect_near(s2.cee_companion.beta, kCee2, 1e-12);
  EXPECT_NEAR(s2.v(0, 0), 0.002660024951374116, 1e-14);
  EXPECT_NEAR(s2.v(0, 1), 0.0018588311193581784, 1e-14);
  EXPECT_NEAR(s2.v(1, 1), 0.0026517296066861974, 1e-14);
}

TEST(CueeUpdate, ZeroNoiseStream) {
  std::mt19937_64 rng(43);
  const Vector beta{0.2, -0.2, 0.2};
  CueeState s = CueeState::zero(3);
  for (int k = 0; k < 5; ++k) {
    s = cuee_update(s, noiseless(rng, 30, beta));
    expect_near(s.beta, beta, 1e-9);
  }
}

TEST(CueeUpdate, DefiningIdentity) {
  std::mt19937_64 rng(44);
  CueeState s = CueeState::zero(3);
  for (int k = 0; k < 5; ++k) {
    const Batch batch = random_batch(rng, 40, 3);
    const CueeState next = cuee_update(s, batch);
    const Vector check = next.cee_companion.beta;
    const BatchSummaries sb = summarize(batch, check, kScore | kInfo);
    const Vector r = (s.q_agg + sb.info) * next.beta -
                     (s.qb_sum + sb.info * check - s.s_sum - sb.score);
    EXPECT_LE(norm_inf(r), 1e-8 * (1.0 + static_cast<double>(next.n_total)));
    s = next;
  }
}

TEST(Estimators, TenBatchesTrackFullFit) {
  sim::DgpConfig cfg;
  cfg.seed = 45;
  const auto batches = sim::gen_stream(cfg, sim::Scenario{1000, 100, 0});
  const Vector full = fit_full(batches);
  RenewableState r = RenewableState::zero(5);
  CueeState c = CueeState::zero(5);
  for (const auto& b : batches) {
    r = renew_update(r, b);
    c = cuee_update(c, b);
  }
  EXPECT_LE(norm_inf(r.beta - full), 0.01);
  EXPECT_LE(norm_inf(c.beta - full), 0.02);
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::FullLPRE, Method::Renewable, Method::CEE, Method::CUEE}) {
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_THROW(parse_method("ols"), Error);
}
