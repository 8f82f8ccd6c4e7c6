#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "lpre/lpre.hpp"
#include "test_support.hpp"

using namespace lpre;
using lpre::test::random_batch;

namespace {

// 40-digit reference values from tests/oracles/reference_values.py.
constexpr double kZ975 = 1.9599639845400542;
constexpr double kZ995 = 2.5758293035489008;

RenewableState scalar_state(double q, double c) {
  RenewableState s = RenewableState::zero(1);
  s.q_agg(0, 0) = q;
  s.c_agg(0, 0) = c;
  return s;
}

}  // namespace

TEST(NormalQuantile, HighPrecisionReference) {
  EXPECT_NEAR(normal_quantile(0.975), kZ975, 1e-14);
  EXPECT_NEAR(normal_quantile(0.995), kZ995, 1e-14);
  EXPECT_NEAR(normal_quantile(1e-10), -6.3613409024040562, 1e-12);
  EXPECT_NEAR(normal_quantile(0.3), -0.52440051270804078, 1e-14);
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_THROW(normal_quantile(1.5), Error);
}

TEST(NormalQuantile, InvertsCdf) {
  for (double p = 1e-6; p < 1.0; p += 0.0137) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-13 * std::max(1.0, p));
  }
}

TEST(NormalTail, TwoSidedReference) {
  EXPECT_NEAR(2 * normal_sf(1.959964), 0.049999998192884809, 1e-15);
  EXPECT_NEAR(2 * normal_sf(10.0) / 1.5239706048321052e-23, 1.0, 1e-12);
}

TEST(RenewableVariance, Examples) {
  EXPECT_NEAR(renewable_variance(scalar_state(2.5, 2.25))(0, 0), 0.36, 1e-12);
  RenewableState id = RenewableState::zero(3);
  id.q_agg = Matrix::identity(3);
  id.c_agg = Matrix::identity(3);
  EXPECT_EQ(renewable_variance(id), Matrix::identity(3));
}

TEST(RenewableVariance, DoublingDataHalvesVariance) {
  std::mt19937_64 rng(51);
  const Batch b = random_batch(rng, 80, 4);
  const BatchSummaries s = summarize(b, fit_full(b));
  RenewableState one = RenewableState::zero(4), two = RenewableState::zero(4);
  one.q_agg = s.info;
  one.c_agg = s.cmat;
  two.q_agg = 2.0 * s.info;
  two.c_agg = 2.0 * s.cmat;
  const Matrix v1 = renewable_variance(one), v2 = renewable_variance(two);
  EXPECT_LE(norm_inf(2.0 * v2 - v1), 1e-12 * norm_inf(v1));
}

TEST(RenewableVariance, ZeroCmatGivesZeroCovariance) {
  RenewableState s = RenewableState::zero(2);
  s.q_agg = Matrix::identity(2);
  const Matrix v = renewable_variance(s);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(v(i, j), 0.0);
}

TEST(RenewableVariance, SingularQ) {
  RenewableState s = RenewableState::zero(2);
  s.q_agg = Matrix::from_rows({{1.0, 1.0}, {1.0, 1.0}});
  s.c_agg = Matrix::identity(2);
  try {
    renewable_variance(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Singular);
  }
}

TEST(BatchVariance, ScalarAndReplication) {
  const Batch one(1, {1.0}, {2.0});
  const BatchSummaries s = summarize(one, Vector{0.0});
  EXPECT_NEAR(batch_variance(s)(0, 0), 2.25 / (2.5 * 2.5), 1e-15);

  Batch many(1, std::vector<double>(6, 1.0), std::vector<double>(6, 2.0));
  EXPECT_NEAR(batch_variance(summarize(many, Vector{0.0}))(0, 0), 0.36 / 6, 1e-15);
}

TEST(BatchVariance, SymmetricPositiveSemidefinite) {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> z;
  for (int t = 0; t < 50; ++t) {
    const Batch b = random_batch(rng, 60, 5);
    const Matrix v = batch_variance(summarize(b, fit_full(b)));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_LE(std::abs(v(i, j) - v(j, i)), 1e-10);
    Vector w(5);
    for (auto& x : w) x = z(rng);
    EXPECT_GE(dot(w, v * w), 0.0);
  }
}

TEST(WaldReport, Examples) {
  const EstimateReport r = wald_report(Vector{0.0}, Matrix::identity(1), 0.95);
  EXPECT_NEAR(r.ci_low[0], -kZ975, 1e-14);
  EXPECT_NEAR(r.ci_high[0], kZ975, 1e-14);
  EXPECT_EQ(r.p_values[0], 1.0);
  EXPECT_EQ(r.names[0], "beta1");

  const EstimateReport edge = wald_report(Vector{1.959964}, Matrix::identity(1), 0.95);
  EXPECT_NEAR(edge.p_values[0], 0.049999998192884809, 1e-15);

  const EstimateReport point = wald_report(Vector{0.4, 0.0}, Matrix(2), 0.95);
  EXPECT_EQ(point.ci_low[0], 0.4);
  EXPECT_EQ(point.ci_high[0], 0.4);
  EXPECT_EQ(point.p_values[0], 0.0);
  EXPECT_EQ(point.p_values[1], 1.0);
}

TEST(WaldReport, InvalidLevel) {
  for (double level : {0.0, 1.0, -0.1, 1.5, std::numeric_limits<double>::quiet_NaN()}) {
    try {
      wald_report(Vector{0.0}, Matrix::identity(1), level);
      FAIL() << level;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidLevel);
    }
  }
}

TEST(WaldReport, WidthAndOrdering) {
  std::mt19937_64 rng(53);
  const Batch b = random_batch(rng, 100, 3);
  const Vector beta = fit_full(b);
  const Matrix cov = batch_variance(summarize(b, beta));
  const EstimateReport r95 = wald_report(beta, cov, 0.95);
  const EstimateReport r99 = wald_report(beta, cov, 0.99);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(r95.ci_high[j] - r95.ci_low[j], 2 * kZ975 * r95.se[j], 1e-14);
    EXPECT_LE(r95.ci_low[j], r95.beta[j]);
    EXPECT_GE(r95.ci_high[j], r95.beta[j]);
    EXPECT_GE(r95.p_values[j], 0.0);
    EXPECT_LE(r95.p_values[j], 1.0);
    EXPECT_EQ(r95.se[j], std::sqrt(cov(j, j)));
    EXPECT_GT(r99.ci_high[j] - r99.ci_low[j], r95.ci_high[j] - r95.ci_low[j]);
  }
}

TEST(WaldReport, ScaleEquivariance) {
  std::mt19937_64 rng(54);
  const Batch b = random_batch(rng, 150, 3);
  Batch scaled = b;
  const double c = 4.0;
  for (std::size_t i = 0; i < b.n(); ++i) scaled.x[i * 3 + 2] *= c;
  const RenewableState s = renew_update(RenewableState::zero(3), b);
  const RenewableState t = renew_update(RenewableState::zero(3), scaled);
  const EstimateReport rs = estimate_report(s, 0.95), rt = estimate_report(t, 0.95);
  EXPECT_NEAR(rt.se[2], rs.se[2] / c, 1e-9 * rs.se[2]);
  EXPECT_NEAR(rt.p_values[2], rs.p_values[2], 1e-6);
  EXPECT_NEAR(rt.beta[2], rs.beta[2] / c, 1e-9);
}

TEST(CpHit, ClosedIntervals) {
  EstimateReport r = wald_report(Vector{0.0, 1.0}, Matrix::identity(2), 0.95);
  EXPECT_EQ(cp_hit(r, Vector{0.1, 1.2}), (std::vector<bool>{true, true}));
  r.ci_low[0] = 0.1;
  EXPECT_TRUE(cp_hit(r, Vector{0.1, 1.0})[0]);
  const EstimateReport point = wald_report(Vector{0.5}, Matrix(1), 0.95);
  EXPECT_FALSE(cp_hit(point, Vector{0.2})[0]);
  EXPECT_THROW(cp_hit(point, Vector{0.2, 0.3}), Error);
}

TEST(ReportWriters, RecordsAndCsv) {
  const EstimateReport r = wald_report(Vector{0.0}, Matrix::identity(1), 0.95, {10, 2, Method::CEE, {"x"}});
  std::ostringstream rec, csv, table;
  write_report_records(rec, r);
  write_report_csv(csv, r);
  write_report_table(table, r);
  EXPECT_EQ(rec.str(),
            "method=CEE n_total=10 batches=2 level=0.95\n"
            "name=x est=0 sd=1 ci_low=-1.959963985 ci_high=1.959963985 p_value=1\n");
  EXPECT_EQ(csv.str(), "method,name,est,sd,p-value,ci_low,ci_high\nCEE,x,0,1,1," + detail::fmt_g(r.ci_low[0], 17) +
                           "," + detail::fmt_g(r.ci_high[0], 17) + "\n");
  EXPECT_EQ(std::stod(detail::fmt_g(r.ci_high[0], 17)), r.ci_high[0]);
  EXPECT_NE(table.str().find("CEE  (N=10, B=2, level=0.95)"), std::string::npos);
}
