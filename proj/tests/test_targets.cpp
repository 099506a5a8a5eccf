// Copyright 2026 The UBVI Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ubvi/targets.hpp"

namespace {

using ubvi::TargetDensity;

double lp(const TargetDensity& t, std::initializer_list<double> x) {
  std::vector<double> v(x);
  return t.log_p(std::span<const double>(v.data(), v.size()));
}

std::vector<double> row(const ubvi::Samples& s, int d) {
  std::vector<double> out(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index j = 0; j < s.cols(); ++j) out[static_cast<std::size_t>(j)] = s(d, j);
  return out;
}

void expect_gradient_matches(const TargetDensity& t, const std::vector<Eigen::VectorXd>& points) {
  for (const auto& x : points) {
    const Eigen::VectorXd g = t.grad_log_p(x);
    const Eigen::VectorXd fd = oracle::fd_gradient([&](const Eigen::VectorXd& y) { return t.log_p_at(y); }, x);
    EXPECT_LT(oracle::max_rel_err(g, fd), 1e-4) << t.name << " at " << x.transpose();
  }
}

std::vector<Eigen::VectorXd> random_points(int dim, int n, double scale, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(dim);
    for (int d = 0; d < dim; ++d) x(d) = z(rng);
    out.push_back(x);
  }
  return out;
}

TEST(Cauchy, DensityRatioAndSymmetry) {
  const auto t = ubvi::make_cauchy();
  EXPECT_EQ(t.dim, 1);
  EXPECT_NEAR(lp(t, {0.0}) - lp(t, {1.0}), std::log(2.0), 1e-15);
  EXPECT_EQ(t.grad_log_p(Eigen::VectorXd::Zero(1))(0), 0.0);
}

TEST(Cauchy, QuadratureNormalizesToPi) {
  const auto t = ubvi::make_cauchy();
  ASSERT_TRUE(t.quad_grid);
  EXPECT_GE(t.quad_grid->size(), 200000u);
  const double z = t.quad_grid->integrate([&](const Eigen::VectorXd& x) { return std::exp(t.log_p_at(x)); });
  EXPECT_NEAR(z, std::numbers::pi, 1e-3);
}

TEST(Cauchy, SamplerMatchesCdf) {
  const auto t = ubvi::make_cauchy();
  const auto s = t.exact_sampler(11, 1000000);
  const double ks = oracle::ks_statistic(row(s, 0), [](double x) { return 0.5 + std::atan(x) / std::numbers::pi; });
  EXPECT_LT(ks, 0.005);
}

TEST(Banana, ZeroCurvatureIsSeparable) {
  const auto t = ubvi::make_banana(0.0, 100.0);
  for (const auto& x : random_points(2, 20, 5.0, 3)) {
    const double cross = lp(t, {x(0), x(1)}) - lp(t, {x(0), 0.0}) - lp(t, {0.0, x(1)}) + lp(t, {0.0, 0.0});
    EXPECT_NEAR(cross, 0.0, 1e-12);
  }
}

TEST(Banana, FormulaMatchesDefinition) {
  const double b = 0.1, s2 = 100.0;
  const auto t = ubvi::make_banana(b, s2);
  for (const auto& x : random_points(2, 20, 8.0, 4)) {
    const double u = x(1) + b * (x(0) * x(0) - s2);
    const double expected = -x(0) * x(0) / (2 * s2) - 0.5 * u * u;
    EXPECT_NEAR(lp(t, {x(0), x(1)}) - lp(t, {0.0, 0.0}), expected - (-0.5 * b * b * s2 * s2), 1e-9);
  }
}

// The sampler draws x2 = z2 - b (x1^2 - s2), so E[x2] = 0 and Var[x2] = 1 + 2 b^2 s2^2.
TEST(Banana, SamplerSecondCoordinateMean) {
  const double b = 0.1, s2 = 100.0;
  const auto t = ubvi::make_banana(b, s2);
  const auto s = t.exact_sampler(5, 1000000);
  const auto x2 = row(s, 1);
  const double se = std::sqrt((1.0 + 2.0 * b * b * s2 * s2) / 1e6);
  EXPECT_NEAR(oracle::mean(x2), 0.0, 4.0 * se);
  EXPECT_NEAR(oracle::variance(x2), 1.0 + 2.0 * b * b * s2 * s2, 0.02 * (1.0 + 2.0 * b * b * s2 * s2));
}

// log p is maximized where x2 = -b (x1^2 - s2) and x1 = 0, i.e. at (0, b s2).
TEST(Banana, ModeFoundByNewton) {
  const double b = 0.1, s2 = 100.0;
  const auto t = ubvi::make_banana(b, s2);
  Eigen::Vector2d x(3.0, -4.0);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd g = t.grad_log_p(x);
    Eigen::Matrix2d hess;
    for (int i = 0; i < 2; ++i) {
      Eigen::Vector2d xp = x, xm = x;
      xp(i) += 1e-5;
      xm(i) -= 1e-5;
      hess.col(i) = (t.grad_log_p(xp) - t.grad_log_p(xm)) / 2e-5;
    }
    x -= hess.ldlt().solve(g);
  }
  EXPECT_NEAR(x(0), 0.0, 1e-8);
  EXPECT_NEAR(x(1), b * s2, 1e-8);
  EXPECT_LT(t.grad_log_p(x).norm(), 1e-8);
}

TEST(Banana, SamplerMarginalsMatchCdf) {
  const double b = 0.1, s2 = 100.0;
  const auto t = ubvi::make_banana(b, s2);
  const auto s = t.exact_sampler(8, 1000000);
  EXPECT_LT(oracle::ks_statistic(row(s, 0), [&](double x) { return oracle::normal_cdf(x, 0.0, s2); }), 0.005);
  // P(x2 <= y) = E_{x1}[Phi(y + b (x1^2 - s2))]
  auto cdf2 = [&](double y) {
    return oracle::simpson(
        [&](double x1) { return oracle::normal_pdf(x1, 0.0, s2) * oracle::normal_cdf(y + b * (x1 * x1 - s2), 0.0, 1.0); },
        -80.0, 80.0, 4000);
  };
  auto x2 = row(s, 1);
  x2.resize(20000);  // the KS oracle integrates per point
  EXPECT_LT(oracle::ks_statistic(x2, cdf2), 1.63 / std::sqrt(20000.0));
}

TEST(GaussMixture, SingleComponentIsGaussian) {
  const auto t = ubvi::make_gauss_mixture({1.0}, {2.0}, {3.0});
  const double c = lp(t, {0.0}) - oracle::normal_log_pdf(0.0, 2.0, 3.0);
  for (double x : {-4.0, -1.0, 0.5, 2.0, 7.0}) {
    EXPECT_NEAR(lp(t, {x}) - oracle::normal_log_pdf(x, 2.0, 3.0), c, 1e-12);
  }
}

TEST(GaussMixture, TwoModeTargetDensityRatio) {
  const auto t = ubvi::make_gauss_mixture({0.5, 0.5}, {0.0, 25.0}, {1.0, 5.0});
  EXPECT_NEAR(lp(t, {0.0}) - lp(t, {25.0}), 0.5 * std::log(5.0), 1e-12);
}

TEST(GaussMixture, RejectsInvalidParameters) {
  EXPECT_THROW(ubvi::make_gauss_mixture({0.5, 0.6}, {0.0, 1.0}, {1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(ubvi::make_gauss_mixture({1.5, -0.5}, {0.0, 1.0}, {1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(ubvi::make_gauss_mixture({0.5, 0.5}, {0.0, 1.0}, {1.0, 0.0}), std::invalid_argument);
}

TEST(GaussMixture, SamplerHistogramTotalVariation) {
  const auto t = ubvi::make_gauss_mixture({0.5, 0.5}, {0.0, 25.0}, {1.0, 5.0});
  const auto s = t.exact_sampler(21, 1000000);
  auto cdf = [](double x) { return 0.5 * oracle::normal_cdf(x, 0.0, 1.0) + 0.5 * oracle::normal_cdf(x, 25.0, 5.0); };
  const double lo = -8.0, hi = 45.0, width = 0.25;
  const int bins = static_cast<int>((hi - lo) / width);
  std::vector<double> counts(static_cast<std::size_t>(bins) + 2, 0.0);
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const double x = s(0, j);
    const int k = x < lo ? 0 : x >= hi ? bins + 1 : 1 + static_cast<int>((x - lo) / width);
    counts[static_cast<std::size_t>(k)] += 1.0;
  }
  double tv = 0.0;
  for (int k = 0; k < bins + 2; ++k) {
    const double a = k == 0 ? -1e300 : lo + (k - 1) * width;
    const double b = k == bins + 1 ? 1e300 : lo + k * width;
    tv += std::abs(counts[static_cast<std::size_t>(k)] / 1e6 - (cdf(b) - cdf(a)));
  }
  EXPECT_LT(0.5 * tv, 0.01);
  EXPECT_LT(oracle::ks_statistic(row(s, 0), cdf), 0.005);
}

TEST(Logistic, NoDataGivesPrior) {
  ubvi::LogisticModel m;
  m.features.resize(0, 2);
  m.labels.resize(0);
  m.prior_loc = Eigen::Vector2d(0.5, -1.0);
  m.prior_scale = (Eigen::Matrix2d() << 2.0, 0.3, 0.3, 1.0).finished();
  const auto t = ubvi::make_logistic(m);
  // bivariate t with nu = 2: Gamma(2)/(Gamma(1) nu pi |S|^{1/2}) (1 + q/nu)^{-2}
  const double det = m.prior_scale.determinant();
  for (const auto& x : random_points(2, 10, 3.0, 9)) {
    const Eigen::Vector2d d = x - m.prior_loc;
    const double q = d.dot(m.prior_scale.inverse() * d);
    const double expected = -std::log(2.0 * std::numbers::pi * std::sqrt(det)) - 2.0 * std::log1p(q / 2.0);
    EXPECT_NEAR(t.log_p_at(x), expected, 1e-12);
  }
}

TEST(Logistic, SingleDatapointGradientAtZero) {
  ubvi::LogisticModel m;
  m.features = Eigen::MatrixXd::Ones(1, 1);
  m.labels = Eigen::VectorXd::Ones(1);
  m.prior_loc = Eigen::VectorXd::Zero(1);
  m.prior_scale = Eigen::MatrixXd::Constant(1, 1, 4.0);
  const auto t = ubvi::make_logistic(m);
  EXPECT_NEAR(t.grad_log_p(Eigen::VectorXd::Zero(1))(0), 0.5, 1e-15);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  const auto t = ubvi::make_logistic(ubvi::synth_logistic_data(3));
  expect_gradient_matches(t, random_points(2, 10, 2.0, 17));
  const auto t5 = ubvi::make_logistic(ubvi::synth_logistic_data(4, 20, 5));
  expect_gradient_matches(t5, random_points(5, 10, 1.0, 18));
  EXPECT_FALSE(t5.quad_grid);
  EXPECT_FALSE(t5.has_sampler());
}

TEST(Logistic, DimensionMismatchRejected) {
  ubvi::LogisticModel m = ubvi::synth_logistic_data(1);
  m.prior_scale = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(ubvi::make_logistic(m), std::invalid_argument);
  m = ubvi::synth_logistic_data(1);
  m.features = Eigen::MatrixXd::Ones(20, 3);
  EXPECT_THROW(ubvi::make_logistic(m), std::invalid_argument);
  m = ubvi::synth_logistic_data(1);
  m.prior_scale << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(ubvi::make_logistic(m), std::invalid_argument);
}

TEST(Logistic, SyntheticDataDeterministicAndLabelled) {
  const auto a = ubvi::synth_logistic_data(42);
  const auto b = ubvi::synth_logistic_data(42);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.prior_scale, b.prior_scale);
  EXPECT_EQ(a.features.rows(), 20);
  EXPECT_EQ(a.dim(), 2);
  Eigen::LLT<Eigen::MatrixXd> llt(a.prior_scale);
  EXPECT_EQ(llt.info(), Eigen::Success);
  EXPECT_TRUE(a.prior_scale.isApprox(a.prior_scale.transpose()));

  double positives = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto m = ubvi::synth_logistic_data(static_cast<std::uint64_t>(seed));
    for (Eigen::Index i = 0; i < m.labels.size(); ++i) {
      ASSERT_TRUE(m.labels(i) == 1.0 || m.labels(i) == -1.0);
      positives += m.labels(i) > 0 ? 1.0 : 0.0;
    }
  }
  const double balance = positives / 2000.0;
  EXPECT_GE(balance, 0.05);
  EXPECT_LE(balance, 0.95);
}

TEST(Logistic, CsvLoaderMapsLabelsAndSubsamples) {
  const std::string path = ::testing::TempDir() + "/ubvi_logistic.csv";
  {
    std::ofstream os(path);
    os << "f1,f2,label\n";
    for (int i = 0; i < 50; ++i) os << 0.1 * i << ',' << -0.05 * i << ',' << (i % 3 == 0 ? 0 : 1) << '\n';
  }
  const auto m = ubvi::load_logistic_csv(path, 7);
  EXPECT_EQ(m.features.rows(), 20);
  EXPECT_EQ(m.dim(), 2);
  for (Eigen::Index i = 0; i < 20; ++i) EXPECT_TRUE(m.labels(i) == 1.0 || m.labels(i) == -1.0);
  const auto again = ubvi::load_logistic_csv(path, 7);
  EXPECT_EQ(m.features, again.features);
  EXPECT_THROW(ubvi::load_logistic_csv(path + ".missing", 7), std::runtime_error);
}

TEST(AllTargets, QuadratureNormalizationAndGradients) {
  std::vector<TargetDensity> targets{ubvi::make_cauchy(), ubvi::make_banana(),
                                     ubvi::make_gauss_mixture({0.5, 0.5}, {0.0, 25.0}, {1.0, 5.0}),
                                     ubvi::make_logistic(ubvi::synth_logistic_data(5))};
  for (const auto& t : targets) {
    ASSERT_TRUE(t.quad_grid) << t.name;
    ASSERT_TRUE(t.log_norm) << t.name;
    bool finite = true;
    const double z = t.quad_grid->integrate([&](const Eigen::VectorXd& x) {
      const double v = t.log_p_at(x);
      finite = finite && std::isfinite(v);
      return std::exp(v - *t.log_norm);
    });
    EXPECT_TRUE(finite) << t.name;
    EXPECT_NEAR(z, 1.0, 1e-3) << t.name;
    const double scale = t.name == "gauss-mix" ? 12.0 : t.name == "banana" ? 8.0 : 2.0;
    expect_gradient_matches(t, random_points(t.dim, 100, scale, 77));
  }
}

// The logistic normalizer comes from the library's own grid, so check it against an
// independently built polar quadrature.
TEST(Logistic, NormalizerAgreesWithIndependentQuadrature) {
  const auto m = ubvi::synth_logistic_data(5);
  const auto t = ubvi::make_logistic(m);
  const Eigen::LLT<Eigen::MatrixXd> llt(m.prior_scale);
  const Eigen::Matrix2d l = llt.matrixL();
  // theta = L (r cos a, r sin a); Jacobian |L| r. Substitute r = tan(u) to map [0, inf) onto [0, pi/2).
  const double jac = l.determinant();
  auto radial = [&](double a) {
    return oracle::simpson(
        [&](double u) {
          if (u >= 0.5 * std::numbers::pi) return 0.0;
          const double r = std::tan(u);
          const Eigen::Vector2d th = l * Eigen::Vector2d(r * std::cos(a), r * std::sin(a));
          return std::exp(t.log_p_at(th)) * r / (std::cos(u) * std::cos(u));
        },
        0.0, 0.5 * std::numbers::pi, 4000);
  };
  const double z = jac * oracle::simpson(radial, 0.0, 2.0 * std::numbers::pi, 400);
  EXPECT_NEAR(std::log(z), *t.log_norm, 1e-3);
}

}  // namespace
