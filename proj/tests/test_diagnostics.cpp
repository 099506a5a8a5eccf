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
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ubvi/diagnostics.hpp"
#include "ubvi/ubvi.hpp"

namespace {

using ubvi::GaussComponent;

struct Pair1d {
  double m1, v1, m2, v2;
};

// Squared Hellinger by quadrature of sqrt(p q).
double oracle_h2(const Pair1d& p) {
  const double lo = std::min(p.m1 - 12 * std::sqrt(p.v1), p.m2 - 12 * std::sqrt(p.v2));
  const double hi = std::max(p.m1 + 12 * std::sqrt(p.v1), p.m2 + 12 * std::sqrt(p.v2));
  return 1.0 - oracle::simpson(
                   [&](double x) { return std::sqrt(oracle::normal_pdf(x, p.m1, p.v1) * oracle::normal_pdf(x, p.m2, p.v2)); },
                   lo, hi, 40000);
}

ubvi::PointLogDensity gauss_log(double m, double v) {
  return [m, v](const Eigen::Ref<const Eigen::VectorXd>& x) { return oracle::normal_log_pdf(x(0), m, v); };
}

ubvi::SampledDensity gauss_q(double m, double v) { return ubvi::as_sampled(GaussComponent::univariate(m, v)); }

// E|N(mu, s2)|
double mean_abs_normal(double mu, double s2) {
  const double s = std::sqrt(s2);
  return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-mu * mu / (2 * s2)) + mu * (1 - 2 * oracle::normal_cdf(-mu / s, 0, 1));
}

std::vector<Pair1d> random_pairs(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Pair1d> out;
  for (int i = 0; i < n; ++i) out.push_back({z(rng), std::exp(z(rng)), 2 * z(rng), std::exp(z(rng))});
  return out;
}

TEST(Densities, NormalizedRequiresConstant) {
  auto t = ubvi::make_cauchy();
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.3);
  EXPECT_NEAR(ubvi::normalized(t)(x), std::log(1.0 / (std::numbers::pi * 1.09)), 1e-8);
  t.log_norm.reset();
  EXPECT_THROW(ubvi::normalized(t), std::logic_error);
  EXPECT_NO_THROW(ubvi::unnormalized(t)(x));
}

TEST(HellingerHat, ExactMatchGivesZero) {
  const auto e = ubvi::hellinger_hat(gauss_log(0, 1), gauss_q(0, 1), 1000, 1);
  EXPECT_NEAR(e.hat, 0.0, 1e-12);
  EXPECT_NEAR(e.tilde, 0.0, 1e-12);
  EXPECT_EQ(e.n_samples, 1000);
}

TEST(HellingerHat, UnitShiftExample) {
  const double exact = 1.0 - std::exp(-0.125);
  EXPECT_NEAR(exact, 0.11750, 1e-5);
  EXPECT_NEAR(oracle_h2({0, 1, 1, 1}), exact, 1e-10);
  const auto e = ubvi::hellinger_hat(gauss_log(0, 1), gauss_q(1, 1), 100000, 2);
  EXPECT_NEAR(e.hat, exact, 3 * e.stderr_hat);
  EXPECT_LT(e.stderr_hat, 2e-3);
}

// q wider than p keeps p/q square integrable so the self-normalized form settles.
TEST(HellingerHat, ConsistentForBothEstimators) {
  for (auto p : random_pairs(3, 5)) {
    if (p.v2 < p.v1) std::swap(p.v1, p.v2);
    const double h2 = oracle_h2(p);
    const auto e = ubvi::hellinger_hat(gauss_log(p.m1, p.v1), gauss_q(p.m2, p.v2), 1000000, 4);
    EXPECT_NEAR(e.hat, h2, 5 * e.stderr_hat + 1e-9);
    EXPECT_NEAR(e.tilde, h2, 0.01 + 10 * e.stderr_hat);
    EXPECT_LE(e.tilde, 1.0);
  }
}

// Mean absolute errors over 200 replications stay under H sqrt(2 - H^2) / sqrt(n)
// for the known-normalization estimator and sqrt(2) (1 + 1/sqrt(n)) H for the
// self-normalized one.
TEST(HellingerHat, ErrorBoundsOverReplications) {
  const int n = 100, reps = 200;
  int pairs = 0;
  for (int k = 0; k < 20; ++k) {
    const double target_h = 0.01 + (0.9 - 0.01) * k / 19.0;
    // N(0,1) vs N(mu, 1.2): solve for mu giving H = target_h.
    const double v = (k % 2 == 0) ? 1.0 : 1.2;
    const double base = 1.0 - std::sqrt(2.0 * std::sqrt(v) / (1.0 + v));
    const double need = target_h * target_h;
    if (need <= base) continue;
    const double mu = std::sqrt(-4.0 * (1.0 + v) * std::log((1.0 - need) / (1.0 - base)));
    const Pair1d p{0, 1, mu, v};
    const double h2 = oracle_h2(p);
    ASSERT_NEAR(std::sqrt(h2), target_h, 1e-6);
    const double h = std::sqrt(h2);
    double err_hat = 0.0, err_tilde = 0.0;
    for (int r = 0; r < reps; ++r) {
      const auto e = ubvi::hellinger_hat(gauss_log(p.m1, p.v1), gauss_q(p.m2, p.v2), n, 1000 + r);
      err_hat += std::abs(e.hat - h2) / reps;
      err_tilde += std::abs(e.tilde - h2) / reps;
    }
    EXPECT_LE(err_hat, h * std::sqrt(2 - h2) / std::sqrt(double(n))) << "H " << h;
    EXPECT_LE(err_tilde, std::sqrt(2.0) * (1 + 1 / std::sqrt(double(n))) * h) << "H " << h;
    ++pairs;
  }
  EXPECT_GE(pairs, 18);
}

TEST(HellingerTilde, ScaleInvariantBitwise) {
  const auto t = ubvi::make_banana();
  const auto q = ubvi::as_sampled(GaussComponent{Eigen::Vector2d(0, 5), Eigen::Vector2d(4, 3)});
  const auto lp = ubvi::unnormalized(t);
  const ubvi::PointLogDensity scaled = [&](const Eigen::Ref<const Eigen::VectorXd>& x) {
    return lp(x) + std::log(1000.0);
  };
  const double a = ubvi::hellinger_tilde(lp, q, 5000, 9);
  const double b = ubvi::hellinger_tilde(scaled, q, 5000, 9);
  // log p + log 1000 rounds per point, so agreement is to rounding only.
  EXPECT_NEAR(a, b, 1e-14);
  EXPECT_LE(a, 1.0);
  EXPECT_NEAR(ubvi::hellinger_tilde(ubvi::normalized(t), q, 5000, 9), a, 1e-12);
}

TEST(Importance, ExactProposalHasConstantWeights) {
  const ubvi::PointLogDensity phi = [](const Eigen::Ref<const Eigen::VectorXd>& x) { return x(0); };
  const int n = 10000;
  const auto e = ubvi::importance_estimates(gauss_log(0, 1), 0.0, gauss_q(0, 1), phi, n, 5);
  EXPECT_NEAR(e.j_n, 0.0, 3.0 / std::sqrt(double(n)));
  EXPECT_NEAR(e.i_n, e.j_n, 1e-12);
  EXPECT_NEAR(e.ess, 1.0, 1e-12);
  // Unnormalized p: only J_n.
  const ubvi::PointLogDensity shifted = [](const Eigen::Ref<const Eigen::VectorXd>& x) {
    return oracle::normal_log_pdf(x(0), 0, 1) + 3.0;
  };
  const auto u = ubvi::importance_estimates(shifted, std::nullopt, gauss_q(0, 1), phi, n, 5);
  EXPECT_TRUE(std::isnan(u.i_n));
  EXPECT_NEAR(u.j_n, e.j_n, 1e-12);
}

TEST(Importance, AllZeroWeightsThrow) {
  const ubvi::PointLogDensity zero = [](const Eigen::Ref<const Eigen::VectorXd>&) { return -INFINITY; };
  const ubvi::PointLogDensity phi = [](const Eigen::Ref<const Eigen::VectorXd>& x) { return x(0); };
  EXPECT_THROW(ubvi::importance_estimates(zero, std::nullopt, gauss_q(0, 1), phi, 100, 1), std::runtime_error);
}

TEST(Importance, EssAndAlphaRanges) {
  const ubvi::PointLogDensity phi = [](const Eigen::Ref<const Eigen::VectorXd>& x) { return x(0); };
  const auto e = ubvi::importance_estimates(gauss_log(0, 1), 0.0, gauss_q(2, 3), phi, 5000, 6);
  EXPECT_GT(e.ess, 0.0);
  EXPECT_LT(e.ess, 1.0);
  const double h = std::sqrt(oracle_h2({0, 1, 2, 3}));
  EXPECT_NEAR(e.alpha, std::pow(std::pow(5000.0, -0.25) + 2 * std::sqrt(h), 2), 0.05);
}

// Known normalization: mean |I_n(phi) - I(phi)| <= ||sqrt(p) phi||_2 alpha.
TEST(Importance, KnownNormalizationErrorBound) {
  const ubvi::PointLogDensity phi = [](const Eigen::Ref<const Eigen::VectorXd>& x) { return x(0); };
  for (const auto& p : std::vector<Pair1d>{{0, 1, 0.5, 1.5}, {0, 1, -1, 0.7}, {0, 1, 0, 4}}) {
    const double h = std::sqrt(oracle_h2(p));
    const int n = 1000, reps = 200;
    const double alpha = std::pow(std::pow(double(n), -0.25) + 2 * std::sqrt(h), 2);
    const double norm = 1.0;  // E_p[x^2] for p = N(0,1)
    double err = 0.0;
    for (int r = 0; r < reps; ++r) {
      err += std::abs(ubvi::importance_estimates(gauss_log(p.m1, p.v1), 0.0, gauss_q(p.m2, p.v2), phi, n, 50 + r).i_n) /
             reps;
    }
    EXPECT_LE(err, norm * alpha);
  }
}

// On a correlated Gaussian, reweighting the Hellinger fit's draws recovers the
// covariance better than the fit alone.
TEST(Importance, ReweightingImprovesCovariance) {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.9, 0.9, 1.0;
  const auto t = ubvi::make_gaussian(Eigen::Vector2d::Zero(), cov);
  ubvi::UbviConfig cfg;
  cfg.n_components = 1;
  const auto fit = ubvi::run_ubvi(t, cfg);
  const auto q = ubvi::as_sampled(fit.mixture);
  const auto lp = ubvi::unnormalized(t);
  Eigen::Matrix2d is_cov, plain_cov;
  const Eigen::Index n = 100000;
  const ubvi::Samples x = q.sample(77, n);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const ubvi::PointLogDensity phi = [i, j](const Eigen::Ref<const Eigen::VectorXd>& v) { return v(i) * v(j); };
      is_cov(i, j) = ubvi::importance_estimates(lp, std::nullopt, q, phi, n, 77).j_n;
      plain_cov(i, j) = (x.row(i).array() * x.row(j).array()).mean();
    }
  }
  EXPECT_LT((is_cov - cov).norm(), (plain_cov - cov).norm());
}

TEST(Kl, ExactMatchAndClosedForm) {
  EXPECT_NEAR(ubvi::forward_kl(gauss_q(0, 1), gauss_log(0, 1), 1000, 1).value, 0.0, 1e-12);
  const double exact = 0.5 * (0.25 - 1 + std::log(4.0));
  EXPECT_NEAR(exact, 0.3181, 1e-4);
  const auto f = ubvi::forward_kl(gauss_q(0, 1), gauss_log(0, 4), 100000, 2);
  EXPECT_NEAR(f.value, exact, 3 * f.stderr_value);
  // KL(N(0,4) || N(0,1)) = 1/2 (4 - 1 - log 4)
  const auto r = ubvi::reverse_kl(gauss_q(0, 4), gauss_log(0, 1), 100000, 3);
  EXPECT_NEAR(r.value, 0.5 * (3 - std::log(4.0)), 3 * r.stderr_value);
}

// KL(p || q) <= 2 H sqrt(1 + E_p[1{R > 0} (1 + R)^2]) with R = log p/q.
TEST(Kl, BoundedByHellingerTerm) {
  for (const auto& p : random_pairs(11, 50)) {
    const double kl = 0.5 * (p.v1 / p.v2 + (p.m1 - p.m2) * (p.m1 - p.m2) / p.v2 - 1 + std::log(p.v2 / p.v1));
    const double h = std::sqrt(oracle_h2(p));
    const double lo = p.m1 - 15 * std::sqrt(p.v1), hi = p.m1 + 15 * std::sqrt(p.v1);
    const double tail = oracle::simpson(
        [&](double x) {
          const double r = oracle::normal_log_pdf(x, p.m1, p.v1) - oracle::normal_log_pdf(x, p.m2, p.v2);
          return r > 0 ? oracle::normal_pdf(x, p.m1, p.v1) * (1 + r) * (1 + r) : 0.0;
        },
        lo, hi, 40000);
    EXPECT_LE(kl, 2 * h * std::sqrt(1 + tail));
  }
}

TEST(Tv, UnitShiftExampleAndSandwich) {
  const ubvi::QuadGrid grid{{ubvi::uniform_nodes(-30, 30, 60001)}};
  const double tv = ubvi::tv_quadrature(gauss_log(0, 1), gauss_log(1, 1), grid);
  EXPECT_NEAR(tv, 2 * oracle::normal_cdf(0.5, 0, 1) - 1, 1e-6);
  EXPECT_NEAR(tv, 0.38292, 1e-5);
  const double h2 = 1 - std::exp(-0.125);
  EXPECT_LE(h2, tv);
  EXPECT_LE(tv, std::sqrt(h2 * (2 - h2)));
  for (const auto& p : random_pairs(12, 100)) {
    const double lo = std::min(p.m1 - 15 * std::sqrt(p.v1), p.m2 - 15 * std::sqrt(p.v2));
    const double hi = std::max(p.m1 + 15 * std::sqrt(p.v1), p.m2 + 15 * std::sqrt(p.v2));
    const ubvi::QuadGrid g{{ubvi::uniform_nodes(lo, hi, 200001)}};
    const double t = ubvi::tv_quadrature(gauss_log(p.m1, p.v1), gauss_log(p.m2, p.v2), g);
    const double s = oracle_h2(p);
    EXPECT_LE(s, t + 1e-6);
    EXPECT_LE(t, std::sqrt(s * (2 - s)) + 1e-6);
  }
}

TEST(Wasserstein, ShiftExactForEqualSizes) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> a(1000), b(1000);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = z(rng), b[i] = a[i] + 2.5;
  EXPECT_NEAR(ubvi::wasserstein1_1d(a, b), 2.5, 1e-12);
  EXPECT_THROW(ubvi::wasserstein1_1d({}, b), std::invalid_argument);
}

TEST(Wasserstein, UnequalSizesMatchCdfIntegral) {
  const std::vector<double> a{0.0, 1.0, 3.0};
  const std::vector<double> b{0.5, 2.0};
  // int |F_a - F_b| over breakpoints 0, .5, 1, 2, 3
  const double expected = 0.5 * (1.0 / 3) + 0.5 * (1.0 / 2 - 1.0 / 3) + 1.0 * (2.0 / 3 - 1.0 / 2) + 1.0 * (1.0 - 2.0 / 3);
  EXPECT_NEAR(ubvi::wasserstein1_1d(a, b), expected, 1e-12);
  EXPECT_NEAR(ubvi::wasserstein1_1d(a, b), ubvi::wasserstein1_1d(b, a), 1e-12);
}

// W1 <= 2 sqrt(H) (E X^2 + E Y^2)^{1/2} with W1 = int |F - G| by quadrature.
TEST(Wasserstein, BoundedByHellinger) {
  for (const auto& p : random_pairs(13, 50)) {
    const double lo = std::min(p.m1 - 15 * std::sqrt(p.v1), p.m2 - 15 * std::sqrt(p.v2));
    const double hi = std::max(p.m1 + 15 * std::sqrt(p.v1), p.m2 + 15 * std::sqrt(p.v2));
    const double w1 = oracle::simpson(
        [&](double x) { return std::abs(oracle::normal_cdf(x, p.m1, p.v1) - oracle::normal_cdf(x, p.m2, p.v2)); }, lo,
        hi, 40000);
    const double h = std::sqrt(oracle_h2(p));
    EXPECT_LE(w1, 2 * std::sqrt(h) * std::sqrt(p.m1 * p.m1 + p.v1 + p.m2 * p.m2 + p.v2));
  }
  // Sample version converges to the quadrature value.
  auto rng = ubvi::make_rng(5);
  const ubvi::Samples x = ubvi::standard_normal(rng, 1, 200000);
  const ubvi::Samples y = (2.0 * ubvi::standard_normal(rng, 1, 150000)).array() + 1.0;
  const double w1 = oracle::simpson(
      [](double v) { return std::abs(oracle::normal_cdf(v, 0, 1) - oracle::normal_cdf(v, 1, 4)); }, -40, 40, 40000);
  EXPECT_NEAR(ubvi::wasserstein1_1d({x.data(), x.data() + x.size()}, {y.data(), y.data() + y.size()}), w1, 0.02);
}

TEST(Energy, IdenticalSetsAndClosedForm) {
  auto rng = ubvi::make_rng(6);
  const ubvi::Samples x = ubvi::standard_normal(rng, 1, 2000);
  EXPECT_EQ(ubvi::energy_distance(x, x), 0.0);
  const ubvi::Samples y = ubvi::standard_normal(rng, 1, 2000).array() + 1.0;
  const double exact = 2 * mean_abs_normal(-1, 2) - 2 * mean_abs_normal(0, 2);
  const double e = ubvi::energy_distance(x, y);
  EXPECT_NEAR(e, exact, 0.03);
  EXPECT_NEAR(ubvi::energy_distance(y, x), e, 1e-12);
  EXPECT_THROW(ubvi::energy_distance(x, ubvi::Samples::Zero(2, 3)), std::invalid_argument);
}

TEST(ReferenceSampler, StandardNormalMoments) {
  const auto t = ubvi::make_gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const auto r = ubvi::reference_sampler(t, 100000, 1);
  std::vector<double> xs(r.samples.data(), r.samples.data() + r.samples.size());
  EXPECT_NEAR(oracle::mean(xs), 0.0, 0.02);
  EXPECT_NEAR(oracle::variance(xs), 1.0, 0.05);
  EXPECT_FALSE(r.warning);
  EXPECT_GT(r.acceptance, 0.15);
  EXPECT_LT(r.acceptance, 0.35);
}

// Var(x2) is 201 here, so the tolerance follows the chain's batch-means error.
TEST(ReferenceSampler, BananaSecondCoordinateMean) {
  const auto r = ubvi::reference_sampler(ubvi::make_banana(), 100000, 2);
  std::vector<double> x2(r.samples.cols());
  for (Eigen::Index s = 0; s < r.samples.cols(); ++s) x2[s] = r.samples(1, s);
  const double se = oracle::batch_means_se(x2);
  std::cout << "banana E[x2] " << oracle::mean(x2) << " batch-means se " << se << '\n';
  EXPECT_NEAR(oracle::mean(x2), 0.0, 4 * se);
  EXPECT_LT(se, 1.0);
}

TEST(ReferenceSampler, DeterministicAndFlagsPoorAcceptance) {
  const auto t = ubvi::make_cauchy();
  const auto a = ubvi::reference_sampler(t, 2000, 3);
  const auto b = ubvi::reference_sampler(t, 2000, 3);
  EXPECT_TRUE(a.samples == b.samples);
  ubvi::ReferenceSamplerOptions opt;
  opt.target_acceptance = 0.95;
  EXPECT_TRUE(ubvi::reference_sampler(ubvi::make_gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)),
                                      2000, 3, opt)
                  .warning);
}

}  // namespace
