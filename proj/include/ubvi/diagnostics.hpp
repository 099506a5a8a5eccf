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

#ifndef UBVI_DIAGNOSTICS_HPP
#define UBVI_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "ubvi/expfam.hpp"
#include "ubvi/mixture.hpp"
#include "ubvi/quadrature.hpp"
#include "ubvi/random.hpp"
#include "ubvi/targets.hpp"

namespace ubvi {

/// Log density evaluated at a point given as a column of a sample matrix.
using PointLogDensity = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

/// A density we can both sample from and evaluate (normalized).
struct SampledDensity {
  std::function<Samples(std::uint64_t, Eigen::Index)> sample;
  PointLogDensity log_density;
};

inline SampledDensity as_sampled(const SqrtMixture& m) {
  return {[m](std::uint64_t seed, Eigen::Index n) { return m.sample(seed, n); },
          [m](const Eigen::Ref<const Eigen::VectorXd>& x) { return m.log_q(x); }};
}

inline SampledDensity as_sampled(const GaussComponent& c) {
  return {[c](std::uint64_t seed, Eigen::Index n) { return sample_sq(c, seed, n); },
          [c](const Eigen::Ref<const Eigen::VectorXd>& x) { return log_density(c, x); }};
}

/// Unnormalized log density of a target as a PointLogDensity.
inline PointLogDensity unnormalized(const TargetDensity& t) {
  return [t](const Eigen::Ref<const Eigen::VectorXd>& x) { return t.log_p_at(x); };
}

/// Normalized log density; throws if the target's normalization is unknown.
inline PointLogDensity normalized(const TargetDensity& t) {
  if (!t.log_norm) throw std::logic_error(t.name + ": normalization constant unknown");
  const double c = *t.log_norm;
  return [t, c](const Eigen::Ref<const Eigen::VectorXd>& x) { return t.log_p_at(x) - c; };
}

struct HellEstimate {
  double hat = std::numeric_limits<double>::quiet_NaN();
  double tilde = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index n_samples = 0;
  double stderr_hat = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline Eigen::VectorXd log_ratios(const PointLogDensity& log_p, const PointLogDensity& log_q, const Samples& x) {
  Eigen::VectorXd r(x.cols());
  for (Eigen::Index s = 0; s < x.cols(); ++s) r(s) = log_p(x.col(s)) - log_q(x.col(s));
  return r;
}

inline double tilde_from_ratios(const Eigen::VectorXd& r) {
  const double m = r.maxCoeff();
  const double num = ((r.array() - m) * 0.5).exp().mean();
  const double den = std::sqrt((r.array() - m).exp().mean());
  return 1.0 - num / den;
}

}  // namespace detail

/// Squared Hellinger estimate 1 - mean sqrt(p/q) with X ~ q; p must be normalized.
inline HellEstimate hellinger_hat(const PointLogDensity& log_p_normalized, const SampledDensity& q, Eigen::Index n,
                                  std::uint64_t seed) {
  const Samples x = q.sample(seed, n);
  const Eigen::VectorXd r = detail::log_ratios(log_p_normalized, q.log_density, x);
  const Eigen::ArrayXd root = (0.5 * r.array()).exp();
  HellEstimate e;
  e.n_samples = n;
  e.hat = 1.0 - root.mean();
  e.stderr_hat = n > 1 ? std::sqrt((root - root.mean()).square().sum() / static_cast<double>(n - 1) / n) : 0.0;
  e.tilde = detail::tilde_from_ratios(r);
  return e;
}

/// Self-normalized squared Hellinger estimate; p may carry any positive scale.
inline double hellinger_tilde(const PointLogDensity& log_p_unnormalized, const SampledDensity& q, Eigen::Index n,
                              std::uint64_t seed) {
  const Samples x = q.sample(seed, n);
  return detail::tilde_from_ratios(detail::log_ratios(log_p_unnormalized, q.log_density, x));
}

struct ISEstimate {
  double i_n = std::numeric_limits<double>::quiet_NaN();  // requires normalized p
  double j_n = std::numeric_limits<double>::quiet_NaN();
  double ess = 0.0;    // (sum w)^2 / (N sum w^2), in (0, 1]
  double alpha = 0.0;  // (N^{-1/4} + 2 sqrt(H))^2 with H from the self-normalized estimate
};

/// Importance sampling with X ~ q. If `log_norm` is given, p is normalized by it and I_n is reported.
inline ISEstimate importance_estimates(const PointLogDensity& log_p, std::optional<double> log_norm,
                                       const SampledDensity& q, const PointLogDensity& phi,
                                       Eigen::Index n, std::uint64_t seed) {
  const Samples x = q.sample(seed, n);
  const Eigen::VectorXd r = detail::log_ratios(log_p, q.log_density, x);
  const double m = r.maxCoeff();
  if (!std::isfinite(m)) throw std::runtime_error("importance_estimates: all importance weights are zero");
  const Eigen::ArrayXd w = (r.array() - m).exp();
  Eigen::ArrayXd vals(n);
  for (Eigen::Index s = 0; s < n; ++s) vals(s) = phi(x.col(s));
  ISEstimate e;
  e.j_n = (w * vals).sum() / w.sum();
  if (log_norm) e.i_n = std::exp(m - *log_norm) * (w * vals).mean();
  e.ess = w.sum() * w.sum() / (static_cast<double>(n) * w.square().sum());
  const double h = std::sqrt(std::max(0.0, detail::tilde_from_ratios(r)));
  const double a = std::pow(static_cast<double>(n), -0.25) + 2.0 * std::sqrt(h);
  e.alpha = a * a;
  return e;
}

struct KLEstimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double stderr_value = std::numeric_limits<double>::quiet_NaN();
};

/// Monte Carlo KL(p || q) = E_p[log p - log q] with X ~ p; both densities normalized.
inline KLEstimate kl_from_samples(const Samples& x_from_p, const PointLogDensity& log_p, const PointLogDensity& log_q) {
  const Eigen::VectorXd r = detail::log_ratios(log_p, log_q, x_from_p);
  const double n = static_cast<double>(r.size());
  KLEstimate e;
  e.value = r.mean();
  e.stderr_value = r.size() > 1 ? std::sqrt((r.array() - e.value).square().sum() / (n - 1) / n) : 0.0;
  return e;
}

inline KLEstimate forward_kl(const SampledDensity& p, const PointLogDensity& log_q, Eigen::Index n,
                             std::uint64_t seed) {
  return kl_from_samples(p.sample(seed, n), p.log_density, log_q);
}

inline KLEstimate reverse_kl(const SampledDensity& q, const PointLogDensity& log_p, Eigen::Index n,
                             std::uint64_t seed) {
  return kl_from_samples(q.sample(seed, n), q.log_density, log_p);
}

/// TV = 1/2 int |p - q| by trapezoid quadrature; both log densities normalized.
inline double tv_quadrature(const PointLogDensity& log_p, const PointLogDensity& log_q, const QuadGrid& grid) {
  return 0.5 * grid.integrate([&](const Eigen::VectorXd& x) { return std::abs(std::exp(log_p(x)) - std::exp(log_q(x))); });
}

/// 1-D Wasserstein-1 between empirical measures: integral of |F - G|.
inline double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  double acc = 0.0;
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    while (ia < a.size() && a[ia] <= all[k]) ++ia;
    while (ib < b.size() && b[ib] <= all[k]) ++ib;
    const double fa = static_cast<double>(ia) / static_cast<double>(a.size());
    const double fb = static_cast<double>(ib) / static_cast<double>(b.size());
    acc += std::abs(fa - fb) * (all[k + 1] - all[k]);
  }
  return acc;
}

/// Energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'| with all-pairs means,
/// so identical sample sets give exactly 0.
inline double energy_distance(const Samples& x, const Samples& y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("energy_distance: dimension mismatch");
  auto mean_dist = [](const Samples& a, const Samples& b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) acc += (a.col(i) - b.col(j)).norm();
    }
    return acc / (static_cast<double>(a.cols()) * static_cast<double>(b.cols()));
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

struct ReferenceSamplerOptions {
  int burn_in = 10000;
  int thin = 10;
  double target_acceptance = 0.234;
};

struct ReferenceSamples {
  Samples samples;
  double acceptance = 0.0;
  bool warning = false;  // acceptance outside [0.05, 0.6] after adaptation
};

/// Adaptive random-walk Metropolis. The proposal scale is tuned toward the target
/// acceptance rate and per-coordinate spreads are learned during burn-in only.
inline ReferenceSamples reference_sampler(const TargetDensity& target, Eigen::Index n, std::uint64_t seed,
                                          const ReferenceSamplerOptions& opt = {},
                                          std::optional<Eigen::VectorXd> init = std::nullopt) {
  const int dim = target.dim;
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x = init ? *init : Eigen::VectorXd::Zero(dim);
  double lp = target.log_p_at(x);
  double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
  Eigen::VectorXd sd = Eigen::VectorXd::Ones(dim);
  Eigen::VectorXd mean = x;
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd prop(dim);

  auto step = [&]() {
    for (int d = 0; d < dim; ++d) prop(d) = x(d) + std::exp(log_scale) * sd(d) * normal(rng);
    const double lp_prop = target.log_p_at(prop);
    const bool accept = std::log(uniform01(rng)) < lp_prop - lp;
    if (accept) {
      x = prop;
      lp = lp_prop;
    }
    return accept;
  };

  for (int i = 0; i < opt.burn_in; ++i) {
    const bool acc = step();
    log_scale += ((acc ? 1.0 : 0.0) - opt.target_acceptance) / std::pow(1.0 + i, 0.6);
    const Eigen::VectorXd delta = x - mean;
    mean += delta / (i + 2.0);
    m2 += delta.cwiseProduct(x - mean);
    if (i >= 500 && i % 100 == 0) {
      sd = (m2 / (i + 1.0)).cwiseSqrt().cwiseMax(1e-6);
    }
  }

  ReferenceSamples out;
  out.samples.resize(dim, n);
  long accepted = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int t = 0; t < opt.thin; ++t) accepted += step() ? 1 : 0;
    out.samples.col(s) = x;
  }
  out.acceptance = static_cast<double>(accepted) / (static_cast<double>(n) * opt.thin);
  out.warning = out.acceptance < 0.05 || out.acceptance > 0.6;
  return out;
}

}  // namespace ubvi

#endif  // UBVI_DIAGNOSTICS_HPP
