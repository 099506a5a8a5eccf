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

#ifndef UBVI_EXPFAM_HPP
#define UBVI_EXPFAM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "ubvi/random.hpp"

namespace ubvi {

/// Diagonal Gaussian component h with h^2 = N(mean, diag(exp(log_var))).
///
/// The square root of a density is what lives in L2; every routine below
/// works with log h = 0.5 * log N(x; mean, var) to stay finite in the tails.
struct GaussComponent {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_var;

  GaussComponent() = default;
  GaussComponent(Eigen::VectorXd m, Eigen::VectorXd lv) : mean(std::move(m)), log_var(std::move(lv)) {
    if (mean.size() != log_var.size()) {
      throw std::invalid_argument("GaussComponent: mean and log_var sizes differ");
    }
  }

  static GaussComponent standard(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  }

  /// 1-D convenience constructor from mean and variance.
  static GaussComponent univariate(double mean, double variance) {
    return {Eigen::VectorXd::Constant(1, mean), Eigen::VectorXd::Constant(1, std::log(variance))};
  }

  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd variance() const { return log_var.array().exp().matrix(); }
  Eigen::VectorXd stddev() const { return (0.5 * log_var.array()).exp().matrix(); }

  /// Flattened optimization parameters [mean; log_var].
  Eigen::VectorXd params() const {
    Eigen::VectorXd p(2 * dim());
    p << mean, log_var;
    return p;
  }

  static GaussComponent from_params(const Eigen::VectorXd& p) {
    const auto d = p.size() / 2;
    return {p.head(d), p.tail(d)};
  }

  bool finite() const { return mean.allFinite() && log_var.allFinite(); }
};

/// Natural parameters of h^2 per coordinate: eta1 = mu / s2, eta2 = -1 / (2 s2).
struct NaturalParams {
  Eigen::VectorXd eta1;
  Eigen::VectorXd eta2;
};

inline NaturalParams to_natural(const GaussComponent& c) {
  const Eigen::ArrayXd prec = (-c.log_var.array()).exp();
  return {(c.mean.array() * prec).matrix(), (-0.5 * prec).matrix()};
}

inline GaussComponent from_natural(const NaturalParams& n) {
  const Eigen::ArrayXd var = -0.5 / n.eta2.array();
  return {(n.eta1.array() * var).matrix(), var.log().matrix()};
}

/// Log-partition A(eta) with Lebesgue base measure and T(x) = (x, x^2).
inline double log_partition(const NaturalParams& n) {
  const Eigen::ArrayXd e1 = n.eta1.array();
  const Eigen::ArrayXd e2 = n.eta2.array();
  return (0.5 * (std::numbers::pi / (-e2)).log() - e1.square() / (4.0 * e2)).sum();
}

inline double log_h(const GaussComponent& c, const double* x) {
  constexpr double log2pi = 1.8378770664093453;
  double acc = 0.0;
  for (int d = 0; d < c.dim(); ++d) {
    const double diff = x[d] - c.mean(d);
    acc += -0.5 * log2pi - 0.5 * c.log_var(d) - 0.5 * diff * diff * std::exp(-c.log_var(d));
  }
  return 0.5 * acc;
}

inline double log_h(const GaussComponent& c, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return log_h(c, x.data());
}

/// Full log density of the component, 2 * log_h.
inline double log_density(const GaussComponent& c, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return 2.0 * log_h(c, x.data());
}

/// log <a, b> = A((eta_a + eta_b)/2) - (A(eta_a) + A(eta_b))/2.
inline double log_affinity(const GaussComponent& a, const GaussComponent& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("affinity: dimension mismatch");
  const auto na = to_natural(a);
  const auto nb = to_natural(b);
  const NaturalParams mid{0.5 * (na.eta1 + nb.eta1), 0.5 * (na.eta2 + nb.eta2)};
  const double v = log_partition(mid) - 0.5 * (log_partition(na) + log_partition(nb));
  return std::min(v, 0.0);
}

inline double affinity(const GaussComponent& a, const GaussComponent& b) {
  return std::exp(log_affinity(a, b));
}

/// Gradient of <a, b> with respect to b's [mean; log_var], in closed form.
inline Eigen::VectorXd affinity_gradient(const GaussComponent& a, const GaussComponent& b) {
  const int dim = a.dim();
  const double z = affinity(a, b);
  Eigen::VectorXd g(2 * dim);
  for (int d = 0; d < dim; ++d) {
    const double va = std::exp(a.log_var(d));
    const double vb = std::exp(b.log_var(d));
    const double s = va + vb;
    const double delta = a.mean(d) - b.mean(d);
    g(d) = z * delta / (2.0 * s);
    g(dim + d) = z * (0.25 - 0.5 * vb / s + delta * delta * vb / (4.0 * s * s));
  }
  return g;
}

/// The family member whose square is g_a g_b / <g_a, g_b>: average of natural parameters.
inline GaussComponent product_component(const GaussComponent& a, const GaussComponent& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("product_component: dimension mismatch");
  const auto na = to_natural(a);
  const auto nb = to_natural(b);
  return from_natural({0.5 * (na.eta1 + nb.eta1), 0.5 * (na.eta2 + nb.eta2)});
}

/// n iid draws from h^2, one per column.
inline Samples sample_sq(const GaussComponent& c, std::uint64_t seed, Eigen::Index n) {
  auto rng = make_rng(seed);
  Samples z = standard_normal(rng, c.dim(), n);
  const Eigen::ArrayXd sd = c.stddev().array();
  for (Eigen::Index j = 0; j < n; ++j) {
    z.col(j) = (c.mean.array() + sd * z.col(j).array()).matrix();
  }
  return z;
}

/// Partials of log_h(c, x) with respect to [mean; log_var].
inline Eigen::VectorXd grad_log_h(const GaussComponent& c, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const int dim = c.dim();
  Eigen::VectorXd g(2 * dim);
  for (int d = 0; d < dim; ++d) {
    const double inv_var = std::exp(-c.log_var(d));
    const double diff = x(d) - c.mean(d);
    g(d) = 0.5 * diff * inv_var;
    g(dim + d) = -0.25 + 0.25 * diff * diff * inv_var;
  }
  return g;
}

}  // namespace ubvi

#endif  // UBVI_EXPFAM_HPP
