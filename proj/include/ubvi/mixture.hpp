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

#ifndef UBVI_MIXTURE_HPP
#define UBVI_MIXTURE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ubvi/expfam.hpp"
#include "ubvi/linalg.hpp"
#include "ubvi/random.hpp"

namespace ubvi {

/// Conic combination g = sum_i lambda_i g_i of unit-norm components, whose
/// square q = g^2 is a mixture density when lambda^T Z lambda = 1.
///
/// Z_ij = <g_i, g_j> is kept together with its inverse, grown by one
/// bordered block per added component.
class SqrtMixture {
 public:
  explicit SqrtMixture(int dim = 1) : dim_(dim) {}

  /// Rebuilds a mixture from components and weights; Z is recomputed from closed-form affinities.
  static SqrtMixture from_parts(const std::vector<GaussComponent>& comps, const Eigen::VectorXd& weights) {
    if (comps.empty()) throw std::invalid_argument("SqrtMixture::from_parts: no components");
    if (static_cast<Eigen::Index>(comps.size()) != weights.size()) {
      throw std::invalid_argument("SqrtMixture::from_parts: weight count mismatch");
    }
    SqrtMixture m(comps.front().dim());
    for (const auto& c : comps) m = m.extend(c);
    return m.with_weights(weights);
  }

  int dim() const { return dim_; }
  std::size_t size() const { return comps_.size(); }
  bool empty() const { return comps_.empty(); }
  const std::vector<GaussComponent>& components() const { return comps_; }
  const Eigen::VectorXd& weights() const { return lambda_; }
  const Eigen::MatrixXd& affinity_matrix() const { return z_; }
  const Eigen::MatrixXd& affinity_inverse() const { return z_inv_; }

  /// Set by extend() when the new component nearly duplicates an existing one.
  bool near_singular() const { return near_singular_; }

  /// Adds a component with weight 0, growing Z and its inverse.
  SqrtMixture extend(const GaussComponent& g) const {
    if (g.dim() != dim_) throw std::invalid_argument("SqrtMixture::extend: dimension mismatch");
    SqrtMixture out = *this;
    const auto n = static_cast<Eigen::Index>(comps_.size());
    Eigen::VectorXd col(n);
    double max_aff = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      col(i) = affinity(comps_[static_cast<std::size_t>(i)], g);
      max_aff = std::max(max_aff, col(i));
    }
    out.comps_.push_back(g);
    out.z_.conservativeResize(n + 1, n + 1);
    out.z_.topRightCorner(n, 1) = col;
    out.z_.bottomLeftCorner(1, n) = col.transpose();
    out.z_(n, n) = 1.0;
    out.lambda_.conservativeResize(n + 1);
    out.lambda_(n) = 0.0;
    out.near_singular_ = max_aff > 1.0 - 1e-12;

    auto ext = n == 0 ? std::optional<Eigen::MatrixXd>(Eigen::MatrixXd::Ones(1, 1))
                      : block_inverse_extend(z_inv_, col, 1.0);
    if (!ext) {
      out.near_singular_ = true;
      out.z_inv_ = spd_inverse(out.z_ + 1e-10 * Eigen::MatrixXd::Identity(n + 1, n + 1));
    } else {
      out.z_inv_ = std::move(*ext);
    }
    return out;
  }

  SqrtMixture with_weights(const Eigen::VectorXd& lambda) const {
    if (lambda.size() != static_cast<Eigen::Index>(comps_.size())) {
      throw std::invalid_argument("SqrtMixture::with_weights: size mismatch");
    }
    if ((lambda.array() < 0).any()) throw std::invalid_argument("SqrtMixture::with_weights: negative weight");
    SqrtMixture out = *this;
    out.lambda_ = lambda;
    return out;
  }

  /// ||g||^2 = lambda^T Z lambda.
  double norm_sq() const { return lambda_.dot(z_ * lambda_); }

  /// log q(x) = 2 log sum_i lambda_i h_i(x).
  double log_q(const double* x) const {
    if (comps_.empty()) throw std::logic_error("SqrtMixture::log_q: empty mixture");
    double m = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.assign(comps_.size(), m);
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      if (lambda_(static_cast<Eigen::Index>(i)) <= 0) continue;
      terms[i] = std::log(lambda_(static_cast<Eigen::Index>(i))) + log_h(comps_[i], x);
      m = std::max(m, terms[i]);
    }
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - m);
    return 2.0 * (m + std::log(acc));
  }

  double log_q(const Eigen::Ref<const Eigen::VectorXd>& x) const { return log_q(x.data()); }

  /// <g, h> = sum_i lambda_i <g_i, h>.
  double inner_with(const GaussComponent& h) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      const double l = lambda_(static_cast<Eigen::Index>(i));
      if (l > 0) acc += l * affinity(comps_[i], h);
    }
    return acc;
  }

  /// Gradient of <g, h> with respect to h's [mean; log_var].
  Eigen::VectorXd inner_with_gradient(const GaussComponent& h) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * h.dim());
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      const double l = lambda_(static_cast<Eigen::Index>(i));
      if (l > 0) g += l * affinity_gradient(comps_[i], h);
    }
    return g;
  }

  /// Probability lambda_i lambda_j Z_ij of drawing from the (i, j) product component.
  Eigen::MatrixXd pair_probabilities() const {
    Eigen::MatrixXd p = (lambda_ * lambda_.transpose()).cwiseProduct(z_);
    return p / p.sum();
  }

  /// Picks a pair (i, j) with probability lambda_i lambda_j Z_ij.
  std::pair<std::size_t, std::size_t> sample_pair(Rng& rng) const {
    const Eigen::MatrixXd p = pair_probabilities();
    std::discrete_distribution<std::size_t> pick(p.data(), p.data() + p.size());
    const std::size_t k = pick(rng);
    const auto n = comps_.size();
    return {k % n, k / n};
  }

  /// iid draws from q: choose a pair, then sample its normalized product component.
  Samples sample(std::uint64_t seed, Eigen::Index n) const {
    if (comps_.empty()) throw std::logic_error("SqrtMixture::sample: empty mixture");
    const auto k = comps_.size();
    std::vector<GaussComponent> prods(k * k);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < k; ++i) prods[i + k * j] = product_component(comps_[i], comps_[j]);
    }
    const Eigen::MatrixXd p = pair_probabilities();
    auto rng = make_rng(seed);
    std::discrete_distribution<std::size_t> pick(p.data(), p.data() + p.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    Samples out(dim_, n);
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto& c = prods[pick(rng)];
      for (int d = 0; d < dim_; ++d) {
        out(d, s) = c.mean(d) + std::exp(0.5 * c.log_var(d)) * normal(rng);
      }
    }
    return out;
  }

 private:
  int dim_;
  std::vector<GaussComponent> comps_;
  Eigen::VectorXd lambda_;
  Eigen::MatrixXd z_;
  Eigen::MatrixXd z_inv_;
  bool near_singular_ = false;
};

/// Exact Hellinger distance between the densities of two unit-norm square-root mixtures.
inline double hellinger_to(const SqrtMixture& a, const SqrtMixture& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("hellinger_to: dimension mismatch");
  double aff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      aff += a.weights()(static_cast<Eigen::Index>(i)) * b.weights()(static_cast<Eigen::Index>(j)) *
             affinity(a.components()[i], b.components()[j]);
    }
  }
  return std::sqrt(std::max(0.0, 1.0 - aff));
}

}  // namespace ubvi

#endif  // UBVI_MIXTURE_HPP
