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

#ifndef UBVI_UBVI_HPP
#define UBVI_UBVI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ubvi/diagnostics.hpp"
#include "ubvi/expfam.hpp"
#include "ubvi/linalg.hpp"
#include "ubvi/mixture.hpp"
#include "ubvi/random.hpp"
#include "ubvi/stochopt.hpp"
#include "ubvi/targets.hpp"
#include "ubvi/trace.hpp"

namespace ubvi {

struct UbviConfig {
  int n_components = 10;
  int init_trials = 10000;
  int init_score_samples = 100;
  int est_samples = 10000;  // draws for each cached <f, g_n>
  AdamConfig adam;          // adam.grad_samples draws per gradient step
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> anchor;  // first-component initialization center
  bool use_nnls = true;                   // false: geodesic line search instead of fully-corrective weights
  int j1_samples = 10000;

  void validate() const {
    adam.validate();
    if (n_components < 1) throw std::invalid_argument("UbviConfig: n_components must be >= 1");
    if (init_trials < 1 || init_score_samples < 1) throw std::invalid_argument("UbviConfig: init budgets must be >= 1");
    if (est_samples < adam.grad_samples) {
      throw std::invalid_argument("UbviConfig: est_samples must be >= grad_samples");
    }
    if (j1_samples < 1) throw std::invalid_argument("UbviConfig: j1_samples must be >= 1");
  }
};

/// Called after each boosting iteration with the record and the current
/// approximation. Time spent inside is not charged to the algorithm.
using IterationObserver = std::function<void(IterationRecord&, const SampledDensity&)>;

/// What the greedy step needs from the previous iterations.
///
/// All <f, .> estimates are divided by exp(log_scale), fixed after the first
/// component, so the unknown normalization of p never enters the arithmetic
/// at large magnitude.
struct GreedyState {
  SqrtMixture mixture;
  double f_dot_bg = 0.0;  // lambda^T d
  double log_scale = 0.0;
};

struct GreedyEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  double log_f_dot_h = -std::numeric_limits<double>::infinity();  // unscaled log <f, h> estimate
  double rel_stderr = 0.0;
};

/// log sqrt(p) and its gradient, as the integrand of <f, h>.
inline LogIntegrandFn sqrt_target(const TargetDensity& target) {
  return [&target](std::span<const double> x, std::span<double> g) {
    const double lp = target.log_p_grad(x, g);
    for (double& gi : g) gi *= 0.5;
    return 0.5 * lp;
  };
}

/// Residual alignment [<f,h> - <f,bg><bg,h>] / sqrt(1 - <bg,h>^2) and its gradient,
/// with <f,h> estimated from the standard-normal draws z.
inline GreedyEval greedy_objective(const TargetDensity& target, const GreedyState& st, const GaussComponent& h,
                                   const Samples& z) {
  const auto ip = reparam_inner_product(h, sqrt_target(target), z);
  GreedyEval e;
  e.log_f_dot_h = ip.log_value;
  e.rel_stderr = ip.rel_stderr;
  const double f = ip.value(st.log_scale);
  const Eigen::VectorXd grad_f = f * ip.grad_ratio;
  if (st.mixture.empty()) {
    e.value = f;
    e.grad = grad_f;
    return e;
  }
  const double b = st.mixture.inner_with(h);
  if (b * b >= 1.0 - 1e-10) {
    // h has collapsed onto the current approximation
    e.value = -std::numeric_limits<double>::infinity();
    e.grad = Eigen::VectorXd::Constant(h.params().size(), std::numeric_limits<double>::quiet_NaN());
    return e;
  }
  const Eigen::VectorXd grad_b = st.mixture.inner_with_gradient(h);
  const double den = std::sqrt(1.0 - b * b);
  const double num = f - st.f_dot_bg * b;
  e.value = num / den;
  e.grad = (grad_f - st.f_dot_bg * grad_b) / den + (num * b / (den * den * den)) * grad_b;
  return e;
}

inline GreedyEval greedy_objective(const TargetDensity& target, const GreedyState& st, const GaussComponent& h,
                                   std::uint64_t seed, Eigen::Index n_samples) {
  if (n_samples < 1) throw std::invalid_argument("greedy_objective: n_samples must be >= 1");
  auto rng = make_rng(seed);
  return greedy_objective(target, st, h, standard_normal(rng, h.dim(), n_samples));
}

/// Coordinatewise median of 100 exact draws when the target has a sampler, else the origin.
inline Eigen::VectorXd default_anchor(const TargetDensity& target, std::uint64_t seed) {
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(target.dim);
  if (!target.has_sampler()) return x0;
  const Samples s = target.exact_sampler(seed, 100);
  std::vector<double> row(static_cast<std::size_t>(s.cols()));
  for (int d = 0; d < target.dim; ++d) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) row[static_cast<std::size_t>(j)] = s(d, j);
    std::sort(row.begin(), row.end());
    const std::size_t mid = row.size() / 2;
    x0(d) = row.size() % 2 ? row[mid] : 0.5 * (row[mid - 1] + row[mid]);
  }
  return x0;
}

struct InitResult {
  GaussComponent component;
  GreedyEval score;
};

/// Best of `trials` random candidates, each scored by a short estimate of the
/// greedy objective on shared draws. Returns nullopt when no score is finite.
inline std::optional<InitResult> init_candidates(const TargetDensity& target, const GreedyState& st, int trials,
                                                 int score_samples, std::uint64_t seed, const Eigen::VectorXd& anchor) {
  if (trials < 1) throw std::invalid_argument("init_candidates: trials must be >= 1");
  const int dim = target.dim;
  auto rng = make_rng(derive_seed(seed, {0}));
  auto zrng = make_rng(derive_seed(seed, {1}));
  const Samples z = standard_normal(zrng, dim, score_samples);
  std::normal_distribution<double> normal(0.0, 1.0);

  const bool first = st.mixture.empty();
  std::vector<GaussComponent> products;
  std::discrete_distribution<std::size_t> pick;
  if (!first) {
    const auto k = st.mixture.size();
    const Eigen::MatrixXd p = st.mixture.pair_probabilities();
    pick = std::discrete_distribution<std::size_t>(p.data(), p.data() + p.size());
    products.resize(k * k);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < k; ++i) {
        if (p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0) {
          products[i + k * j] = product_component(st.mixture.components()[i], st.mixture.components()[j]);
        }
      }
    }
  }

  std::optional<InitResult> best;
  auto better = [&](const GreedyEval& a, const GreedyEval& b) {
    return first ? a.log_f_dot_h > b.log_f_dot_h : a.value > b.value;
  };
  for (int t = 0; t < trials; ++t) {
    GaussComponent cand;
    if (first) {
      Eigen::VectorXd mean(dim);
      for (int d = 0; d < dim; ++d) mean(d) = anchor(d) + 3.0 * normal(rng);
      cand = GaussComponent(mean, Eigen::VectorXd::Constant(dim, normal(rng)));
    } else {
      const auto& base = products[pick(rng)];
      Eigen::VectorXd mean(dim);
      for (int d = 0; d < dim; ++d) mean(d) = base.mean(d) + 4.0 * std::exp(0.5 * base.log_var(d)) * normal(rng);
      cand = GaussComponent(mean, base.log_var.array() + normal(rng));
    }
    auto score = greedy_objective(target, st, cand, z);
    const double key = first ? score.log_f_dot_h : score.value;
    if (!std::isfinite(key)) continue;
    if (!best || better(score, best->score)) best = InitResult{std::move(cand), std::move(score)};
  }
  return best;
}

/// Optimal geodesic step x* = sqrt(a^2 / (a^2 + b^2)) toward the residual direction,
/// with a = <f, h_perp> and b = <f, bg>.
inline double geodesic_weight(double f_dot_h_perp, double f_dot_bg) {
  const double a2 = f_dot_h_perp * f_dot_h_perp;
  const double b2 = f_dot_bg * f_dot_bg;
  if (a2 + b2 == 0.0) throw std::invalid_argument("geodesic_weight: both inner products are zero");
  return std::sqrt(a2 / (a2 + b2));
}

namespace detail {

/// Weights after one geodesic step from the previous iterate toward the new (last) component.
inline Eigen::VectorXd geodesic_update(const SqrtMixture& prev, const SqrtMixture& extended, const Eigen::VectorXd& d,
                                       double f_dot_bg) {
  const auto n = static_cast<Eigen::Index>(extended.size());
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
  if (prev.empty()) {
    lambda(0) = 1.0;
    return lambda;
  }
  const double b = prev.inner_with(extended.components().back());
  const double den = std::sqrt(std::max(1.0 - b * b, 1e-300));
  const double a = (d(n - 1) - b * f_dot_bg) / den;
  const double x = a > 0 ? geodesic_weight(a, f_dot_bg) : 0.0;
  lambda.head(n - 1) = (std::sqrt(1.0 - x * x) - x * b / den) * prev.weights();
  lambda(n - 1) = x / den;
  lambda = lambda.cwiseMax(0.0);
  return lambda / std::sqrt(lambda.dot(extended.affinity_matrix() * lambda));
}

inline double clamp_j1(double j1) { return std::clamp(j1, 0.0, std::nextafter(1.0, 0.0)); }

}  // namespace detail

/// sqrt(1 - J1) / (1 - sqrt(J1)).
inline double tau_from_j1(double j1) {
  j1 = detail::clamp_j1(j1);
  return std::sqrt(1.0 - j1) / (1.0 - std::sqrt(j1));
}

/// J1 / (1 + J1 (n - 1) / tau^2), the convergence bound with exact greedy steps.
inline double greedy_rate_bound(double j1, double tau, int n) {
  if (n < 1) throw std::invalid_argument("greedy_rate_bound: n must be >= 1");
  return j1 / (1.0 + j1 * static_cast<double>(n - 1) / (tau * tau));
}

inline double greedy_rate_bound(const RunTrace& trace, int n) {
  if (!trace.j1 || !trace.tau_bound) throw std::logic_error("greedy_rate_bound: trace has no J1 estimate");
  return greedy_rate_bound(*trace.j1, *trace.tau_bound, n);
}

/// Normalization-free estimate of <f / ||f||, g_1> by importance sampling from the
/// mixture itself: E_q[sqrt(p) g_1 / q] / sqrt(E_q[p / q]).
inline double first_component_alignment(const TargetDensity& target, const SqrtMixture& m, Eigen::Index n,
                                        std::uint64_t seed) {
  const Samples x = m.sample(seed, n);
  const auto& g1 = m.components().front();
  Eigen::ArrayXd a(n), b(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const double lp = target.log_p_at(x.col(s));
    const double lq = m.log_q(x.col(s));
    a(s) = 0.5 * lp + log_h(g1, x.col(s)) - lq;
    b(s) = lp - lq;
  }
  const double mb = b.maxCoeff();
  return std::exp(a.maxCoeff() - 0.5 * mb) * (a - a.maxCoeff()).exp().mean() / std::sqrt((b - mb).exp().mean());
}

struct UbviResult {
  SqrtMixture mixture;
  RunTrace trace;
};

/// Greedy boosting in the Hellinger geometry: each iteration picks the component
/// best aligned with the residual, caches its <f, g_n>, and re-solves all weights.
inline UbviResult run_ubvi(const TargetDensity& target, const UbviConfig& cfg, const IterationObserver& observe = {}) {
  cfg.validate();
  if (target.dim < 1 || !target.log_p_grad) throw std::invalid_argument("run_ubvi: target needs dim >= 1 and a gradient");
  CpuStopwatch clock;
  clock.resume();
  const Eigen::VectorXd anchor = cfg.anchor ? *cfg.anchor : default_anchor(target, derive_seed(cfg.seed, {0xa1}));
  if (anchor.size() != target.dim) throw std::invalid_argument("run_ubvi: anchor dimension mismatch");

  UbviResult out{SqrtMixture(target.dim), {}};
  out.trace.method = "ubvi";
  out.trace.trial_seed = cfg.seed;
  GreedyState st{SqrtMixture(target.dim), 0.0, 0.0};
  Eigen::VectorXd d(0);

  for (int n = 1; n <= cfg.n_components; ++n) {
    IterationRecord rec;
    rec.n = n;
    std::optional<GaussComponent> found;
    std::uint64_t seed_n = 0;
    std::string diagnostic;
    for (std::uint64_t attempt = 0; attempt < 2 && !found; ++attempt) {
      rec.retried = attempt > 0;
      seed_n = derive_seed(cfg.seed, {static_cast<std::uint64_t>(n), attempt});
      const auto init = init_candidates(target, st, cfg.init_trials, cfg.init_score_samples, derive_seed(seed_n, {1}), anchor);
      if (!init) {
        diagnostic = "no finite initialization score at n=" + std::to_string(n);
        continue;
      }
      GreedyState work = st;
      if (n == 1) work.log_scale = init->score.log_f_dot_h;
      const auto dim = target.dim;
      const int grad_samples = cfg.adam.grad_samples;
      MCObjective obj{[&](const Eigen::VectorXd& p, std::uint64_t s) {
                        auto rng = make_rng(s);
                        const auto g = greedy_objective(target, work, GaussComponent::from_params(p),
                                                        standard_normal(rng, dim, grad_samples));
                        return ObjectiveEval{g.value, g.grad};
                      },
                      true};
      const auto res = adam_maximize(obj, init->component.params(), cfg.adam, derive_seed(seed_n, {2}));
      if (res.aborted || !res.params.allFinite()) {
        diagnostic = "component optimization failed at n=" + std::to_string(n) + ": " + res.diagnostic;
        continue;
      }
      found = GaussComponent::from_params(res.params);
      rec.objective = res.trace.back().objective_estimate;
    }

    if (!found) {
      rec.degenerate = true;
      rec.weights = st.mixture.weights();
      rec.cpu_time_s = clock.elapsed();
      out.trace.records.push_back(std::move(rec));
      out.trace.aborted = true;
      out.trace.diagnostic = diagnostic;
      break;
    }
    const GaussComponent& g = *found;

    auto zrng = make_rng(derive_seed(seed_n, {3}));
    const auto ip = reparam_inner_product(g, sqrt_target(target), standard_normal(zrng, target.dim, cfg.est_samples));
    if (!std::isfinite(ip.log_value)) {
      rec.degenerate = true;
      rec.weights = st.mixture.weights();
      rec.cpu_time_s = clock.elapsed();
      out.trace.records.push_back(std::move(rec));
      out.trace.aborted = true;
      out.trace.diagnostic = "non-finite <f, g_n> estimate at n=" + std::to_string(n);
      break;
    }
    if (n == 1) st.log_scale = ip.log_value;
    d.conservativeResize(n);
    d(n - 1) = ip.value(st.log_scale);

    const SqrtMixture ext = st.mixture.extend(g);
    rec.near_singular = ext.near_singular();
    Eigen::VectorXd lambda;
    if (cfg.use_nnls) {
      const auto sol = solve_weights(ext.affinity_matrix(), d, ext.affinity_inverse());
      if (sol.degenerate) {
        rec.weight_degenerate = true;
        lambda = Eigen::VectorXd::Zero(n);
        if (n == 1) {
          lambda(0) = 1.0;
        } else {
          lambda.head(n - 1) = st.mixture.weights();
        }
      } else {
        lambda = sol.lambda;
      }
    } else {
      lambda = detail::geodesic_update(st.mixture, ext, d, st.f_dot_bg);
    }
    st.mixture = ext.with_weights(lambda);
    st.f_dot_bg = lambda.dot(d);

    rec.component = g;
    rec.weights = lambda;
    rec.d = d;
    rec.z = st.mixture.affinity_matrix();
    rec.cpu_time_s = clock.elapsed();

    clock.pause();
    if (observe) observe(rec, as_sampled(st.mixture));
    clock.resume();
    out.trace.records.push_back(std::move(rec));
  }
  out.mixture = st.mixture;
  if (!st.mixture.empty()) {
    const double aff = first_component_alignment(target, st.mixture, cfg.j1_samples, derive_seed(cfg.seed, {0xb1}));
    if (std::isfinite(aff)) {
      out.trace.j1 = detail::clamp_j1(1.0 - aff * aff);
      out.trace.tau_bound = tau_from_j1(*out.trace.j1);
    }
  }
  return out;
}

}  // namespace ubvi

#endif  // UBVI_UBVI_HPP
