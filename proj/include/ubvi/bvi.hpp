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

#ifndef UBVI_BVI_HPP
#define UBVI_BVI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ubvi/diagnostics.hpp"
#include "ubvi/expfam.hpp"
#include "ubvi/random.hpp"
#include "ubvi/stochopt.hpp"
#include "ubvi/targets.hpp"
#include "ubvi/trace.hpp"
#include "ubvi/ubvi.hpp"

namespace ubvi {

/// Ordinary mixture sum_i w_i N(mean_i, var_i) with simplex weights.
class WeightedMixture {
 public:
  explicit WeightedMixture(int dim = 1) : dim_(dim) {}

  static WeightedMixture from_parts(std::vector<GaussComponent> comps, Eigen::VectorXd weights) {
    if (comps.empty()) throw std::invalid_argument("WeightedMixture::from_parts: no components");
    WeightedMixture m(comps.front().dim());
    m.comps_ = std::move(comps);
    m.w_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.comps_.size()));
    return m.with_weights(weights);
  }

  int dim() const { return dim_; }
  std::size_t size() const { return comps_.size(); }
  bool empty() const { return comps_.empty(); }
  const std::vector<GaussComponent>& components() const { return comps_; }
  const Eigen::VectorXd& weights() const { return w_; }

  /// Appends a component with weight 0.
  WeightedMixture add(const GaussComponent& c) const {
    if (c.dim() != dim_) throw std::invalid_argument("WeightedMixture::add: dimension mismatch");
    WeightedMixture out = *this;
    out.comps_.push_back(c);
    out.w_.conservativeResize(static_cast<Eigen::Index>(out.comps_.size()));
    out.w_(out.w_.size() - 1) = 0.0;
    return out;
  }

  WeightedMixture with_weights(const Eigen::VectorXd& w) const {
    if (w.size() != static_cast<Eigen::Index>(comps_.size())) {
      throw std::invalid_argument("WeightedMixture::with_weights: size mismatch");
    }
    if ((w.array() < 0).any() || std::abs(w.sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("WeightedMixture::with_weights: weights not on the simplex");
    }
    WeightedMixture out = *this;
    out.w_ = w;
    return out;
  }

  /// log q(x); when `grad` is non-null also writes the x-gradient of log q.
  double log_density(const double* x, double* grad = nullptr) const {
    if (comps_.empty()) throw std::logic_error("WeightedMixture::log_density: empty mixture");
    thread_local std::vector<double> terms;
    terms.assign(comps_.size(), -std::numeric_limits<double>::infinity());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      const double wi = w_(static_cast<Eigen::Index>(i));
      if (wi <= 0) continue;
      terms[i] = std::log(wi) + 2.0 * log_h(comps_[i], x);
      m = std::max(m, terms[i]);
    }
    if (grad) std::fill(grad, grad + dim_, 0.0);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      if (!std::isfinite(terms[i])) continue;
      const double r = std::exp(terms[i] - m);
      acc += r;
      if (grad) {
        const auto& c = comps_[i];
        for (int d = 0; d < dim_; ++d) grad[d] -= r * (x[d] - c.mean(d)) * std::exp(-c.log_var(d));
      }
    }
    if (grad) {
      for (int d = 0; d < dim_; ++d) grad[d] /= acc;
    }
    return m + std::log(acc);
  }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const { return log_density(x.data()); }

  Samples sample(std::uint64_t seed, Eigen::Index n) const {
    if (comps_.empty()) throw std::logic_error("WeightedMixture::sample: empty mixture");
    auto rng = make_rng(seed);
    std::discrete_distribution<std::size_t> pick(w_.data(), w_.data() + w_.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    Samples out(dim_, n);
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto& c = comps_[pick(rng)];
      for (int d = 0; d < dim_; ++d) out(d, s) = c.mean(d) + std::exp(0.5 * c.log_var(d)) * normal(rng);
    }
    return out;
  }

 private:
  int dim_;
  std::vector<GaussComponent> comps_;
  Eigen::VectorXd w_;
};

inline SampledDensity as_sampled(const WeightedMixture& m) {
  return {[m](std::uint64_t seed, Eigen::Index n) { return m.sample(seed, n); },
          [m](const Eigen::Ref<const Eigen::VectorXd>& x) { return m.log_density(x); }};
}

/// Entropy-regularization weight r_n: 1/sqrt(n) or a fixed value.
struct RegSchedule {
  std::optional<double> fixed;

  double operator()(int n) const { return fixed ? *fixed : 1.0 / std::sqrt(static_cast<double>(n)); }

  /// Parses "invsqrt" or "fixed:<v>" with v > 0.
  static RegSchedule parse(const std::string& s) {
    if (s == "invsqrt") return {};
    const std::string prefix = "fixed:";
    if (s.rfind(prefix, 0) == 0) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s.substr(prefix.size()), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used > 0 && used == s.size() - prefix.size() && v > 0 && std::isfinite(v)) return {v};
    }
    throw std::invalid_argument("unknown regularization schedule '" + s + "' (expected invsqrt or fixed:<v>)");
  }

  std::string str() const { return fixed ? "fixed:" + detail::fmt_num(*fixed) : "invsqrt"; }
};

struct BviConfig {
  int n_components = 10;
  RegSchedule reg_schedule;
  double stabilization_eps = 0.0;  // 0 for BVI, 1e-3 for BVI+
  AdamConfig adam;
  int init_trials = 10000;
  int init_score_samples = 100;
  int weight_opt_iters = 1000;
  int weight_samples = 100;
  double weight_base_step = 1.0;
  std::uint64_t seed = 0;
  double degeneracy_log_var = std::log(1e6);
  std::optional<Eigen::VectorXd> anchor;

  void validate() const {
    adam.validate();
    if (n_components < 1) throw std::invalid_argument("BviConfig: n_components must be >= 1");
    if (!(stabilization_eps >= 0)) throw std::invalid_argument("BviConfig: stabilization_eps must be >= 0");
    if (init_trials < 1 || init_score_samples < 1 || weight_opt_iters < 1 || weight_samples < 1 ||
        !(weight_base_step > 0)) {
      throw std::invalid_argument("BviConfig: budgets must be positive");
    }
  }
};

/// E_{x ~ h^2}[ r log h^2(x) + log(q(x) + eps) - log p(x) ] and its gradient over h's
/// [mean; log_var], on the supplied standard-normal draws. The q term is dropped when
/// q is empty. With `fix_mean` the mean coordinates get zero gradient.
inline ObjectiveEval bvi_component_objective(const TargetDensity& target, const WeightedMixture& q,
                                             const GaussComponent& h, double r, double eps, const Samples& z,
                                             bool fix_mean = false) {
  if (!(r > 0)) throw std::invalid_argument("bvi_component_objective: r must be > 0");
  const int dim = h.dim();
  const Eigen::Index s_count = z.cols();
  const Eigen::VectorXd sd = h.stddev();
  const double log_eps = eps > 0 ? std::log(eps) : -std::numeric_limits<double>::infinity();
  const double entropy_base = -0.5 * dim * detail::kLog2Pi - 0.5 * h.log_var.sum();

  Eigen::VectorXd x(dim), gp(dim), gq(dim);
  double acc = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * dim);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    x = h.mean + sd.cwiseProduct(z.col(s));
    const double lp = target.log_p_grad(std::span<const double>(x.data(), static_cast<std::size_t>(dim)),
                                        std::span<double>(gp.data(), static_cast<std::size_t>(dim)));
    double lq = 0.0;
    gq.setZero();
    if (!q.empty()) {
      lq = q.log_density(x.data(), gq.data());
      if (eps > 0) {
        const double mx = std::max(lq, log_eps);
        const double l = mx + std::log(std::exp(lq - mx) + std::exp(log_eps - mx));
        gq *= std::exp(lq - l);
        lq = l;
      }
    }
    acc += r * (entropy_base - 0.5 * z.col(s).squaredNorm()) + lq - lp;
    for (int d = 0; d < dim; ++d) {
      const double dx = gq(d) - gp(d);
      grad(d) += dx;
      grad(dim + d) += 0.5 * dx * sd(d) * z(d, s);
    }
  }
  const double inv = 1.0 / static_cast<double>(s_count);
  ObjectiveEval e{acc * inv, grad * inv};
  e.grad.tail(dim).array() -= 0.5 * r;
  if (fix_mean) e.grad.head(dim).setZero();
  return e;
}

inline ObjectiveEval bvi_component_objective(const TargetDensity& target, const WeightedMixture& q,
                                             const GaussComponent& h, double r, double eps, std::uint64_t seed,
                                             Eigen::Index n_samples, bool fix_mean = false) {
  auto rng = make_rng(seed);
  return bvi_component_objective(target, q, h, r, eps, standard_normal(rng, h.dim(), n_samples), fix_mean);
}

struct ComponentFit {
  GaussComponent component;
  double objective = std::numeric_limits<double>::quiet_NaN();  // last estimate of the minimized value
  bool degenerate = false;
  AdamResult adam;
};

/// Minimizes the regularized KL component objective from `init` with ADAM.
/// Degenerate when a log-variance passes `cap`, the value falls below -1e10, or
/// the optimizer meets a non-finite value or gradient.
inline ComponentFit fit_bvi_component(const TargetDensity& target, const WeightedMixture& q, const GaussComponent& init,
                                      double r, double eps, const AdamConfig& adam, std::uint64_t seed,
                                      double cap = std::log(1e6), bool fix_mean = false) {
  const int dim = target.dim;
  MCObjective obj{[&](const Eigen::VectorXd& p, std::uint64_t s) {
                    auto rng = make_rng(s);
                    auto e = bvi_component_objective(target, q, GaussComponent::from_params(p), r, eps,
                                                     standard_normal(rng, dim, adam.grad_samples), fix_mean);
                    return ObjectiveEval{-e.value, -e.grad};
                  },
                  false};
  const StopPredicate stop = [&](const Eigen::VectorXd& p, const ObjectiveEval& e) {
    return (p.tail(dim).array() > cap).any() || e.value > 1e10;
  };
  ComponentFit fit;
  fit.adam = adam_maximize(obj, init.params(), adam, seed, stop);
  fit.component = GaussComponent::from_params(fit.adam.params);
  if (!fit.adam.trace.empty()) fit.objective = -fit.adam.trace.back().objective_estimate;
  fit.degenerate = fit.adam.aborted || fit.adam.stopped_early || !fit.component.finite();
  return fit;
}

/// Euclidean projection onto the probability simplex (sorted-threshold rule).
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n == 0) throw std::invalid_argument("project_simplex: empty vector");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cum += u[static_cast<std::size_t>(k)];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

/// Projected SGD on KL(sum_k w_k xi_k || p) over the simplex. The partial for w_k is
/// E_{xi_k}[log q_w - log p] (plus a constant the projection ignores).
inline Eigen::VectorXd kl_weight_update(const std::vector<GaussComponent>& comps, const Eigen::VectorXd& weights,
                                        const TargetDensity& target, int iters, std::uint64_t seed,
                                        int samples = 100, double base_step = 1.0) {
  if (comps.empty()) throw std::invalid_argument("kl_weight_update: no components");
  const auto k = static_cast<Eigen::Index>(comps.size());
  if (weights.size() != k) throw std::invalid_argument("kl_weight_update: weight count mismatch");
  Eigen::VectorXd w = project_simplex(weights);
  if (k == 1) return w;
  const int dim = comps.front().dim();
  Eigen::VectorXd grad(k);
  Eigen::VectorXd x(dim);
  for (int i = 0; i < iters; ++i) {
    const auto q = WeightedMixture::from_parts(comps, w);
    auto rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const Samples z = standard_normal(rng, dim, samples);
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto& comp = comps[static_cast<std::size_t>(c)];
      const Eigen::VectorXd sd = comp.stddev();
      double acc = 0.0;
      for (int s = 0; s < samples; ++s) {
        x = comp.mean + sd.cwiseProduct(z.col(s));
        acc += q.log_density(x.data()) - target.log_p_at(x);
      }
      grad(c) = acc / samples;
    }
    if (!grad.allFinite()) break;
    // Raw gradients near a vertex are large enough to bounce between vertices;
    // step along the centered unit direction instead (projection ignores the center).
    grad.array() -= grad.mean();
    const double norm = grad.norm();
    if (norm == 0.0) break;
    w = project_simplex(w - base_step / std::sqrt(1.0 + i) * grad / norm);
  }
  return w;
}

namespace detail {

/// Best of `trials` candidates by a short estimate of the component objective (lower wins).
inline GaussComponent bvi_init(const TargetDensity& target, const WeightedMixture& q, double r, double eps, int trials,
                               int score_samples, std::uint64_t seed, const Eigen::VectorXd& anchor) {
  const int dim = target.dim;
  auto rng = make_rng(derive_seed(seed, {0}));
  auto zrng = make_rng(derive_seed(seed, {1}));
  const Samples z = standard_normal(zrng, dim, score_samples);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<std::size_t> pick;
  if (!q.empty()) pick = std::discrete_distribution<std::size_t>(q.weights().data(), q.weights().data() + q.size());

  std::optional<GaussComponent> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    GaussComponent cand;
    Eigen::VectorXd mean(dim);
    if (q.empty()) {
      for (int d = 0; d < dim; ++d) mean(d) = anchor(d) + 3.0 * normal(rng);
      cand = GaussComponent(mean, Eigen::VectorXd::Constant(dim, normal(rng)));
    } else {
      const auto& base = q.components()[pick(rng)];
      for (int d = 0; d < dim; ++d) mean(d) = base.mean(d) + 4.0 * std::exp(0.5 * base.log_var(d)) * normal(rng);
      cand = GaussComponent(mean, base.log_var.array() + normal(rng));
    }
    const double v = bvi_component_objective(target, q, cand, r, eps, z).value;
    if (std::isfinite(v) && v < best_value) {
      best_value = v;
      best = std::move(cand);
    }
  }
  return best ? *best : GaussComponent(anchor, Eigen::VectorXd::Zero(dim));
}

}  // namespace detail

struct BviResult {
  WeightedMixture mixture;
  RunTrace trace;
};

/// KL gradient boosting: alternate a regularized component fit and a simplex weight fit.
/// A degenerate component is recorded and not added (except as the very first component).
inline BviResult run_bvi(const TargetDensity& target, const BviConfig& cfg, const IterationObserver& observe = {}) {
  cfg.validate();
  if (target.dim < 1 || !target.log_p_grad) throw std::invalid_argument("run_bvi: target needs dim >= 1 and a gradient");
  CpuStopwatch clock;
  clock.resume();
  const Eigen::VectorXd anchor = cfg.anchor ? *cfg.anchor : default_anchor(target, derive_seed(cfg.seed, {0xa1}));

  BviResult out{WeightedMixture(target.dim), {}};
  out.trace.method = cfg.stabilization_eps > 0 ? "bvi-plus" : "bvi";
  out.trace.trial_seed = cfg.seed;
  WeightedMixture q(target.dim);

  for (int n = 1; n <= cfg.n_components; ++n) {
    const double r = cfg.reg_schedule(n);
    const std::uint64_t seed_n = derive_seed(cfg.seed, {static_cast<std::uint64_t>(n)});
    const auto init = detail::bvi_init(target, q, r, cfg.stabilization_eps, cfg.init_trials, cfg.init_score_samples,
                                       derive_seed(seed_n, {1}), anchor);
    const auto fit = fit_bvi_component(target, q, init, r, cfg.stabilization_eps, cfg.adam, derive_seed(seed_n, {2}),
                                       cfg.degeneracy_log_var);
    IterationRecord rec;
    rec.n = n;
    rec.component = fit.component;
    rec.objective = fit.objective;
    rec.degenerate = fit.degenerate;
    if (!fit.degenerate || q.empty()) {
      if (q.empty() && !fit.component.finite()) {
        rec.cpu_time_s = clock.elapsed();
        out.trace.records.push_back(std::move(rec));
        out.trace.aborted = true;
        out.trace.diagnostic = "non-finite first component";
        break;
      }
      const auto k = static_cast<Eigen::Index>(q.size());
      Eigen::VectorXd w(k + 1);
      w.head(k) = (1.0 - 1.0 / (k + 1.0)) * q.weights();
      w(k) = 1.0 / (k + 1.0);
      std::vector<GaussComponent> comps = q.components();
      comps.push_back(fit.component);
      if (k > 0) {
        w = kl_weight_update(comps, w, target, cfg.weight_opt_iters, derive_seed(seed_n, {3}), cfg.weight_samples,
                             cfg.weight_base_step);
      }
      q = WeightedMixture::from_parts(std::move(comps), w / w.sum());
    }
    rec.weights = q.weights();
    rec.cpu_time_s = clock.elapsed();
    clock.pause();
    if (observe) observe(rec, as_sampled(q));
    clock.resume();
    out.trace.records.push_back(std::move(rec));
  }
  out.mixture = q;
  return out;
}

struct ViResult {
  GaussComponent component;
  AdamResult adam;
  RunTrace trace;
};

/// Single diagonal Gaussian minimizing KL(q || p), started from `init` or from
/// the default anchor with unit variances.
inline ViResult run_vi(const TargetDensity& target, const AdamConfig& adam, std::uint64_t seed,
                       std::optional<GaussComponent> init = std::nullopt, const IterationObserver& observe = {}) {
  adam.validate();
  CpuStopwatch clock;
  clock.resume();
  const GaussComponent start =
      init ? *init : GaussComponent(default_anchor(target, derive_seed(seed, {0xa1})), Eigen::VectorXd::Zero(target.dim));
  const WeightedMixture none(target.dim);
  const int dim = target.dim;
  MCObjective obj{[&](const Eigen::VectorXd& p, std::uint64_t s) {
                    auto rng = make_rng(s);
                    auto e = bvi_component_objective(target, none, GaussComponent::from_params(p), 1.0, 0.0,
                                                     standard_normal(rng, dim, adam.grad_samples));
                    return ObjectiveEval{-e.value, -e.grad};
                  },
                  false};
  ViResult out;
  out.adam = adam_maximize(obj, start.params(), adam, derive_seed(seed, {2}));
  out.component = GaussComponent::from_params(out.adam.params);
  out.trace.method = "vi";
  out.trace.trial_seed = seed;
  IterationRecord rec;
  rec.n = 1;
  rec.component = out.component;
  rec.weights = Eigen::VectorXd::Ones(1);
  if (!out.adam.trace.empty()) rec.objective = -out.adam.trace.back().objective_estimate;
  rec.degenerate = out.adam.aborted || !out.component.finite();
  rec.cpu_time_s = clock.elapsed();
  clock.pause();
  if (out.adam.aborted) {
    out.trace.aborted = true;
    out.trace.diagnostic = out.adam.diagnostic;
  } else if (observe) {
    observe(rec, as_sampled(out.component));
  }
  out.trace.records.push_back(std::move(rec));
  return out;
}

}  // namespace ubvi

#endif  // UBVI_BVI_HPP
