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

#ifndef UBVI_STOCHOPT_HPP
#define UBVI_STOCHOPT_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ubvi/expfam.hpp"
#include "ubvi/random.hpp"

namespace ubvi {

struct AdamConfig {
  int iters = 10000;
  double base_step = 1.0;  // step_i = base_step / sqrt(1 + i)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int grad_samples = 1000;

  double step(int i) const { return base_step / std::sqrt(1.0 + i); }

  void validate() const {
    if (iters < 1 || grad_samples < 1 || !(base_step > 0) || !(beta1 > 0 && beta1 < 1) ||
        !(beta2 > 0 && beta2 < 1) || !(eps > 0)) {
      throw std::invalid_argument("AdamConfig: hyperparameters must be positive (betas in (0,1))");
    }
  }
};

struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Monte Carlo objective: (params, seed) -> (value, gradient) with common random numbers.
struct MCObjective {
  std::function<ObjectiveEval(const Eigen::VectorXd&, std::uint64_t)> estimate;
  bool transform_signed_log = false;
};

struct AdamTraceRow {
  int iter;
  double objective_estimate;
  double grad_norm;  // norm of the gradient fed to the update
  double step_size;
};

struct AdamResult {
  Eigen::VectorXd params;
  std::vector<AdamTraceRow> trace;
  bool aborted = false;       // non-finite objective or gradient
  bool stopped_early = false; // stop predicate fired
  std::string diagnostic;
};

inline constexpr double kSignedLogFloor = 1e-8;

/// Gradient of log(J) 1[J >= 0] - log(-J) 1[J < 0], i.e. grad / |J| with a floor on |J|.
inline Eigen::VectorXd signed_log_gradient(double value, const Eigen::VectorXd& grad) {
  return grad / std::max(std::abs(value), kSignedLogFloor);
}

/// Stop predicate consulted after each iteration; returning true ends the run.
using StopPredicate = std::function<bool(const Eigen::VectorXd& params, const ObjectiveEval& eval)>;

/// ADAM ascent with the decaying step base_step / sqrt(1 + i). Each iteration
/// draws a fresh seed from the stream rooted at `seed`.
inline AdamResult adam_maximize(const MCObjective& obj, const Eigen::VectorXd& init, const AdamConfig& cfg,
                                std::uint64_t seed, const StopPredicate& stop = {}) {
  cfg.validate();
  if (!init.allFinite()) throw std::invalid_argument("adam_maximize: non-finite initial parameters");
  AdamResult res;
  res.params = init;
  res.trace.reserve(static_cast<std::size_t>(cfg.iters));
  Eigen::VectorXd m = Eigen::VectorXd::Zero(init.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(init.size());
  double b1t = 1.0;
  double b2t = 1.0;
  for (int i = 0; i < cfg.iters; ++i) {
    const auto eval = obj.estimate(res.params, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    Eigen::VectorXd g = obj.transform_signed_log ? signed_log_gradient(eval.value, eval.grad) : eval.grad;
    if (std::isnan(eval.value) || !g.allFinite()) {
      res.aborted = true;
      res.diagnostic = "non-finite objective or gradient at iteration " + std::to_string(i);
      return res;
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double step = cfg.step(i);
    const Eigen::ArrayXd mhat = m.array() / (1.0 - b1t);
    const Eigen::ArrayXd vhat = v.array() / (1.0 - b2t);
    res.params.array() += step * mhat / (vhat.sqrt() + cfg.eps);
    res.trace.push_back({i, eval.value, g.norm(), step});
    if (stop && stop(res.params, eval)) {
      res.stopped_early = true;
      return res;
    }
  }
  return res;
}

inline void write_adam_trace_csv(std::ostream& os, const std::vector<AdamTraceRow>& trace) {
  os << "iter,objective_estimate,grad_norm,step_size\n";
  os.precision(17);
  for (const auto& r : trace) {
    os << r.iter << ',' << r.objective_estimate << ',' << r.grad_norm << ',' << r.step_size << '\n';
  }
}

/// Log of a positive integrand phi with its x-gradient: returns log phi(x), writes grad log phi.
using LogIntegrandFn = std::function<double(std::span<const double>, std::span<double>)>;

/// Estimate of <h, phi> = E_{h^2}[phi(X) / h(X)] kept in log space.
struct InnerProductEstimate {
  double log_value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad_ratio;  // grad <h, phi> / <h, phi> over h's [mean; log_var]
  double rel_stderr = 0.0;     // standard error of the value relative to the value

  /// Value and gradient rescaled by exp(-log_scale).
  double value(double log_scale = 0.0) const { return std::exp(log_value - log_scale); }
  Eigen::VectorXd gradient(double log_scale = 0.0) const { return value(log_scale) * grad_ratio; }
};

/// Reparametrized estimate of <h, phi> and its gradient with x = mean + sd * z,
/// using the supplied standard-normal draws z (dim x S) as common random numbers.
inline InnerProductEstimate reparam_inner_product(const GaussComponent& h, const LogIntegrandFn& log_phi,
                                                  const Samples& z) {
  constexpr double quarter_log2pi = 0.25 * 1.8378770664093453;
  const int dim = h.dim();
  const Eigen::Index s_count = z.cols();
  const Eigen::ArrayXd sd = h.stddev().array();
  const double base = dim * quarter_log2pi + 0.25 * h.log_var.sum();

  Eigen::VectorXd w(s_count);
  Eigen::MatrixXd dw(2 * dim, s_count);
  Eigen::VectorXd x(dim);
  Eigen::VectorXd gphi(dim);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    x = (h.mean.array() + sd * z.col(s).array()).matrix();
    const double lphi = log_phi(std::span<const double>(x.data(), static_cast<std::size_t>(dim)),
                                std::span<double>(gphi.data(), static_cast<std::size_t>(dim)));
    // -log h(x(z); theta) = sum_d [log(2 pi)/4 + log_var_d / 4 + z_d^2 / 4]
    w(s) = lphi + base + 0.25 * z.col(s).squaredNorm();
    for (int d = 0; d < dim; ++d) {
      dw(d, s) = gphi(d);
      dw(dim + d, s) = 0.5 * gphi(d) * sd(d) * z(d, s) + 0.25;
    }
  }
  InnerProductEstimate est;
  const double mx = w.maxCoeff();
  if (!std::isfinite(mx)) {
    est.grad_ratio = Eigen::VectorXd::Constant(2 * dim, std::numeric_limits<double>::quiet_NaN());
    return est;
  }
  const Eigen::ArrayXd e = (w.array() - mx).exp();
  const double mean_e = e.mean();
  est.log_value = mx + std::log(mean_e);
  est.grad_ratio = (dw * e.matrix()) / (static_cast<double>(s_count) * mean_e);
  if (s_count > 1) {
    const double var = (e - mean_e).square().sum() / static_cast<double>(s_count - 1);
    est.rel_stderr = std::sqrt(var / static_cast<double>(s_count)) / mean_e;
  }
  return est;
}

/// Convenience form drawing its own z: returns (value, gradient) of <h, phi>.
inline ObjectiveEval reparam_gradient(const GaussComponent& h, const LogIntegrandFn& log_phi, std::uint64_t seed,
                                      Eigen::Index n) {
  auto rng = make_rng(seed);
  const Samples z = standard_normal(rng, h.dim(), n);
  const auto est = reparam_inner_product(h, log_phi, z);
  return {est.value(), est.gradient()};
}

}  // namespace ubvi

#endif  // UBVI_STOCHOPT_HPP
