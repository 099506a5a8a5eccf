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

#ifndef UBVI_TARGETS_HPP
#define UBVI_TARGETS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ubvi/quadrature.hpp"
#include "ubvi/random.hpp"

namespace ubvi {

/// An unnormalized log density on R^dim together with its gradient.
///
/// `log_norm`, when present, is log of the integral of exp(log_p). It exists
/// so that diagnostics with known normalization can be evaluated; the
/// inference drivers never read it.
struct TargetDensity {
  using LogFn = std::function<double(std::span<const double>)>;
  using LogGradFn = std::function<double(std::span<const double>, std::span<double>)>;
  using SamplerFn = std::function<Samples(std::uint64_t, Eigen::Index)>;

  std::string name;
  int dim = 0;
  LogFn log_p;
  LogGradFn log_p_grad;  // returns log_p and writes its gradient
  SamplerFn exact_sampler;
  std::optional<QuadGrid> quad_grid;
  std::optional<double> log_norm;

  double log_p_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return log_p(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }

  Eigen::VectorXd grad_log_p(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd g(dim);
    log_p_grad(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
               std::span<double>(g.data(), static_cast<std::size_t>(dim)));
    return g;
  }

  /// Normalized log density; requires log_norm.
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (!log_norm) throw std::logic_error(name + ": normalization constant unknown");
    return log_p_at(x) - *log_norm;
  }

  bool has_sampler() const { return static_cast<bool>(exact_sampler); }
};

namespace detail {

constexpr double kLog2Pi = 1.8378770664093453;

inline double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double log_sigmoid(double t) { return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log of the trapezoid integral of exp(log_p) over the grid, computed with a max shift.
inline double log_integral(const QuadGrid& grid, const TargetDensity::LogFn& log_p) {
  double shift = -std::numeric_limits<double>::infinity();
  grid.integrate([&](const Eigen::VectorXd& x) {
    shift = std::max(shift, log_p(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))));
    return 0.0;
  });
  const double z = grid.integrate([&](const Eigen::VectorXd& x) {
    return std::exp(log_p(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))) - shift);
  });
  return shift + std::log(z);
}

}  // namespace detail

/// Standard Cauchy, log p(x) = -log(1 + x^2).
inline TargetDensity make_cauchy() {
  TargetDensity t;
  t.name = "cauchy";
  t.dim = 1;
  t.log_p = [](std::span<const double> x) { return -std::log1p(x[0] * x[0]); };
  t.log_p_grad = [](std::span<const double> x, std::span<double> g) {
    g[0] = -2.0 * x[0] / (1.0 + x[0] * x[0]);
    return -std::log1p(x[0] * x[0]);
  };
  t.exact_sampler = [](std::uint64_t seed, Eigen::Index n) {
    auto rng = make_rng(seed);
    Samples s(1, n);
    for (Eigen::Index j = 0; j < n; ++j) s(0, j) = std::tan(std::numbers::pi * (uniform01(rng) - 0.5));
    return s;
  };
  // Tails dominate TV/KL integrals, hence the graded grid out to 1e4.
  t.quad_grid = QuadGrid{{graded_nodes(0.0, 1.0, 1.0e4, 200001)}};
  t.log_norm = std::log(std::numbers::pi);
  return t;
}

/// Haario banana: x1 ~ N(0, sigma1_sq), x2 | x1 ~ N(-b (x1^2 - sigma1_sq), 1).
inline TargetDensity make_banana(double b = 0.1, double sigma1_sq = 100.0) {
  if (!(sigma1_sq > 0)) throw std::invalid_argument("make_banana: sigma1_sq must be positive");
  TargetDensity t;
  t.name = "banana";
  t.dim = 2;
  t.log_p = [b, sigma1_sq](std::span<const double> x) {
    const double u = x[1] + b * (x[0] * x[0] - sigma1_sq);
    return -x[0] * x[0] / (2.0 * sigma1_sq) - 0.5 * u * u;
  };
  t.log_p_grad = [b, sigma1_sq](std::span<const double> x, std::span<double> g) {
    const double u = x[1] + b * (x[0] * x[0] - sigma1_sq);
    g[0] = -x[0] / sigma1_sq - 2.0 * b * x[0] * u;
    g[1] = -u;
    return -x[0] * x[0] / (2.0 * sigma1_sq) - 0.5 * u * u;
  };
  t.exact_sampler = [b, sigma1_sq](std::uint64_t seed, Eigen::Index n) {
    auto rng = make_rng(seed);
    Samples z = standard_normal(rng, 2, n);
    const double s1 = std::sqrt(sigma1_sq);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x1 = s1 * z(0, j);
      z(0, j) = x1;
      z(1, j) = z(1, j) - b * (x1 * x1 - sigma1_sq);
    }
    return z;
  };
  const double s1 = std::sqrt(sigma1_sq);
  const double x1max = 7.0 * s1;
  const double shift_a = -b * (x1max * x1max - sigma1_sq);
  const double shift_b = b * sigma1_sq;
  const double lo = std::min(shift_a, shift_b) - 8.0;
  const double hi = std::max(shift_a, shift_b) + 8.0;
  t.quad_grid = QuadGrid{{uniform_nodes(-x1max, x1max, 281),
                          uniform_nodes(lo, hi, static_cast<std::size_t>((hi - lo) / 0.2) + 1)}};
  t.log_norm = std::log(2.0 * std::numbers::pi * s1);
  return t;
}

/// Univariate Gaussian mixture sum_k w_k N(means_k, variances_k).
inline TargetDensity make_gauss_mixture(std::vector<double> weights, std::vector<double> means,
                                        std::vector<double> variances) {
  const std::size_t k = weights.size();
  if (k == 0 || means.size() != k || variances.size() != k) {
    throw std::invalid_argument("make_gauss_mixture: mismatched parameter lengths");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(weights[i] >= 0)) throw std::invalid_argument("make_gauss_mixture: negative weight");
    if (!(variances[i] > 0)) throw std::invalid_argument("make_gauss_mixture: nonpositive variance");
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("make_gauss_mixture: weights not on the simplex");

  struct Params {
    std::vector<double> log_w, mean, var;
  };
  auto prm = std::make_shared<Params>();
  for (std::size_t i = 0; i < k; ++i) {
    prm->log_w.push_back(std::log(weights[i]));
    prm->mean.push_back(means[i]);
    prm->var.push_back(variances[i]);
  }
  auto terms = [prm](double x, std::vector<double>& out) {
    out.resize(prm->mean.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = x - prm->mean[i];
      out[i] = prm->log_w[i] - 0.5 * (detail::kLog2Pi + std::log(prm->var[i]) + d * d / prm->var[i]);
    }
  };

  TargetDensity t;
  t.name = "gauss-mix";
  t.dim = 1;
  t.log_p = [terms](std::span<const double> x) {
    thread_local std::vector<double> buf;
    terms(x[0], buf);
    return detail::log_sum_exp(buf);
  };
  t.log_p_grad = [terms, prm](std::span<const double> x, std::span<double> g) {
    thread_local std::vector<double> buf;
    terms(x[0], buf);
    const double lse = detail::log_sum_exp(buf);
    double grad = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      grad += std::exp(buf[i] - lse) * (prm->mean[i] - x[0]) / prm->var[i];
    }
    g[0] = grad;
    return lse;
  };
  t.exact_sampler = [prm](std::uint64_t seed, Eigen::Index n) {
    auto rng = make_rng(seed);
    std::vector<double> w;
    for (double lw : prm->log_w) w.push_back(std::exp(lw));
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    Samples s(1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::size_t i = pick(rng);
      s(0, j) = prm->mean[i] + std::sqrt(prm->var[i]) * normal(rng);
    }
    return s;
  };
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double min_sd = lo;
  for (std::size_t i = 0; i < k; ++i) {
    const double sd = std::sqrt(variances[i]);
    lo = std::min(lo, means[i] - 12.0 * sd);
    hi = std::max(hi, means[i] + 12.0 * sd);
    min_sd = std::min(min_sd, sd);
  }
  const auto nodes = std::max<std::size_t>(2001, static_cast<std::size_t>((hi - lo) / (min_sd / 40.0)) + 1);
  t.quad_grid = QuadGrid{{uniform_nodes(lo, hi, nodes)}};
  t.log_norm = 0.0;
  return t;
}

/// Multivariate Gaussian N(mean, cov) with full covariance.
inline TargetDensity make_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("make_gaussian: covariance shape mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("make_gaussian: covariance not positive definite");
  struct Params {
    Eigen::VectorXd mean;
    Eigen::MatrixXd chol;
    Eigen::MatrixXd precision;
    double log_const;
  };
  auto prm = std::make_shared<Params>();
  prm->mean = mean;
  prm->chol = llt.matrixL();
  prm->precision = llt.solve(Eigen::MatrixXd::Identity(mean.size(), mean.size()));
  const auto dim = static_cast<int>(mean.size());
  prm->log_const = -0.5 * dim * detail::kLog2Pi - prm->chol.diagonal().array().log().sum();

  TargetDensity t;
  t.name = "gaussian";
  t.dim = dim;
  t.log_p = [prm](std::span<const double> x) {
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(x.data(), prm->mean.size()) - prm->mean;
    return prm->log_const - 0.5 * d.dot(prm->precision * d);
  };
  t.log_p_grad = [prm](std::span<const double> x, std::span<double> g) {
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(x.data(), prm->mean.size()) - prm->mean;
    const Eigen::VectorXd pd = prm->precision * d;
    Eigen::Map<Eigen::VectorXd>(g.data(), prm->mean.size()) = -pd;
    return prm->log_const - 0.5 * d.dot(pd);
  };
  t.exact_sampler = [prm](std::uint64_t seed, Eigen::Index n) {
    auto rng = make_rng(seed);
    Samples z = standard_normal(rng, prm->mean.size(), n);
    Samples x = prm->chol * z;
    x.colwise() += prm->mean;
    return x;
  };
  if (dim <= 2) {
    QuadGrid grid;
    for (int d = 0; d < dim; ++d) {
      const double sd = std::sqrt(cov(d, d));
      grid.axes.push_back(uniform_nodes(mean(d) - 12.0 * sd, mean(d) + 12.0 * sd, dim == 1 ? 4001 : 801));
    }
    t.quad_grid = std::move(grid);
  }
  t.log_norm = 0.0;
  return t;
}

/// Bayesian logistic regression with a multivariate t prior.
struct LogisticModel {
  Eigen::MatrixXd features;  // N x D
  Eigen::VectorXd labels;    // entries in {-1, +1}
  double prior_dof = 2.0;
  Eigen::VectorXd prior_loc;
  Eigen::MatrixXd prior_scale;

  int dim() const { return static_cast<int>(prior_loc.size()); }
};

inline double student_t_log_density(const Eigen::VectorXd& theta, const Eigen::VectorXd& loc,
                                    const Eigen::LLT<Eigen::MatrixXd>& scale_llt, double dof) {
  const auto dim = static_cast<double>(loc.size());
  const Eigen::VectorXd d = theta - loc;
  const double q = d.dot(scale_llt.solve(d));
  const double log_det = 2.0 * Eigen::MatrixXd(scale_llt.matrixL()).diagonal().array().log().sum();
  return std::lgamma(0.5 * (dof + dim)) - std::lgamma(0.5 * dof) - 0.5 * dim * std::log(dof * std::numbers::pi) -
         0.5 * log_det - 0.5 * (dof + dim) * std::log1p(q / dof);
}

inline TargetDensity make_logistic(const LogisticModel& model) {
  const int dim = model.dim();
  if (model.prior_scale.rows() != dim || model.prior_scale.cols() != dim) {
    throw std::invalid_argument("make_logistic: prior_scale does not match prior_loc dimension");
  }
  if (model.features.rows() > 0 && model.features.cols() != dim) {
    throw std::invalid_argument("make_logistic: feature dimension does not match prior dimension");
  }
  if (model.features.rows() != model.labels.size()) {
    throw std::invalid_argument("make_logistic: features and labels row counts differ");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(model.prior_scale);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("make_logistic: prior_scale not positive definite");

  struct Params {
    Eigen::MatrixXd yx;  // rows y_n * x_n
    Eigen::VectorXd loc;
    Eigen::MatrixXd scale_inv;
    double dof;
    double log_const;
  };
  auto prm = std::make_shared<Params>();
  prm->yx = model.labels.asDiagonal() * model.features;
  prm->loc = model.prior_loc;
  prm->scale_inv = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  prm->dof = model.prior_dof;
  const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  prm->log_const = std::lgamma(0.5 * (prm->dof + dim)) - std::lgamma(0.5 * prm->dof) -
                   0.5 * dim * std::log(prm->dof * std::numbers::pi) - 0.5 * log_det;

  auto eval = [prm, dim](std::span<const double> x, double* grad) {
    const Eigen::Map<const Eigen::VectorXd> theta(x.data(), dim);
    const Eigen::VectorXd d = theta - prm->loc;
    const Eigen::VectorXd sd = prm->scale_inv * d;
    const double q = d.dot(sd);
    double lp = prm->log_const - 0.5 * (prm->dof + dim) * std::log1p(q / prm->dof);
    if (grad) {
      Eigen::Map<Eigen::VectorXd>(grad, dim) = -(prm->dof + dim) / (prm->dof + q) * sd;
    }
    for (Eigen::Index n = 0; n < prm->yx.rows(); ++n) {
      const double t = prm->yx.row(n).dot(theta);
      lp += detail::log_sigmoid(t);
      if (grad) {
        Eigen::Map<Eigen::VectorXd>(grad, dim) += detail::sigmoid(-t) * prm->yx.row(n).transpose();
      }
    }
    return lp;
  };

  TargetDensity t;
  t.name = "logistic";
  t.dim = dim;
  t.log_p = [eval](std::span<const double> x) { return eval(x, nullptr); };
  t.log_p_grad = [eval](std::span<const double> x, std::span<double> g) { return eval(x, g.data()); };
  if (dim <= 2) {
    QuadGrid grid;
    for (int d = 0; d < dim; ++d) {
      const double scale = std::sqrt(model.prior_scale(d, d));
      grid.axes.push_back(graded_nodes(model.prior_loc(d), scale, 1.0e4 * scale, dim == 1 ? 20001 : 1201));
    }
    t.log_norm = detail::log_integral(grid, t.log_p);
    t.quad_grid = std::move(grid);
  }
  return t;
}

namespace detail {

/// Sigma = A^T A with A_ij ~ N(0, 1).
inline Eigen::MatrixXd random_prior_scale(Rng& rng, int dim) {
  const Samples a = standard_normal(rng, dim, dim);
  return a.transpose() * a;
}

}  // namespace detail

/// Synthetic dataset drawn from the model itself (standard normal features).
inline LogisticModel synth_logistic_data(std::uint64_t seed, int n = 20, int dim = 2) {
  auto rng = make_rng(derive_seed(seed, {0x5e7}));
  LogisticModel m;
  m.prior_loc = Eigen::VectorXd::Zero(dim);
  m.prior_scale = detail::random_prior_scale(rng, dim);
  Eigen::LLT<Eigen::MatrixXd> llt(m.prior_scale);
  const Eigen::VectorXd z = standard_normal(rng, dim, 1).col(0);
  std::chi_squared_distribution<double> chi2(m.prior_dof);
  const double w = chi2(rng);
  const Eigen::VectorXd theta = Eigen::MatrixXd(llt.matrixL()) * z / std::sqrt(w / m.prior_dof);
  m.features = standard_normal(rng, dim, n).transpose();
  m.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const double p = detail::sigmoid(m.features.row(i).dot(theta));
    m.labels(i) = uniform01(rng) < p ? 1.0 : -1.0;
  }
  return m;
}

/// Loads a labeled CSV (header row; feature columns then a label in {-1,+1} or {0,1})
/// and subsamples `n_sub` rows with the given seed. The t prior scale is drawn as A^T A.
inline LogisticModel load_logistic_csv(const std::string& path, std::uint64_t seed, int n_sub = 20) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset: " + path);
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (width == 0) width = row.size();
    if (row.size() != width || width < 2) throw std::runtime_error("malformed dataset row in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("dataset has no rows: " + path);

  auto rng = make_rng(derive_seed(seed, {0xc57}));
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(n_sub));
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  const int dim = static_cast<int>(width) - 1;
  LogisticModel m;
  m.features.resize(static_cast<Eigen::Index>(n), dim);
  m.labels.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[idx[i]];
    for (int d = 0; d < dim; ++d) m.features(static_cast<Eigen::Index>(i), d) = r[static_cast<std::size_t>(d)];
    const double label = r.back();
    if (label == 1.0) {
      m.labels(static_cast<Eigen::Index>(i)) = 1.0;
    } else if (label == 0.0 || label == -1.0) {
      m.labels(static_cast<Eigen::Index>(i)) = -1.0;
    } else {
      throw std::runtime_error("label must be in {-1,+1} or {0,1}");
    }
  }
  m.prior_loc = Eigen::VectorXd::Zero(dim);
  m.prior_scale = detail::random_prior_scale(rng, dim);
  return m;
}

}  // namespace ubvi

#endif  // UBVI_TARGETS_HPP
