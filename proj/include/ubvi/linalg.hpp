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

#ifndef UBVI_LINALG_HPP
#define UBVI_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

namespace ubvi {

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = true;
};

/// Lawson-Hanson active-set NNLS: argmin ||A x - y||_2 subject to x >= 0.
inline NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, int max_iter = 30000) {
  const Eigen::Index n = a.cols();
  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  if (n == 0) return res;

  const double tol = 1e-14 * std::max(1.0, a.norm() * std::max(1.0, y.norm())) * static_cast<double>(std::max(a.rows(), n));
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  std::vector<bool> blocked(static_cast<std::size_t>(n), false);

  auto solve_passive = [&](Eigen::VectorXd& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    s = Eigen::VectorXd::Zero(n);
    if (idx.empty()) return;
    Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
    const Eigen::VectorXd sp = ap.colPivHouseholderQr().solve(y);
    for (std::size_t k = 0; k < idx.size(); ++k) s(idx[k]) = sp(static_cast<Eigen::Index>(k));
  };

  Eigen::VectorXd w = a.transpose() * (y - a * res.x);
  Eigen::VectorXd s;
  while (true) {
    Eigen::Index t = -1;
    double wmax = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (!passive[uj] && !blocked[uj] && w(j) > wmax) {
        wmax = w(j);
        t = j;
      }
    }
    if (t < 0) break;
    passive[static_cast<std::size_t>(t)] = true;

    while (true) {
      if (++res.iterations > max_iter) {
        res.converged = false;
        return res;
      }
      solve_passive(s);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0) feasible = false;
      }
      if (feasible) break;
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0) {
          alpha = std::min(alpha, res.x(j) / (res.x(j) - s(j)));
        }
      }
      res.x += alpha * (s - res.x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && res.x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          res.x(j) = 0.0;
        }
      }
    }
    // A column that enters and immediately leaves would cycle; block it until x changes.
    if (s(t) <= 0) {
      blocked[static_cast<std::size_t>(t)] = true;
    } else {
      std::fill(blocked.begin(), blocked.end(), false);
    }
    res.x = s;
    w = a.transpose() * (y - a * res.x);
  }
  return res;
}

/// Inverse of [[Z, z_col], [z_col^T, z_diag]] from Z^{-1} in O(n^2).
/// Returns nullopt when the Schur complement is <= 1e-12 (near-singular border).
inline std::optional<Eigen::MatrixXd> block_inverse_extend(const Eigen::MatrixXd& z_inv, const Eigen::VectorXd& z_col,
                                                           double z_diag) {
  const Eigen::Index n = z_inv.rows();
  const Eigen::VectorXd k = z_inv * z_col;
  const double schur = z_diag - z_col.dot(k);
  if (!(schur > 1e-12)) return std::nullopt;
  Eigen::MatrixXd out(n + 1, n + 1);
  out.topLeftCorner(n, n) = z_inv + k * k.transpose() / schur;
  out.topRightCorner(n, 1) = -k / schur;
  out.bottomLeftCorner(1, n) = -k.transpose() / schur;
  out(n, n) = 1.0 / schur;
  return out;
}

/// Dense inverse of an SPD matrix, adding ridge * I when the factorization fails.
inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& z, double ridge = 1e-10) {
  const Eigen::Index n = z.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(z);
  if (llt.info() != Eigen::Success) {
    llt.compute(z + ridge * Eigen::MatrixXd::Identity(n, n));
  }
  return llt.solve(Eigen::MatrixXd::Identity(n, n));
}

struct WeightSolution {
  Eigen::VectorXd lambda;
  Eigen::VectorXd beta;
  bool degenerate = false;  // beta + d vanished: f estimated orthogonal to the span
  bool converged = true;
};

/// Fully-corrective weights: maximize d^T x over x >= 0, x^T Z x <= 1, through the
/// dual NNLS  beta = argmin_{b >= 0} b^T Z^{-1} b + 2 b^T Z^{-1} d.
inline WeightSolution solve_weights(const Eigen::MatrixXd& z, const Eigen::VectorXd& d,
                                    const std::optional<Eigen::MatrixXd>& z_inv_hint = std::nullopt) {
  const Eigen::Index n = d.size();
  WeightSolution sol;
  Eigen::MatrixXd z_inv = z_inv_hint ? *z_inv_hint : spd_inverse(z);
  z_inv = 0.5 * (z_inv + z_inv.transpose());

  // Z^{-1} = L^T L with L = M^T, M the lower Cholesky factor of Z^{-1}.
  Eigen::LLT<Eigen::MatrixXd> llt(z_inv);
  if (llt.info() != Eigen::Success) {
    z_inv = spd_inverse(z + 1e-10 * Eigen::MatrixXd::Identity(n, n));
    llt.compute(z_inv);
  }
  const Eigen::MatrixXd l = llt.matrixU();
  const auto nn = nnls(l, -l * d);
  sol.beta = nn.x;
  sol.converged = nn.converged;

  const Eigen::VectorXd v = sol.beta + d;
  const Eigen::VectorXd u = z_inv * v;
  const double norm_sq = v.dot(u);
  if (!(norm_sq > 1e-300) || !u.allFinite()) {
    sol.degenerate = true;
    sol.lambda = Eigen::VectorXd::Zero(n);
    return sol;
  }
  sol.lambda = u.cwiseMax(0.0);
  const double scale = std::sqrt(sol.lambda.dot(z * sol.lambda));
  sol.lambda /= scale;
  return sol;
}

}  // namespace ubvi

#endif  // UBVI_LINALG_HPP
