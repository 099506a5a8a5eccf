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

#ifndef UBVI_QUADRATURE_HPP
#define UBVI_QUADRATURE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace ubvi {

/// Tensor-product trapezoid grid in one or two dimensions.
struct QuadGrid {
  std::vector<std::vector<double>> axes;

  int dim() const { return static_cast<int>(axes.size()); }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return n;
  }

  /// Trapezoid weights along one axis (nodes need not be uniform).
  static std::vector<double> trapezoid_weights(const std::vector<double>& nodes) {
    const std::size_t n = nodes.size();
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = nodes[i + 1] - nodes[i];
      w[i] += 0.5 * h;
      w[i + 1] += 0.5 * h;
    }
    return w;
  }

  /// Integrates fn(point) over the grid; fn receives an Eigen vector of size dim().
  template <class Fn>
  double integrate(Fn&& fn) const {
    if (axes.empty() || axes.size() > 2) {
      throw std::invalid_argument("QuadGrid supports 1-D and 2-D grids only");
    }
    Eigen::VectorXd x(dim());
    if (axes.size() == 1) {
      const auto w = trapezoid_weights(axes[0]);
      double acc = 0.0;
      for (std::size_t i = 0; i < axes[0].size(); ++i) {
        x(0) = axes[0][i];
        acc += w[i] * fn(x);
      }
      return acc;
    }
    const auto w0 = trapezoid_weights(axes[0]);
    const auto w1 = trapezoid_weights(axes[1]);
    double acc = 0.0;
    for (std::size_t i = 0; i < axes[0].size(); ++i) {
      x(0) = axes[0][i];
      double row = 0.0;
      for (std::size_t j = 0; j < axes[1].size(); ++j) {
        x(1) = axes[1][j];
        row += w1[j] * fn(x);
      }
      acc += w0[i] * row;
    }
    return acc;
  }
};

inline std::vector<double> uniform_nodes(double lo, double hi, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return x;
}

/// Nodes uniform in asinh((x - center)/scale): fine near center, log-spaced in the tails.
inline std::vector<double> graded_nodes(double center, double scale, double half_width, std::size_t n) {
  const double umax = std::asinh(half_width / scale);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = -umax + 2.0 * umax * static_cast<double>(i) / static_cast<double>(n - 1);
    x[i] = center + scale * std::sinh(u);
  }
  return x;
}

}  // namespace ubvi

#endif  // UBVI_QUADRATURE_HPP
