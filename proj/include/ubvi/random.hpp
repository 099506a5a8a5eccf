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

#ifndef UBVI_RANDOM_HPP
#define UBVI_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace ubvi {

/// Column-major sample matrix: one point per column.
using Samples = Eigen::MatrixXd;

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a base seed and a path of stream labels.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(base);
  for (auto p : path) {
    s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  }
  return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

/// dim x n matrix of iid standard normals.
inline Samples standard_normal(Rng& rng, Eigen::Index dim, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Samples z(dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      z(i, j) = normal(rng);
    }
  }
  return z;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace ubvi

#endif  // UBVI_RANDOM_HPP
