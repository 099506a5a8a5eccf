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

#ifndef UBVI_IO_HPP
#define UBVI_IO_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ubvi/bvi.hpp"
#include "ubvi/expfam.hpp"
#include "ubvi/mixture.hpp"

namespace ubvi {

using Json = nlohmann::json;

namespace detail {

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline Json component_to_json(const GaussComponent& c) {
  return {{"mean", detail::to_std(c.mean)}, {"log_var", detail::to_std(c.log_var)}};
}

inline GaussComponent component_from_json(const Json& j) {
  return {detail::to_eigen(j.at("mean")), detail::to_eigen(j.at("log_var"))};
}

inline Json components_to_json(const std::vector<GaussComponent>& comps) {
  Json arr = Json::array();
  for (const auto& c : comps) arr.push_back(component_to_json(c));
  return arr;
}

inline std::vector<GaussComponent> components_from_json(const Json& j) {
  std::vector<GaussComponent> out;
  for (const auto& c : j) out.push_back(component_from_json(c));
  return out;
}

/// {"kind": "sqrt", "components": [...], "weights": [...]}; Z is not stored.
inline Json mixture_to_json(const SqrtMixture& m) {
  return {{"kind", "sqrt"}, {"components", components_to_json(m.components())}, {"weights", detail::to_std(m.weights())}};
}

inline Json mixture_to_json(const WeightedMixture& m) {
  return {{"kind", "weighted"},
          {"components", components_to_json(m.components())},
          {"weights", detail::to_std(m.weights())}};
}

/// Rebuilds a square-root mixture; affinities are recomputed from the components.
inline SqrtMixture sqrt_mixture_from_json(const Json& j) {
  if (j.value("kind", "sqrt") != "sqrt") throw std::invalid_argument("mixture JSON: expected kind 'sqrt'");
  return SqrtMixture::from_parts(components_from_json(j.at("components")), detail::to_eigen(j.at("weights")));
}

inline WeightedMixture weighted_mixture_from_json(const Json& j) {
  if (j.value("kind", "") != "weighted") throw std::invalid_argument("mixture JSON: expected kind 'weighted'");
  return WeightedMixture::from_parts(components_from_json(j.at("components")), detail::to_eigen(j.at("weights")));
}

}  // namespace ubvi

#endif  // UBVI_IO_HPP
