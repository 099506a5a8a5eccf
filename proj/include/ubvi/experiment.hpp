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

#ifndef UBVI_EXPERIMENT_HPP
#define UBVI_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ubvi/bvi.hpp"
#include "ubvi/diagnostics.hpp"
#include "ubvi/io.hpp"
#include "ubvi/targets.hpp"
#include "ubvi/trace.hpp"
#include "ubvi/ubvi.hpp"

namespace ubvi {

struct ExperimentConfig {
  std::string target = "gauss-mix";
  std::vector<std::string> methods{"ubvi"};
  int n_components = 10;
  int trials = 20;
  std::uint64_t seed = 0;
  int grad_samples = 1000;
  int est_samples = 10000;
  int opt_iters = 10000;
  int init_trials = 10000;
  std::string reg_schedule = "invsqrt";
  int jobs = 1;
  std::string out_dir = "out";
  bool timing = true;
  int diag_samples = 10000;   // draws for each Hellinger / KL estimate
  int energy_samples = 1000;  // logistic targets only; 0 disables
  int weight_opt_iters = 1000;

  void validate() const {
    static const std::vector<std::string> known{"ubvi", "bvi", "bvi-plus", "vi"};
    if (methods.empty()) throw std::invalid_argument("no method given");
    for (const auto& m : methods) {
      if (std::find(known.begin(), known.end(), m) == known.end()) {
        throw std::invalid_argument("unknown method '" + m + "'");
      }
    }
    if (n_components < 1 || trials < 1 || grad_samples < 1 || est_samples < 1 || opt_iters < 1 || init_trials < 1 ||
        jobs < 1 || diag_samples < 2 || energy_samples < 0 || weight_opt_iters < 1) {
      throw std::invalid_argument("budgets and counts must be positive");
    }
    RegSchedule::parse(reg_schedule);
  }

  /// Reads any subset of the keys written by to_json on top of `base`.
  static ExperimentConfig from_json(const Json& j) { return from_json(j, ExperimentConfig()); }

  static ExperimentConfig from_json(const Json& j, ExperimentConfig base) {
    ExperimentConfig c = std::move(base);
    if (!j.is_object()) throw std::invalid_argument("config JSON must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "target") c.target = value.get<std::string>();
      else if (key == "method") c.methods = value.is_array() ? value.get<std::vector<std::string>>()
                                                             : std::vector<std::string>{value.get<std::string>()};
      else if (key == "n_components") c.n_components = value.get<int>();
      else if (key == "trials") c.trials = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "grad_samples") c.grad_samples = value.get<int>();
      else if (key == "est_samples") c.est_samples = value.get<int>();
      else if (key == "opt_iters") c.opt_iters = value.get<int>();
      else if (key == "init_trials") c.init_trials = value.get<int>();
      else if (key == "reg_schedule") c.reg_schedule = value.get<std::string>();
      else if (key == "jobs") c.jobs = value.get<int>();
      else if (key == "out") c.out_dir = value.get<std::string>();
      else if (key == "timing") c.timing = value.get<bool>();
      else if (key == "diag_samples") c.diag_samples = value.get<int>();
      else if (key == "energy_samples") c.energy_samples = value.get<int>();
      else if (key == "weight_opt_iters") c.weight_opt_iters = value.get<int>();
      else throw std::invalid_argument("unknown config key '" + key + "'");
    }
    return c;
  }

  Json to_json() const {
    return {{"target", target},       {"method", methods},         {"n_components", n_components},
            {"trials", trials},       {"seed", seed},              {"grad_samples", grad_samples},
            {"est_samples", est_samples}, {"opt_iters", opt_iters}, {"init_trials", init_trials},
            {"reg_schedule", reg_schedule}, {"jobs", jobs},         {"out", out_dir},
            {"timing", timing},       {"diag_samples", diag_samples}, {"energy_samples", energy_samples},
            {"weight_opt_iters", weight_opt_iters}};
  }
};

/// gauss-mix | cauchy | banana | logistic | logistic-csv:<path>.
inline TargetDensity make_target(const std::string& spec, std::uint64_t data_seed) {
  if (spec == "gauss-mix") return make_gauss_mixture({0.5, 0.5}, {0.0, 25.0}, {1.0, 5.0});
  if (spec == "cauchy") return make_cauchy();
  if (spec == "banana") return make_banana();
  if (spec == "logistic") return make_logistic(synth_logistic_data(data_seed));
  const std::string prefix = "logistic-csv:";
  if (spec.rfind(prefix, 0) == 0) return make_logistic(load_logistic_csv(spec.substr(prefix.size()), data_seed));
  throw std::invalid_argument("unknown target '" + spec + "'");
}

inline bool is_logistic_target(const std::string& spec) { return spec.rfind("logistic", 0) == 0; }

/// Divergences of an approximation from the target on fixed per-trial draws from p,
/// so that successive iterations are compared on common random numbers.
class MetricsEvaluator {
 public:
  MetricsEvaluator(const TargetDensity& target, std::uint64_t trial_seed, int diag_samples, int energy_samples)
      : target_(target), seed_(trial_seed), diag_samples_(diag_samples), energy_samples_(energy_samples) {
    const auto ps = derive_seed(trial_seed, {0x9a});
    if (target.has_sampler()) {
      p_samples_ = target.exact_sampler(ps, diag_samples);
    } else {
      const auto ref = reference_sampler(target, diag_samples, ps);
      p_samples_ = ref.samples;
      reference_warning_ = ref.warning;
    }
  }

  void operator()(IterationRecord& rec, const SampledDensity& q) const {
    auto& m = rec.metrics;
    const auto qs = derive_seed(seed_, {0x9b, static_cast<std::uint64_t>(rec.n)});
    if (target_.log_norm) {
      const auto h = hellinger_hat(normalized(target_), q, diag_samples_, qs);
      m.hell_hat = h.hat;
      m.hell_hat_stderr = h.stderr_hat;
      m.hell_tilde = h.tilde;
      const auto fk = kl_from_samples(p_samples_, normalized(target_), q.log_density);
      m.fwd_kl = fk.value;
      m.fwd_kl_stderr = fk.stderr_value;
      m.rev_kl = reverse_kl(q, normalized(target_), diag_samples_, qs).value;
    } else {
      m.hell_tilde = hellinger_tilde(unnormalized(target_), q, diag_samples_, qs);
    }
    if (energy_samples_ > 0) {
      const Samples x = q.sample(derive_seed(seed_, {0x9c, static_cast<std::uint64_t>(rec.n)}), energy_samples_);
      m.energy = energy_distance(x, p_samples_.leftCols(std::min<Eigen::Index>(energy_samples_, p_samples_.cols())));
    }
  }

  /// Final report {hell_hat, hell_tilde, fwd_kl, rev_kl, tv, w1, energy, ess, n_samples, seed}.
  Json report(const SampledDensity& q) const {
    IterationRecord rec;
    rec.n = 0;
    (*this)(rec, q);
    auto opt = [](const std::optional<double>& v) { return v && std::isfinite(*v) ? Json(*v) : Json(nullptr); };
    Json j;
    j["hell_hat"] = opt(rec.metrics.hell_hat);
    j["hell_tilde"] = opt(rec.metrics.hell_tilde);
    j["fwd_kl"] = opt(rec.metrics.fwd_kl);
    j["rev_kl"] = opt(rec.metrics.rev_kl);
    j["energy"] = opt(rec.metrics.energy);
    std::optional<double> tv;
    if (target_.quad_grid && target_.log_norm) tv = tv_quadrature(normalized(target_), q.log_density, *target_.quad_grid);
    j["tv"] = opt(tv);
    std::optional<double> w1;
    if (target_.dim == 1) {
      const Samples x = q.sample(derive_seed(seed_, {0x9d}), p_samples_.cols());
      w1 = wasserstein1_1d({x.data(), x.data() + x.size()}, {p_samples_.data(), p_samples_.data() + p_samples_.size()});
    }
    j["w1"] = opt(w1);
    const auto is = importance_estimates(unnormalized(target_), std::nullopt, q,
                                         [](const Eigen::Ref<const Eigen::VectorXd>&) { return 1.0; }, diag_samples_,
                                         derive_seed(seed_, {0x9e}));
    j["ess"] = is.ess;
    j["n_samples"] = diag_samples_;
    j["seed"] = seed_;
    j["reference_sampler_warning"] = reference_warning_;
    return j;
  }

 private:
  const TargetDensity& target_;
  std::uint64_t seed_;
  int diag_samples_;
  int energy_samples_;
  Samples p_samples_;
  bool reference_warning_ = false;
};

struct TrialOutcome {
  RunTrace trace;
  Json mixture;
  Json diagnostics;
};

inline TrialOutcome run_trial(const TargetDensity& target, const std::string& method, const ExperimentConfig& cfg,
                              std::uint64_t trial_seed) {
  AdamConfig adam;
  adam.iters = cfg.opt_iters;
  adam.grad_samples = cfg.grad_samples;
  const int energy = is_logistic_target(cfg.target) ? cfg.energy_samples : 0;
  const MetricsEvaluator metrics(target, trial_seed, cfg.diag_samples, energy);
  const IterationObserver observe = [&metrics](IterationRecord& r, const SampledDensity& q) { metrics(r, q); };

  TrialOutcome out;
  if (method == "ubvi") {
    UbviConfig uc;
    uc.n_components = cfg.n_components;
    uc.init_trials = cfg.init_trials;
    uc.est_samples = std::max(cfg.est_samples, cfg.grad_samples);
    uc.adam = adam;
    uc.seed = trial_seed;
    auto res = run_ubvi(target, uc, observe);
    out.trace = std::move(res.trace);
    out.mixture = mixture_to_json(res.mixture);
    if (!res.mixture.empty()) out.diagnostics = metrics.report(as_sampled(res.mixture));
  } else if (method == "bvi" || method == "bvi-plus") {
    BviConfig bc;
    bc.n_components = cfg.n_components;
    bc.reg_schedule = RegSchedule::parse(cfg.reg_schedule);
    bc.stabilization_eps = method == "bvi-plus" ? 1e-3 : 0.0;
    bc.adam = adam;
    bc.init_trials = cfg.init_trials;
    bc.weight_opt_iters = cfg.weight_opt_iters;
    bc.seed = trial_seed;
    auto res = run_bvi(target, bc, observe);
    out.trace = std::move(res.trace);
    out.mixture = mixture_to_json(res.mixture);
    if (!res.mixture.empty()) out.diagnostics = metrics.report(as_sampled(res.mixture));
  } else if (method == "vi") {
    auto res = run_vi(target, adam, trial_seed, std::nullopt, observe);
    out.trace = std::move(res.trace);
    out.mixture = mixture_to_json(WeightedMixture::from_parts({res.component}, Eigen::VectorXd::Ones(1)));
    if (!out.trace.aborted) out.diagnostics = metrics.report(as_sampled(res.component));
  } else {
    throw std::invalid_argument("unknown method '" + method + "'");
  }
  if (out.diagnostics.is_null()) out.diagnostics = Json::object();
  out.diagnostics["method"] = method;
  out.diagnostics["target"] = cfg.target;
  out.diagnostics["aborted"] = out.trace.aborted;
  if (!out.trace.diagnostic.empty()) out.diagnostics["diagnostic"] = out.trace.diagnostic;
  if (out.trace.j1) out.diagnostics["j1"] = *out.trace.j1;
  if (out.trace.tau_bound) out.diagnostics["tau_bound"] = *out.trace.tau_bound;
  return out;
}

inline std::string trace_file_name(const std::string& method, int trial) {
  return "trace_" + method + "_trial" + std::to_string(trial) + ".csv";
}

// ---- summary -------------------------------------------------------------

/// Percentile with linear interpolation between order statistics: position (n - 1) p.
inline double quantile_linear(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile_linear: empty input");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SummaryRow {
  std::string method;
  int n = 0;
  int count = 0;
  int degenerate = 0;
  std::map<std::string, std::vector<double>> values;  // column -> finite values across traces
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"hell_hat", "hell_tilde", "fwd_kl", "rev_kl", "cpu_time_s", "energy"};
  return cols;
}

/// Groups trace rows by (method, n). Throws on a header that is not the trace schema.
inline std::vector<SummaryRow> collect_traces(const std::vector<std::string>& files) {
  if (files.empty()) throw std::invalid_argument("summarize: no trace files");
  const auto header = detail::split_csv(kTraceHeader);
  std::map<std::pair<std::string, int>, SummaryRow> groups;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace: " + path);
    std::string line;
    if (!std::getline(in, line) || detail::split_csv(line) != header) {
      throw std::runtime_error("trace schema mismatch in " + path);
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = detail::split_csv(line);
      if (cells.size() != header.size()) throw std::runtime_error("malformed trace row in " + path);
      const int n = std::stoi(cells[2]);
      auto& row = groups[{cells[0], n}];
      row.method = cells[0];
      row.n = n;
      row.count += 1;
      row.degenerate += cells[11] == "1" ? 1 : 0;
      for (std::size_t c = 3; c < header.size() - 1; ++c) {
        if (cells[c].empty()) continue;
        const double v = std::stod(cells[c]);
        if (std::isfinite(v)) row.values[header[c]].push_back(v);
      }
    }
  }
  std::vector<SummaryRow> out;
  for (auto& [key, row] : groups) out.push_back(std::move(row));
  return out;
}

/// Median and quartiles per (method, n). When VI traces carry energies, energy is also
/// reported divided by the VI median energy.
inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  std::optional<double> vi_energy;
  for (const auto& r : rows) {
    if (r.method == "vi" && r.values.count("energy")) vi_energy = quantile_linear(r.values.at("energy"), 0.5);
  }
  os << "# percentiles use linear interpolation between order statistics at position (n-1)p\n";
  os << "method,n,count,degenerate";
  for (const auto& c : summary_columns()) os << ',' << c << "_median," << c << "_q25," << c << "_q75";
  os << ",energy_norm_median,energy_norm_q25,energy_norm_q75\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.n << ',' << r.count << ',' << r.degenerate;
    for (const auto& c : summary_columns()) {
      const auto it = r.values.find(c);
      if (it == r.values.end() || it->second.empty()) {
        os << ",,,";
        continue;
      }
      os << ',' << detail::fmt_num(quantile_linear(it->second, 0.5)) << ','
         << detail::fmt_num(quantile_linear(it->second, 0.25)) << ','
         << detail::fmt_num(quantile_linear(it->second, 0.75));
    }
    const auto it = r.values.find("energy");
    if (vi_energy && *vi_energy > 0 && it != r.values.end() && !it->second.empty()) {
      os << ',' << detail::fmt_num(quantile_linear(it->second, 0.5) / *vi_energy) << ','
         << detail::fmt_num(quantile_linear(it->second, 0.25) / *vi_energy) << ','
         << detail::fmt_num(quantile_linear(it->second, 0.75) / *vi_energy);
    } else {
      os << ",,,";
    }
    os << '\n';
  }
}

inline void summarize(const std::vector<std::string>& files, const std::string& out_path) {
  const auto rows = collect_traces(files);
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot write " + out_path);
  write_summary_csv(os, rows);
}

/// Runs every (method, trial) pair, writing per-trial trace CSV, mixture JSON and
/// diagnostics JSON plus summary.csv into out_dir. Returns 0, or 2 if any trial aborted.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const TargetDensity target = make_target(cfg.target, derive_seed(cfg.seed, {0xda7a}));

  struct Job {
    std::string method;
    int trial;
  };
  std::vector<Job> jobs;
  for (const auto& m : cfg.methods) {
    for (int t = 0; t < cfg.trials; ++t) jobs.push_back({m, t});
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> any_abort{false};
  std::mutex log_mu;
  std::exception_ptr failure;
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const auto& job = jobs[k];
      try {
        const auto outcome = run_trial(target, job.method, cfg, cfg.seed + static_cast<std::uint64_t>(job.trial));
        const fs::path dir(cfg.out_dir);
        const std::string stem = job.method + "_trial" + std::to_string(job.trial);
        {
          std::ofstream os(dir / trace_file_name(job.method, job.trial));
          write_trace_csv(os, outcome.trace, cfg.timing);
        }
        std::ofstream(dir / ("mixture_" + stem + ".json")) << outcome.mixture.dump(2) << '\n';
        std::ofstream(dir / ("diagnostics_" + stem + ".json")) << outcome.diagnostics.dump(2) << '\n';
        if (outcome.trace.aborted) any_abort = true;
        std::lock_guard<std::mutex> lock(log_mu);
        log << job.method << " trial " << job.trial << (outcome.trace.aborted ? " aborted: " + outcome.trace.diagnostic : " done")
            << '\n';
      } catch (...) {
        std::lock_guard<std::mutex> lock(log_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(cfg.jobs, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<std::string> files;
  for (const auto& j : jobs) files.push_back((fs::path(cfg.out_dir) / trace_file_name(j.method, j.trial)).string());
  summarize(files, (fs::path(cfg.out_dir) / "summary.csv").string());
  return any_abort ? 2 : 0;
}

}  // namespace ubvi

#endif  // UBVI_EXPERIMENT_HPP
