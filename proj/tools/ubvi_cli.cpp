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

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ubvi/experiment.hpp"

namespace {

std::vector<std::string> split_methods(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boosting variational inference experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run seeded trials and write traces, mixtures, diagnostics and a summary");
  std::string config_path;
  std::string target, methods, reg_schedule, out_dir;
  int n_components = 0, trials = 0, grad_samples = 0, est_samples = 0, opt_iters = 0, init_trials = 0, jobs = 0;
  int diag_samples = 0, energy_samples = 0, weight_iters = 0;
  std::uint64_t seed = 0;
  bool no_timing = false;
  run->add_option("--config", config_path, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  auto* o_target = run->add_option("--target", target, "gauss-mix | cauchy | banana | logistic | logistic-csv:<path>");
  auto* o_method = run->add_option("--method", methods, "ubvi | bvi | bvi-plus | vi (comma separated list allowed)");
  auto* o_n = run->add_option("--n-components", n_components, "boosting iterations");
  auto* o_trials = run->add_option("--trials", trials, "seeded trials per method");
  auto* o_seed = run->add_option("--seed", seed, "base seed; trial k uses seed + k");
  auto* o_grad = run->add_option("--grad-samples", grad_samples, "Monte Carlo draws per gradient");
  auto* o_est = run->add_option("--est-samples", est_samples, "draws for each cached <f, g_n> estimate");
  auto* o_iters = run->add_option("--opt-iters", opt_iters, "ADAM iterations per component");
  auto* o_init = run->add_option("--init-trials", init_trials, "initialization candidates per component");
  auto* o_reg = run->add_option("--reg-schedule", reg_schedule, "invsqrt | fixed:<v>");
  auto* o_jobs = run->add_option("--jobs", jobs, "trials run in parallel");
  auto* o_out = run->add_option("--out", out_dir, "output directory");
  auto* o_diag = run->add_option("--diag-samples", diag_samples, "draws per divergence estimate");
  auto* o_energy = run->add_option("--energy-samples", energy_samples, "draws per energy distance (logistic targets)");
  auto* o_wit = run->add_option("--weight-iters", weight_iters, "projected SGD iterations for BVI weights");
  run->add_flag("--no-timing", no_timing, "write 0 in the cpu_time_s column so reruns are byte-identical");

  auto* sum = app.add_subcommand("summarize", "aggregate trace CSVs into median/quartile rows per component count");
  std::vector<std::string> trace_files;
  std::string summary_out = "summary.csv";
  sum->add_option("traces", trace_files, "trace CSV files")->required()->check(CLI::ExistingFile);
  sum->add_option("-o,--output", summary_out, "summary CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sum) {
      ubvi::summarize(trace_files, summary_out);
      return 0;
    }
    ubvi::ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      cfg = ubvi::ExperimentConfig::from_json(ubvi::Json::parse(in), cfg);
    }
    if (*o_target) cfg.target = target;
    if (*o_method) cfg.methods = split_methods(methods);
    if (*o_n) cfg.n_components = n_components;
    if (*o_trials) cfg.trials = trials;
    if (*o_seed) cfg.seed = seed;
    if (*o_grad) cfg.grad_samples = grad_samples;
    if (*o_est) cfg.est_samples = est_samples;
    if (*o_iters) cfg.opt_iters = opt_iters;
    if (*o_init) cfg.init_trials = init_trials;
    if (*o_reg) cfg.reg_schedule = reg_schedule;
    if (*o_jobs) cfg.jobs = jobs;
    if (*o_out) cfg.out_dir = out_dir;
    if (*o_diag) cfg.diag_samples = diag_samples;
    if (*o_energy) cfg.energy_samples = energy_samples;
    if (*o_wit) cfg.weight_opt_iters = weight_iters;
    if (no_timing) cfg.timing = false;
    return ubvi::run_experiment(cfg, std::cerr);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
