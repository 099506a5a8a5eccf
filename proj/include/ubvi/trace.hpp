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

#ifndef UBVI_TRACE_HPP
#define UBVI_TRACE_HPP

#include <time.h>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ubvi/expfam.hpp"

namespace ubvi {

/// CPU time of the calling thread, in seconds.
inline double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

/// Accumulates thread CPU time across resume/pause pairs so that
/// diagnostic work can be excluded from the reported algorithm time.
class CpuStopwatch {
 public:
  void resume() {
    if (!running_) {
      start_ = thread_cpu_seconds();
      running_ = true;
    }
  }
  void pause() {
    if (running_) {
      total_ += thread_cpu_seconds() - start_;
      running_ = false;
    }
  }
  double elapsed() const { return running_ ? total_ + thread_cpu_seconds() - start_ : total_; }

 private:
  double total_ = 0.0;
  double start_ = 0.0;
  bool running_ = false;
};

/// Divergence estimates attached to one iteration; absent values stay empty.
struct IterationMetrics {
  std::optional<double> hell_hat;
  std::optional<double> hell_hat_stderr;
  std::optional<double> hell_tilde;
  std::optional<double> fwd_kl;
  std::optional<double> fwd_kl_stderr;
  std::optional<double> rev_kl;
  std::optional<double> energy;
};

struct IterationRecord {
  int n = 0;  // number of components after this iteration (attempted count for degenerate steps)
  GaussComponent component;
  Eigen::VectorXd weights;
  Eigen::VectorXd d;  // cached <f, g_i> estimates on the run's common scale (UBVI only)
  Eigen::MatrixXd z;  // pairwise affinities (UBVI only)
  double objective = std::numeric_limits<double>::quiet_NaN();
  double cpu_time_s = 0.0;  // cumulative, excludes metric evaluation
  bool near_singular = false;
  bool weight_degenerate = false;
  bool retried = false;
  bool degenerate = false;
  IterationMetrics metrics;
};

struct RunTrace {
  std::string method;
  std::uint64_t trial_seed = 0;
  std::vector<IterationRecord> records;
  std::optional<double> j1;
  std::optional<double> tau_bound;
  bool aborted = false;
  std::string diagnostic;
};

inline constexpr const char* kTraceHeader =
    "method,trial_seed,n,cpu_time_s,hell_hat,hell_tilde,fwd_kl,rev_kl,j1,tau_bound,energy,degenerate";

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? fmt_num(*v) : std::string();
}

}  // namespace detail

/// One row per iteration record. Non-finite or unavailable values are written as empty fields.
/// With `timing` false the CPU column is written as 0 so reruns compare byte for byte.
inline void write_trace_csv(std::ostream& os, const RunTrace& t, bool timing = true) {
  os << kTraceHeader << '\n';
  for (const auto& r : t.records) {
    const auto& m = r.metrics;
    os << t.method << ',' << t.trial_seed << ',' << r.n << ',' << (timing ? detail::fmt_num(r.cpu_time_s) : "0") << ','
       << detail::fmt_opt(m.hell_hat) << ',' << detail::fmt_opt(m.hell_tilde) << ',' << detail::fmt_opt(m.fwd_kl)
       << ',' << detail::fmt_opt(m.rev_kl) << ',' << detail::fmt_opt(t.j1) << ',' << detail::fmt_opt(t.tau_bound)
       << ',' << detail::fmt_opt(m.energy) << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
}

}  // namespace ubvi

#endif  // UBVI_TRACE_HPP
