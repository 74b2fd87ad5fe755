#pragma once

// Run output shared by every learner: exact per-episode values, regret
// series against the best-in-hindsight policy of each prefix, delay
// diagnostics, and the audit counters collected while a run executes.

#include <cstdint>
#include <limits>
#include <vector>

#include "delaypo/env.hpp"

namespace delaypo {

struct RunOptions {
  // Feedback of episodes with delay > skip_beta is played but discarded.
  double skip_beta = std::numeric_limits<double>::infinity();
  // Per-episode invariant checks (ratio inequality, magnitude bounds).
  // Violations are counted in the report, never silently clipped.
  bool audit = true;
  bool record_policies = false;
  // dapo-unknown test mode: confidence sets collapse onto the true kernel;
  // the run must then coincide with dapo-known step for step.
  bool exact_confidence = false;
  // dapo-linear test mode: bonus propagation takes exact expectations
  // through the kernel backdoor instead of sampling one successor.
  bool deterministic_bonus = false;
  // dapo-linear: exact inverse-covariance oracle instead of sampled MGR.
  bool exact_sigma = false;
  // dapo-linear: > 0 estimates the learner value by this many Monte-Carlo
  // rollouts (standard error recorded) instead of the exact backdoor.
  int value_rollouts = 0;
};

struct RegretReport {
  // learner_value[k-1] = V^{pi^k}_1(s_init; c^k), computed exactly.
  std::vector<double> learner_value;
  // cum_regret[k-1] = sum_{k'<=k} learner_value - best-in-hindsight total
  // over the first k cost functions.
  std::vector<double> cum_regret;
  // Standard error of learner_value when it had to be estimated (linear
  // environments without an exact backdoor); zero otherwise.
  std::vector<double> value_std_error;
  double best_total = 0.0;  // best-in-hindsight total over all K episodes

  std::vector<std::int64_t> delay;  // echo of the schedule
  std::vector<int> arrivals;        // m^k, counting the final flush
  std::int64_t total_delay = 0;     // D
  std::int64_t max_delay = 0;       // d_max
  int skipped = 0;

  // Audit counters (zero in a healthy run).
  std::int64_t ratio_violations = 0;
  std::int64_t magnitude_violations = 0;
  std::int64_t sandwich_violations = 0;

  // Diagnostics. max_policy_weight_ratio tracks
  // max over arrivals of max_a r * pi^{arrival} / pi^{source}; the
  // delay-adapted ratio keeps it at most 1, the naive baseline does not.
  double max_policy_weight_ratio = 0.0;
  double max_abs_qhat = 0.0;
  double max_local_bonus = 0.0;
  double max_propagated_bonus = 0.0;

  std::vector<Policy> policies;  // filled when record_policies

  double final_regret() const { return cum_regret.empty() ? 0.0 : cum_regret.back(); }
};

}  // namespace delaypo
