#pragma once

// Delay-adapted policy optimization for tabular MDPs with a known
// transition function. Feedback of episode j arrives at the end of episode
// j + d^j; the estimator and the exploration bonus are damped by the ratio
//   r^j_h(s,a) = pi^j / max(pi^j, pi^{j+d^j}),
// which keeps r * pi^{arrival} <= pi^{source} elementwise.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "delaypo/delay.hpp"
#include "delaypo/env.hpp"
#include "delaypo/report.hpp"
#include "delaypo/rng.hpp"

namespace delaypo {

struct DapoKnownConfig {
  double eta = 0.0;
  double gamma = 0.0;
  int K = 0;
  double delta = 0.1;  // reporting only in the known-transition case
};

struct KnownParams {
  double eta;
  double gamma;
};

// eta = (H^2 S A K + H^4 (K+D))^{-1/2}, gamma = 2 eta H.
KnownParams dapo_known_default_params(int H, int S, int A, std::int64_t K,
                                      std::int64_t D);

// r[h](s,a) in (0,1]; 0/0 resolves to 1.
std::vector<MatrixXd> ratio(const Policy& pi_j, const Policy& pi_now);

// Importance-sampling estimate, nonzero only on the visited (s,a) of each
// step: r * L_h / (q^j_h(s) pi^j_h(a|s) + gamma). Bounded by H/gamma.
std::vector<MatrixXd> q_hat(const Trajectory& traj,
                            const std::vector<MatrixXd>& r,
                            const OccupancyMeasure& q_j, const Policy& pi_j,
                            double gamma);

// b_h(s) = sum_a 3 gamma H pi_now(a|s) r(s,a) / (q^j_h(s) pi^j(a|s) + gamma),
// bounded by 3H.
std::vector<VectorXd> local_bonus(const std::vector<MatrixXd>& r,
                                  const Policy& pi_now,
                                  const OccupancyMeasure& q_j,
                                  const Policy& pi_j, double gamma, int H);

// B = Q-function of pi_j under the state costs b (standard Bellman
// recursion, B_{H+1} = 0). Bounded by 3H^2 when b <= 3H.
std::vector<MatrixXd> bonus_bellman(const TabularMdp& mdp, const Policy& pi_j,
                                    const std::vector<VectorXd>& b);

RegretReport run_dapo_known(const TabularMdp& mdp,
                            const std::vector<CostFunction>& costs,
                            const DelaySchedule& schedule,
                            const DapoKnownConfig& config, Rng& rng,
                            const RunOptions& options = {});

namespace testing {
// Fault injection for the verify suite's mutation check: flips the ratio
// numerator so the r * pi^{arrival} <= pi^{source} invariant breaks.
void set_ratio_fault(bool on);
bool ratio_fault();
}  // namespace testing

namespace detail {
struct KnownRunFlags {
  bool force_ratio_one = false;        // naive delayed baseline
  bool bonus_with_source_policy = false;
};

RegretReport run_dapo_known_flags(const TabularMdp& mdp,
                                  const std::vector<CostFunction>& costs,
                                  const DelaySchedule& schedule,
                                  const DapoKnownConfig& config, Rng& rng,
                                  const RunOptions& options,
                                  const KnownRunFlags& flags);

// Regret accounting shared by every tabular run: fills cum_regret against
// the best-in-hindsight value of each prefix, plus best_total.
void finalize_regret(const TabularMdp& mdp,
                     const std::vector<CostFunction>& costs,
                     RegretReport& report);
}  // namespace detail

}  // namespace delaypo
