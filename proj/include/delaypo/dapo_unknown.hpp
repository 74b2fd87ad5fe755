#pragma once

// Delay-adapted policy optimization for tabular MDPs with an unknown
// transition function: visit counters over arrived feedback, elementwise
// Bernstein confidence sets around the empirical kernel, extremal
// occupancy bounds, a two-part local bonus and an optimistic bonus Bellman
// recursion over the confidence set.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "delaypo/dapo_known.hpp"
#include "delaypo/delay.hpp"
#include "delaypo/env.hpp"
#include "delaypo/report.hpp"

namespace delaypo {

struct DapoUnknownConfig {
  double eta = 0.0;
  double gamma = 0.0;
  double delta = 0.1;
  int K = 0;
};

struct UnknownParams {
  double eta;
  double gamma;
};

// Theorem preset: eta = H (H^2 S A K + H^4 (K+D))^{-1/2}, gamma = 2 eta H.
UnknownParams dapo_unknown_default_params(int H, int S, int A, std::int64_t K,
                                          std::int64_t D);
// The proof of the same theorem instead sets eta without the leading H
// factor; exposed as a second preset.
UnknownParams dapo_unknown_default_params_proof(int H, int S, int A,
                                                std::int64_t K, std::int64_t D);

// Transition visit counts among episodes whose feedback has arrived.
struct Counters {
  std::vector<MatrixXd> n_sas;  // H-1 tables, (S*A) x S

  Counters() = default;
  Counters(int S, int A, int H);
  void add(const Trajectory& traj, int A);
  VectorXd n_sa(int h) const { return n_sas[h].rowwise().sum(); }
};

// Elementwise box around the empirical kernel, intersected with the
// simplex. radius = 4 sqrt(p_bar * iota / (n v 1)) + 10 iota / (n v 1).
struct ConfidenceSet {
  std::vector<MatrixXd> p_bar;   // H-1 tables, (S*A) x S
  std::vector<MatrixXd> radius;  // same shape, >= 0
};

double confidence_iota(int H, int S, int A, std::int64_t K, double delta);
ConfidenceSet build_confidence(const Counters& counters, double iota);
// Degenerate set {true kernel} used by the exact-confidence test mode.
ConfidenceSet exact_confidence_set(const TabularMdp& mdp);
bool kernel_in_confidence(const TabularMdp& mdp, const ConfidenceSet& conf,
                          double tol = 1e-12);

enum class ExtremizeSense { maximize, minimize };

// argmax/argmin of <p, v> over the box [max(0, p_bar - radius),
// min(1, p_bar + radius)] intersected with the simplex, by greedy water
// filling; ties broken by lowest index. radius == 0 returns p_bar itself.
VectorXd box_simplex_extremize(const VectorXd& p_bar, const VectorXd& radius,
                               const VectorXd& v, ExtremizeSense sense);

// q_hi[h][s] = max Pr[s_h = s] over kernels in the set (q_lo the min),
// computed per target by a backward DP on the indicator terminal value.
struct OccupancyBounds {
  std::vector<VectorXd> hi;  // H vectors over states
  std::vector<VectorXd> lo;
};

OccupancyBounds occupancy_bounds(const ConfidenceSet& conf, const Policy& pi,
                                 int s_init);

// b~_h(s) = 3 gamma H sum_a pi_now r / (q_hi(s) pi_j(a|s) + gamma)
// b-_h(s) = 2 H sum_a pi_now r (q_hi(s,a) - q_lo(s,a)) / (q_hi(s) pi_j(a|s) + gamma)
// with q_hi(s,a) = q_hi(s) pi_j(a|s). Total bounded by 5H.
struct UnknownBonus {
  std::vector<VectorXd> tilde;
  std::vector<VectorXd> bar;
  std::vector<VectorXd> total;
};

UnknownBonus bonuses_unknown(const std::vector<MatrixXd>& r,
                             const Policy& pi_now, const Policy& pi_j,
                             const OccupancyBounds& bounds, double gamma,
                             int H);

// B_h(s,a) = b_h(s) + max over the confidence set of the expected
// continuation under pi_j. Bounded by 5H^2 when b <= 5H.
std::vector<MatrixXd> optimistic_bonus_bellman(const ConfidenceSet& conf,
                                               const Policy& pi_j,
                                               const std::vector<VectorXd>& b);

// As the known-transition estimator with q_hi in place of the exact
// occupancy marginal.
std::vector<MatrixXd> q_hat_unknown(const Trajectory& traj,
                                    const std::vector<MatrixXd>& r,
                                    const OccupancyBounds& bounds,
                                    const Policy& pi_j, double gamma);

RegretReport run_dapo_unknown(const TabularMdp& mdp,
                              const std::vector<CostFunction>& costs,
                              const DelaySchedule& schedule,
                              const DapoUnknownConfig& config, Rng& rng,
                              const RunOptions& options = {});

}  // namespace delaypo
