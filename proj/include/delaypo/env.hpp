#pragma once

// Tabular episodic MDP model: layered transition kernels, exact planning
// primitives (policy evaluation, occupancy measures, best policy in
// hindsight) and bandit-feedback episode sampling.
//
// Conventions: steps are 0-based h = 0..H-1; kernels exist for h = 0..H-2
// (the last step has no transition). p[h] is an (S*A) x S row-stochastic
// matrix with row index s*A + a. All probability vectors are validated and
// renormalized once, at construction, and never again.

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "delaypo/errors.hpp"
#include "delaypo/rng.hpp"

namespace delaypo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kProbSumTol = 1e-12;

struct TabularMdp {
  int S = 0;
  int A = 0;
  int H = 0;
  int s_init = 0;
  std::vector<MatrixXd> p;  // H-1 kernels, (S*A) x S, rows renormalized

  TabularMdp() = default;
  TabularMdp(int S, int A, int H, int s_init, std::vector<MatrixXd> kernel);

  Eigen::Index row(int s, int a) const {
    return static_cast<Eigen::Index>(s) * A + a;
  }
};

// Per-episode cost tables c[h](s,a) in [0,1].
struct CostFunction {
  std::vector<MatrixXd> c;  // H tables, S x A

  CostFunction() = default;
  explicit CostFunction(std::vector<MatrixXd> tables);
};

// Stochastic policy pi[h](s,a) = probability of action a at (s,h).
struct Policy {
  std::vector<MatrixXd> pi;  // H tables, S x A, rows renormalized

  Policy() = default;
  explicit Policy(std::vector<MatrixXd> tables);
};

Policy uniform_policy(int S, int A, int H);

// One sampled episode under bandit feedback: only costs along the visited
// (s,a) pairs are recorded. cost_to_go[h] = sum of observed costs from h on.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  VectorXd observed_costs;
  VectorXd cost_to_go;
};

struct ValueTables {
  std::vector<VectorXd> V;  // H vectors over states
  std::vector<MatrixXd> Q;  // H tables, S x A
};

struct OccupancyMeasure {
  std::vector<MatrixXd> q;  // H tables, S x A; each sums to 1

  VectorXd marginal(int h) const { return q[h].rowwise().sum(); }
};

// Backward recursion V_h = <pi_h, Q_h>, Q_h = c_h + p_h V_{h+1}, V_H = 0.
ValueTables evaluate(const TabularMdp& mdp, const Policy& policy,
                     const CostFunction& cost);

// Forward recursion from the point mass on s_init.
OccupancyMeasure occupancy(const TabularMdp& mdp, const Policy& policy);

Trajectory sample_episode(const TabularMdp& mdp, const Policy& policy,
                          const CostFunction& cost, Rng& rng);

struct BestInHindsight {
  Policy policy;       // deterministic, ties broken by lowest action index
  double total_value;  // sum over episodes of its value
};

// One backward DP on the aggregated cost (value is linear in cost).
BestInHindsight best_in_hindsight(const TabularMdp& mdp,
                                  const std::vector<CostFunction>& costs);

// Both sides of the value-difference identity
//   V^pi - V^pi* = sum_h E_{s ~ q^pi*_h} <pi_h(.|s) - pi*_h(.|s), Q^pi_h(s,.)>
// computed through independent recursions; returns (lhs, rhs).
std::pair<double, double> value_difference_check(const TabularMdp& mdp,
                                                 const Policy& pi,
                                                 const Policy& pi_star,
                                                 const CostFunction& cost);

namespace detail {
// Validates a nonnegative row that sums to 1 within kProbSumTol, then
// renormalizes it exactly once.
void normalize_row(Eigen::Ref<Eigen::RowVectorXd> row, const char* what);
}  // namespace detail

}  // namespace delaypo
