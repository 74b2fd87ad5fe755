#pragma once

// Delayed exponential-weights updater shared by all DAPO variants, plus
// executable forms of the delayed-Hedge regret bounds and the element-wise
// policy-drift bound. Losses are accumulated in the log domain (running
// cum_loss, probabilities materialized with max subtraction), which keeps
// K ~ 1e5 updates stable without flooring probabilities.

#include <Eigen/Dense>
#include <vector>

#include "delaypo/delay.hpp"
#include "delaypo/env.hpp"
#include "delaypo/errors.hpp"

namespace delaypo {

using Eigen::VectorXd;

// One per (state, step). pi(a) is proportional to exp(-eta * cum_loss[a]).
struct HedgeState {
  VectorXd cum_loss;

  HedgeState() = default;
  explicit HedgeState(int num_actions) : cum_loss(VectorXd::Zero(num_actions)) {}
};

// Materializes the distribution; strictly positive and normalized.
VectorXd hedge_policy(const HedgeState& state, double eta);

// softmax(-eta * loss) relative to a given base distribution; the one-step
// update pi~ of the drift lemma.
VectorXd hedge_step(const VectorXd& pi, const VectorXd& loss, double eta);

// Adds the arrived losses to the running sum. Empty arrival set is a no-op.
HedgeState exp_update(HedgeState state, const std::vector<VectorXd>& arrived,
                      double eta);

struct HedgeRegretAudit {
  double measured = 0.0;        // sum_k <pi^{k+d^k} - pi*, l^k>
  double bound_corollary = 0.0; // ln A/eta + 2 eta sum pi l^2 + 2 eta K M^2
  double bound_m_form = 0.0;    // ln A/eta + eta sum pi m^{k+d^k} l^2
  bool m_form_applicable = false;  // eta * (arrived batch sum) > -1 held
  double M = 0.0;               // max(0, -min loss)
  bool ok = false;              // measured <= every applicable bound
};

// Runs the delayed update on the loss stream and evaluates both regret
// bounds against the best fixed action in hindsight. Delays are truncated
// so that all feedback arrives by the final round.
HedgeRegretAudit hedge_regret_audit(const std::vector<VectorXd>& losses,
                                    const DelaySchedule& delays, double eta);

struct DriftBoundAudit {
  VectorXd drift;  // pi~ - pi
  VectorXd lower;  // -eta pi(a) (l(a) + M)
  VectorXd upper;  // eta pi~(a) sum_a' pi(a') (l(a') + M)
  bool ok = false;
};

// Element-wise drift bound for one update step with losses >= -M.
DriftBoundAudit drift_bound_audit(const VectorXd& pi, double eta,
                                  const VectorXd& loss, double M);

// One independent HedgeState per (step, state). States never interact, so
// updates within an episode could run in parallel across states.
struct HedgeGrid {
  std::vector<std::vector<HedgeState>> grid;  // [h][s]

  HedgeGrid(int S, int A, int H)
      : grid(H, std::vector<HedgeState>(S, HedgeState(A))) {}

  Policy materialize(double eta) const {
    std::vector<Eigen::MatrixXd> tables;
    tables.reserve(grid.size());
    for (const auto& row : grid) {
      Eigen::MatrixXd t(row.size(), row[0].cum_loss.size());
      for (std::size_t s = 0; s < row.size(); ++s)
        t.row(s) = hedge_policy(row[s], eta).transpose();
      tables.push_back(std::move(t));
    }
    return Policy(std::move(tables));
  }

  // Applies one drained batch, already summed into per-step S x A tables.
  void apply(const std::vector<Eigen::MatrixXd>& loss, double eta) {
    for (std::size_t h = 0; h < grid.size(); ++h)
      for (std::size_t s = 0; s < grid[h].size(); ++s)
        grid[h][s] = exp_update(std::move(grid[h][s]),
                                {loss[h].row(s).transpose()}, eta);
  }
};

}  // namespace delaypo
