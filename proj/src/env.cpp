#include "delaypo/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace delaypo {

namespace detail {

void normalize_row(Eigen::Ref<Eigen::RowVectorXd> row, const char* what) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    const double v = row[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw StructuralError(std::string(what) + ": negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTol) {
    throw StructuralError(std::string(what) + ": probabilities sum to " +
                          std::to_string(sum));
  }
  row /= sum;
}

}  // namespace detail

TabularMdp::TabularMdp(int S_, int A_, int H_, int s_init_,
                       std::vector<MatrixXd> kernel)
    : S(S_), A(A_), H(H_), s_init(s_init_), p(std::move(kernel)) {
  if (S < 1 || A < 1 || H < 1) throw StructuralError("TabularMdp: S, A, H must be >= 1");
  if (s_init < 0 || s_init >= S) throw StructuralError("TabularMdp: s_init out of range");
  if (static_cast<int>(p.size()) != H - 1)
    throw StructuralError("TabularMdp: expected H-1 kernel matrices");
  for (auto& ph : p) {
    if (ph.rows() != static_cast<Eigen::Index>(S) * A || ph.cols() != S)
      throw StructuralError("TabularMdp: kernel must be (S*A) x S");
    for (Eigen::Index r = 0; r < ph.rows(); ++r)
      detail::normalize_row(ph.row(r), "TabularMdp kernel row");
  }
}

CostFunction::CostFunction(std::vector<MatrixXd> tables) : c(std::move(tables)) {
  for (const auto& ch : c) {
    if ((ch.array() < 0.0).any() || (ch.array() > 1.0).any() ||
        !ch.allFinite()) {
      throw StructuralError("CostFunction: entries must lie in [0,1]");
    }
  }
}

Policy::Policy(std::vector<MatrixXd> tables) : pi(std::move(tables)) {
  for (auto& ph : pi) {
    for (Eigen::Index s = 0; s < ph.rows(); ++s)
      detail::normalize_row(ph.row(s), "Policy row");
  }
}

Policy uniform_policy(int S, int A, int H) {
  std::vector<MatrixXd> tables(H, MatrixXd::Constant(S, A, 1.0 / A));
  return Policy(std::move(tables));
}

namespace {

void check_shapes(const TabularMdp& mdp, const Policy& policy) {
  if (static_cast<int>(policy.pi.size()) != mdp.H)
    throw StructuralError("policy horizon does not match MDP");
  for (const auto& ph : policy.pi)
    if (ph.rows() != mdp.S || ph.cols() != mdp.A)
      throw StructuralError("policy table must be S x A");
}

void check_shapes(const TabularMdp& mdp, const CostFunction& cost) {
  if (static_cast<int>(cost.c.size()) != mdp.H)
    throw StructuralError("cost horizon does not match MDP");
  for (const auto& ch : cost.c)
    if (ch.rows() != mdp.S || ch.cols() != mdp.A)
      throw StructuralError("cost table must be S x A");
}

}  // namespace

ValueTables evaluate(const TabularMdp& mdp, const Policy& policy,
                     const CostFunction& cost) {
  check_shapes(mdp, policy);
  check_shapes(mdp, cost);
  ValueTables out;
  out.V.assign(mdp.H, VectorXd::Zero(mdp.S));
  out.Q.assign(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
  VectorXd v_next = VectorXd::Zero(mdp.S);
  for (int h = mdp.H - 1; h >= 0; --h) {
    MatrixXd& Qh = out.Q[h];
    Qh = cost.c[h];
    if (h < mdp.H - 1) {
      for (int s = 0; s < mdp.S; ++s)
        for (int a = 0; a < mdp.A; ++a)
          Qh(s, a) += mdp.p[h].row(mdp.row(s, a)).dot(v_next);
    }
    for (int s = 0; s < mdp.S; ++s)
      out.V[h][s] = policy.pi[h].row(s).dot(Qh.row(s));
    v_next = out.V[h];
  }
  return out;
}

OccupancyMeasure occupancy(const TabularMdp& mdp, const Policy& policy) {
  check_shapes(mdp, policy);
  OccupancyMeasure out;
  out.q.assign(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
  VectorXd state_dist = VectorXd::Zero(mdp.S);
  state_dist[mdp.s_init] = 1.0;
  for (int h = 0; h < mdp.H; ++h) {
    out.q[h] = state_dist.asDiagonal() * policy.pi[h];
    if (h < mdp.H - 1) {
      VectorXd next = VectorXd::Zero(mdp.S);
      for (int s = 0; s < mdp.S; ++s)
        for (int a = 0; a < mdp.A; ++a)
          next += out.q[h](s, a) * mdp.p[h].row(mdp.row(s, a)).transpose();
      state_dist = next;
    }
  }
  return out;
}

Trajectory sample_episode(const TabularMdp& mdp, const Policy& policy,
                          const CostFunction& cost, Rng& rng) {
  check_shapes(mdp, policy);
  check_shapes(mdp, cost);
  Trajectory traj;
  traj.states.resize(mdp.H);
  traj.actions.resize(mdp.H);
  traj.observed_costs = VectorXd::Zero(mdp.H);
  traj.cost_to_go = VectorXd::Zero(mdp.H);
  int s = mdp.s_init;
  for (int h = 0; h < mdp.H; ++h) {
    traj.states[h] = s;
    const int a = rng.categorical(policy.pi[h].row(s).transpose());
    traj.actions[h] = a;
    traj.observed_costs[h] = cost.c[h](s, a);
    if (h < mdp.H - 1)
      s = rng.categorical(mdp.p[h].row(mdp.row(s, a)).transpose());
  }
  double tail = 0.0;
  for (int h = mdp.H - 1; h >= 0; --h) {
    tail += traj.observed_costs[h];
    traj.cost_to_go[h] = tail;
  }
  return traj;
}

BestInHindsight best_in_hindsight(const TabularMdp& mdp,
                                  const std::vector<CostFunction>& costs) {
  if (costs.empty())
    throw StructuralError("best_in_hindsight: empty cost list");
  for (const auto& c : costs) check_shapes(mdp, c);

  std::vector<MatrixXd> agg(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
  for (const auto& c : costs)
    for (int h = 0; h < mdp.H; ++h) agg[h] += c.c[h];

  // Backward DP on the aggregated cost; lowest action index wins ties.
  std::vector<MatrixXd> greedy(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
  VectorXd v_next = VectorXd::Zero(mdp.S);
  VectorXd v_here = VectorXd::Zero(mdp.S);
  for (int h = mdp.H - 1; h >= 0; --h) {
    for (int s = 0; s < mdp.S; ++s) {
      double best = std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < mdp.A; ++a) {
        double q = agg[h](s, a);
        if (h < mdp.H - 1) q += mdp.p[h].row(mdp.row(s, a)).dot(v_next);
        if (q < best) {
          best = q;
          best_a = a;
        }
      }
      greedy[h](s, best_a) = 1.0;
      v_here[s] = best;
    }
    v_next = v_here;
  }
  BestInHindsight out{Policy(std::move(greedy)), 0.0};
  for (const auto& c : costs)
    out.total_value += evaluate(mdp, out.policy, c).V[0][mdp.s_init];
  return out;
}

std::pair<double, double> value_difference_check(const TabularMdp& mdp,
                                                 const Policy& pi,
                                                 const Policy& pi_star,
                                                 const CostFunction& cost) {
  const ValueTables vt = evaluate(mdp, pi, cost);
  const ValueTables vt_star = evaluate(mdp, pi_star, cost);
  const double lhs = vt.V[0][mdp.s_init] - vt_star.V[0][mdp.s_init];

  const OccupancyMeasure q_star = occupancy(mdp, pi_star);
  double rhs = 0.0;
  for (int h = 0; h < mdp.H; ++h) {
    const VectorXd mass = q_star.marginal(h);
    for (int s = 0; s < mdp.S; ++s) {
      if (mass[s] == 0.0) continue;
      rhs += mass[s] *
             (pi.pi[h].row(s) - pi_star.pi[h].row(s)).dot(vt.Q[h].row(s));
    }
  }
  return {lhs, rhs};
}

}  // namespace delaypo
