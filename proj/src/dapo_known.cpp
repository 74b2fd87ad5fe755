#include "delaypo/dapo_known.hpp"

#include <cmath>
#include <map>
#include <string>

#include "delaypo/hedge.hpp"

namespace delaypo {

namespace testing {
namespace {
bool g_ratio_fault = false;
}
void set_ratio_fault(bool on) { g_ratio_fault = on; }
bool ratio_fault() { return g_ratio_fault; }
}  // namespace testing

KnownParams dapo_known_default_params(int H, int S, int A, std::int64_t K,
                                      std::int64_t D) {
  if (H < 1 || S < 1 || A < 1 || K < 1 || D < 0)
    throw ConfigError("default params: arguments must be positive");
  const double h = H, s = S, a = A, k = K, d = D;
  const double eta = 1.0 / std::sqrt(h * h * s * a * k + h * h * h * h * (k + d));
  return KnownParams{eta, 2.0 * eta * h};
}

std::vector<MatrixXd> ratio(const Policy& pi_j, const Policy& pi_now) {
  const int H = static_cast<int>(pi_j.pi.size());
  std::vector<MatrixXd> r(H);
  for (int h = 0; h < H; ++h) {
    const MatrixXd& pj = pi_j.pi[h];
    const MatrixXd& pn = pi_now.pi[h];
    MatrixXd rh(pj.rows(), pj.cols());
    for (Eigen::Index s = 0; s < pj.rows(); ++s)
      for (Eigen::Index a = 0; a < pj.cols(); ++a) {
        const double denom = std::max(pj(s, a), pn(s, a));
        const double num = testing::ratio_fault() ? pn(s, a) : pj(s, a);
        rh(s, a) = denom == 0.0 ? 1.0 : num / denom;
      }
    r[h] = std::move(rh);
  }
  return r;
}

std::vector<MatrixXd> q_hat(const Trajectory& traj,
                            const std::vector<MatrixXd>& r,
                            const OccupancyMeasure& q_j, const Policy& pi_j,
                            double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("q_hat: gamma must be > 0");
  const int H = static_cast<int>(pi_j.pi.size());
  std::vector<MatrixXd> out(H);
  for (int h = 0; h < H; ++h) {
    out[h] = MatrixXd::Zero(pi_j.pi[h].rows(), pi_j.pi[h].cols());
    const int s = traj.states[h];
    const int a = traj.actions[h];
    const double denom =
        q_j.marginal(h)[s] * pi_j.pi[h](s, a) + gamma;
    out[h](s, a) = r[h](s, a) * traj.cost_to_go[h] / denom;
  }
  return out;
}

std::vector<VectorXd> local_bonus(const std::vector<MatrixXd>& r,
                                  const Policy& pi_now,
                                  const OccupancyMeasure& q_j,
                                  const Policy& pi_j, double gamma, int H) {
  std::vector<VectorXd> b(H);
  for (int h = 0; h < H; ++h) {
    const Eigen::Index S = pi_j.pi[h].rows();
    const Eigen::Index A = pi_j.pi[h].cols();
    const VectorXd marg = q_j.marginal(h);
    b[h] = VectorXd::Zero(S);
    for (Eigen::Index s = 0; s < S; ++s) {
      double sum = 0.0;
      for (Eigen::Index a = 0; a < A; ++a)
        sum += pi_now.pi[h](s, a) * r[h](s, a) /
               (marg[s] * pi_j.pi[h](s, a) + gamma);
      b[h][s] = 3.0 * gamma * H * sum;
    }
  }
  return b;
}

std::vector<MatrixXd> bonus_bellman(const TabularMdp& mdp, const Policy& pi_j,
                                    const std::vector<VectorXd>& b) {
  std::vector<MatrixXd> B(mdp.H);
  VectorXd w_next;  // w(s') = <pi_{h+1}(.|s'), B_{h+1}(s',.)>
  for (int h = mdp.H - 1; h >= 0; --h) {
    B[h].resize(mdp.S, mdp.A);
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a) {
        double v = b[h][s];
        if (h < mdp.H - 1) v += mdp.p[h].row(mdp.row(s, a)).dot(w_next);
        B[h](s, a) = v;
      }
    if (h > 0) {
      w_next.resize(mdp.S);
      for (int s = 0; s < mdp.S; ++s)
        w_next[s] = pi_j.pi[h].row(s).dot(B[h].row(s));
    }
  }
  return B;
}

namespace detail {

void finalize_regret(const TabularMdp& mdp,
                     const std::vector<CostFunction>& costs,
                     RegretReport& report) {
  const int K = static_cast<int>(costs.size());
  report.cum_regret.resize(K);
  // Backward DP on the running aggregated cost gives the best-in-hindsight
  // value of every prefix.
  std::vector<MatrixXd> agg(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
  double cum_value = 0.0;
  for (int k = 0; k < K; ++k) {
    for (int h = 0; h < mdp.H; ++h) agg[h] += costs[k].c[h];
    VectorXd v_next = VectorXd::Zero(mdp.S);
    VectorXd v_here(mdp.S);
    for (int h = mdp.H - 1; h >= 0; --h) {
      for (int s = 0; s < mdp.S; ++s) {
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < mdp.A; ++a) {
          double q = agg[h](s, a);
          if (h < mdp.H - 1) q += mdp.p[h].row(mdp.row(s, a)).dot(v_next);
          best = std::min(best, q);
        }
        v_here[s] = best;
      }
      v_next = v_here;
    }
    cum_value += report.learner_value[k];
    report.cum_regret[k] = cum_value - v_next[mdp.s_init];
    if (k == K - 1) report.best_total = v_next[mdp.s_init];
  }
}

RegretReport run_dapo_known_flags(const TabularMdp& mdp,
                                  const std::vector<CostFunction>& costs,
                                  const DelaySchedule& schedule,
                                  const DapoKnownConfig& config, Rng& rng,
                                  const RunOptions& options,
                                  const KnownRunFlags& flags) {
  const int K = config.K;
  if (static_cast<int>(costs.size()) != K || schedule.K() != K)
    throw StructuralError("run: costs/schedule length must equal K");
  if (!(config.eta > 0.0) || !(config.gamma > 0.0))
    throw ConfigError("run: eta and gamma must be > 0");
  const double H = mdp.H;
  const double qhat_cap = H / config.gamma;

  struct EpisodeRecord {
    Policy policy;
    OccupancyMeasure occ;
    Trajectory traj;
  };

  HedgeGrid hedge(mdp.S, mdp.A, mdp.H);
  FeedbackBuffer<EpisodeRecord> buffer;
  const std::vector<bool> skip = skip_filter(schedule, options.skip_beta);

  RegretReport report;
  report.learner_value.resize(K);
  report.value_std_error.assign(K, 0.0);
  report.delay = schedule.d;
  report.arrivals.resize(K);
  report.total_delay = schedule.total();
  report.max_delay = schedule.max_delay();

  const double tol = 1e-9;
  for (int k = 1; k <= K; ++k) {
    const Policy pi_k = hedge.materialize(config.eta);
    report.learner_value[k - 1] =
        evaluate(mdp, pi_k, costs[k - 1]).V[0][mdp.s_init];
    if (options.record_policies) report.policies.push_back(pi_k);

    Trajectory traj = sample_episode(mdp, pi_k, costs[k - 1], rng);
    if (skip[k - 1]) {
      ++report.skipped;
    } else {
      buffer.push(k, schedule.d[k - 1],
                  EpisodeRecord{pi_k, occupancy(mdp, pi_k), std::move(traj)});
    }

    auto arrivals = buffer.drain_at(k, /*include_all_pending=*/k == K);
    report.arrivals[k - 1] = static_cast<int>(arrivals.size());
    if (arrivals.empty()) continue;

    std::vector<MatrixXd> batch(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
    for (auto& item : arrivals) {
      const EpisodeRecord& rec = item.payload;
      std::vector<MatrixXd> r = ratio(rec.policy, pi_k);
      if (flags.force_ratio_one)
        for (auto& rh : r) rh.setOnes();
      const Policy& bonus_policy =
          flags.bonus_with_source_policy ? rec.policy : pi_k;
      std::vector<MatrixXd> qh =
          q_hat(rec.traj, r, rec.occ, rec.policy, config.gamma);
      std::vector<VectorXd> b = local_bonus(r, bonus_policy, rec.occ,
                                            rec.policy, config.gamma, mdp.H);
      std::vector<MatrixXd> B = bonus_bellman(mdp, rec.policy, b);

      for (int h = 0; h < mdp.H; ++h) {
        if (!qh[h].allFinite() || !b[h].allFinite() || !B[h].allFinite())
          throw NumericError("dapo-known: non-finite table at episode " +
                             std::to_string(k) + ", arrival " +
                             std::to_string(item.source) + ", step " +
                             std::to_string(h + 1));
        if (options.audit) {
          for (int s = 0; s < mdp.S; ++s)
            for (int a = 0; a < mdp.A; ++a) {
              const double damped = r[h](s, a) * pi_k.pi[h](s, a);
              if (damped > rec.policy.pi[h](s, a) + tol)
                ++report.ratio_violations;
              if (rec.policy.pi[h](s, a) > 0.0) {
                report.max_policy_weight_ratio =
                    std::max(report.max_policy_weight_ratio,
                             damped / rec.policy.pi[h](s, a));
              }
            }
          if (qh[h].minCoeff() < -tol || qh[h].maxCoeff() > qhat_cap + tol ||
              b[h].minCoeff() < -tol || b[h].maxCoeff() > 3.0 * H + tol ||
              B[h].minCoeff() < -tol || B[h].maxCoeff() > 3.0 * H * H + tol)
            ++report.magnitude_violations;
          report.max_abs_qhat =
              std::max(report.max_abs_qhat, qh[h].cwiseAbs().maxCoeff());
          report.max_local_bonus =
              std::max(report.max_local_bonus, b[h].maxCoeff());
          report.max_propagated_bonus =
              std::max(report.max_propagated_bonus, B[h].maxCoeff());
        }
        batch[h] += qh[h] - B[h];
      }
    }
    hedge.apply(batch, config.eta);
  }

  finalize_regret(mdp, costs, report);
  return report;
}

}  // namespace detail

RegretReport run_dapo_known(const TabularMdp& mdp,
                            const std::vector<CostFunction>& costs,
                            const DelaySchedule& schedule,
                            const DapoKnownConfig& config, Rng& rng,
                            const RunOptions& options) {
  return detail::run_dapo_known_flags(mdp, costs, schedule, config, rng,
                                      options, detail::KnownRunFlags{});
}

}  // namespace delaypo
