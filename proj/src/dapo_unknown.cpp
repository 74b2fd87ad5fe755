#include "delaypo/dapo_unknown.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "delaypo/hedge.hpp"

namespace delaypo {

UnknownParams dapo_unknown_default_params(int H, int S, int A, std::int64_t K,
                                          std::int64_t D) {
  const KnownParams base = dapo_known_default_params(H, S, A, K, D);
  const double eta = H * base.eta;
  return UnknownParams{eta, 2.0 * eta * H};
}

UnknownParams dapo_unknown_default_params_proof(int H, int S, int A,
                                                std::int64_t K,
                                                std::int64_t D) {
  const KnownParams base = dapo_known_default_params(H, S, A, K, D);
  return UnknownParams{base.eta, base.gamma};
}

Counters::Counters(int S, int A, int H)
    : n_sas(H - 1, MatrixXd::Zero(static_cast<Eigen::Index>(S) * A, S)) {}

void Counters::add(const Trajectory& traj, int A) {
  for (std::size_t h = 0; h < n_sas.size(); ++h) {
    const Eigen::Index row =
        static_cast<Eigen::Index>(traj.states[h]) * A + traj.actions[h];
    n_sas[h](row, traj.states[h + 1]) += 1.0;
  }
}

double confidence_iota(int H, int S, int A, std::int64_t K, double delta) {
  if (!(delta > 0.0) || !(delta < 1.0))
    throw ConfigError("confidence: delta must be in (0,1)");
  return std::log(10.0 * H * S * A * static_cast<double>(K) / delta);
}

ConfidenceSet build_confidence(const Counters& counters, double iota) {
  ConfidenceSet conf;
  for (const MatrixXd& n : counters.n_sas) {
    MatrixXd p_bar(n.rows(), n.cols());
    MatrixXd radius(n.rows(), n.cols());
    for (Eigen::Index r = 0; r < n.rows(); ++r) {
      const double count = std::max(n.row(r).sum(), 1.0);
      for (Eigen::Index c = 0; c < n.cols(); ++c) {
        const double pb = n(r, c) / count;
        p_bar(r, c) = pb;
        radius(r, c) = 4.0 * std::sqrt(pb * iota / count) + 10.0 * iota / count;
      }
    }
    conf.p_bar.push_back(std::move(p_bar));
    conf.radius.push_back(std::move(radius));
  }
  return conf;
}

ConfidenceSet exact_confidence_set(const TabularMdp& mdp) {
  ConfidenceSet conf;
  conf.p_bar = mdp.p;
  for (const MatrixXd& ph : mdp.p)
    conf.radius.push_back(MatrixXd::Zero(ph.rows(), ph.cols()));
  return conf;
}

bool kernel_in_confidence(const TabularMdp& mdp, const ConfidenceSet& conf,
                          double tol) {
  for (int h = 0; h + 1 < mdp.H; ++h) {
    const MatrixXd diff = (mdp.p[h] - conf.p_bar[h]).cwiseAbs();
    if (((diff - conf.radius[h]).array() > tol).any()) return false;
  }
  return true;
}

VectorXd box_simplex_extremize(const VectorXd& p_bar, const VectorXd& radius,
                               const VectorXd& v, ExtremizeSense sense) {
  const Eigen::Index n = p_bar.size();
  if (radius.size() != n || v.size() != n)
    throw StructuralError("box_simplex_extremize: size mismatch");
  if ((radius.array() < 0.0).any())
    throw StructuralError("box_simplex_extremize: negative radius");
  if ((radius.array() == 0.0).all()) return p_bar;

  const VectorXd lo = (p_bar - radius).cwiseMax(0.0);
  const VectorXd hi = (p_bar + radius).cwiseMin(1.0);
  double remaining = 1.0 - lo.sum();
  if (remaining < -1e-9)
    throw StructuralError("box_simplex_extremize: infeasible box");
  remaining = std::max(remaining, 0.0);

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (sense == ExtremizeSense::maximize) {
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return v[a] > v[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  }

  VectorXd p = lo;
  for (Eigen::Index i : order) {
    if (remaining <= 0.0) break;
    const double take = std::min(remaining, hi[i] - lo[i]);
    p[i] += take;
    remaining -= take;
  }
  if (remaining > 1e-9)
    throw StructuralError("box_simplex_extremize: box cannot hold unit mass");
  return p;
}

OccupancyBounds occupancy_bounds(const ConfidenceSet& conf, const Policy& pi,
                                 int s_init) {
  const int H = static_cast<int>(pi.pi.size());
  const Eigen::Index S = pi.pi[0].rows();
  const Eigen::Index A = pi.pi[0].cols();
  OccupancyBounds out;
  out.hi.assign(H, VectorXd::Zero(S));
  out.lo.assign(H, VectorXd::Zero(S));
  out.hi[0][s_init] = 1.0;
  out.lo[0][s_init] = 1.0;

  for (int ht = 1; ht < H; ++ht) {
    for (Eigen::Index target = 0; target < S; ++target) {
      for (int pass = 0; pass < 2; ++pass) {
        const auto sense =
            pass == 0 ? ExtremizeSense::maximize : ExtremizeSense::minimize;
        VectorXd u = VectorXd::Zero(S);
        u[target] = 1.0;
        for (int h = ht - 1; h >= 0; --h) {
          VectorXd next(S);
          for (Eigen::Index s = 0; s < S; ++s) {
            double val = 0.0;
            for (Eigen::Index a = 0; a < A; ++a) {
              const Eigen::Index row = s * A + a;
              const VectorXd p =
                  box_simplex_extremize(conf.p_bar[h].row(row).transpose(),
                                        conf.radius[h].row(row).transpose(),
                                        u, sense);
              val += pi.pi[h](s, a) * p.dot(u);
            }
            next[s] = val;
          }
          u = next;
        }
        (pass == 0 ? out.hi : out.lo)[ht][target] = u[s_init];
      }
    }
  }
  return out;
}

UnknownBonus bonuses_unknown(const std::vector<MatrixXd>& r,
                             const Policy& pi_now, const Policy& pi_j,
                             const OccupancyBounds& bounds, double gamma,
                             int H) {
  UnknownBonus out;
  out.tilde.resize(H);
  out.bar.resize(H);
  out.total.resize(H);
  for (int h = 0; h < H; ++h) {
    const Eigen::Index S = pi_j.pi[h].rows();
    const Eigen::Index A = pi_j.pi[h].cols();
    out.tilde[h] = VectorXd::Zero(S);
    out.bar[h] = VectorXd::Zero(S);
    for (Eigen::Index s = 0; s < S; ++s) {
      double tilde = 0.0, bar = 0.0;
      for (Eigen::Index a = 0; a < A; ++a) {
        const double denom = bounds.hi[h][s] * pi_j.pi[h](s, a) + gamma;
        const double weight = pi_now.pi[h](s, a) * r[h](s, a);
        tilde += weight / denom;
        const double gap =
            (bounds.hi[h][s] - bounds.lo[h][s]) * pi_j.pi[h](s, a);
        bar += weight * gap / denom;
      }
      out.tilde[h][s] = 3.0 * gamma * H * tilde;
      out.bar[h][s] = 2.0 * H * bar;
    }
    out.total[h] = out.tilde[h] + out.bar[h];
  }
  return out;
}

std::vector<MatrixXd> optimistic_bonus_bellman(const ConfidenceSet& conf,
                                               const Policy& pi_j,
                                               const std::vector<VectorXd>& b) {
  const int H = static_cast<int>(pi_j.pi.size());
  const Eigen::Index S = pi_j.pi[0].rows();
  const Eigen::Index A = pi_j.pi[0].cols();
  std::vector<MatrixXd> B(H);
  VectorXd w_next;
  for (int h = H - 1; h >= 0; --h) {
    B[h].resize(S, A);
    for (Eigen::Index s = 0; s < S; ++s)
      for (Eigen::Index a = 0; a < A; ++a) {
        double v = b[h][s];
        if (h < H - 1) {
          const Eigen::Index row = s * A + a;
          const VectorXd p = box_simplex_extremize(
              conf.p_bar[h].row(row).transpose(),
              conf.radius[h].row(row).transpose(), w_next,
              ExtremizeSense::maximize);
          v += p.dot(w_next);
        }
        B[h](s, a) = v;
      }
    if (h > 0) {
      w_next.resize(S);
      for (Eigen::Index s = 0; s < S; ++s)
        w_next[s] = pi_j.pi[h].row(s).dot(B[h].row(s));
    }
  }
  return B;
}

std::vector<MatrixXd> q_hat_unknown(const Trajectory& traj,
                                    const std::vector<MatrixXd>& r,
                                    const OccupancyBounds& bounds,
                                    const Policy& pi_j, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("q_hat_unknown: gamma must be > 0");
  const int H = static_cast<int>(pi_j.pi.size());
  std::vector<MatrixXd> out(H);
  for (int h = 0; h < H; ++h) {
    out[h] = MatrixXd::Zero(pi_j.pi[h].rows(), pi_j.pi[h].cols());
    const int s = traj.states[h];
    const int a = traj.actions[h];
    const double denom = bounds.hi[h][s] * pi_j.pi[h](s, a) + gamma;
    out[h](s, a) = r[h](s, a) * traj.cost_to_go[h] / denom;
  }
  return out;
}

RegretReport run_dapo_unknown(const TabularMdp& mdp,
                              const std::vector<CostFunction>& costs,
                              const DelaySchedule& schedule,
                              const DapoUnknownConfig& config, Rng& rng,
                              const RunOptions& options) {
  const int K = config.K;
  if (static_cast<int>(costs.size()) != K || schedule.K() != K)
    throw StructuralError("run: costs/schedule length must equal K");
  if (!(config.eta > 0.0) || !(config.gamma > 0.0))
    throw ConfigError("run: eta and gamma must be > 0");
  const double H = mdp.H;
  const double qhat_cap = H / config.gamma;
  const double iota = confidence_iota(mdp.H, mdp.S, mdp.A, K, config.delta);

  struct EpisodeRecord {
    Policy policy;
    ConfidenceSet conf;
    OccupancyBounds bounds;
    Trajectory traj;
  };

  HedgeGrid hedge(mdp.S, mdp.A, mdp.H);
  FeedbackBuffer<EpisodeRecord> buffer;
  Counters counters(mdp.S, mdp.A, mdp.H);
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

    ConfidenceSet conf;
    OccupancyBounds bounds;
    if (options.exact_confidence) {
      conf = exact_confidence_set(mdp);
      const OccupancyMeasure occ = occupancy(mdp, pi_k);
      bounds.hi.resize(mdp.H);
      bounds.lo.resize(mdp.H);
      for (int h = 0; h < mdp.H; ++h) bounds.hi[h] = bounds.lo[h] = occ.marginal(h);
    } else {
      conf = build_confidence(counters, iota);
      bounds = occupancy_bounds(conf, pi_k, mdp.s_init);
    }

    if (options.audit) {
      if (!kernel_in_confidence(mdp, conf, 1e-12)) ++report.sandwich_violations;
      const OccupancyMeasure occ = occupancy(mdp, pi_k);
      for (int h = 0; h < mdp.H; ++h) {
        const VectorXd marg = occ.marginal(h);
        for (int s = 0; s < mdp.S; ++s)
          if (marg[s] > bounds.hi[h][s] + tol || marg[s] < bounds.lo[h][s] - tol)
            ++report.sandwich_violations;
      }
    }

    Trajectory traj = sample_episode(mdp, pi_k, costs[k - 1], rng);
    if (skip[k - 1]) {
      ++report.skipped;
    } else {
      buffer.push(k, schedule.d[k - 1],
                  EpisodeRecord{pi_k, std::move(conf), std::move(bounds),
                                std::move(traj)});
    }

    auto arrivals = buffer.drain_at(k, /*include_all_pending=*/k == K);
    report.arrivals[k - 1] = static_cast<int>(arrivals.size());
    if (arrivals.empty()) continue;

    std::vector<MatrixXd> batch(mdp.H, MatrixXd::Zero(mdp.S, mdp.A));
    for (auto& item : arrivals) {
      const EpisodeRecord& rec = item.payload;
      const std::vector<MatrixXd> r = ratio(rec.policy, pi_k);
      const std::vector<MatrixXd> qh =
          q_hat_unknown(rec.traj, r, rec.bounds, rec.policy, config.gamma);
      const UnknownBonus b = bonuses_unknown(r, pi_k, rec.policy, rec.bounds,
                                             config.gamma, mdp.H);
      const std::vector<MatrixXd> B =
          optimistic_bonus_bellman(rec.conf, rec.policy, b.total);

      for (int h = 0; h < mdp.H; ++h) {
        if (!qh[h].allFinite() || !b.total[h].allFinite() || !B[h].allFinite())
          throw NumericError("dapo-unknown: non-finite table at episode " +
                             std::to_string(k) + ", arrival " +
                             std::to_string(item.source));
        if (options.audit) {
          for (int s = 0; s < mdp.S; ++s)
            for (int a = 0; a < mdp.A; ++a) {
              const double damped = r[h](s, a) * pi_k.pi[h](s, a);
              if (damped > rec.policy.pi[h](s, a) + tol)
                ++report.ratio_violations;
              if (rec.policy.pi[h](s, a) > 0.0)
                report.max_policy_weight_ratio =
                    std::max(report.max_policy_weight_ratio,
                             damped / rec.policy.pi[h](s, a));
            }
          if (qh[h].minCoeff() < -tol || qh[h].maxCoeff() > qhat_cap + tol ||
              b.total[h].minCoeff() < -tol ||
              b.total[h].maxCoeff() > 5.0 * H + tol ||
              B[h].minCoeff() < -tol || B[h].maxCoeff() > 5.0 * H * H + tol)
            ++report.magnitude_violations;
          report.max_abs_qhat =
              std::max(report.max_abs_qhat, qh[h].cwiseAbs().maxCoeff());
          report.max_local_bonus =
              std::max(report.max_local_bonus, b.total[h].maxCoeff());
          report.max_propagated_bonus =
              std::max(report.max_propagated_bonus, B[h].maxCoeff());
        }
        batch[h] += qh[h] - B[h];
      }
      counters.add(rec.traj, mdp.A);
    }
    hedge.apply(batch, config.eta);
  }

  detail::finalize_regret(mdp, costs, report);
  return report;
}

}  // namespace delaypo
