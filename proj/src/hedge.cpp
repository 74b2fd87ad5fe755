#include "delaypo/hedge.hpp"

#include <cmath>
#include <limits>

namespace delaypo {

VectorXd hedge_policy(const HedgeState& state, double eta) {
  if (!(eta > 0.0)) throw ConfigError("hedge: eta must be > 0");
  const VectorXd z = -eta * state.cum_loss;
  const double m = z.maxCoeff();
  VectorXd w = (z.array() - m).exp();
  return w / w.sum();
}

VectorXd hedge_step(const VectorXd& pi, const VectorXd& loss, double eta) {
  if (!(eta > 0.0)) throw ConfigError("hedge: eta must be > 0");
  // log pi(a) - eta l(a), stabilized by the max.
  VectorXd z(pi.size());
  for (Eigen::Index a = 0; a < pi.size(); ++a)
    z[a] = std::log(pi[a]) - eta * loss[a];
  const double m = z.maxCoeff();
  VectorXd w = (z.array() - m).exp();
  return w / w.sum();
}

HedgeState exp_update(HedgeState state, const std::vector<VectorXd>& arrived,
                      double eta) {
  if (!(eta > 0.0)) throw ConfigError("hedge: eta must be > 0");
  for (const VectorXd& loss : arrived) {
    if (loss.size() != state.cum_loss.size())
      throw StructuralError("hedge: loss size does not match action count");
    if (!loss.allFinite()) throw NumericError("hedge: non-finite loss");
    state.cum_loss += loss;
  }
  return state;
}

HedgeRegretAudit hedge_regret_audit(const std::vector<VectorXd>& losses,
                                    const DelaySchedule& delays, double eta) {
  const int K = static_cast<int>(losses.size());
  if (delays.K() != K)
    throw StructuralError("hedge_regret_audit: schedule length mismatch");
  if (K == 0) throw StructuralError("hedge_regret_audit: empty loss stream");
  const int A = static_cast<int>(losses[0].size());

  // Feedback still missing after round K is observed at the end.
  std::vector<int> arrival(K);
  std::vector<int> m_count(K + 1, 0);
  for (int k = 0; k < K; ++k) {
    const std::int64_t a = std::min<std::int64_t>((k + 1) + delays.d[k], K);
    arrival[k] = static_cast<int>(a);
    ++m_count[arrival[k]];
  }

  // pi^m for m = 1..K; pi^m uses losses with arrival < m.
  std::vector<VectorXd> pi(K + 1);
  HedgeState state(A);
  pi[1] = hedge_policy(state, eta);
  std::vector<std::vector<VectorXd>> batches(K + 1);
  for (int k = 0; k < K; ++k) batches[arrival[k]].push_back(losses[k]);
  for (int m = 1; m < K; ++m) {
    state = exp_update(std::move(state), batches[m], eta);
    pi[m + 1] = hedge_policy(state, eta);
  }

  HedgeRegretAudit audit;
  double min_loss = 0.0;
  for (const auto& l : losses) min_loss = std::min(min_loss, l.minCoeff());
  audit.M = std::max(0.0, -min_loss);

  // Best fixed distribution in hindsight is a point mass on the smallest
  // cumulative loss.
  VectorXd total = VectorXd::Zero(A);
  for (const auto& l : losses) total += l;
  Eigen::Index best_a = 0;
  total.minCoeff(&best_a);

  double quad = 0.0;    // sum_k sum_a pi^{k+d^k}(a) l^k(a)^2
  double quad_m = 0.0;  // same with the m^{k+d^k} factor
  for (int k = 0; k < K; ++k) {
    const VectorXd& p = pi[arrival[k]];
    audit.measured += p.dot(losses[k]) - losses[k][best_a];
    const double q = p.dot(losses[k].cwiseAbs2());
    quad += q;
    quad_m += m_count[arrival[k]] * q;
  }
  const double ln_a = std::log(static_cast<double>(A));
  audit.bound_corollary =
      ln_a / eta + 2.0 * eta * quad + 2.0 * eta * K * audit.M * audit.M;
  audit.bound_m_form = ln_a / eta + eta * quad_m;

  // Precondition of the m-form bound: eta * (batch sum) > -1 per action.
  audit.m_form_applicable = true;
  for (int m = 1; m <= K && audit.m_form_applicable; ++m) {
    if (batches[m].empty()) continue;
    VectorXd batch_sum = VectorXd::Zero(A);
    for (const auto& l : batches[m]) batch_sum += l;
    if ((eta * batch_sum.array() <= -1.0).any()) audit.m_form_applicable = false;
  }

  audit.ok = audit.measured <= audit.bound_corollary &&
             (!audit.m_form_applicable || audit.measured <= audit.bound_m_form);
  return audit;
}

DriftBoundAudit drift_bound_audit(const VectorXd& pi, double eta,
                                  const VectorXd& loss, double M) {
  if ((loss.array() < -M).any())
    throw ConfigError("drift_bound_audit: loss below -M");
  DriftBoundAudit out;
  const VectorXd pi_next = hedge_step(pi, loss, eta);
  out.drift = pi_next - pi;
  out.lower = (-eta * pi.array() * (loss.array() + M)).matrix();
  const double shifted_mean = (pi.array() * (loss.array() + M)).sum();
  out.upper = eta * shifted_mean * pi_next;
  const double tol = 1e-12;
  out.ok = ((out.drift - out.lower).array() >= -tol).all() &&
           ((out.upper - out.drift).array() >= -tol).all();
  return out;
}

}  // namespace delaypo
