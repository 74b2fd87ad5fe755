#pragma once

// Delay-adapted policy optimization with a linear Q-function and a
// simulator. Policies are never stored as tables: pi^k(.|s) is proportional
// to exp(-eta sum_{j: j+d^j < k} (Qhat^j(s,.) - Bhat^j(s,.))) and gets
// materialized lazily at the states actually touched (played states,
// simulator states inside Matrix Geometric Resampling and the bonus
// procedure). Bhat is the memoized Monte-Carlo propagation of the six
// local bonuses; its per-key randomness is derived from the seed so cached
// values do not depend on evaluation order.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "delaypo/delay.hpp"
#include "delaypo/env.hpp"
#include "delaypo/report.hpp"
#include "delaypo/rng.hpp"

namespace delaypo {

// Episodic environment with a simulator and per-step features of norm at
// most 1. States are opaque ids; the shipped generators are tabular
// underneath and expose that view for exact evaluation in tests.
class LinearQEnv {
 public:
  virtual ~LinearQEnv() = default;
  virtual int horizon() const = 0;
  virtual int num_actions() const = 0;
  virtual int feature_dim() const = 0;
  virtual VectorXd features(int h, std::int64_t s, int a) const = 0;
  virtual std::int64_t initial_state() const = 0;
  // Simulator: samples s' ~ p_h(.|s,a).
  virtual std::int64_t step(int h, std::int64_t s, int a, Rng& rng) const = 0;
  // Exact backdoor; nullptr when the environment cannot expose one.
  virtual const TabularMdp* tabular() const { return nullptr; }
};

// Tabular MDP with an explicit feature table; both shipped generators
// (one-hot features, random low-rank linear MDP) produce this.
class FeaturizedTabularEnv : public LinearQEnv {
 public:
  FeaturizedTabularEnv(TabularMdp mdp, std::vector<MatrixXd> phi);

  int horizon() const override { return mdp_.H; }
  int num_actions() const override { return mdp_.A; }
  int feature_dim() const override { return static_cast<int>(phi_[0].cols()); }
  VectorXd features(int h, std::int64_t s, int a) const override {
    return phi_[h].row(mdp_.row(static_cast<int>(s), a)).transpose();
  }
  std::int64_t initial_state() const override { return mdp_.s_init; }
  std::int64_t step(int h, std::int64_t s, int a, Rng& rng) const override;
  const TabularMdp* tabular() const override { return &mdp_; }

  const std::vector<MatrixXd>& phi() const { return phi_; }

 private:
  TabularMdp mdp_;
  std::vector<MatrixXd> phi_;  // H tables, (S*A) x n
};

// One-hot features over a tabular MDP (dim = S*A); linear-Q holds exactly.
FeaturizedTabularEnv make_one_hot_env(TabularMdp mdp);

// Random low-rank linear MDP: features are points on the n-simplex and
// p_h(.|s,a) = phi_h(s,a)^T mu_h with row-stochastic mixing matrices, so
// every policy has an exactly linear Q-function for in-span costs.
FeaturizedTabularEnv make_low_rank_env(int S, int A, int H, int n, int s_init,
                                       Rng& rng);

struct LinearConfig {
  double eta = 0.0;
  double gamma = 0.0;
  double delta = 0.1;
  double eps = 0.0;        // MGR approximation target
  std::int64_t M = 0;      // MGR repetitions
  std::int64_t N = 0;      // MGR series depth
  double beta_1 = 0.0, beta_2 = 0.0, beta_r = 0.0;
  double beta_v = 0.0, beta_f = 0.0, beta_g = 0.0;
  double skip_beta = std::numeric_limits<double>::infinity();
  std::int64_t bonus_budget = 10'000'000;
  int K = 0;
};

struct LinearParams {
  double gamma;
  double eta;
  double skip_beta;
};

// Main-text preset: gamma = sqrt(n/K),
// eta = min{gamma / (10 H d_max), 1 / (H (K+D)^{3/4})}, skip at D^{1/4}.
LinearParams dapo_linear_default_params(int H, int n, std::int64_t K,
                                        std::int64_t D, std::int64_t d_max);
// The appendix proof instead sets gamma = H sqrt(n/K).
LinearParams dapo_linear_default_params_proof(int H, int n, std::int64_t K,
                                              std::int64_t D,
                                              std::int64_t d_max);

// Fills every knob from the algorithm's stated initialization:
// eps = (H n K)^{-1}, beta_1 = beta_2 = H sqrt(gamma n), beta_r = 2H sqrt(n),
// beta_v = 4 eta H^2, beta_f = beta_g = gamma H,
// M = ceil(24/(gamma^2 eps^2) ln(10 H^2 K n / delta)),
// N = ceil(2/gamma log(1/(eps gamma))).
LinearConfig linear_config_defaults(int H, int n, std::int64_t K,
                                    std::int64_t D, std::int64_t d_max,
                                    double delta = 0.1);

using PolicyOracle = std::function<VectorXd(int h, std::int64_t s)>;

// Sampled Matrix Geometric Resampling: M repetitions of a depth-N
// truncated Neumann series with step size 1/2 over feature outer products
// drawn from M*N simulator trajectories of the policy; the average is
// symmetrized and spectrally clipped to operator norm 1/gamma.
std::vector<MatrixXd> geometric_resampling(const LinearQEnv& env,
                                           const PolicyOracle& pi,
                                           std::int64_t M, std::int64_t N,
                                           double gamma, Rng& rng);

// Exact-oracle route for test environments: (gamma I + Sigma)^{-1} with
// Sigma_h = E_{s,a ~ q_h}[phi phi^T] computed from the tabular view.
std::vector<MatrixXd> exact_covariance(const LinearQEnv& env, const Policy& pi);
std::vector<MatrixXd> sigma_plus_exact(const std::vector<MatrixXd>& sigma,
                                       double gamma);

// theta = SigmaPlus phi L; norm at most H/gamma.
VectorXd theta_hat(const MatrixXd& sigma_plus_h, const VectorXd& phi_hk,
                   double cost_to_go);

// Qhat = r phi^T theta.
double q_hat_linear(double r, const VectorXd& phi_sa, const VectorXd& theta);

// The six local bonuses at one (h, s); state-level terms are shared across
// actions of the row. ||phi||^2 in the SigmaPlus norm is clamped at zero;
// values below -1e-10 raise NumericError.
struct LinearBonusTerms {
  double v = 0.0, b1 = 0.0, f = 0.0;  // state-level
  VectorXd b2, r, g;                  // per-action
  VectorXd total;                     // per-action sum of all six
};

LinearBonusTerms local_bonuses_linear(const VectorXd& r_vec,
                                      const VectorXd& pi_now, int m_arrival,
                                      const MatrixXd& phi_rows,
                                      const MatrixXd& sigma_plus,
                                      const LinearConfig& config);

struct StateActionKey {
  int h;
  std::int64_t s;
  int a;
  bool operator==(const StateActionKey&) const = default;
};

struct StateActionKeyHash {
  std::size_t operator()(const StateActionKey& k) const {
    return static_cast<std::size_t>(
        mix64(mix64(static_cast<std::uint64_t>(k.h) * 0x9E3779B97F4A7C15ULL ^
                    static_cast<std::uint64_t>(k.s)) ^
              static_cast<std::uint64_t>(k.a)));
  }
};

// Memoized Monte-Carlo bonus propagation (one sampled successor per new
// key; repeated keys return the cached value without simulator calls).
// Randomness is a pure function of (rng_key, h, s, a).
struct BonusCache {
  std::unordered_map<StateActionKey, double, StateActionKeyHash> values;
  std::int64_t simulator_calls = 0;
};

using LocalBonusFn = std::function<double(int h, std::int64_t s, int a)>;

// budget_remaining may be shared across caches; nullptr means unlimited.
double bonus_procedure(int h, std::int64_t s, int a, const LocalBonusFn& local,
                       const PolicyOracle& pi_j, const LinearQEnv& env,
                       BonusCache& cache, std::uint64_t rng_key,
                       std::int64_t* budget_remaining, bool deterministic);

RegretReport run_dapo_linear(const LinearQEnv& env,
                             const std::vector<CostFunction>& costs,
                             const DelaySchedule& schedule,
                             const LinearConfig& config, Rng& rng,
                             const RunOptions& options = {});

}  // namespace delaypo
