#include "delaypo/linear.hpp"

#include <cmath>
#include <deque>
#include <string>
#include <utility>

#include "delaypo/dapo_known.hpp"

namespace delaypo {

namespace {

constexpr std::uint64_t kMgrLabel = 101;
constexpr std::uint64_t kBonusLabel = 102;
constexpr std::uint64_t kEvalLabel = 103;

VectorXd softmax_neg(double eta, const VectorXd& cum) {
  const VectorXd z = -eta * cum;
  const double m = z.maxCoeff();
  VectorXd w = (z.array() - m).exp();
  return w / w.sum();
}

MatrixXd symmetrize_clip(const MatrixXd& m, double cap) {
  MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.eigenvalues().cwiseAbs().maxCoeff() <= cap) return sym;
  const VectorXd clipped = es.eigenvalues().cwiseMax(-cap).cwiseMin(cap);
  MatrixXd out =
      es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

double sym_op_norm(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

FeaturizedTabularEnv::FeaturizedTabularEnv(TabularMdp mdp,
                                           std::vector<MatrixXd> phi)
    : mdp_(std::move(mdp)), phi_(std::move(phi)) {
  if (static_cast<int>(phi_.size()) != mdp_.H)
    throw StructuralError("FeaturizedTabularEnv: one feature table per step");
  for (const MatrixXd& t : phi_) {
    if (t.rows() != static_cast<Eigen::Index>(mdp_.S) * mdp_.A)
      throw StructuralError("FeaturizedTabularEnv: feature table must be (S*A) x n");
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      if (t.row(r).norm() > 1.0 + 1e-9)
        throw StructuralError("FeaturizedTabularEnv: feature norm exceeds 1");
  }
}

std::int64_t FeaturizedTabularEnv::step(int h, std::int64_t s, int a,
                                        Rng& rng) const {
  return rng.categorical(
      mdp_.p[h].row(mdp_.row(static_cast<int>(s), a)).transpose());
}

FeaturizedTabularEnv make_one_hot_env(TabularMdp mdp) {
  std::vector<MatrixXd> phi(
      mdp.H, MatrixXd::Identity(static_cast<Eigen::Index>(mdp.S) * mdp.A,
                                static_cast<Eigen::Index>(mdp.S) * mdp.A));
  return FeaturizedTabularEnv(std::move(mdp), std::move(phi));
}

FeaturizedTabularEnv make_low_rank_env(int S, int A, int H, int n, int s_init,
                                       Rng& rng) {
  if (n < 1) throw ConfigError("make_low_rank_env: n must be >= 1");
  // Features are points on the n-simplex, transitions mix n row-stochastic
  // factors: p_h(.|s,a) = phi_h(s,a)^T mu_h.
  std::vector<MatrixXd> phi(H, MatrixXd(static_cast<Eigen::Index>(S) * A, n));
  for (int h = 0; h < H; ++h)
    for (Eigen::Index r = 0; r < phi[h].rows(); ++r)
      phi[h].row(r) = random_simplex_point(n, rng).transpose();
  std::vector<MatrixXd> kernel;
  for (int h = 0; h + 1 < H; ++h) {
    MatrixXd mu(n, S);
    for (int i = 0; i < n; ++i)
      mu.row(i) = random_simplex_point(S, rng).transpose();
    kernel.push_back(phi[h] * mu);
  }
  TabularMdp mdp(S, A, H, s_init, std::move(kernel));
  return FeaturizedTabularEnv(std::move(mdp), std::move(phi));
}

LinearParams dapo_linear_default_params(int H, int n, std::int64_t K,
                                        std::int64_t D, std::int64_t d_max) {
  if (H < 1 || n < 1 || K < 1 || D < 0 || d_max < 0)
    throw ConfigError("linear default params: invalid arguments");
  const double gamma = std::sqrt(static_cast<double>(n) / K);
  const double eta_drift =
      d_max == 0 ? std::numeric_limits<double>::infinity()
                 : gamma / (10.0 * H * static_cast<double>(d_max));
  const double eta_main = 1.0 / (H * std::pow(static_cast<double>(K + D), 0.75));
  return LinearParams{gamma, std::min(eta_drift, eta_main),
                      std::pow(static_cast<double>(D), 0.25)};
}

LinearParams dapo_linear_default_params_proof(int H, int n, std::int64_t K,
                                              std::int64_t D,
                                              std::int64_t d_max) {
  LinearParams p = dapo_linear_default_params(H, n, K, D, d_max);
  const double gamma = H * std::sqrt(static_cast<double>(n) / K);
  const double eta_drift =
      d_max == 0 ? std::numeric_limits<double>::infinity()
                 : gamma / (10.0 * H * static_cast<double>(d_max));
  const double eta_main = 1.0 / (H * std::pow(static_cast<double>(K + D), 0.75));
  p.gamma = gamma;
  p.eta = std::min(eta_drift, eta_main);
  return p;
}

LinearConfig linear_config_defaults(int H, int n, std::int64_t K,
                                    std::int64_t D, std::int64_t d_max,
                                    double delta) {
  const LinearParams p = dapo_linear_default_params(H, n, K, D, d_max);
  LinearConfig cfg;
  cfg.eta = p.eta;
  cfg.gamma = p.gamma;
  cfg.delta = delta;
  cfg.skip_beta = p.skip_beta;
  cfg.K = static_cast<int>(K);
  cfg.eps = 1.0 / (static_cast<double>(H) * n * K);
  cfg.M = static_cast<std::int64_t>(
      std::ceil(24.0 / (cfg.gamma * cfg.gamma * cfg.eps * cfg.eps) *
                std::log(10.0 * H * H * static_cast<double>(K) * n / delta)));
  cfg.N = static_cast<std::int64_t>(
      std::ceil(2.0 / cfg.gamma * std::log(1.0 / (cfg.eps * cfg.gamma))));
  cfg.beta_1 = H * std::sqrt(cfg.gamma * n);
  cfg.beta_2 = cfg.beta_1;
  cfg.beta_r = 2.0 * H * std::sqrt(static_cast<double>(n));
  cfg.beta_v = 4.0 * cfg.eta * H * H;
  cfg.beta_f = cfg.gamma * H;
  cfg.beta_g = cfg.gamma * H;
  return cfg;
}

std::vector<MatrixXd> geometric_resampling(const LinearQEnv& env,
                                           const PolicyOracle& pi,
                                           std::int64_t M, std::int64_t N,
                                           double gamma, Rng& rng) {
  if (M < 1 || N < 1) throw ConfigError("geometric_resampling: M, N must be >= 1");
  if (!(gamma > 0.0) || gamma > 1.0)
    throw ConfigError("geometric_resampling: gamma must lie in (0, 1]");
  const int H = env.horizon();
  const int n = env.feature_dim();
  const double beta = 0.5;  // valid step size since gamma + ||phi||^2 <= 2

  std::vector<MatrixXd> acc(H, MatrixXd::Zero(n, n));
  std::vector<MatrixXd> prod(H), series(H);
  for (std::int64_t rep = 0; rep < M; ++rep) {
    for (int h = 0; h < H; ++h) {
      prod[h] = MatrixXd::Identity(n, n);
      series[h] = MatrixXd::Identity(n, n);  // i = 0 term
    }
    for (std::int64_t i = 0; i < N; ++i) {
      std::int64_t s = env.initial_state();
      for (int h = 0; h < H; ++h) {
        const int a = rng.categorical(pi(h, s));
        const VectorXd phi = env.features(h, s, a);
        // prod *= (1 - beta gamma) I - beta phi phi^T, as a rank-1 update
        const VectorXd pphi = prod[h] * phi;
        prod[h] = (1.0 - beta * gamma) * prod[h] - beta * pphi * phi.transpose();
        series[h] += prod[h];
        if (h < H - 1) s = env.step(h, s, a, rng);
      }
    }
    for (int h = 0; h < H; ++h) acc[h] += beta * series[h];
  }
  std::vector<MatrixXd> out(H);
  for (int h = 0; h < H; ++h)
    out[h] = symmetrize_clip(acc[h] / static_cast<double>(M), 1.0 / gamma);
  return out;
}

std::vector<MatrixXd> exact_covariance(const LinearQEnv& env,
                                       const Policy& pi) {
  const TabularMdp* tab = env.tabular();
  if (!tab) throw StructuralError("exact_covariance: no tabular backdoor");
  const OccupancyMeasure occ = occupancy(*tab, pi);
  const int n = env.feature_dim();
  std::vector<MatrixXd> sigma(tab->H, MatrixXd::Zero(n, n));
  for (int h = 0; h < tab->H; ++h)
    for (int s = 0; s < tab->S; ++s)
      for (int a = 0; a < tab->A; ++a) {
        const double w = occ.q[h](s, a);
        if (w == 0.0) continue;
        const VectorXd phi = env.features(h, s, a);
        sigma[h] += w * phi * phi.transpose();
      }
  return sigma;
}

std::vector<MatrixXd> sigma_plus_exact(const std::vector<MatrixXd>& sigma,
                                       double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("sigma_plus_exact: gamma must be > 0");
  std::vector<MatrixXd> out;
  out.reserve(sigma.size());
  for (const MatrixXd& s : sigma) {
    const Eigen::Index n = s.rows();
    const MatrixXd reg = gamma * MatrixXd::Identity(n, n) + s;
    MatrixXd inv = reg.llt().solve(MatrixXd::Identity(n, n));
    out.push_back(0.5 * (inv + inv.transpose()));
  }
  return out;
}

VectorXd theta_hat(const MatrixXd& sigma_plus_h, const VectorXd& phi_hk,
                   double cost_to_go) {
  if (cost_to_go < 0.0) throw StructuralError("theta_hat: negative cost-to-go");
  return sigma_plus_h * phi_hk * cost_to_go;
}

double q_hat_linear(double r, const VectorXd& phi_sa, const VectorXd& theta) {
  return r * phi_sa.dot(theta);
}

LinearBonusTerms local_bonuses_linear(const VectorXd& r_vec,
                                      const VectorXd& pi_now, int m_arrival,
                                      const MatrixXd& phi_rows,
                                      const MatrixXd& sigma_plus,
                                      const LinearConfig& config) {
  const Eigen::Index A = r_vec.size();
  VectorXd q2(A), norm(A);
  for (Eigen::Index a = 0; a < A; ++a) {
    const double v =
        phi_rows.row(a) * sigma_plus * phi_rows.row(a).transpose();
    if (v < -1e-10)
      throw NumericError("local_bonuses_linear: ||phi||^2 in SigmaPlus norm "
                         "is negative beyond tolerance");
    q2[a] = std::max(v, 0.0);
    norm[a] = std::sqrt(q2[a]);
  }
  LinearBonusTerms out;
  const VectorXd weight = r_vec.cwiseProduct(pi_now);
  out.v = config.beta_v * m_arrival * weight.dot(q2);
  out.b1 = config.beta_1 * weight.dot(norm);
  out.f = config.beta_f * weight.dot(q2);
  out.b2 = config.beta_2 * r_vec.cwiseProduct(norm);
  out.r = config.beta_r * (VectorXd::Ones(A) - r_vec);
  out.g = config.beta_g * r_vec.cwiseProduct(q2);
  out.total = out.b2 + out.r + out.g;
  out.total.array() += out.v + out.b1 + out.f;
  return out;
}

double bonus_procedure(int h, std::int64_t s, int a, const LocalBonusFn& local,
                       const PolicyOracle& pi_j, const LinearQEnv& env,
                       BonusCache& cache, std::uint64_t rng_key,
                       std::int64_t* budget_remaining, bool deterministic) {
  const StateActionKey key{h, s, a};
  if (auto it = cache.values.find(key); it != cache.values.end())
    return it->second;

  double val = local(h, s, a);
  if (h < env.horizon() - 1) {
    if (budget_remaining != nullptr) {
      if (*budget_remaining <= 0)
        throw ResourceError(
            "bonus procedure: simulator budget exhausted after " +
            std::to_string(cache.simulator_calls) + " calls at (h=" +
            std::to_string(h + 1) + ", s=" + std::to_string(s) +
            ", a=" + std::to_string(a) + ")");
      --*budget_remaining;
    }
    ++cache.simulator_calls;
    if (deterministic) {
      const TabularMdp* tab = env.tabular();
      if (!tab)
        throw StructuralError(
            "bonus procedure: deterministic mode needs the kernel backdoor");
      const auto row = tab->p[h].row(tab->row(static_cast<int>(s), a));
      double cont = 0.0;
      for (int sp = 0; sp < tab->S; ++sp) {
        if (row[sp] == 0.0) continue;
        const VectorXd pin = pi_j(h + 1, sp);
        double inner = 0.0;
        for (int ap = 0; ap < tab->A; ++ap)
          inner += pin[ap] * bonus_procedure(h + 1, sp, ap, local, pi_j, env,
                                             cache, rng_key, budget_remaining,
                                             deterministic);
        cont += row[sp] * inner;
      }
      val += cont;
    } else {
      Rng draw(derive_key(
          derive_key(derive_key(rng_key, static_cast<std::uint64_t>(h)),
                     static_cast<std::uint64_t>(s)),
          static_cast<std::uint64_t>(a)));
      const std::int64_t sp = env.step(h, s, a, draw);
      const VectorXd pin = pi_j(h + 1, sp);
      const int ap = draw.categorical(pin);
      val += bonus_procedure(h + 1, sp, ap, local, pi_j, env, cache, rng_key,
                             budget_remaining, deterministic);
    }
  }
  cache.values.emplace(key, val);
  return val;
}

namespace {

struct StateKey {
  int h;
  std::int64_t s;
  bool operator==(const StateKey&) const = default;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const {
    return static_cast<std::size_t>(
        mix64(static_cast<std::uint64_t>(k.h) * 0x9E3779B97F4A7C15ULL ^
              static_cast<std::uint64_t>(k.s)));
  }
};

struct LocalKey {
  int t;  // arrival index
  int h;
  std::int64_t s;
  bool operator==(const LocalKey&) const = default;
};

struct LocalKeyHash {
  std::size_t operator()(const LocalKey& k) const {
    return static_cast<std::size_t>(
        mix64(mix64(static_cast<std::uint64_t>(k.t) * 0x9E3779B97F4A7C15ULL ^
                    static_cast<std::uint64_t>(k.s)) ^
              static_cast<std::uint64_t>(k.h)));
  }
};

// Lazy policy/estimator machinery of the linear learner. Policies are
// softmax over cumulative losses of processed arrivals; every quantity is
// evaluated on demand at the states actually touched and memoized.
class LinearLearner {
 public:
  LinearLearner(const LinearQEnv& env, const LinearConfig& config,
                const RunOptions& options, std::uint64_t root_key,
                RegretReport* report)
      : env_(env),
        config_(config),
        options_(options),
        root_key_(root_key),
        report_(report),
        uniform_(VectorXd::Constant(env.num_actions(),
                                    1.0 / env.num_actions())),
        budget_remaining_(config.bonus_budget),
        prefix_(config.K + 2, -1) {
    qhat_cap_ = env.horizon() / config.gamma;
    bonus_cap_ =
        6.0 * env.horizon() * std::sqrt(static_cast<double>(env.feature_dim()));
  }

  void begin_episode(int k) { prefix_[k] = static_cast<int>(arrivals_.size()); }

  VectorXd policy(int episode, int h, std::int64_t s) {
    const int idx = prefix_.at(episode);
    if (idx < 0)
      throw StructuralError("linear learner: policy queried before episode " +
                            std::to_string(episode) + " started");
    if (idx == 0) return uniform_;
    return softmax_neg(config_.eta, cum(idx - 1, h, s));
  }

  Policy materialize(int episode) {
    const TabularMdp* tab = env_.tabular();
    std::vector<MatrixXd> tables(tab->H, MatrixXd(tab->S, tab->A));
    for (int h = 0; h < tab->H; ++h)
      for (int s = 0; s < tab->S; ++s)
        tables[h].row(s) = policy(episode, h, s).transpose();
    return Policy(std::move(tables));
  }

  void process_arrival(int j, int arrival_episode, int m,
                       const Trajectory& traj) {
    Arrival arr;
    arr.j = j;
    arr.arrival_episode = arrival_episode;
    arr.m = m;
    arr.bonus_key = derive_key(derive_key(root_key_, kBonusLabel),
                               static_cast<std::uint64_t>(j));
    if (options_.exact_sigma) {
      arr.sigma_plus =
          sigma_plus_exact(exact_covariance(env_, materialize(j)), config_.gamma);
    } else {
      Rng mgr(derive_key(derive_key(root_key_, kMgrLabel),
                         static_cast<std::uint64_t>(j)));
      arr.sigma_plus = geometric_resampling(
          env_, [this, j](int h, std::int64_t s) { return policy(j, h, s); },
          config_.M, config_.N, config_.gamma, mgr);
    }
    const int H = env_.horizon();
    arr.theta.reserve(H);
    for (int h = 0; h < H; ++h) {
      const VectorXd phi =
          env_.features(h, traj.states[h], traj.actions[h]);
      arr.theta.push_back(
          theta_hat(arr.sigma_plus[h], phi, traj.cost_to_go[h]));
      if (report_ != nullptr && options_.audit) {
        const double tol = 1e-9;
        if (sym_op_norm(arr.sigma_plus[h]) > 1.0 / config_.gamma + tol ||
            (arr.sigma_plus[h] - arr.sigma_plus[h].transpose())
                    .cwiseAbs()
                    .maxCoeff() > 1e-10 ||
            arr.theta.back().norm() > qhat_cap_ + tol)
          ++report_->magnitude_violations;
      }
    }
    // The batch that arrives together at one episode shares its index range.
    batch_first_.push_back(
        !arrivals_.empty() &&
                arrivals_.back().arrival_episode == arrival_episode
            ? batch_first_.back()
            : static_cast<int>(arrivals_.size()));
    arrivals_.push_back(std::move(arr));
  }

  std::int64_t bonus_simulator_calls() const {
    std::int64_t total = 0;
    for (const auto& a : arrivals_) total += a.cache.simulator_calls;
    return total;
  }

 private:
  struct Arrival {
    int j = 0;
    int arrival_episode = 0;
    int m = 0;
    std::uint64_t bonus_key = 0;
    std::vector<VectorXd> theta;
    std::vector<MatrixXd> sigma_plus;
    BonusCache cache;
  };

  struct LocalRow {
    VectorXd ratio;
    VectorXd pi_arrival;
    LinearBonusTerms terms;
  };

  struct StateCache {
    std::vector<VectorXd> cum;  // cum[t] = sum of losses of arrivals 0..t
  };

  const VectorXd& cum(int t, int h, std::int64_t s) {
    StateCache& sc = states_[StateKey{h, s}];
    while (static_cast<int>(sc.cum.size()) <= t) {
      const int u = static_cast<int>(sc.cum.size());
      VectorXd loss = loss_of(u, h, s);
      if (u > 0) loss += sc.cum[u - 1];
      sc.cum.push_back(std::move(loss));
      if (is_batch_last(u)) check_batch_precondition(u, h, s, sc);
    }
    return sc.cum[t];
  }

  bool is_batch_last(int t) const {
    return t + 1 == static_cast<int>(arrivals_.size()) ||
           arrivals_[t + 1].arrival_episode != arrivals_[t].arrival_episode;
  }

  void check_batch_precondition(int t, int h, std::int64_t s,
                                const StateCache& sc) {
    const int first = batch_first_[t];
    VectorXd batch_sum = sc.cum[t];
    if (first > 0) batch_sum -= sc.cum[first - 1];
    if ((config_.eta * batch_sum.array() <= -1.0).any())
      throw NumericError(
          "dapo-linear: eta * (batch loss) <= -1 at episode " +
          std::to_string(arrivals_[t].arrival_episode) + ", step " +
          std::to_string(h + 1) + ", state " + std::to_string(s) +
          "; eta is mis-tuned for these delays");
  }

  const LocalRow& local_row(int t, int h, std::int64_t s) {
    const LocalKey key{t, h, s};
    auto it = local_rows_.find(key);
    if (it != local_rows_.end()) return it->second;

    const Arrival& arr = arrivals_[t];
    LocalRow row;
    const VectorXd pi_src = policy(arr.j, h, s);
    row.pi_arrival = policy(arr.arrival_episode, h, s);
    const int A = env_.num_actions();
    row.ratio.resize(A);
    for (int a = 0; a < A; ++a) {
      const double denom = std::max(pi_src[a], row.pi_arrival[a]);
      row.ratio[a] = denom == 0.0 ? 1.0 : pi_src[a] / denom;
    }
    MatrixXd phi(A, env_.feature_dim());
    for (int a = 0; a < A; ++a)
      phi.row(a) = env_.features(h, s, a).transpose();
    row.terms = local_bonuses_linear(row.ratio, row.pi_arrival, arr.m, phi,
                                     arr.sigma_plus[h], config_);
    if (report_ != nullptr && options_.audit) {
      const double tol = 1e-9;
      for (int a = 0; a < A; ++a) {
        const double damped = row.ratio[a] * row.pi_arrival[a];
        if (damped > pi_src[a] + tol) ++report_->ratio_violations;
        if (pi_src[a] > 0.0)
          report_->max_policy_weight_ratio = std::max(
              report_->max_policy_weight_ratio, damped / pi_src[a]);
      }
      if (row.terms.total.minCoeff() < -tol ||
          row.terms.total.maxCoeff() > bonus_cap_ + tol)
        ++report_->magnitude_violations;
      report_->max_local_bonus =
          std::max(report_->max_local_bonus, row.terms.total.maxCoeff());
    }
    return local_rows_.emplace(key, std::move(row)).first->second;
  }

  VectorXd loss_of(int t, int h, std::int64_t s) {
    const Arrival& arr = arrivals_[t];
    const LocalRow& row = local_row(t, h, s);
    const int A = env_.num_actions();
    const LocalBonusFn local = [this, t](int hh, std::int64_t ss, int aa) {
      return local_row(t, hh, ss).terms.total[aa];
    };
    const PolicyOracle pij = [this, j = arr.j](int hh, std::int64_t ss) {
      return policy(j, hh, ss);
    };
    VectorXd loss(A);
    for (int a = 0; a < A; ++a) {
      const double qh = q_hat_linear(row.ratio[a], env_.features(h, s, a),
                                     arr.theta[h]);
      const double bh = bonus_procedure(
          h, s, a, local, pij, env_, arrivals_[t].cache, arr.bonus_key,
          &budget_remaining_, options_.deterministic_bonus);
      loss[a] = qh - bh;
      if (report_ != nullptr && options_.audit) {
        const double tol = 1e-9;
        if (std::abs(qh) > qhat_cap_ + tol) ++report_->magnitude_violations;
        report_->max_abs_qhat = std::max(report_->max_abs_qhat, std::abs(qh));
        report_->max_propagated_bonus =
            std::max(report_->max_propagated_bonus, std::abs(bh));
      }
      if (!std::isfinite(loss[a]))
        throw NumericError("dapo-linear: non-finite loss at arrival " +
                           std::to_string(arr.j));
    }
    return loss;
  }

  const LinearQEnv& env_;
  const LinearConfig& config_;
  const RunOptions& options_;
  const std::uint64_t root_key_;
  RegretReport* report_;
  const VectorXd uniform_;
  std::int64_t budget_remaining_;
  double qhat_cap_ = 0.0;
  double bonus_cap_ = 0.0;

  std::vector<int> prefix_;  // prefix_[k] = #arrivals with arrival episode < k
  std::deque<Arrival> arrivals_;
  std::vector<int> batch_first_;
  std::unordered_map<StateKey, StateCache, StateKeyHash> states_;
  std::unordered_map<LocalKey, LocalRow, LocalKeyHash> local_rows_;
};

}  // namespace

RegretReport run_dapo_linear(const LinearQEnv& env,
                             const std::vector<CostFunction>& costs,
                             const DelaySchedule& schedule,
                             const LinearConfig& config, Rng& rng,
                             const RunOptions& options) {
  const TabularMdp* tab = env.tabular();
  if (!tab)
    throw StructuralError(
        "run_dapo_linear: exact regret accounting needs the tabular backdoor");
  const int K = config.K;
  if (static_cast<int>(costs.size()) != K || schedule.K() != K)
    throw StructuralError("run: costs/schedule length must equal K");
  if (!(config.eta > 0.0) || !(config.gamma > 0.0))
    throw ConfigError("run: eta and gamma must be > 0");

  RegretReport report;
  report.learner_value.resize(K);
  report.value_std_error.assign(K, 0.0);
  report.delay = schedule.d;
  report.arrivals.resize(K);
  report.total_delay = schedule.total();
  report.max_delay = schedule.max_delay();

  LinearLearner learner(env, config, options, rng.key(), &report);
  FeedbackBuffer<Trajectory> buffer;
  const double skip_beta = std::min(config.skip_beta, options.skip_beta);
  const std::vector<bool> skip = skip_filter(schedule, skip_beta);

  for (int k = 1; k <= K; ++k) {
    learner.begin_episode(k);
    Trajectory traj;
    if (options.value_rollouts > 0) {
      // Lazy play: the policy is materialized only at visited states.
      const int H = env.horizon();
      traj.states.resize(H);
      traj.actions.resize(H);
      traj.observed_costs = VectorXd::Zero(H);
      traj.cost_to_go = VectorXd::Zero(H);
      std::int64_t s = env.initial_state();
      for (int h = 0; h < H; ++h) {
        traj.states[h] = static_cast<int>(s);
        const int a = rng.categorical(learner.policy(k, h, s));
        traj.actions[h] = a;
        traj.observed_costs[h] = costs[k - 1].c[h](s, a);
        if (h < H - 1) s = env.step(h, s, a, rng);
      }
      for (int h = H - 1; h >= 0; --h)
        traj.cost_to_go[h] = traj.observed_costs[h] +
                             (h + 1 < H ? traj.cost_to_go[h + 1] : 0.0);

      Rng eval(derive_key(derive_key(rng.key(), kEvalLabel),
                          static_cast<std::uint64_t>(k)));
      double sum = 0.0, sum_sq = 0.0;
      for (int i = 0; i < options.value_rollouts; ++i) {
        std::int64_t es = env.initial_state();
        double total = 0.0;
        for (int h = 0; h < env.horizon(); ++h) {
          const int a = eval.categorical(learner.policy(k, h, es));
          total += costs[k - 1].c[h](es, a);
          if (h < env.horizon() - 1) es = env.step(h, es, a, eval);
        }
        sum += total;
        sum_sq += total * total;
      }
      const double n = options.value_rollouts;
      const double mean = sum / n;
      report.learner_value[k - 1] = mean;
      report.value_std_error[k - 1] =
          n > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) /
                                              (n - 1) / n))
                : 0.0;
      if (options.record_policies)
        report.policies.push_back(learner.materialize(k));
    } else {
      const Policy pi_k = learner.materialize(k);
      report.learner_value[k - 1] =
          evaluate(*tab, pi_k, costs[k - 1]).V[0][tab->s_init];
      if (options.record_policies) report.policies.push_back(pi_k);
      traj = sample_episode(*tab, pi_k, costs[k - 1], rng);
    }

    if (skip[k - 1]) {
      ++report.skipped;
    } else {
      buffer.push(k, schedule.d[k - 1], std::move(traj));
    }

    auto arrivals = buffer.drain_at(k, /*include_all_pending=*/k == K);
    report.arrivals[k - 1] = static_cast<int>(arrivals.size());
    for (auto& item : arrivals)
      learner.process_arrival(item.source, k,
                              static_cast<int>(arrivals.size()), item.payload);
  }

  detail::finalize_regret(*tab, costs, report);
  return report;
}

}  // namespace delaypo
