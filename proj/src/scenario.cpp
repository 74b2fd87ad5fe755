#include "delaypo/scenario.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>

#include "delaypo/env_io.hpp"

namespace delaypo {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
}

TabularMdp random_layered_mdp(int S, int A, int H, int s_init, Rng& rng) {
  std::vector<MatrixXd> kernel;
  for (int h = 0; h + 1 < H; ++h) {
    MatrixXd ph(static_cast<Eigen::Index>(S) * A, S);
    for (Eigen::Index r = 0; r < ph.rows(); ++r)
      ph.row(r) = random_simplex_point(S, rng).transpose();
    kernel.push_back(std::move(ph));
  }
  return TabularMdp(S, A, H, s_init, std::move(kernel));
}

// Deterministic chain: action 0 advances, every other action stays.
TabularMdp chain_mdp(int S, int A, int H, int s_init) {
  std::vector<MatrixXd> kernel;
  for (int h = 0; h + 1 < H; ++h) {
    MatrixXd ph = MatrixXd::Zero(static_cast<Eigen::Index>(S) * A, S);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const int next = a == 0 ? std::min(s + 1, S - 1) : s;
        ph(static_cast<Eigen::Index>(s) * A + a, next) = 1.0;
      }
    kernel.push_back(std::move(ph));
  }
  return TabularMdp(S, A, H, s_init, std::move(kernel));
}

MatrixXd uniform_cost_table(int S, int A, Rng& rng) {
  MatrixXd t(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) t(s, a) = rng.next_double();
  return t;
}

}  // namespace

TabularMdp make_tabular_env(const EnvSpec& spec) {
  if (spec.generator == "random_layered") {
    Rng rng(derive_key(spec.seed, 0xE11));
    return random_layered_mdp(spec.S, spec.A, spec.H, spec.s_init, rng);
  }
  if (spec.generator == "chain")
    return chain_mdp(spec.S, spec.A, spec.H, spec.s_init);
  if (spec.generator == "file") return load_env(spec.file).mdp;
  throw ConfigError("unknown tabular environment generator: " + spec.generator);
}

std::unique_ptr<FeaturizedTabularEnv> make_linear_env(const EnvSpec& spec) {
  if (spec.generator == "one_hot") {
    EnvSpec base = spec;
    base.generator = "random_layered";
    return std::make_unique<FeaturizedTabularEnv>(
        make_one_hot_env(make_tabular_env(base)));
  }
  if (spec.generator == "low_rank") {
    if (spec.n < 1) throw ConfigError("low_rank environment needs n >= 1");
    Rng rng(derive_key(spec.seed, 0x10E));
    return std::make_unique<FeaturizedTabularEnv>(
        make_low_rank_env(spec.S, spec.A, spec.H, spec.n, spec.s_init, rng));
  }
  throw ConfigError("unknown linear environment generator: " + spec.generator);
}

std::vector<CostFunction> make_costs(const CostSpec& spec, int S, int A, int H,
                                     int K) {
  Rng rng(derive_key(spec.seed, 0xC057));
  std::vector<CostFunction> out;
  out.reserve(K);
  if (spec.generator == "iid_uniform") {
    for (int k = 0; k < K; ++k) {
      std::vector<MatrixXd> tables;
      for (int h = 0; h < H; ++h) tables.push_back(uniform_cost_table(S, A, rng));
      out.emplace_back(std::move(tables));
    }
    return out;
  }
  if (spec.generator == "piecewise_constant") {
    if (spec.period < 1) throw ConfigError("piecewise_constant: period >= 1");
    std::vector<MatrixXd> block;
    for (int k = 0; k < K; ++k) {
      if (k % spec.period == 0) {
        block.clear();
        for (int h = 0; h < H; ++h) block.push_back(uniform_cost_table(S, A, rng));
      }
      out.emplace_back(block);
    }
    return out;
  }
  if (spec.generator == "sinusoidal") {
    if (spec.period < 1) throw ConfigError("sinusoidal: period >= 1");
    std::vector<MatrixXd> phase;
    for (int h = 0; h < H; ++h) {
      MatrixXd p(S, A);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
          p(s, a) = 2.0 * M_PI * rng.next_double();
      phase.push_back(std::move(p));
    }
    for (int k = 1; k <= K; ++k) {
      std::vector<MatrixXd> tables;
      for (int h = 0; h < H; ++h) {
        MatrixXd t(S, A);
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a)
            t(s, a) = 0.5 + 0.5 * std::sin(2.0 * M_PI * k / spec.period +
                                           phase[h](s, a));
        tables.push_back(std::move(t));
      }
      out.emplace_back(std::move(tables));
    }
    return out;
  }
  if (spec.generator == "adversarial_drift") {
    // Two antagonistic tables swapped every period: the previously good
    // action turns bad, forcing large policy drift.
    if (spec.period < 1) throw ConfigError("adversarial_drift: period >= 1");
    std::vector<MatrixXd> even(H, MatrixXd::Constant(S, A, 0.95));
    std::vector<MatrixXd> odd(H, MatrixXd::Constant(S, A, 0.95));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) {
        even[h](s, 0) = 0.05;
        odd[h](s, A - 1) = 0.05;
      }
    for (int k = 0; k < K; ++k)
      out.emplace_back((k / spec.period) % 2 == 0 ? even : odd);
    return out;
  }
  throw ConfigError("unknown cost generator: " + spec.generator);
}

std::vector<CostFunction> make_costs_linear(const CostSpec& spec,
                                            const FeaturizedTabularEnv& env,
                                            int K) {
  const TabularMdp& mdp = *env.tabular();
  const int H = mdp.H, S = mdp.S, n = env.feature_dim();
  Rng rng(derive_key(spec.seed, 0xC057));

  // Row-stochastic mixers nu_h (n x S); costs c_h = phi_h (nu_h u^k_h) stay
  // linear in the features and inside [0,1] for u in [0,1]^S.
  std::vector<MatrixXd> nu(H, MatrixXd(n, S));
  for (int h = 0; h < H; ++h)
    for (int i = 0; i < n; ++i)
      nu[h].row(i) = random_simplex_point(S, rng).transpose();

  auto tables_from_u = [&](const std::vector<VectorXd>& u) {
    std::vector<MatrixXd> tables;
    tables.reserve(H);
    for (int h = 0; h < H; ++h) {
      const VectorXd w = nu[h] * u[h];
      MatrixXd flat = env.phi()[h] * w;  // (S*A) x 1
      MatrixXd t(S, mdp.A);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < mdp.A; ++a) t(s, a) = flat(mdp.row(s, a), 0);
      tables.push_back(std::move(t));
    }
    return tables;
  };
  auto random_u = [&]() {
    std::vector<VectorXd> u(H, VectorXd(S));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) u[h][s] = rng.next_double();
    return u;
  };

  std::vector<CostFunction> out;
  out.reserve(K);
  if (spec.generator == "iid_uniform") {
    for (int k = 0; k < K; ++k) out.emplace_back(tables_from_u(random_u()));
    return out;
  }
  if (spec.generator == "piecewise_constant") {
    if (spec.period < 1) throw ConfigError("piecewise_constant: period >= 1");
    std::vector<MatrixXd> block;
    for (int k = 0; k < K; ++k) {
      if (k % spec.period == 0) block = tables_from_u(random_u());
      out.emplace_back(block);
    }
    return out;
  }
  if (spec.generator == "sinusoidal") {
    if (spec.period < 1) throw ConfigError("sinusoidal: period >= 1");
    std::vector<VectorXd> phase(H, VectorXd(S));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) phase[h][s] = 2.0 * M_PI * rng.next_double();
    for (int k = 1; k <= K; ++k) {
      std::vector<VectorXd> u(H, VectorXd(S));
      for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
          u[h][s] = 0.5 + 0.5 * std::sin(2.0 * M_PI * k / spec.period +
                                         phase[h][s]);
      out.emplace_back(tables_from_u(u));
    }
    return out;
  }
  if (spec.generator == "adversarial_drift") {
    if (spec.period < 1) throw ConfigError("adversarial_drift: period >= 1");
    std::vector<VectorXd> even(H, VectorXd(S)), odd(H, VectorXd(S));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) {
        const double x = rng.next_double() < 0.5 ? 0.05 : 0.95;
        even[h][s] = x;
        odd[h][s] = 1.0 - x;
      }
    for (int k = 0; k < K; ++k)
      out.emplace_back(tables_from_u((k / spec.period) % 2 == 0 ? even : odd));
    return out;
  }
  throw ConfigError("unknown cost generator: " + spec.generator);
}

DelaySchedule make_schedule(const DelaySpec& spec, int K) {
  if (spec.kind == "constant") return make_constant_schedule(K, spec.d);
  if (spec.kind == "uniform") {
    Rng rng(derive_key(spec.seed, 0xDE1A));
    return make_uniform_schedule(K, spec.lo, spec.hi, rng);
  }
  if (spec.kind == "spike")
    return make_spike_schedule(K, spec.period, spec.height);
  if (spec.kind == "file") return load_schedule(spec.file, K);
  throw ConfigError("unknown delay kind: " + spec.kind);
}

namespace {

EnvSpec parse_env_spec(const json& j) {
  reject_unknown_keys(
      j, {"generator", "file", "S", "A", "H", "n", "s_init", "seed"},
      "environment");
  EnvSpec spec;
  if (j.contains("generator")) spec.generator = j["generator"].get<std::string>();
  if (j.contains("file")) spec.file = j["file"].get<std::string>();
  if (j.contains("S")) spec.S = j["S"].get<int>();
  if (j.contains("A")) spec.A = j["A"].get<int>();
  if (j.contains("H")) spec.H = j["H"].get<int>();
  if (j.contains("n")) spec.n = j["n"].get<int>();
  if (j.contains("s_init")) spec.s_init = j["s_init"].get<int>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  return spec;
}

CostSpec parse_cost_spec(const json& j) {
  reject_unknown_keys(j, {"generator", "period", "seed"}, "costs");
  CostSpec spec;
  if (j.contains("generator")) spec.generator = j["generator"].get<std::string>();
  if (j.contains("period")) spec.period = j["period"].get<int>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  return spec;
}

DelaySpec parse_delay_spec(const json& j) {
  reject_unknown_keys(
      j, {"kind", "d", "lo", "hi", "period", "height", "file", "seed"},
      "delays");
  DelaySpec spec;
  if (j.contains("kind")) spec.kind = j["kind"].get<std::string>();
  if (j.contains("d")) spec.d = j["d"].get<std::int64_t>();
  if (j.contains("lo")) spec.lo = j["lo"].get<std::int64_t>();
  if (j.contains("hi")) spec.hi = j["hi"].get<std::int64_t>();
  if (j.contains("period")) spec.period = j["period"].get<int>();
  if (j.contains("height")) spec.height = j["height"].get<std::int64_t>();
  if (j.contains("file")) spec.file = j["file"].get<std::string>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  return spec;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown_keys(doc,
                      {"environment", "costs", "delays", "algorithm", "K",
                       "seeds", "output", "overrides"},
                      "config root");
  RunConfig cfg;
  if (doc.contains("environment")) cfg.env = parse_env_spec(doc["environment"]);
  if (doc.contains("costs")) cfg.costs = parse_cost_spec(doc["costs"]);
  if (doc.contains("delays")) cfg.delays = parse_delay_spec(doc["delays"]);
  if (doc.contains("algorithm"))
    cfg.algorithm = doc["algorithm"].get<std::string>();
  if (!doc.contains("K")) throw ConfigError("config: missing K");
  cfg.K = doc["K"].get<int>();
  if (cfg.K < 1) throw ConfigError("config: K must be >= 1");
  if (doc.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : doc["seeds"]) cfg.seeds.push_back(s.get<std::uint64_t>());
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  }
  if (doc.contains("output")) cfg.output = doc["output"].get<std::string>();
  if (doc.contains("overrides")) {
    const json& ov = doc["overrides"];
    reject_unknown_keys(ov,
                        {"eta", "gamma", "delta", "skip_beta", "mgr_m", "mgr_n",
                         "bonus_budget", "value_rollouts", "exact_sigma",
                         "deterministic_bonus"},
                        "overrides");
    if (ov.contains("eta")) cfg.eta = ov["eta"].get<double>();
    if (ov.contains("gamma")) cfg.gamma = ov["gamma"].get<double>();
    if (ov.contains("delta")) cfg.delta = ov["delta"].get<double>();
    if (ov.contains("skip_beta")) cfg.skip_beta = ov["skip_beta"].get<double>();
    if (ov.contains("mgr_m")) cfg.mgr_m = ov["mgr_m"].get<std::int64_t>();
    if (ov.contains("mgr_n")) cfg.mgr_n = ov["mgr_n"].get<std::int64_t>();
    if (ov.contains("bonus_budget"))
      cfg.bonus_budget = ov["bonus_budget"].get<std::int64_t>();
    if (ov.contains("value_rollouts"))
      cfg.value_rollouts = ov["value_rollouts"].get<int>();
    if (ov.contains("exact_sigma")) cfg.exact_sigma = ov["exact_sigma"].get<bool>();
    if (ov.contains("deterministic_bonus"))
      cfg.deterministic_bonus = ov["deterministic_bonus"].get<bool>();
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace delaypo
