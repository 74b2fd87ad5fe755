#pragma once

// Scenario construction: environment generators, adversarial cost streams,
// delay schedules, and the JSON run configuration consumed by the CLI.
// Environments and cost streams are generated from their own seeds, fixed
// across learner seeds (the adversary is oblivious).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "delaypo/delay.hpp"
#include "delaypo/env.hpp"
#include "delaypo/linear.hpp"

namespace delaypo {

struct EnvSpec {
  std::string generator = "random_layered";  // random_layered | chain |
                                             // one_hot | low_rank | file
  std::string file;
  int S = 2, A = 2, H = 2;
  int n = 0;  // low_rank feature dimension
  int s_init = 0;
  std::uint64_t seed = 1;
};

struct CostSpec {
  std::string generator = "iid_uniform";  // iid_uniform | piecewise_constant |
                                          // sinusoidal | adversarial_drift | file
  int period = 1;
  std::uint64_t seed = 7;
};

struct DelaySpec {
  std::string kind = "constant";  // constant | uniform | spike | file
  std::int64_t d = 0;
  std::int64_t lo = 0, hi = 0;
  int period = 1;
  std::int64_t height = 0;
  std::string file;
  std::uint64_t seed = 13;
};

struct RunConfig {
  EnvSpec env;
  CostSpec costs;
  DelaySpec delays;
  std::string algorithm = "dapo_known";
  int K = 0;
  std::vector<std::uint64_t> seeds = {1};
  std::string output = "out";
  // Hyperparameter overrides; defaults come from the per-algorithm formulas.
  std::optional<double> eta, gamma, delta, skip_beta;
  std::optional<std::int64_t> mgr_m, mgr_n, bonus_budget;
  std::optional<int> value_rollouts;
  bool exact_sigma = false;
  bool deterministic_bonus = false;
};

// Strict parser: unknown keys are rejected at every level.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

TabularMdp make_tabular_env(const EnvSpec& spec);
std::unique_ptr<FeaturizedTabularEnv> make_linear_env(const EnvSpec& spec);
std::vector<CostFunction> make_costs(const CostSpec& spec, int S, int A, int H,
                                     int K);
// In-span cost stream for linear environments: c_h = phi_h (nu_h u_h) with
// row-stochastic mixers nu, so the linear-Q assumption holds exactly.
std::vector<CostFunction> make_costs_linear(const CostSpec& spec,
                                            const FeaturizedTabularEnv& env,
                                            int K);
DelaySchedule make_schedule(const DelaySpec& spec, int K);

}  // namespace delaypo
