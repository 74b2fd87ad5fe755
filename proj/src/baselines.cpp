#include "delaypo/baselines.hpp"

namespace delaypo {

BaselineKind baseline_from_name(const std::string& name) {
  if (name == "naive_delayed_po") return BaselineKind::naive_delayed_po;
  if (name == "oracle_nondelayed_po") return BaselineKind::oracle_nondelayed_po;
  if (name == "uniform_random") return BaselineKind::uniform_random;
  throw ConfigError("unknown baseline: " + name);
}

namespace {

RegretReport run_uniform_random(const TabularMdp& mdp,
                                const std::vector<CostFunction>& costs,
                                const DelaySchedule& schedule, Rng& rng,
                                const RunOptions& options) {
  const int K = static_cast<int>(costs.size());
  if (schedule.K() != K)
    throw StructuralError("run: costs/schedule length mismatch");
  const Policy pi = uniform_policy(mdp.S, mdp.A, mdp.H);
  RegretReport report;
  report.learner_value.resize(K);
  report.value_std_error.assign(K, 0.0);
  report.delay = schedule.d;
  report.arrivals.assign(K, 0);
  report.total_delay = schedule.total();
  report.max_delay = schedule.max_delay();
  for (int k = 0; k < K; ++k) {
    report.learner_value[k] = evaluate(mdp, pi, costs[k]).V[0][mdp.s_init];
    sample_episode(mdp, pi, costs[k], rng);
    if (options.record_policies) report.policies.push_back(pi);
  }
  detail::finalize_regret(mdp, costs, report);
  return report;
}

}  // namespace

RegretReport run_baseline(BaselineKind kind, const TabularMdp& mdp,
                          const std::vector<CostFunction>& costs,
                          const DelaySchedule& schedule,
                          const DapoKnownConfig& config, Rng& rng,
                          const RunOptions& options) {
  switch (kind) {
    case BaselineKind::naive_delayed_po: {
      detail::KnownRunFlags flags;
      flags.force_ratio_one = true;
      flags.bonus_with_source_policy = true;
      return detail::run_dapo_known_flags(mdp, costs, schedule, config, rng,
                                          options, flags);
    }
    case BaselineKind::oracle_nondelayed_po: {
      const DelaySchedule zero = make_constant_schedule(schedule.K(), 0);
      return run_dapo_known(mdp, costs, zero, config, rng, options);
    }
    case BaselineKind::uniform_random:
      return run_uniform_random(mdp, costs, schedule, rng, options);
  }
  throw ConfigError("run_baseline: invalid kind");
}

}  // namespace delaypo
