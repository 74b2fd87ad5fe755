#pragma once

// Comparison learners that isolate the value of delay adaptation.
//  - naive_delayed_po: the known-transition learner with the ratio forced
//    to 1 and the bonus built from the source policy (no delay adaptation).
//  - oracle_nondelayed_po: the same learner fed with zero delays.
//  - uniform_random: never updates.

#include "delaypo/dapo_known.hpp"

namespace delaypo {

enum class BaselineKind {
  naive_delayed_po,
  oracle_nondelayed_po,
  uniform_random,
};

BaselineKind baseline_from_name(const std::string& name);

RegretReport run_baseline(BaselineKind kind, const TabularMdp& mdp,
                          const std::vector<CostFunction>& costs,
                          const DelaySchedule& schedule,
                          const DapoKnownConfig& config, Rng& rng,
                          const RunOptions& options = {});

}  // namespace delaypo
