#pragma once

// JSON serialization of an environment together with its per-episode cost
// tables. Document layout:
//   { "S": int, "A": int, "H": int, "s_init": int,
//     "p": [H-1][S][A][S'] nested arrays,
//     "costs": [K][H][S][A] nested arrays }
// Doubles survive a save/load round trip bit-exactly.

#include <string>
#include <vector>

#include "delaypo/env.hpp"

namespace delaypo {

struct EnvWithCosts {
  TabularMdp mdp;
  std::vector<CostFunction> costs;
};

std::string to_json_string(const EnvWithCosts& ec);
EnvWithCosts env_from_json_string(const std::string& text);

void save_env(const EnvWithCosts& ec, const std::string& path);
EnvWithCosts load_env(const std::string& path);

}  // namespace delaypo
