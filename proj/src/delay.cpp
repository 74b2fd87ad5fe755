#include "delaypo/delay.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace delaypo {

std::int64_t DelaySchedule::total() const {
  return std::accumulate(d.begin(), d.end(), std::int64_t{0});
}

std::int64_t DelaySchedule::max_delay() const {
  return d.empty() ? 0 : *std::max_element(d.begin(), d.end());
}

DelaySchedule make_constant_schedule(int K, std::int64_t d) {
  if (K < 0 || d < 0) throw ConfigError("constant schedule: negative parameter");
  return DelaySchedule{std::vector<std::int64_t>(K, d)};
}

DelaySchedule make_uniform_schedule(int K, std::int64_t lo, std::int64_t hi,
                                    Rng& rng) {
  if (K < 0 || lo < 0 || hi < lo)
    throw ConfigError("uniform schedule: need 0 <= lo <= hi");
  DelaySchedule out;
  out.d.resize(K);
  for (int k = 0; k < K; ++k) out.d[k] = rng.next_int(lo, hi);
  return out;
}

DelaySchedule make_spike_schedule(int K, int period, std::int64_t height) {
  if (K < 0 || period <= 0 || height < 0)
    throw ConfigError("spike schedule: need period > 0 and height >= 0");
  DelaySchedule out;
  out.d.assign(K, 0);
  for (int k = 1; k <= K; ++k)
    if (k % period == 0) out.d[k - 1] = height;
  return out;
}

DelaySchedule load_schedule(const std::string& path, int K) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open schedule file: " + path);
  DelaySchedule out;
  std::int64_t v = 0;
  while (f >> v) {
    if (v < 0) throw ConfigError("schedule file: negative delay");
    out.d.push_back(v);
  }
  if (out.K() != K)
    throw ConfigError("schedule file: expected " + std::to_string(K) +
                      " lines, got " + std::to_string(out.K()));
  return out;
}

std::int64_t delayed_indicator_sum(const DelaySchedule& schedule) {
  const int K = schedule.K();
  // Arrival times t_i = i + d^i, sorted; per episode k the inner sum counts
  // arrivals in the half-open window [k, k + d^k).
  std::vector<std::int64_t> arrivals(K);
  for (int i = 0; i < K; ++i) arrivals[i] = (i + 1) + schedule.d[i];
  std::sort(arrivals.begin(), arrivals.end());
  std::int64_t total = 0;
  for (int k = 1; k <= K; ++k) {
    const auto lo = std::lower_bound(arrivals.begin(), arrivals.end(),
                                     static_cast<std::int64_t>(k));
    const auto hi = std::lower_bound(arrivals.begin(), arrivals.end(),
                                     static_cast<std::int64_t>(k) +
                                         schedule.d[k - 1]);
    total += hi - lo;
  }
  return total;
}

std::vector<bool> skip_filter(const DelaySchedule& schedule, double beta) {
  if (beta < 0.0) throw ConfigError("skip_filter: beta must be >= 0");
  std::vector<bool> mask(schedule.d.size());
  for (std::size_t i = 0; i < schedule.d.size(); ++i)
    mask[i] = static_cast<double>(schedule.d[i]) > beta;
  return mask;
}

}  // namespace delaypo
