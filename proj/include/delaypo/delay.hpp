#pragma once

// Delay schedules, the feedback-arrival buffer, delay statistics and the
// skipping filter. The buffer is the only channel through which episode
// feedback reaches a learner: a payload pushed for episode j with delay d
// becomes visible exactly when drain_at(j + d) is called, except that
// feedback still pending after the last episode is delivered by the final
// flush (drain_at with include_all_pending = true).

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "delaypo/errors.hpp"
#include "delaypo/rng.hpp"

namespace delaypo {

struct DelaySchedule {
  std::vector<std::int64_t> d;  // d[k-1] is the delay of episode k (1-based k)

  int K() const { return static_cast<int>(d.size()); }
  std::int64_t total() const;      // D = sum_k d^k
  std::int64_t max_delay() const;  // d_max
};

DelaySchedule make_constant_schedule(int K, std::int64_t d);
DelaySchedule make_uniform_schedule(int K, std::int64_t lo, std::int64_t hi,
                                    Rng& rng);
// Delay `height` at episodes k = period, 2*period, ...; zero elsewhere.
DelaySchedule make_spike_schedule(int K, int period, std::int64_t height);
// One non-negative integer per line, exactly K lines.
DelaySchedule load_schedule(const std::string& path, int K);

// sum_{k,i} 1{ k <= i + d^i < k + d^k }; always <= D + K.
std::int64_t delayed_indicator_sum(const DelaySchedule& schedule);

// mask[k-1] = true iff d^k > beta. Skipped episodes are still played; their
// feedback is discarded by the learner.
std::vector<bool> skip_filter(const DelaySchedule& schedule, double beta);

template <typename Payload>
class FeedbackBuffer {
 public:
  struct Item {
    int source;  // episode j that generated the payload
    Payload payload;
  };

  void push(int j, std::int64_t d_j, Payload payload) {
    if (d_j < 0) throw ConfigError("FeedbackBuffer: negative delay");
    const std::int64_t arrival = static_cast<std::int64_t>(j) + d_j;
    if (arrival <= last_drained_)
      throw StructuralError("FeedbackBuffer: arrival episode already drained");
    pending_[arrival].push_back(Item{j, std::move(payload)});
    ++pushed_;
  }

  // Feedback arriving at the end of episode k, ordered by ascending source
  // episode. With include_all_pending (the final flush at k = K) every
  // still-pending payload is delivered as well.
  std::vector<Item> drain_at(std::int64_t k, bool include_all_pending = false) {
    if (k <= last_drained_)
      throw StructuralError("FeedbackBuffer: episode " + std::to_string(k) +
                            " already drained");
    last_drained_ = k;
    std::vector<Item> out;
    auto it = pending_.begin();
    while (it != pending_.end() &&
           (it->first <= k || include_all_pending)) {
      if (it->first < k)
        throw StructuralError("FeedbackBuffer: missed drain of episode " +
                              std::to_string(it->first));
      for (auto& item : it->second) out.push_back(std::move(item));
      it = pending_.erase(it);
    }
    std::sort(out.begin(), out.end(),
              [](const Item& a, const Item& b) { return a.source < b.source; });
    drained_ += out.size();
    return out;
  }

  std::size_t pushed_count() const { return pushed_; }
  std::size_t drained_count() const { return drained_; }
  bool empty() const { return pending_.empty(); }

 private:
  std::map<std::int64_t, std::vector<Item>> pending_;
  std::int64_t last_drained_ = 0;
  std::size_t pushed_ = 0;
  std::size_t drained_ = 0;
};

}  // namespace delaypo
