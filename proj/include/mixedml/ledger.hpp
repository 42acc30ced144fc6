#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace mixedml {

// (internal time, cumulative firing count) of one channel's unit-rate process.
struct Checkpoint {
  double lambda = 0.0;
  std::int64_t y = 0;
};

// Running record of Y_j at the path's internal times Lambda_bar_j. When a
// target internal time is armed, the pair of checkpoints bracketing it is
// captured as the path crosses it, so only two checkpoints per channel are
// ever stored.
class CvLedger {
 public:
  struct Channel {
    Checkpoint previous;
    Checkpoint current;
    double target = std::numeric_limits<double>::infinity();
    bool bracketed = false;
    Checkpoint lo;
    Checkpoint hi;
  };

  CvLedger() = default;
  explicit CvLedger(std::size_t num_channels, std::vector<double> targets = {}) : channels_(num_channels) {
    for (std::size_t j = 0; j < targets.size() && j < num_channels; ++j) {
      channels_[j].target = targets[j];
      if (targets[j] <= 0.0) {
        channels_[j].bracketed = true;
        channels_[j].lo = channels_[j].hi = Checkpoint{};
      }
    }
  }

  std::size_t size() const { return channels_.size(); }
  const Channel& channel(std::size_t j) const { return channels_[j]; }
  double lambda_bar(std::size_t j) const { return channels_[j].current.lambda; }
  std::int64_t y_count(std::size_t j) const { return channels_[j].current.y; }

  // dy firings spread over an internal-time interval of length dlambda
  // (a tau-leap increment).
  void advance(std::size_t j, double dlambda, std::int64_t dy) {
    Channel& c = channels_[j];
    Checkpoint next{c.current.lambda + dlambda, c.current.y + dy};
    if (!c.bracketed && c.target > c.current.lambda && c.target <= next.lambda) {
      c.bracketed = true;
      c.lo = c.current;
      c.hi = next;
    }
    c.previous = c.current;
    c.current = next;
  }

  // Internal time passes with no firing (an exact channel between events).
  void drift(std::size_t j, double dlambda) {
    if (dlambda > 0.0) advance(j, dlambda, 0);
  }

  // One firing at the current internal time.
  void jump(std::size_t j) {
    Channel& c = channels_[j];
    c.previous = c.current;
    c.current.y += 1;
  }

 private:
  std::vector<Channel> channels_;
};

}  // namespace mixedml
