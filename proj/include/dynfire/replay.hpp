#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "dynfire/gridstack.hpp"
#include "dynfire/rng.hpp"

namespace dynfire {

/// Consecutive weekly frames with their ground-truth fire maps.
struct Trajectory {
  std::int64_t start_week = 0;
  std::vector<Tensor<float>> obs;   // [C,H,W] each
  std::vector<Tensor<float>> fire;  // [H,W] each

  std::size_t size() const { return obs.size(); }

  /// Frames [begin, begin + length) of a dataset.
  static Trajectory from_dataset(const Dataset& data, std::size_t begin, std::size_t length);
  Trajectory window(std::size_t offset, std::size_t length) const;
};

/// L windows of K + T frames. Window l feeds frames 0..K-1, is scored on
/// observations 1..K and on fire maps T..K+T-1.
struct Minibatch {
  std::size_t steps = 0;    // K
  std::size_t horizon = 0;  // T
  std::vector<Trajectory> windows;
  std::vector<std::size_t> source;   // buffer slot each window came from
  std::vector<std::size_t> offsets;  // start offset within that trajectory

  std::size_t size() const { return windows.size(); }
  /// Observations at window step k for every window: [L,C,H,W].
  Tensor<float> obs_at(std::size_t k) const;
  /// Fire maps at window step k for every window: [L,H,W].
  Tensor<float> fire_at(std::size_t k) const;
};

/// FIFO replay memory of recent trajectories.
class TrajectoryBuffer {
 public:
  TrajectoryBuffer(std::size_t capacity, std::size_t steps, std::size_t horizon);

  /// Appends, evicting the oldest entry when full. Trajectories shorter than
  /// steps + horizon are rejected with DomainError.
  void push(Trajectory traj);

  /// L windows, with replacement: trajectory uniform, then start offset
  /// uniform. SamplingError when nothing admits a window.
  Minibatch sample(std::size_t count, Rng& rng) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t window_length() const { return steps_ + horizon_; }
  const std::deque<Trajectory>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::size_t steps_;
  std::size_t horizon_;
  std::deque<Trajectory> entries_;
};

}  // namespace dynfire
