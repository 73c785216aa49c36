#include "dynfire/replay.hpp"

namespace dynfire {

Trajectory Trajectory::from_dataset(const Dataset& data, std::size_t begin, std::size_t length) {
  if (begin + length > data.frames()) {
    throw DomainError("trajectory [" + std::to_string(begin) + "," + std::to_string(begin + length) +
                      ") exceeds dataset of " + std::to_string(data.frames()) + " frames");
  }
  Trajectory t;
  t.start_week = data.observations.week_of(begin);
  t.obs.reserve(length);
  t.fire.reserve(length);
  for (std::size_t k = begin; k < begin + length; ++k) {
    t.obs.push_back(data.observations.frame(k));
    t.fire.push_back(data.fire.fire_map(k).grid);
  }
  return t;
}

Trajectory Trajectory::window(std::size_t offset, std::size_t length) const {
  if (offset + length > size()) throw DomainError("window exceeds trajectory");
  Trajectory t;
  t.start_week = start_week + static_cast<std::int64_t>(offset);
  t.obs.assign(obs.begin() + static_cast<std::ptrdiff_t>(offset),
               obs.begin() + static_cast<std::ptrdiff_t>(offset + length));
  t.fire.assign(fire.begin() + static_cast<std::ptrdiff_t>(offset),
                fire.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return t;
}

namespace {

Tensor<float> stack_rows(const std::vector<Trajectory>& windows, std::size_t k, bool fire) {
  const Tensor<float>& first = fire ? windows.at(0).fire.at(k) : windows.at(0).obs.at(k);
  Shape shape = first.shape();
  shape.insert(shape.begin(), windows.size());
  std::vector<float> data;
  data.reserve(numel(shape));
  for (const auto& w : windows) {
    const auto& src = fire ? w.fire.at(k).vec() : w.obs.at(k).vec();
    data.insert(data.end(), src.begin(), src.end());
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

}  // namespace

Tensor<float> Minibatch::obs_at(std::size_t k) const { return stack_rows(windows, k, false); }
Tensor<float> Minibatch::fire_at(std::size_t k) const { return stack_rows(windows, k, true); }

TrajectoryBuffer::TrajectoryBuffer(std::size_t capacity, std::size_t steps, std::size_t horizon)
    : capacity_(capacity), steps_(steps), horizon_(horizon) {
  if (capacity == 0 || steps == 0 || horizon == 0) throw ConfigError("replay capacity, K and T must be positive");
}

void TrajectoryBuffer::push(Trajectory traj) {
  if (traj.size() < window_length()) {
    throw DomainError("trajectory length " + std::to_string(traj.size()) + " is shorter than K+T = " +
                      std::to_string(window_length()));
  }
  if (traj.fire.size() != traj.obs.size()) throw DomainError("trajectory fire/observation length mismatch");
  entries_.push_back(std::move(traj));
  while (entries_.size() > capacity_) entries_.pop_front();
}

Minibatch TrajectoryBuffer::sample(std::size_t count, Rng& rng) const {
  std::vector<std::size_t> admissible;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].size() >= window_length()) admissible.push_back(i);
  if (admissible.empty()) throw SamplingError("replay buffer holds no trajectory admitting a K+T window");
  if (count == 0) throw ConfigError("minibatch size must be positive");

  Minibatch batch;
  batch.steps = steps_;
  batch.horizon = horizon_;
  for (std::size_t l = 0; l < count; ++l) {
    const std::size_t slot = admissible[rng.below(admissible.size())];
    const Trajectory& src = entries_[slot];
    const std::size_t offset = rng.below(src.size() - window_length() + 1);
    batch.windows.push_back(src.window(offset, window_length()));
    batch.source.push_back(slot);
    batch.offsets.push_back(offset);
  }
  return batch;
}

}  // namespace dynfire
