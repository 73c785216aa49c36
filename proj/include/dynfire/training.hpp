#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dynfire/adam.hpp"
#include "dynfire/gridstack.hpp"
#include "dynfire/model.hpp"
#include "dynfire/replay.hpp"

namespace dynfire {

/// Two-time-scale step sizes: eps_pred(n) = c_pred (1+n)^-a_pred and
/// eps_sys(n) = c_sys (1+n)^-a_sys with 0 < a_pred < a_sys <= 1, so the
/// system-identification step vanishes faster than the prediction step.
struct TturSchedule {
  double c_pred = 3e-3;
  double c_sys = 3e-3;
  double a_pred = 0.25;
  double a_sys = 0.5;

  void validate() const;
  std::pair<double, double> step_sizes(std::uint64_t n) const;  // (eps_pred, eps_sys)
  double ratio(std::uint64_t n) const;                          // eps_sys / eps_pred

  friend bool operator==(const TturSchedule&, const TturSchedule&) = default;
};

struct TrainConfig {
  Variant variant = Variant::dynamic_autoenc;
  ModelDims dims;
  TturSchedule schedule;
  std::size_t batch_windows = 8;    // L
  std::size_t window_steps = 12;    // K
  std::size_t buffer_capacity = 64; // N
  std::uint64_t iterations = 500;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  double clip_norm = 5.0;

  std::size_t window_length() const { return window_steps + dims.horizon; }
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossRecord {
  std::uint64_t n = 0;
  double eps_pred = 0.0;
  double eps_sys = 0.0;
  double l_sys = 0.0;  // NaN for variants without decoder_obs
  double l_pred = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

template <typename T>
struct LossVars {
  std::optional<Var<T>> sys;
  Var<T> pred;
};

/// Records both losses for one minibatch on the network's tape. For the
/// dynamic auto-encoder the fire loss sees the state through stop_gradient,
/// so it only reaches decoder_fire; the other variants train end to end on
/// the fire loss and have no observation loss.
template <typename T>
LossVars<T> build_losses(const Network<T>& net, const Minibatch& batch);

struct LossEvaluation {
  double value = 0.0;
  ParamSet grads;  // every model parameter, zeros where the loss does not reach
};

/// Mean one-step observation BCE over the L*K predictions and its gradient.
/// UnsupportedVariantError for variants without decoder_obs.
LossEvaluation loss_sys(const Model& model, const Minibatch& batch);
/// Mean T-step-ahead fire BCE over the L*K predictions and its gradient.
LossEvaluation loss_pred(const Model& model, const Minibatch& batch);

/// Everything needed to continue training bit-exactly.
struct TrainState {
  TrainConfig config;
  ParamSet sys;   // encoder, rnn, decoder_obs
  ParamSet pred;  // decoder_fire
  AdamState adam_sys;
  AdamState adam_pred;
  std::uint64_t n = 0;
  std::vector<LossRecord> history;

  // Online stream position over the training data.
  HiddenState online;
  std::size_t cursor = 0;
  TrajectoryBuffer buffer{1, 1, 1};
  std::vector<std::size_t> buffer_starts;  // dataset frame index of each buffer entry
  Rng rng;
  std::uint64_t data_fingerprint = 0;  // training dataset the stream runs over

  Model model() const;
};

/// Splits a parameter set into (sys, pred) groups.
std::pair<ParamSet, ParamSet> partition_params(const ParamSet& params);
/// Reassembles the groups in network layout order.
ParamSet merge_params(Variant variant, const ModelDims& dims, const ParamSet& sys, const ParamSet& pred);

/// Fresh state: initialized parameters, zero moments, and the stream
/// advanced until the first K+T window is in the buffer.
TrainState make_train_state(const TrainConfig& config, const Dataset& train);

/// One iteration: advance the online state by one frame and push the newest
/// window, sample a minibatch, take one Adam step per group at the current
/// TTUR step sizes, append the loss record.
void train_iteration(TrainState& state, const Dataset& train);

struct TrainRunOptions {
  std::filesystem::path checkpoint_dir;  // empty disables checkpoint files
  std::optional<TrainState> resume;      // continue from this state
  std::function<void(const TrainState&)> on_iteration;
};

struct TrainResult {
  TrainState state;
  std::vector<std::filesystem::path> checkpoints;
};

/// Algorithm-level loop: runs until state.n == config.iterations, writing
/// a checkpoint every checkpoint_interval iterations and a final one.
TrainResult train_run(const TrainConfig& config, const Dataset& train, TrainRunOptions options = {});

/// CSV with header n,eps_pred,eps_sys,l_sys,l_pred.
std::string metrics_csv(const std::vector<LossRecord>& history);
void write_metrics_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

}  // namespace dynfire
