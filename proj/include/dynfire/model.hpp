#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dynfire/grad_check.hpp"
#include "dynfire/ops.hpp"
#include "dynfire/param_set.hpp"

namespace dynfire {

enum class Variant { dynamic_autoenc, gru_baseline, static_generative };

std::string to_string(Variant v);
/// Accepts the tag names used in files and on the command line.
Variant parse_variant(const std::string& tag);
/// All variants in tie-break order (alphabetical by tag).
const std::vector<Variant>& all_variants();

struct ModelDims {
  std::size_t channels = 5;  // C
  std::size_t height = 16;   // H
  std::size_t width = 16;    // W
  std::size_t state = 64;    // S
  std::size_t feature = 64;  // E
  std::size_t horizon = 4;   // T
  std::size_t conv1 = 8;     // encoder/decoder inner widths
  std::size_t conv2 = 16;

  std::size_t mid_height() const { return (height + 1) / 2; }
  std::size_t mid_width() const { return (width + 1) / 2; }
  std::size_t low_height() const { return (mid_height() + 1) / 2; }
  std::size_t low_width() const { return (mid_width() + 1) / 2; }
  std::size_t flat_width() const { return conv2 * low_height() * low_width(); }

  /// Throws ConfigError for zero extents.
  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// One week of normalized observations: grid is [C,H,W].
struct ObservationFrame {
  Tensor<float> grid;
  std::int64_t week_index = 0;
};

/// Per-pixel fire occupancy ([H,W]), either binary truth or predicted risk.
struct FireMap {
  enum class Kind { ground_truth, predicted_risk };
  Tensor<float> grid;
  Kind kind = Kind::predicted_risk;
  std::int64_t week_index = 0;
};

/// State estimate after assimilating the frame of `week_index`.
struct HiddenState {
  Tensor<float> vector;
  std::int64_t week_index = 0;
};

/// Which parameter group a tensor belongs to.
enum class ParamGroup { sys, pred };

/// Sys group: encoder, rnn, decoder_obs. Pred group: decoder_fire.
ParamGroup group_of(const std::string& param_name);

bool has_rnn(Variant v);
bool has_obs_decoder(Variant v);

/// Width of the vector decoded by decoder_fire: S for recurrent variants,
/// E for the static network.
std::size_t state_width(Variant v, const ModelDims& dims);

/// He-style uniform weights (U(-a,a), a = sqrt(6/fan_in)) and zero biases,
/// only for the networks the variant owns. Deterministic per seed.
ParamSet init_params(Variant variant, const ModelDims& dims, std::uint64_t seed);

/// The networks bound to tape variables. Inputs are batched: frames
/// [N,C,H,W], states [N,S].
template <typename T>
class Network {
 public:
  Network(Variant variant, const ModelDims& dims, VarMap<T> params)
      : variant_(variant), dims_(dims), p_(std::move(params)) {}

  /// Records every tensor of `params` as trainable (or constant) on `tape`.
  static Network bind(Tape<T>& tape, Variant variant, const ModelDims& dims, const BasicParamSet<T>& params,
                      bool trainable);

  Var<T> encode(const Var<T>& frames) const;
  Var<T> rnn_step(const Var<T>& state, const Var<T>& features) const;
  Var<T> decode_obs(const Var<T>& state) const;
  Var<T> decode_fire(const Var<T>& state) const;

  /// One assimilation step: new state after seeing `frames`. For the static
  /// network this is just the encoding.
  Var<T> advance(const Var<T>& state, const Var<T>& frames) const;

  Variant variant() const { return variant_; }
  const ModelDims& dims() const { return dims_; }
  const VarMap<T>& vars() const { return p_; }

 private:
  Var<T> decoder(const std::string& prefix, const Var<T>& state) const;

  Variant variant_;
  ModelDims dims_;
  VarMap<T> p_;
};

struct TrajectoryOutputs {
  std::vector<HiddenState> states;             // one per input frame
  std::vector<ObservationFrame> obs_predictions;  // empty without decoder_obs
  std::vector<FireMap> fire_predictions;       // horizon weeks after each state
};

/// Inference-side model: parameters plus the step API. Application is
/// read-only over the parameters.
class Model {
 public:
  Model(Variant variant, const ModelDims& dims, ParamSet params);

  static Model initialize(Variant variant, const ModelDims& dims, std::uint64_t seed) {
    return Model(variant, dims, init_params(variant, dims, seed));
  }

  Variant variant() const { return variant_; }
  const ModelDims& dims() const { return dims_; }
  const ParamSet& params() const { return params_; }
  ParamSet& mutable_params() { return params_; }

  /// Zero state that precedes the frame of `first_week`.
  HiddenState initial_state(std::int64_t first_week) const;

  std::vector<float> encode(const ObservationFrame& frame) const;
  HiddenState rnn_step(const HiddenState& h, std::span<const float> features) const;
  /// One-step-ahead observation prediction (week_index + 1).
  ObservationFrame decode_obs(const HiddenState& h) const;
  /// Fire risk `horizon` weeks after h.week_index.
  FireMap decode_fire(const HiddenState& h) const;

  /// Assimilates one frame: rnn_step(encode) for recurrent variants, the
  /// encoding itself for the static network.
  HiddenState assimilate(const HiddenState& h, const ObservationFrame& frame) const;

  /// Full unroll over `frames` on a single tape.
  TrajectoryOutputs forward_trajectory(std::span<const ObservationFrame> frames, const HiddenState& h0) const;

 private:
  void check_frame(const ObservationFrame& frame) const;
  void check_state(const HiddenState& h) const;

  Variant variant_;
  ModelDims dims_;
  ParamSet params_;
};

}  // namespace dynfire
