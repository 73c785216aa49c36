#include "dynfire/model.hpp"

#include <cmath>

#include "dynfire/rng.hpp"

namespace dynfire {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dynamic_autoenc:
      return "dynamic_autoenc";
    case Variant::gru_baseline:
      return "gru_baseline";
    case Variant::static_generative:
      return "static_generative";
  }
  return "unknown";
}

Variant parse_variant(const std::string& tag) {
  for (Variant v : all_variants())
    if (to_string(v) == tag) return v;
  throw ConfigError("unknown model variant '" + tag +
                    "' (expected dynamic_autoenc, gru_baseline or static_generative)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> order{Variant::dynamic_autoenc, Variant::gru_baseline,
                                          Variant::static_generative};
  return order;
}

void ModelDims::validate() const {
  if (channels == 0 || height == 0 || width == 0 || state == 0 || feature == 0 || horizon == 0 || conv1 == 0 ||
      conv2 == 0) {
    throw ConfigError("model dims must all be positive");
  }
}

ParamGroup group_of(const std::string& name) {
  return name.rfind("decoder_fire.", 0) == 0 ? ParamGroup::pred : ParamGroup::sys;
}

bool has_rnn(Variant v) { return v != Variant::static_generative; }
bool has_obs_decoder(Variant v) { return v == Variant::dynamic_autoenc; }

std::size_t state_width(Variant v, const ModelDims& dims) { return has_rnn(v) ? dims.state : dims.feature; }

namespace {

void add_uniform(ParamSet& ps, Rng& rng, const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor<float> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(-bound, bound));
  ps.add(name, std::move(t));
}

void add_decoder(ParamSet& ps, Rng& rng, const std::string& prefix, const ModelDims& d, std::size_t in_width,
                 std::size_t out_channels) {
  add_uniform(ps, rng, prefix + ".fc.weight", {in_width, d.flat_width()}, in_width);
  ps.add(prefix + ".fc.bias", Tensor<float>({d.flat_width()}));
  add_uniform(ps, rng, prefix + ".conv1.weight", {d.conv1, d.conv2, 3, 3}, d.conv2 * 9);
  ps.add(prefix + ".conv1.bias", Tensor<float>({d.conv1}));
  add_uniform(ps, rng, prefix + ".conv2.weight", {out_channels, d.conv1, 3, 3}, d.conv1 * 9);
  ps.add(prefix + ".conv2.bias", Tensor<float>({out_channels}));
}

}  // namespace

ParamSet init_params(Variant variant, const ModelDims& d, std::uint64_t seed) {
  d.validate();
  Rng rng(seed);
  ParamSet ps;
  add_uniform(ps, rng, "encoder.conv1.weight", {d.conv1, d.channels, 3, 3}, d.channels * 9);
  ps.add("encoder.conv1.bias", Tensor<float>({d.conv1}));
  add_uniform(ps, rng, "encoder.conv2.weight", {d.conv2, d.conv1, 3, 3}, d.conv1 * 9);
  ps.add("encoder.conv2.bias", Tensor<float>({d.conv2}));
  add_uniform(ps, rng, "encoder.fc.weight", {d.flat_width(), d.feature}, d.flat_width());
  ps.add("encoder.fc.bias", Tensor<float>({d.feature}));
  if (has_rnn(variant)) {
    for (const char* gate : {"z", "r", "h"}) {
      add_uniform(ps, rng, std::string("rnn.w_") + gate, {d.feature, d.state}, d.feature);
      add_uniform(ps, rng, std::string("rnn.u_") + gate, {d.state, d.state}, d.state);
      ps.add(std::string("rnn.b_") + gate, Tensor<float>({d.state}));
    }
  }
  if (has_obs_decoder(variant)) add_decoder(ps, rng, "decoder_obs", d, d.state, d.channels);
  add_decoder(ps, rng, "decoder_fire", d, state_width(variant, d), 1);
  return ps;
}

template <typename T>
Network<T> Network<T>::bind(Tape<T>& tape, Variant variant, const ModelDims& dims, const BasicParamSet<T>& params,
                            bool trainable) {
  VarMap<T> vars;
  for (const auto& e : params) vars.emplace(e.name, trainable ? tape.parameter(e.tensor) : tape.constant(e.tensor));
  return Network(variant, dims, std::move(vars));
}

template <typename T>
Var<T> Network<T>::encode(const Var<T>& frames) const {
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[1] != dims_.channels || s[2] != dims_.height || s[3] != dims_.width) {
    throw ConfigError("encode: frames " + shape_str(s) + " do not match model dims [N," +
                      std::to_string(dims_.channels) + "," + std::to_string(dims_.height) + "," +
                      std::to_string(dims_.width) + "]");
  }
  const std::size_t n = s[0];
  Var<T> x = relu(conv2d(frames, p_.at("encoder.conv1.weight"), p_.at("encoder.conv1.bias"), 1, 1));
  x = avg_pool2(x);
  x = relu(conv2d(x, p_.at("encoder.conv2.weight"), p_.at("encoder.conv2.bias"), 1, 1));
  x = avg_pool2(x);
  x = reshape(x, {n, dims_.flat_width()});
  return relu(linear(x, p_.at("encoder.fc.weight"), p_.at("encoder.fc.bias")));
}

template <typename T>
Var<T> Network<T>::rnn_step(const Var<T>& state, const Var<T>& features) const {
  if (!has_rnn(variant_)) throw UnsupportedVariantError("rnn_step: " + to_string(variant_) + " has no RNN");
  const GruWeights<T> w{p_.at("rnn.w_z"), p_.at("rnn.u_z"), p_.at("rnn.b_z"), p_.at("rnn.w_r"), p_.at("rnn.u_r"),
                        p_.at("rnn.b_r"), p_.at("rnn.w_h"), p_.at("rnn.u_h"), p_.at("rnn.b_h")};
  return gru_cell(features, state, w);
}

template <typename T>
Var<T> Network<T>::decoder(const std::string& prefix, const Var<T>& state) const {
  const std::size_t n = state.shape().at(0);
  Var<T> x = relu(linear(state, p_.at(prefix + ".fc.weight"), p_.at(prefix + ".fc.bias")));
  x = reshape(x, {n, dims_.conv2, dims_.low_height(), dims_.low_width()});
  x = upsample2x(x, dims_.mid_height(), dims_.mid_width());
  x = relu(conv2d(x, p_.at(prefix + ".conv1.weight"), p_.at(prefix + ".conv1.bias"), 1, 1));
  x = upsample2x(x, dims_.height, dims_.width);
  x = sigmoid(conv2d(x, p_.at(prefix + ".conv2.weight"), p_.at(prefix + ".conv2.bias"), 1, 1));
  return x;
}

template <typename T>
Var<T> Network<T>::decode_obs(const Var<T>& state) const {
  if (!has_obs_decoder(variant_)) {
    throw UnsupportedVariantError("decode_obs: " + to_string(variant_) + " has no observation decoder");
  }
  return decoder("decoder_obs", state);
}

template <typename T>
Var<T> Network<T>::decode_fire(const Var<T>& state) const {
  const Var<T> out = decoder("decoder_fire", state);
  return reshape(out, {state.shape().at(0), dims_.height, dims_.width});
}

template <typename T>
Var<T> Network<T>::advance(const Var<T>& state, const Var<T>& frames) const {
  const Var<T> features = encode(frames);
  if (!has_rnn(variant_)) return features;
  return rnn_step(state, features);
}

template class Network<float>;
template class Network<double>;

Model::Model(Variant variant, const ModelDims& dims, ParamSet params)
    : variant_(variant), dims_(dims), params_(std::move(params)) {
  dims_.validate();
  const ParamSet reference = init_params(variant, dims, 0);
  if (reference.names() != params_.names()) {
    throw ConfigError("parameter set does not match the " + to_string(variant) + " network layout");
  }
  for (const auto& e : reference) {
    if (e.tensor.shape() != params_.at(e.name).shape()) {
      throw DimensionError("parameter '" + e.name + "' has shape " + shape_str(params_.at(e.name).shape()) +
                           ", expected " + shape_str(e.tensor.shape()));
    }
  }
}

HiddenState Model::initial_state(std::int64_t first_week) const {
  return HiddenState{Tensor<float>({state_width(variant_, dims_)}), first_week - 1};
}

void Model::check_frame(const ObservationFrame& frame) const {
  const Shape expected{dims_.channels, dims_.height, dims_.width};
  if (frame.grid.shape() != expected) {
    throw ConfigError("observation frame " + shape_str(frame.grid.shape()) + " does not match model dims " +
                      shape_str(expected));
  }
}

void Model::check_state(const HiddenState& h) const {
  const Shape expected{state_width(variant_, dims_)};
  if (h.vector.shape() != expected) {
    throw DimensionError("hidden state " + shape_str(h.vector.shape()) + " does not match " + shape_str(expected));
  }
}

namespace {

Tensor<float> batched(Tensor<float> t) {
  Shape s = t.shape();
  s.insert(s.begin(), 1);
  t.reshape(std::move(s));
  return t;
}

Tensor<float> unbatched(Tensor<float> t) {
  Shape s = t.shape();
  s.erase(s.begin());
  t.reshape(std::move(s));
  return t;
}

}  // namespace

std::vector<float> Model::encode(const ObservationFrame& frame) const {
  check_frame(frame);
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, variant_, dims_, params_, false);
  return net.encode(tape.constant(batched(frame.grid))).value().vec();
}

HiddenState Model::rnn_step(const HiddenState& h, std::span<const float> features) const {
  check_state(h);
  if (features.size() != dims_.feature) {
    throw DimensionError("rnn_step: feature width " + std::to_string(features.size()) + ", expected " +
                         std::to_string(dims_.feature));
  }
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, variant_, dims_, params_, false);
  const auto feat = tape.constant(Tensor<float>({1, dims_.feature}, {features.begin(), features.end()}));
  const auto out = net.rnn_step(tape.constant(batched(h.vector)), feat);
  return HiddenState{unbatched(out.value()), h.week_index + 1};
}

ObservationFrame Model::decode_obs(const HiddenState& h) const {
  if (!has_obs_decoder(variant_)) {
    throw UnsupportedVariantError("decode_obs: " + to_string(variant_) + " has no observation decoder");
  }
  check_state(h);
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, variant_, dims_, params_, false);
  return ObservationFrame{unbatched(net.decode_obs(tape.constant(batched(h.vector))).value()), h.week_index + 1};
}

FireMap Model::decode_fire(const HiddenState& h) const {
  check_state(h);
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, variant_, dims_, params_, false);
  return FireMap{unbatched(net.decode_fire(tape.constant(batched(h.vector))).value()), FireMap::Kind::predicted_risk,
                 h.week_index + static_cast<std::int64_t>(dims_.horizon)};
}

HiddenState Model::assimilate(const HiddenState& h, const ObservationFrame& frame) const {
  const std::vector<float> features = encode(frame);
  if (!has_rnn(variant_)) return HiddenState{Tensor<float>({dims_.feature}, features), frame.week_index};
  return rnn_step(h, features);
}

TrajectoryOutputs Model::forward_trajectory(std::span<const ObservationFrame> frames, const HiddenState& h0) const {
  if (frames.empty()) throw DomainError("forward_trajectory: empty trajectory");
  check_state(h0);
  for (const auto& f : frames) check_frame(f);
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, variant_, dims_, params_, false);
  TrajectoryOutputs out;
  Var<float> state = tape.constant(batched(h0.vector));
  std::int64_t week = h0.week_index;
  for (const auto& frame : frames) {
    state = net.advance(state, tape.constant(batched(frame.grid)));
    week = has_rnn(variant_) ? week + 1 : frame.week_index;
    out.states.push_back(HiddenState{unbatched(state.value()), week});
    if (has_obs_decoder(variant_)) {
      out.obs_predictions.push_back(ObservationFrame{unbatched(net.decode_obs(state).value()), week + 1});
    }
    out.fire_predictions.push_back(FireMap{unbatched(net.decode_fire(state).value()), FireMap::Kind::predicted_risk,
                                           week + static_cast<std::int64_t>(dims_.horizon)});
  }
  return out;
}

}  // namespace dynfire
