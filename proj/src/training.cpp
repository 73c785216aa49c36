#include "dynfire/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "dynfire/checkpoint.hpp"

namespace dynfire {

void TturSchedule::validate() const {
  if (!(a_pred > 0.0 && a_pred < a_sys && a_sys <= 1.0)) {
    throw ConfigError("TTUR exponents must satisfy 0 < a_pred < a_sys <= 1");
  }
  if (!(c_pred >= 0.0 && c_sys >= 0.0)) throw ConfigError("TTUR step-size constants must be non-negative");
}

std::pair<double, double> TturSchedule::step_sizes(std::uint64_t n) const {
  const double base = 1.0 + static_cast<double>(n);
  return {c_pred * std::pow(base, -a_pred), c_sys * std::pow(base, -a_sys)};
}

double TturSchedule::ratio(std::uint64_t n) const {
  const auto [pred, sys] = step_sizes(n);
  return pred > 0.0 ? sys / pred : 0.0;
}

void TrainConfig::validate() const {
  dims.validate();
  schedule.validate();
  if (batch_windows == 0 || window_steps == 0 || buffer_capacity == 0) {
    throw ConfigError("L, K and N must be positive");
  }
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

template <typename T>
LossVars<T> build_losses(const Network<T>& net, const Minibatch& batch) {
  const std::size_t steps = batch.steps, horizon = batch.horizon, count = batch.size();
  if (count == 0 || steps == 0) throw DomainError("empty minibatch");
  for (const auto& w : batch.windows) {
    if (w.size() < steps + horizon) throw DomainError("minibatch window shorter than K+T");
  }
  Tape<T>& tape = net.vars().begin()->second.tape();
  const bool dynamic = has_obs_decoder(net.variant());
  Var<T> state = tape.constant(Tensor<T>({count, state_width(net.variant(), net.dims())}));
  std::optional<Var<T>> sys_total;
  std::optional<Var<T>> pred_total;
  auto accumulate = [](std::optional<Var<T>>& total, const Var<T>& term) { total = total ? add(*total, term) : term; };
  for (std::size_t k = 0; k < steps; ++k) {
    state = net.advance(state, tape.constant(as<T>(batch.obs_at(k))));
    if (dynamic) accumulate(sys_total, bce(net.decode_obs(state), as<T>(batch.obs_at(k + 1))));
    const Var<T> fire_in = dynamic ? stop_gradient(state) : state;
    accumulate(pred_total, bce(net.decode_fire(fire_in), as<T>(batch.fire_at(k + horizon))));
  }
  const T inv = T{1} / static_cast<T>(steps);
  LossVars<T> out{std::nullopt, affine(*pred_total, inv, T{0})};
  if (sys_total) out.sys = affine(*sys_total, inv, T{0});
  return out;
}

template LossVars<float> build_losses(const Network<float>&, const Minibatch&);
template LossVars<double> build_losses(const Network<double>&, const Minibatch&);

namespace {

ParamSet collect_grads(const Tape<float>& tape, const Network<float>& net, const ParamSet& params) {
  ParamSet grads;
  for (const auto& e : params) grads.add(e.name, tape.grad(net.vars().at(e.name)));
  return grads;
}

}  // namespace

LossEvaluation loss_sys(const Model& model, const Minibatch& batch) {
  if (!has_obs_decoder(model.variant())) {
    throw UnsupportedVariantError("loss_sys: " + to_string(model.variant()) + " has no observation decoder");
  }
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, model.variant(), model.dims(), model.params(), true);
  const auto losses = build_losses(net, batch);
  tape.backward(*losses.sys);
  return {losses.sys->value().item(), collect_grads(tape, net, model.params())};
}

LossEvaluation loss_pred(const Model& model, const Minibatch& batch) {
  Tape<float> tape;
  const auto net = Network<float>::bind(tape, model.variant(), model.dims(), model.params(), true);
  const auto losses = build_losses(net, batch);
  tape.backward(losses.pred);
  return {losses.pred.value().item(), collect_grads(tape, net, model.params())};
}

std::pair<ParamSet, ParamSet> partition_params(const ParamSet& params) {
  ParamSet sys, pred;
  for (const auto& e : params) (group_of(e.name) == ParamGroup::pred ? pred : sys).add(e.name, e.tensor);
  return {std::move(sys), std::move(pred)};
}

ParamSet merge_params(Variant variant, const ModelDims& dims, const ParamSet& sys, const ParamSet& pred) {
  ParamSet out;
  for (const auto& name : init_params(variant, dims, 0).names()) {
    out.add(name, group_of(name) == ParamGroup::pred ? pred.at(name) : sys.at(name));
  }
  return out;
}

Model TrainState::model() const { return Model(config.variant, config.dims, merge_params(config.variant, config.dims, sys, pred)); }

namespace {

void check_dataset(const TrainConfig& config, const Dataset& train) {
  train.validate();
  const auto& h = train.observations.header;
  if (h.channels != config.dims.channels || h.height != config.dims.height || h.width != config.dims.width) {
    throw ConfigError("dataset grid [" + std::to_string(h.channels) + "," + std::to_string(h.height) + "," +
                      std::to_string(h.width) + "] does not match model dims [" +
                      std::to_string(config.dims.channels) + "," + std::to_string(config.dims.height) + "," +
                      std::to_string(config.dims.width) + "]");
  }
  if (train.frames() < config.window_length()) {
    throw ConfigError("training data has " + std::to_string(train.frames()) + " weeks, need at least K+T = " +
                      std::to_string(config.window_length()));
  }
}

// Consumes the frame under the cursor, pushes the window that ends there once
// one is complete, and wraps to a cold state at the end of the data.
void advance_stream(TrainState& s, const Dataset& train, const Model& model) {
  const std::size_t len = s.config.window_length();
  s.online = model.assimilate(s.online, train.observations.observation(s.cursor));
  s.cursor += 1;
  if (s.cursor >= len) {
    const std::size_t start = s.cursor - len;
    s.buffer.push(Trajectory::from_dataset(train, start, len));
    s.buffer_starts.push_back(start);
    if (s.buffer_starts.size() > s.buffer.capacity()) s.buffer_starts.erase(s.buffer_starts.begin());
  }
  if (s.cursor == train.frames()) {
    s.cursor = 0;
    s.online = model.initial_state(train.observations.week_of(0));
  }
}

}  // namespace

TrainState make_train_state(const TrainConfig& config, const Dataset& train) {
  config.validate();
  check_dataset(config, train);
  TrainState s;
  s.config = config;
  const ParamSet params = init_params(config.variant, config.dims, derive_seed(config.seed, 0));
  std::tie(s.sys, s.pred) = partition_params(params);
  s.adam_sys = AdamState::zeros_like(s.sys);
  s.adam_pred = AdamState::zeros_like(s.pred);
  s.buffer = TrajectoryBuffer(config.buffer_capacity, config.window_steps, config.dims.horizon);
  s.rng = Rng(derive_seed(config.seed, 1));
  s.data_fingerprint = dataset_fingerprint(train);
  const Model model = s.model();
  s.online = model.initial_state(train.observations.week_of(0));
  while (s.buffer.size() == 0) advance_stream(s, train, model);
  return s;
}

void train_iteration(TrainState& s, const Dataset& train) {
  const Model model = s.model();
  advance_stream(s, train, model);
  const Minibatch batch = s.buffer.sample(s.config.batch_windows, s.rng);

  Tape<float> tape;
  const auto net = Network<float>::bind(tape, model.variant(), model.dims(), model.params(), true);
  const auto losses = build_losses(net, batch);
  // The two losses touch disjoint parameter groups for the dynamic
  // auto-encoder, so one sweep over their sum yields both group gradients.
  tape.backward(losses.sys ? add(*losses.sys, losses.pred) : losses.pred);

  ParamSet g_sys, g_pred;
  for (const auto& e : s.sys) g_sys.add(e.name, tape.grad(net.vars().at(e.name)));
  for (const auto& e : s.pred) g_pred.add(e.name, tape.grad(net.vars().at(e.name)));

  const auto [eps_pred, eps_sys] = s.config.schedule.step_sizes(s.n);
  try {
    if (!std::isfinite(losses.pred.value().item()) || (losses.sys && !std::isfinite(losses.sys->value().item())))
      throw TrainingError("non-finite loss");
    for (const auto* g : {&g_sys, &g_pred})
      for (const auto& e : *g)
        if (!e.tensor.all_finite()) throw TrainingError("non-finite gradient for parameter '" + e.name + "'");
    clip_global_norm(g_sys, s.config.clip_norm);
    clip_global_norm(g_pred, s.config.clip_norm);
    adam_step(s.pred, g_pred, s.adam_pred, eps_pred);
    adam_step(s.sys, g_sys, s.adam_sys, eps_sys);
  } catch (const TrainingError& e) {
    throw TrainingError("iteration " + std::to_string(s.n) + ": " + e.what());
  }
  s.history.push_back(LossRecord{s.n, eps_pred, eps_sys,
                                 losses.sys ? static_cast<double>(losses.sys->value().item())
                                            : std::numeric_limits<double>::quiet_NaN(),
                                 static_cast<double>(losses.pred.value().item())});
  s.n += 1;
}

TrainResult train_run(const TrainConfig& config, const Dataset& train, TrainRunOptions options) {
  TrainResult result;
  if (options.resume) {
    if (!(options.resume->config.variant == config.variant && options.resume->config.dims == config.dims &&
          options.resume->config.seed == config.seed)) {
      throw ConfigError("resume state was produced by a different variant, dims or seed");
    }
    check_dataset(config, train);
    if (options.resume->data_fingerprint != dataset_fingerprint(train)) {
      throw ConfigError("resume state was produced on a different training dataset");
    }
    result.state = std::move(*options.resume);
    result.state.config = config;
  } else {
    result.state = make_train_state(config, train);
  }
  TrainState& s = result.state;
  auto save = [&] {
    if (options.checkpoint_dir.empty()) return;
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_%06llu.dfck", static_cast<unsigned long long>(s.n));
    const auto path = options.checkpoint_dir / name;
    save_train_checkpoint(s, path);
    result.checkpoints.push_back(path);
  };
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);
  while (s.n < config.iterations) {
    train_iteration(s, train);
    if (options.on_iteration) options.on_iteration(s);
    if (config.checkpoint_interval > 0 && s.n % config.checkpoint_interval == 0 && s.n < config.iterations) save();
  }
  save();
  return result;
}

namespace {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<LossRecord>& history) {
  std::string out = "n,eps_pred,eps_sys,l_sys,l_pred\n";
  for (const auto& r : history) {
    out += std::to_string(r.n) + "," + format_number(r.eps_pred) + "," + format_number(r.eps_sys) + "," +
           format_number(r.l_sys) + "," + format_number(r.l_pred) + "\n";
  }
  return out;
}

void write_metrics_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << metrics_csv(history);
}

}  // namespace dynfire
