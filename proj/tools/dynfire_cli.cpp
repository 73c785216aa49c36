// dynfire command-line tool.
//
// Every subcommand resolves its settings as defaults <- config file <- flags,
// runs, and writes the resolved settings to resolved_config.txt in its output
// directory so the run can be repeated with `--config resolved_config.txt`.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "dynfire/checkpoint.hpp"
#include "dynfire/config.hpp"
#include "dynfire/eval.hpp"
#include "dynfire/ingest.hpp"
#include "dynfire/png.hpp"
#include "dynfire/simulator.hpp"
#include "dynfire/training.hpp"

namespace fs = std::filesystem;
using namespace dynfire;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kFormat = 3, kNumerical = 4 };

constexpr const char* kOutputRootEnv = "DYNFIRE_OUTPUT_ROOT";
constexpr const char* kSnapshotName = "resolved_config.txt";

struct Command {
  CLI::App* app = nullptr;
  KeyValues defaults;
  KeyValues flags;
  std::string config_file;
  KeyValues resolved;
  std::set<std::string> from_file;

  void option(const std::string& key, const std::string& def, const std::string& help) {
    defaults[key] = def;
    app->add_option_function<std::string>(
        "--" + key, [this, key](const std::string& v) { flags[key] = v; }, help + " [" + def + "]");
  }

  void resolve() {
    resolved = defaults;
    if (!config_file.empty()) {
      for (const auto& [k, v] : read_key_values(config_file)) {
        if (k == "command") {
          if (v != app->get_name()) {
            throw ConfigError("config file '" + config_file + "' was written by '" + v + "', not '" +
                              app->get_name() + "'");
          }
          continue;
        }
        if (!defaults.count(k)) throw ConfigError("config file '" + config_file + "': unknown key '" + k + "'");
        resolved[k] = v;
        from_file.insert(k);
      }
    }
    for (const auto& [k, v] : flags) resolved[k] = v;
  }

  bool explicitly_set(const std::string& key) const {
    return flags.count(key) || from_file.count(key);
  }

  const std::string& get(const std::string& key) const { return resolved.at(key); }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const auto out = std::stoull(v, &used);
      if (used == v.size() && v[0] != '-') return out;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }

  double get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }

  fs::path require_path(const std::string& key) const {
    if (get(key).empty()) throw ConfigError("missing required setting '" + key + "'");
    return get(key);
  }

  fs::path output_dir() const {
    fs::path out = get("out");
    if (const char* root = std::getenv(kOutputRootEnv); root && *root && out.is_relative()) out = fs::path(root) / out;
    fs::create_directories(out);
    return out;
  }

  void snapshot(const fs::path& dir) const {
    KeyValues kv = resolved;
    kv["command"] = app->get_name();
    write_key_values(kv, dir / kSnapshotName);
  }
};

Command& make_command(CLI::App& root, std::vector<std::unique_ptr<Command>>& store, const std::string& name,
                      const std::string& help) {
  store.push_back(std::make_unique<Command>());
  Command& c = *store.back();
  c.app = root.add_subcommand(name, help);
  c.app->add_option("--config", c.config_file, "key = value settings file; flags take precedence");
  c.option("out", name, "output directory, relative to $" + std::string(kOutputRootEnv) + " when set");
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
}

Dataset load_pair(const Command& c, const std::string& obs_key, const std::string& fire_key) {
  return load_dataset(c.require_path(obs_key), c.get(fire_key).empty() ? fs::path{} : fs::path(c.get(fire_key)));
}

HiddenState starting_state(const Command& c, const Model& model, const GridStack& target) {
  const std::string warm = c.get("warm");
  if (warm == "cold") return model.initial_state(target.week_of(0));
  if (warm != "carried") throw ConfigError("'warm' must be 'carried' or 'cold', got '" + warm + "'");
  if (c.get("train_obs").empty()) {
    throw ConfigError("carried warm start needs 'train_obs' (the training stack); pass --warm cold otherwise");
  }
  const GridStack train = read_stack(c.get("train_obs"));
  if (train.week_of(train.frames()) != target.week_of(0)) {
    throw ConfigError("training stack ends at week " + std::to_string(train.week_of(train.frames()) - 1) +
                      " but the evaluated stack starts at week " + std::to_string(target.week_of(0)));
  }
  return carried_state(model, train);
}

EvalMode parse_mode(const std::string& m) {
  if (m == "online") return EvalMode::online;
  if (m == "unrolled") return EvalMode::unrolled;
  throw ConfigError("'mode' must be 'online' or 'unrolled', got '" + m + "'");
}

// ---- subcommands ---------------------------------------------------------

void run_synth(Command& c) {
  SimConfig sim;
  sim.height = c.get_u64("height");
  sim.width = c.get_u64("width");
  sim.channels = c.get_u64("channels");
  sim.noise_sigma = c.get_double("noise_sigma");
  sim.dropout_p = c.get_double("dropout_p");
  sim.base_spread = c.get_double("base_spread");
  sim.ignition_rate = c.get_double("ignition_rate");
  const std::size_t window = c.get_u64("window_steps") + c.get_u64("horizon");
  const Dataset d = generate_dataset(sim, c.get_u64("weeks"), c.get_u64("seed"), window);
  const fs::path out = c.output_dir();
  write_stack(d.observations, out / "obs.gstk");
  write_stack(d.fire, out / "fire.gstk");
  c.snapshot(out);
  std::cout << "wrote " << d.frames() << " weeks to " << out.string() << "\n";
}

void run_ingest(Command& c) {
  const IngestResult r = ingest_csv_rasters(c.require_path("dir"), read_manifest(c.require_path("manifest")));
  const fs::path out = c.output_dir();
  write_stack(r.stack, out / "obs.gstk");
  write_stack(fire_from_observations(r.stack, static_cast<float>(c.get_double("fire_threshold"))), out / "fire.gstk");
  write_text(out / "qa.json", r.qa.to_json());
  c.snapshot(out);
  std::cout << "ingested " << r.stack.frames() << " weeks, " << r.qa.forward_fill_count()
            << " forward-filled channel weeks\n";
}

void run_split(Command& c) {
  const Dataset d = load_pair(c, "obs", "fire");
  const auto [train, val] = temporal_split(d, c.get_double("ratio"));
  const fs::path out = c.output_dir();
  write_stack(train.observations, out / "train_obs.gstk");
  write_stack(train.fire, out / "train_fire.gstk");
  write_stack(val.observations, out / "val_obs.gstk");
  write_stack(val.fire, out / "val_fire.gstk");
  c.snapshot(out);
  std::cout << "train " << train.frames() << " weeks, validation " << val.frames() << " weeks\n";
}

void run_train(Command& c) {
  const Dataset train = load_pair(c, "obs", "fire");
  const auto& h = train.observations.header;
  // Grid dims follow the data unless given explicitly.
  if (!c.explicitly_set("channels")) c.resolved["channels"] = std::to_string(h.channels);
  if (!c.explicitly_set("height")) c.resolved["height"] = std::to_string(h.height);
  if (!c.explicitly_set("width")) c.resolved["width"] = std::to_string(h.width);
  TrainConfig config;
  KeyValues tkv;
  for (const auto& k : train_config_keys()) tkv[k] = c.get(k);
  apply_train_config(config, tkv);
  config.validate();

  const fs::path out = c.output_dir();
  c.snapshot(out);
  TrainRunOptions opts;
  opts.checkpoint_dir = out / "checkpoints";
  if (!c.get("resume").empty()) opts.resume = load_train_checkpoint(c.get("resume"), train);
  const std::uint64_t every = std::max<std::uint64_t>(1, config.iterations / 10);
  opts.on_iteration = [every](const TrainState& s) {
    if (s.n % every == 0) {
      const auto& r = s.history.back();
      std::fprintf(stderr, "iter %llu  l_sys %.5f  l_pred %.5f\n", static_cast<unsigned long long>(r.n), r.l_sys,
                   r.l_pred);
    }
  };
  const TrainResult result = train_run(config, train, std::move(opts));
  save_train_checkpoint(result.state, out / "model.dfck");
  write_metrics_csv(result.state.history, out / "metrics.csv");
  std::cout << "trained " << to_string(config.variant) << " for " << result.state.n << " iterations; model at "
            << (out / "model.dfck").string() << "\n";
}

EvalReport evaluate_checkpoint(const Command& c, const fs::path& ckpt, const Dataset& val) {
  const Model model = load_model(ckpt);
  return evaluate_stream(model, val, starting_state(c, model, val.observations), parse_mode(c.get("mode")));
}

void run_evaluate(Command& c) {
  const fs::path ckpt = c.require_path("checkpoint");
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint '" + ckpt.string() + "' does not exist");
  const Dataset val = load_pair(c, "val_obs", "val_fire");
  const Model model = load_model(ckpt);
  const HiddenState h0 = starting_state(c, model, val.observations);
  EvalReport report = evaluate_stream(model, val, h0, parse_mode(c.get("mode")));
  report.best = true;
  const fs::path out = c.output_dir();
  write_text(out / "report.csv", report_csv({report}));
  write_text(out / "frames.csv", frame_csv(report));
  if (!c.get("png_dir").empty()) {
    fs::path png_dir = c.get("png_dir");
    if (png_dir.is_relative()) png_dir = out / png_dir;
    fs::create_directories(png_dir);
    HiddenState h = h0;
    for (std::size_t k = 0; k < val.frames(); ++k) {
      h = model.assimilate(h, val.observations.observation(k));
      const FireMap f = model.decode_fire(h);
      write_png_gray(f.grid, png_dir / ("risk_week_" + std::to_string(f.week_index) + ".png"));
    }
  }
  c.snapshot(out);
  std::cout << report_csv({report});
}

void run_predict(Command& c) {
  const fs::path ckpt = c.require_path("checkpoint");
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint '" + ckpt.string() + "' does not exist");
  const Model model = load_model(ckpt);
  const std::uint64_t horizon = c.get_u64("horizon");
  if (horizon != model.dims().horizon) {
    throw ConfigError("checkpoint predicts " + std::to_string(model.dims().horizon) + " weeks ahead, not " +
                      std::to_string(horizon));
  }
  const GridStack obs = read_stack(c.require_path("obs"));
  const FireMap f = predict_ahead(model, obs, starting_state(c, model, obs));
  const fs::path out = c.output_dir();
  const std::string stem = "risk_week_" + std::to_string(f.week_index);
  write_png_gray(f.grid, out / (stem + ".png"));
  std::string csv;
  const std::size_t w = f.grid.dim(1);
  for (std::size_t y = 0; y < f.grid.dim(0); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      csv += format_double(f.grid[y * w + x]);
      csv += x + 1 < w ? "," : "\n";
    }
  }
  write_text(out / (stem + ".csv"), csv);
  c.snapshot(out);
  std::cout << "predicted fire risk for week " << f.week_index << " (" << horizon << " weeks after week "
            << obs.week_of(obs.frames() - 1) << ")\n";
}

void run_compare(Command& c) {
  std::vector<std::string> ckpts;
  std::stringstream ss(c.get("checkpoints"));
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) ckpts.push_back(item);
  if (ckpts.size() < 2) throw ComparisonError("compare needs at least two checkpoints (comma-separated)");
  const Dataset val = load_pair(c, "val_obs", "val_fire");
  std::vector<EvalReport> reports;
  for (const auto& p : ckpts) {
    if (!fs::exists(p)) throw ConfigError("checkpoint '" + p + "' does not exist");
    reports.push_back(evaluate_checkpoint(c, p, val));
  }
  const Comparison cmp = compare_models(std::move(reports));
  const fs::path out = c.output_dir();
  write_text(out / "comparison.csv", report_csv(cmp.reports));
  write_text(out / "comparison.txt", comparison_table(cmp));
  c.snapshot(out);
  std::cout << comparison_table(cmp);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UnsupportedVariantError*>(&e) ||
      dynamic_cast<const ComparisonError*>(&e) || dynamic_cast<const DimensionError*>(&e)) {
    return kConfig;
  }
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IngestionError*>(&e)) return kFormat;
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const MetricError*>(&e) || dynamic_cast<const SamplingError*>(&e)) {
    return kNumerical;
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic auto-encoder wildfire forecasting"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> cmds;

  const SimConfig sim;
  const TrainConfig tc;
  Command& synth = make_command(app, cmds, "synth", "generate a synthetic partially observed fire dataset");
  synth.option("weeks", "520", "number of weekly frames");
  synth.option("seed", "0", "random seed");
  synth.option("height", std::to_string(sim.height), "grid height");
  synth.option("width", std::to_string(sim.width), "grid width");
  synth.option("channels", std::to_string(sim.channels), "observation channels");
  synth.option("noise_sigma", format_double(sim.noise_sigma), "observation noise");
  synth.option("dropout_p", format_double(sim.dropout_p), "missed-detection probability");
  synth.option("base_spread", format_double(sim.base_spread), "fire spread scale");
  synth.option("ignition_rate", format_double(sim.ignition_rate), "spontaneous ignition scale");
  synth.option("window_steps", std::to_string(tc.window_steps), "K, sizes the minimum length");
  synth.option("horizon", std::to_string(tc.dims.horizon), "T, sizes the minimum length");

  Command& ingest = make_command(app, cmds, "ingest", "build a grid stack from weekly CSV rasters");
  ingest.option("dir", "", "directory holding the CSV files");
  ingest.option("manifest", "", "JSON manifest of channel name -> file pattern");
  ingest.option("fire_threshold", "0.5", "normalized channel-0 level counted as fire");

  Command& split = make_command(app, cmds, "split", "temporal train/validation split");
  split.option("obs", "", "observation stack");
  split.option("fire", "", "fire stack (derived from channel 0 when empty)");
  split.option("ratio", "0.7", "training fraction");

  Command& train = make_command(app, cmds, "train", "train a model on the training stream");
  train.option("obs", "", "training observation stack");
  train.option("fire", "", "training fire stack (derived from channel 0 when empty)");
  train.option("resume", "", "training checkpoint to continue from");
  for (const auto& [k, v] : train_config_values(tc)) train.option(k, v, "training setting");

  Command& evaluate = make_command(app, cmds, "evaluate", "score a checkpoint on the validation stream");
  Command& predict = make_command(app, cmds, "predict", "fire risk map T weeks after the last frame");
  Command& compare = make_command(app, cmds, "compare", "compare checkpoints on one validation stream");
  for (Command* c : {&evaluate, &compare}) {
    c->option("val_obs", "", "validation observation stack");
    c->option("val_fire", "", "validation fire stack (derived from channel 0 when empty)");
    c->option("mode", "online", "online or unrolled");
  }
  for (Command* c : {&evaluate, &predict, &compare}) {
    c->option("warm", "carried", "carried (state from the training stream) or cold");
    c->option("train_obs", "", "training observation stack, for the carried state");
  }
  evaluate.option("checkpoint", "", "model checkpoint");
  evaluate.option("png_dir", "", "write one risk-map PNG per week here");
  predict.option("checkpoint", "", "model checkpoint");
  predict.option("obs", "", "observation stack to assimilate");
  predict.option("horizon", "4", "weeks ahead; must match the checkpoint");
  compare.option("checkpoints", "", "comma-separated checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    for (const auto& c : cmds) {
      if (!c->app->parsed()) continue;
      c->resolve();
      const std::string name = c->app->get_name();
      if (name == "synth") run_synth(*c);
      if (name == "ingest") run_ingest(*c);
      if (name == "split") run_split(*c);
      if (name == "train") run_train(*c);
      if (name == "evaluate") run_evaluate(*c);
      if (name == "predict") run_predict(*c);
      if (name == "compare") run_compare(*c);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}
