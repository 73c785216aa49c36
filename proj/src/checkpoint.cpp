#include "dynfire/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "dynfire/config.hpp"

namespace dynfire {

namespace {

using nlohmann::json;

constexpr char kMagic[6] = {'D', 'F', 'C', 'K', '1', '\0'};
constexpr std::size_t kPreamble = sizeof(kMagic) + sizeof(std::uint64_t);

struct Block {
  std::string section;
  std::string name;
  const Tensor<float>* tensor;
};

json dims_json(const ModelDims& d) {
  return json{{"channels", d.channels}, {"height", d.height}, {"width", d.width},   {"state", d.state},
              {"feature", d.feature},   {"horizon", d.horizon}, {"conv1", d.conv1}, {"conv2", d.conv2}};
}

ModelDims parse_dims(const json& j) {
  ModelDims d;
  d.channels = j.at("channels").get<std::size_t>();
  d.height = j.at("height").get<std::size_t>();
  d.width = j.at("width").get<std::size_t>();
  d.state = j.at("state").get<std::size_t>();
  d.feature = j.at("feature").get<std::size_t>();
  d.horizon = j.at("horizon").get<std::size_t>();
  d.conv1 = j.at("conv1").get<std::size_t>();
  d.conv2 = j.at("conv2").get<std::size_t>();
  return d;
}

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double from_nullable(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

std::vector<std::uint8_t> assemble(json manifest, const std::vector<Block>& blocks) {
  json tensors = json::array();
  for (const auto& b : blocks) {
    tensors.push_back(json{{"section", b.section}, {"name", b.name}, {"shape", b.tensor->shape()}});
  }
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : blocks) {
    const auto data = b.tensor->data();
    const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
    out.insert(out.end(), p, p + data.size() * sizeof(float));
  }
  return out;
}

json model_manifest(const Model& model, std::uint64_t seed, std::uint64_t iteration) {
  return json{{"format", "dynfire-checkpoint"},
              {"version", 1},
              {"variant", to_string(model.variant())},
              {"dims", dims_json(model.dims())},
              {"seed", seed},
              {"iteration", iteration}};
}

void add_params(std::vector<Block>& blocks, const std::string& section, const ParamSet& params) {
  for (const auto& e : params) blocks.push_back({section, e.name, &e.tensor});
}

struct Decoded {
  json manifest;
  std::vector<std::tuple<std::string, std::string, Tensor<float>>> tensors;
};

Decoded decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("bad magic: not a dynfire checkpoint", 0);
  }
  if (bytes.size() < kPreamble) throw FormatError("truncated manifest length field", sizeof(kMagic));
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[sizeof(kMagic) + i]) << (8 * i);
  if (len > bytes.size() - kPreamble) {
    throw FormatError("manifest length " + std::to_string(len) + " exceeds file size", sizeof(kMagic));
  }
  Decoded d;
  try {
    d.manifest = json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + static_cast<std::ptrdiff_t>(len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), kPreamble + e.byte);
  }
  std::size_t offset = kPreamble + len;
  try {
    for (const auto& t : d.manifest.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t count = numel(shape);
      if (count * sizeof(float) > bytes.size() - offset) {
        throw FormatError("truncated payload for tensor '" + t.at("name").get<std::string>() + "'", offset);
      }
      std::vector<float> values(count);
      std::memcpy(values.data(), bytes.data() + offset, count * sizeof(float));
      offset += count * sizeof(float);
      d.tensors.emplace_back(t.at("section").get<std::string>(), t.at("name").get<std::string>(),
                             Tensor<float>(shape, std::move(values)));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("incomplete checkpoint manifest: ") + e.what(), kPreamble);
  }
  if (offset != bytes.size()) {
    throw FormatError("trailing bytes after checkpoint payload", offset);
  }
  return d;
}

ParamSet section(const Decoded& d, const std::string& name) {
  ParamSet out;
  for (const auto& [sec, n, t] : d.tensors)
    if (sec == name) out.add(n, t);
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Model model_from(const Decoded& d) {
  try {
    return Model(parse_variant(d.manifest.at("variant").get<std::string>()), parse_dims(d.manifest.at("dims")),
                 section(d, "param"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("incomplete checkpoint manifest: ") + e.what(), kPreamble);
  }
}

}  // namespace

std::uint64_t dataset_fingerprint(const Dataset& data) {
  return data.observations.fingerprint() * 0x100000001B3ull ^ data.fire.fingerprint();
}

std::vector<std::uint8_t> encode_model_checkpoint(const Model& model, std::uint64_t seed, std::uint64_t iteration) {
  std::vector<Block> blocks;
  add_params(blocks, "param", model.params());
  return assemble(model_manifest(model, seed, iteration), blocks);
}

std::vector<std::uint8_t> encode_train_checkpoint(const TrainState& s) {
  const Model model = s.model();
  json manifest = model_manifest(model, s.config.seed, s.n);
  json config = json::object();
  for (const auto& [k, v] : train_config_values(s.config)) config[k] = v;
  json history = json::array();
  for (const auto& r : s.history) {
    history.push_back(json::array({r.n, r.eps_pred, r.eps_sys, nullable(r.l_sys), nullable(r.l_pred)}));
  }
  manifest["train_state"] = json{{"config", config},
                                 {"n", s.n},
                                 {"adam_sys_step", s.adam_sys.step},
                                 {"adam_pred_step", s.adam_pred.step},
                                 {"cursor", s.cursor},
                                 {"online_week", s.online.week_index},
                                 {"buffer_starts", s.buffer_starts},
                                 {"rng", s.rng.serialize()},
                                 {"data_fingerprint", s.data_fingerprint},
                                 {"history", history}};
  std::vector<Block> blocks;
  add_params(blocks, "param", model.params());
  add_params(blocks, "adam_sys_m", s.adam_sys.m);
  add_params(blocks, "adam_sys_v", s.adam_sys.v);
  add_params(blocks, "adam_pred_m", s.adam_pred.m);
  add_params(blocks, "adam_pred_v", s.adam_pred.v);
  blocks.push_back({"online", "state", &s.online.vector});
  return assemble(std::move(manifest), blocks);
}

void save_model_checkpoint(const Model& model, const std::filesystem::path& path, std::uint64_t seed,
                           std::uint64_t iteration) {
  write_bytes(encode_model_checkpoint(model, seed, iteration), path);
}

void save_train_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  write_bytes(encode_train_checkpoint(state), path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  const Decoded d = decode(read_bytes(path));
  CheckpointInfo info;
  try {
    info.variant = parse_variant(d.manifest.at("variant").get<std::string>());
    info.dims = parse_dims(d.manifest.at("dims"));
    info.seed = d.manifest.at("seed").get<std::uint64_t>();
    info.iteration = d.manifest.at("iteration").get<std::uint64_t>();
    info.has_train_state = d.manifest.contains("train_state");
  } catch (const json::exception& e) {
    throw FormatError(std::string("incomplete checkpoint manifest: ") + e.what(), kPreamble);
  }
  for (const auto& [sec, name, t] : d.tensors)
    if (sec == "param") info.param_names.push_back(name);
  return info;
}

Model decode_model(const std::vector<std::uint8_t>& bytes) { return model_from(decode(bytes)); }

Model load_model(const std::filesystem::path& path) { return decode_model(read_bytes(path)); }

TrainState decode_train_checkpoint(const std::vector<std::uint8_t>& bytes, const Dataset& train) {
  const Decoded d = decode(bytes);
  if (!d.manifest.contains("train_state")) {
    throw FormatError("checkpoint holds model parameters only, no training state", kPreamble);
  }
  const Model model = model_from(d);
  TrainState s;
  try {
    const json& ts = d.manifest.at("train_state");
    KeyValues kv;
    for (const auto& [k, v] : ts.at("config").items()) kv[k] = v.get<std::string>();
    apply_train_config(s.config, kv);
    s.n = ts.at("n").get<std::uint64_t>();
    s.adam_sys.step = ts.at("adam_sys_step").get<std::uint64_t>();
    s.adam_pred.step = ts.at("adam_pred_step").get<std::uint64_t>();
    s.cursor = ts.at("cursor").get<std::size_t>();
    s.online.week_index = ts.at("online_week").get<std::int64_t>();
    s.buffer_starts = ts.at("buffer_starts").get<std::vector<std::size_t>>();
    s.rng.deserialize(ts.at("rng").get<std::string>());
    s.data_fingerprint = ts.at("data_fingerprint").get<std::uint64_t>();
    for (const auto& r : ts.at("history")) {
      s.history.push_back(LossRecord{r.at(0).get<std::uint64_t>(), r.at(1).get<double>(), r.at(2).get<double>(),
                                     from_nullable(r.at(3)), from_nullable(r.at(4))});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("incomplete training state: ") + e.what(), kPreamble);
  }
  if (s.config.variant != model.variant() || !(s.config.dims == model.dims())) {
    throw FormatError("training state disagrees with the checkpoint's model layout", kPreamble);
  }
  std::tie(s.sys, s.pred) = partition_params(model.params());
  s.adam_sys.m = section(d, "adam_sys_m");
  s.adam_sys.v = section(d, "adam_sys_v");
  s.adam_pred.m = section(d, "adam_pred_m");
  s.adam_pred.v = section(d, "adam_pred_v");
  for (const auto& [sec, name, t] : d.tensors)
    if (sec == "online") s.online.vector = t;

  if (s.data_fingerprint != dataset_fingerprint(train)) {
    throw ConfigError("resume dataset differs from the one the checkpoint was trained on");
  }
  const auto& h = train.observations.header;
  if (h.channels != s.config.dims.channels || h.height != s.config.dims.height || h.width != s.config.dims.width) {
    throw ConfigError("resume dataset grid does not match the checkpoint's model dims");
  }
  const std::size_t len = s.config.window_length();
  s.buffer = TrajectoryBuffer(s.config.buffer_capacity, s.config.window_steps, s.config.dims.horizon);
  for (const std::size_t start : s.buffer_starts) {
    if (start + len > train.frames()) throw ConfigError("resume dataset is shorter than the checkpoint's stream");
    s.buffer.push(Trajectory::from_dataset(train, start, len));
  }
  return s;
}

TrainState load_train_checkpoint(const std::filesystem::path& path, const Dataset& train) {
  return decode_train_checkpoint(read_bytes(path), train);
}

}  // namespace dynfire
