#include "dynfire/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dynfire {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

struct Field {
  const char* key;
  enum Kind { size, u64, real } kind;
  std::size_t TrainConfig::*size_field = nullptr;
  std::size_t ModelDims::*dim_field = nullptr;
  std::uint64_t TrainConfig::*u64_field = nullptr;
  double TturSchedule::*sched_field = nullptr;
  double TrainConfig::*real_field = nullptr;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"channels", Field::size, nullptr, &ModelDims::channels},
      {"height", Field::size, nullptr, &ModelDims::height},
      {"width", Field::size, nullptr, &ModelDims::width},
      {"state", Field::size, nullptr, &ModelDims::state},
      {"feature", Field::size, nullptr, &ModelDims::feature},
      {"horizon", Field::size, nullptr, &ModelDims::horizon},
      {"conv1", Field::size, nullptr, &ModelDims::conv1},
      {"conv2", Field::size, nullptr, &ModelDims::conv2},
      {"c_pred", Field::real, nullptr, nullptr, nullptr, &TturSchedule::c_pred},
      {"c_sys", Field::real, nullptr, nullptr, nullptr, &TturSchedule::c_sys},
      {"a_pred", Field::real, nullptr, nullptr, nullptr, &TturSchedule::a_pred},
      {"a_sys", Field::real, nullptr, nullptr, nullptr, &TturSchedule::a_sys},
      {"batch_windows", Field::size, &TrainConfig::batch_windows},
      {"window_steps", Field::size, &TrainConfig::window_steps},
      {"buffer_capacity", Field::size, &TrainConfig::buffer_capacity},
      {"iterations", Field::u64, nullptr, nullptr, &TrainConfig::iterations},
      {"seed", Field::u64, nullptr, nullptr, &TrainConfig::seed},
      {"checkpoint_interval", Field::u64, nullptr, nullptr, &TrainConfig::checkpoint_interval},
      {"clip_norm", Field::real, nullptr, nullptr, nullptr, nullptr, &TrainConfig::clip_norm},
  };
  return f;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

void write_key_values(const KeyValues& kv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << format_key_values(kv);
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k{"variant"};
    for (const auto& f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return keys;
}

void apply_train_config(TrainConfig& config, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "variant") {
      config.variant = parse_variant(value);
      continue;
    }
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (key == f.key) field = &f;
    if (!field) throw ConfigError("unknown config key '" + key + "'");
    if (field->dim_field) {
      config.dims.*(field->dim_field) = parse_u64(key, value);
    } else if (field->size_field) {
      config.*(field->size_field) = parse_u64(key, value);
    } else if (field->u64_field) {
      config.*(field->u64_field) = parse_u64(key, value);
    } else if (field->sched_field) {
      config.schedule.*(field->sched_field) = parse_double(key, value);
    } else {
      config.*(field->real_field) = parse_double(key, value);
    }
  }
}

KeyValues train_config_values(const TrainConfig& config) {
  KeyValues kv;
  kv["variant"] = to_string(config.variant);
  for (const auto& f : fields()) {
    if (f.dim_field) {
      kv[f.key] = std::to_string(config.dims.*(f.dim_field));
    } else if (f.size_field) {
      kv[f.key] = std::to_string(config.*(f.size_field));
    } else if (f.u64_field) {
      kv[f.key] = std::to_string(config.*(f.u64_field));
    } else if (f.sched_field) {
      kv[f.key] = format_double(config.schedule.*(f.sched_field));
    } else {
      kv[f.key] = format_double(config.*(f.real_field));
    }
  }
  return kv;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig config;
  apply_train_config(config, read_key_values(path));
  return config;
}

}  // namespace dynfire
