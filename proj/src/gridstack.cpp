#include "dynfire/gridstack.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace dynfire {

static_assert(std::endian::native == std::endian::little, "payload encoding assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'G', 'S', 'T', 'K', '1', '\0'};
constexpr std::size_t kPreamble = sizeof(kMagic) + sizeof(std::uint64_t);

nlohmann::json header_json(const GridHeader& h) {
  return nlohmann::json{{"height", h.height},
                        {"width", h.width},
                        {"channels", h.channels},
                        {"frame_count", h.frame_count},
                        {"week0", h.week0},
                        {"first_week", h.first_week},
                        {"channel_names", h.channel_names},
                        {"channel_min", h.channel_min},
                        {"channel_max", h.channel_max}};
}

GridHeader parse_header(const nlohmann::json& j) {
  GridHeader h;
  h.height = j.at("height").get<std::size_t>();
  h.width = j.at("width").get<std::size_t>();
  h.channels = j.at("channels").get<std::size_t>();
  h.frame_count = j.at("frame_count").get<std::size_t>();
  h.week0 = j.at("week0").get<std::string>();
  h.first_week = j.value("first_week", std::int64_t{0});
  h.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  h.channel_min = j.at("channel_min").get<std::vector<double>>();
  h.channel_max = j.at("channel_max").get<std::vector<double>>();
  return h;
}

void check_header(const GridHeader& h) {
  if (h.height == 0 || h.width == 0 || h.channels == 0) throw ConfigError("grid stack dims must be positive");
  if (h.channel_names.size() != h.channels || h.channel_min.size() != h.channels ||
      h.channel_max.size() != h.channels) {
    throw ConfigError("grid stack header lists " + std::to_string(h.channel_names.size()) + " names, " +
                      std::to_string(h.channel_min.size()) + " minima and " + std::to_string(h.channel_max.size()) +
                      " maxima for " + std::to_string(h.channels) + " channels");
  }
}

}  // namespace

void GridStack::validate() const {
  check_header(header);
  const std::size_t expected = header.frame_count * header.frame_size();
  if (payload.size() != expected) {
    throw ConfigError("grid stack payload holds " + std::to_string(payload.size()) + " values, header implies " +
                      std::to_string(expected));
  }
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!(payload[i] >= 0.0f && payload[i] <= 1.0f)) {
      throw DomainError("grid stack value " + std::to_string(i) + " = " + std::to_string(payload[i]) +
                        " is outside [0,1]");
    }
  }
}

Tensor<float> GridStack::frame(std::size_t k) const {
  if (k >= header.frame_count) {
    throw DomainError("frame " + std::to_string(k) + " out of range (" + std::to_string(header.frame_count) +
                      " frames)");
  }
  const std::size_t n = header.frame_size();
  const auto first = payload.begin() + static_cast<std::ptrdiff_t>(k * n);
  return Tensor<float>({header.channels, header.height, header.width}, std::vector<float>(first, first + n));
}

ObservationFrame GridStack::observation(std::size_t k) const { return ObservationFrame{frame(k), week_of(k)}; }

FireMap GridStack::fire_map(std::size_t k) const {
  Tensor<float> f = frame(k);
  f.vec().resize(header.height * header.width);
  f.reshape({header.height, header.width});
  return FireMap{std::move(f), FireMap::Kind::ground_truth, week_of(k)};
}

GridStack GridStack::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > header.frame_count) {
    throw DomainError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range");
  }
  GridStack out;
  out.header = header;
  out.header.frame_count = end - begin;
  out.header.first_week = week_of(begin);
  const std::size_t n = header.frame_size();
  out.payload.assign(payload.begin() + static_cast<std::ptrdiff_t>(begin * n),
                     payload.begin() + static_cast<std::ptrdiff_t>(end * n));
  return out;
}

double GridStack::denormalize(std::size_t c, float value) const {
  const double lo = header.channel_min.at(c), hi = header.channel_max.at(c);
  if (hi == lo) return lo;
  return lo + static_cast<double>(value) * (hi - lo);
}

std::uint64_t GridStack::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  const std::string hdr = header_json(header).dump();
  mix(hdr.data(), hdr.size());
  mix(payload.data(), payload.size() * sizeof(float));
  return h;
}

float normalize_value(double raw, double lo, double hi) {
  if (hi == lo) return 0.5f;
  const double v = (raw - lo) / (hi - lo);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

std::vector<std::uint8_t> encode_stack(const GridStack& stack) {
  stack.validate();
  const std::string hdr = header_json(stack.header).dump();
  const std::uint64_t hdr_len = hdr.size();
  std::vector<std::uint8_t> out(kPreamble + hdr.size() + stack.payload.size() * sizeof(float));
  std::memcpy(out.data(), kMagic, sizeof(kMagic));
  std::memcpy(out.data() + sizeof(kMagic), &hdr_len, sizeof(hdr_len));
  std::memcpy(out.data() + kPreamble, hdr.data(), hdr.size());
  std::memcpy(out.data() + kPreamble + hdr.size(), stack.payload.data(), stack.payload.size() * sizeof(float));
  return out;
}

GridStack decode_stack(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("bad magic: not a GSTK1 grid stack", 0);
  }
  if (bytes.size() < kPreamble) throw FormatError("truncated header length field", sizeof(kMagic));
  std::uint64_t hdr_len = 0;
  std::memcpy(&hdr_len, bytes.data() + sizeof(kMagic), sizeof(hdr_len));
  if (hdr_len > bytes.size() - kPreamble) {
    throw FormatError("header length " + std::to_string(hdr_len) + " exceeds file size " +
                          std::to_string(bytes.size()),
                      sizeof(kMagic));
  }
  GridStack stack;
  try {
    const auto j = nlohmann::json::parse(bytes.begin() + kPreamble,
                                         bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + hdr_len));
    stack.header = parse_header(j);
    check_header(stack.header);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("malformed header JSON: ") + e.what(), kPreamble + e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("incomplete header: ") + e.what(), kPreamble);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent header: ") + e.what(), kPreamble);
  }
  const std::uint64_t payload_offset = kPreamble + hdr_len;
  const std::uint64_t expected = stack.header.payload_bytes();
  const std::uint64_t actual = bytes.size() - payload_offset;
  if (actual != expected) {
    throw FormatError("payload length mismatch: header implies " + std::to_string(expected) + " bytes, found " +
                          std::to_string(actual),
                      payload_offset + std::min(actual, expected));
  }
  stack.payload.resize(expected / sizeof(float));
  std::memcpy(stack.payload.data(), bytes.data() + payload_offset, expected);
  for (std::size_t i = 0; i < stack.payload.size(); ++i) {
    if (!(stack.payload[i] >= 0.0f && stack.payload[i] <= 1.0f)) {
      throw FormatError("payload value outside [0,1]", payload_offset + i * sizeof(float));
    }
  }
  return stack;
}

void write_stack(const GridStack& stack, const std::filesystem::path& path) {
  const auto bytes = encode_stack(stack);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

GridStack read_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_stack(bytes);
}

std::pair<GridStack, GridStack> temporal_split(const GridStack& stack, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
  const auto cut = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(stack.frames())));
  if (cut == 0 || cut == stack.frames()) {
    throw ConfigError("temporal split of " + std::to_string(stack.frames()) + " frames at ratio " +
                      std::to_string(ratio) + " leaves one side empty");
  }
  return {stack.slice(0, cut), stack.slice(cut, stack.frames())};
}

void Dataset::validate() const {
  observations.validate();
  fire.validate();
  const auto& o = observations.header;
  const auto& f = fire.header;
  if (f.channels != 1 || f.height != o.height || f.width != o.width || f.frame_count != o.frame_count ||
      f.first_week != o.first_week) {
    throw ConfigError("fire stack does not align with observation stack");
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  return Dataset{observations.slice(begin, end), fire.slice(begin, end)};
}

GridStack fire_from_observations(const GridStack& observations, float threshold) {
  GridStack fire;
  fire.header = observations.header;
  fire.header.channels = 1;
  fire.header.channel_names = {"fire"};
  fire.header.channel_min = {0.0};
  fire.header.channel_max = {1.0};
  const std::size_t plane = observations.header.height * observations.header.width;
  fire.payload.reserve(observations.frames() * plane);
  for (std::size_t k = 0; k < observations.frames(); ++k) {
    const float* src = observations.payload.data() + k * observations.header.frame_size();
    for (std::size_t i = 0; i < plane; ++i) fire.payload.push_back(src[i] >= threshold ? 1.0f : 0.0f);
  }
  return fire;
}

std::pair<Dataset, Dataset> temporal_split(const Dataset& data, double ratio) {
  auto [obs_train, obs_val] = temporal_split(data.observations, ratio);
  auto [fire_train, fire_val] = temporal_split(data.fire, ratio);
  return {Dataset{std::move(obs_train), std::move(fire_train)}, Dataset{std::move(obs_val), std::move(fire_val)}};
}

Dataset load_dataset(const std::filesystem::path& obs_path, const std::filesystem::path& fire_path) {
  Dataset d;
  d.observations = read_stack(obs_path);
  d.fire = fire_path.empty() ? fire_from_observations(d.observations) : read_stack(fire_path);
  d.validate();
  return d;
}

}  // namespace dynfire
