#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dynfire/model.hpp"
#include "dynfire/tensor.hpp"

namespace dynfire {

/// Metadata of a GridStack. channel_min/channel_max are the raw extremes the
/// stored values were normalized with.
struct GridHeader {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t frame_count = 0;
  std::string week0 = "2000-01-03";
  std::int64_t first_week = 0;  // week index of frame 0, counted from week0
  std::vector<std::string> channel_names;
  std::vector<double> channel_min;
  std::vector<double> channel_max;

  std::size_t frame_size() const { return channels * height * width; }
  std::size_t payload_bytes() const { return frame_count * frame_size() * sizeof(float); }

  friend bool operator==(const GridHeader&, const GridHeader&) = default;
};

/// Weekly multi-channel grids, normalized to [0,1]. Payload is frame-major,
/// then channel-major, then row-major.
struct GridStack {
  GridHeader header;
  std::vector<float> payload;

  /// Consistency of header and payload; ConfigError on mismatch, DomainError
  /// on values outside [0,1].
  void validate() const;

  std::size_t frames() const { return header.frame_count; }
  /// Frame k as a [C,H,W] tensor.
  Tensor<float> frame(std::size_t k) const;
  ObservationFrame observation(std::size_t k) const;
  /// Channel 0 of frame k as a ground-truth map (binary stacks only).
  FireMap fire_map(std::size_t k) const;
  std::int64_t week_of(std::size_t k) const { return header.first_week + static_cast<std::int64_t>(k); }

  /// Frames [begin, end) with first_week shifted accordingly.
  GridStack slice(std::size_t begin, std::size_t end) const;

  /// Raw value of a stored normalized value in channel c.
  double denormalize(std::size_t c, float value) const;

  /// FNV-1a over header JSON and payload bytes; identifies a stack in reports.
  std::uint64_t fingerprint() const;

  friend bool operator==(const GridStack&, const GridStack&) = default;
};

/// Normalizes raw to [0,1] with the given extremes; max == min maps to 0.5.
float normalize_value(double raw, double lo, double hi);

/// Serialized form: magic "GSTK1\0", u64 little-endian header length, UTF-8
/// JSON header, raw little-endian float32 payload.
std::vector<std::uint8_t> encode_stack(const GridStack& stack);
/// Parses encode_stack output. FormatError (with byte offset) on bad magic,
/// truncation, header/payload mismatch or values outside [0,1].
GridStack decode_stack(const std::vector<std::uint8_t>& bytes);

void write_stack(const GridStack& stack, const std::filesystem::path& path);
GridStack read_stack(const std::filesystem::path& path);

/// First floor(ratio * frames) frames train, the rest validate.
std::pair<GridStack, GridStack> temporal_split(const GridStack& stack, double ratio = 0.70);

/// Observation stack plus aligned binary ground-truth fire stack.
struct Dataset {
  GridStack observations;
  GridStack fire;

  /// Frame counts, grids and week offsets agree; fire is single-channel.
  void validate() const;
  std::size_t frames() const { return observations.frames(); }
  Dataset slice(std::size_t begin, std::size_t end) const;
};

/// Ground truth derived from an observation stack: channel 0 binarized at
/// `threshold`. Used when no separate fire stack exists (real ingests).
GridStack fire_from_observations(const GridStack& observations, float threshold = 0.5f);

std::pair<Dataset, Dataset> temporal_split(const Dataset& data, double ratio = 0.70);

/// Loads an observation stack and, when `fire_path` is empty, derives its
/// ground truth with fire_from_observations.
Dataset load_dataset(const std::filesystem::path& obs_path, const std::filesystem::path& fire_path = {});

}  // namespace dynfire
