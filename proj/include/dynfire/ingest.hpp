#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dynfire/gridstack.hpp"

namespace dynfire {

/// JSON manifest: {"week0": "YYYY-MM-DD", "channels": {name: pattern, ...}}
/// or "channels": [{"name": ..., "pattern": ...}, ...]. Patterns are relative
/// to the data directory and contain one '*' standing for the integer week
/// index. Optional "first_week" / "last_week" pin the range; otherwise it
/// spans every week any channel provides.
struct IngestManifest {
  std::string week0 = "2000-01-03";
  std::vector<std::pair<std::string, std::string>> channels;  // (name, pattern)
  std::optional<std::int64_t> first_week;
  std::optional<std::int64_t> last_week;
};

IngestManifest parse_manifest(const std::string& json_text);
IngestManifest read_manifest(const std::filesystem::path& path);

struct IngestQa {
  struct Fill {
    std::string channel;
    std::int64_t week;
    std::int64_t source_week;  // week whose grid was copied
  };
  std::vector<Fill> filled;
  std::size_t forward_fill_count() const { return filled.size(); }
  std::vector<std::string> degenerate_channels;  // constant channels stored as 0.5
  std::string to_json() const;
};

struct IngestResult {
  GridStack stack;
  IngestQa qa;
};

/// One CSV grid (rows of comma-separated numbers) per channel per week.
/// Each channel is min-max normalized with its global extremes, recorded in
/// the header. Missing weeks copy the previous week. IngestionError names
/// the offending file on inconsistent dimensions or unparsable cells.
IngestResult ingest_csv_rasters(const std::filesystem::path& dir, const IngestManifest& manifest);

/// Parses one CSV grid into (rows, cols, values).
std::vector<std::vector<double>> read_csv_grid(const std::filesystem::path& path);

}  // namespace dynfire
