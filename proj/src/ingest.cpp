#include "dynfire/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

namespace dynfire {

namespace {

using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::regex pattern_regex(const std::string& filename_pattern) {
  std::string re;
  for (const char ch : filename_pattern) {
    if (ch == '*') {
      re += "(-?[0-9]+)";
    } else if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
      re += ch;
    } else {
      re += '\\';
      re += ch;
    }
  }
  return std::regex(re);
}

// Week index -> file for one channel pattern.
std::map<std::int64_t, std::filesystem::path> scan_pattern(const std::filesystem::path& dir, const std::string& name,
                                                           const std::string& pattern) {
  const std::filesystem::path rel(pattern);
  const std::string file_pat = rel.filename().string();
  if (std::count(pattern.begin(), pattern.end(), '*') != 1 || file_pat.find('*') == std::string::npos) {
    throw IngestionError("channel '" + name + "': pattern '" + pattern +
                         "' must contain exactly one '*' in its file name");
  }
  const std::filesystem::path folder = dir / rel.parent_path();
  std::map<std::int64_t, std::filesystem::path> files;
  if (!std::filesystem::is_directory(folder)) {
    throw IngestionError("channel '" + name + "': directory '" + folder.string() + "' does not exist");
  }
  const std::regex re = pattern_regex(file_pat);
  for (const auto& entry : std::filesystem::directory_iterator(folder)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string fname = entry.path().filename().string();
    if (!std::regex_match(fname, m, re)) continue;
    const std::int64_t week = std::stoll(m[1].str());
    if (files.count(week)) {
      throw IngestionError("channel '" + name + "': files '" + files[week].string() + "' and '" +
                           entry.path().string() + "' both map to week " + std::to_string(week));
    }
    files[week] = entry.path();
  }
  return files;
}

}  // namespace

IngestManifest parse_manifest(const std::string& json_text) {
  IngestManifest m;
  try {
    const auto j = ordered_json::parse(json_text);
    if (j.contains("week0")) m.week0 = j.at("week0").get<std::string>();
    if (j.contains("first_week")) m.first_week = j.at("first_week").get<std::int64_t>();
    if (j.contains("last_week")) m.last_week = j.at("last_week").get<std::int64_t>();
    const auto& ch = j.at("channels");
    if (ch.is_object()) {
      for (const auto& [name, pat] : ch.items()) m.channels.emplace_back(name, pat.get<std::string>());
    } else {
      for (const auto& e : ch) m.channels.emplace_back(e.at("name").get<std::string>(), e.at("pattern").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed ingest manifest: ") + e.what());
  }
  if (m.channels.empty()) throw IngestionError("ingest manifest lists no channels");
  return m;
}

IngestManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::vector<std::vector<double>> read_csv_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      const std::string t = trim(cell);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
        throw IngestionError("'" + path.string() + "' line " + std::to_string(lineno) + ": unparsable cell '" + t +
                             "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IngestionError("'" + path.string() + "' line " + std::to_string(lineno) + ": ragged row (" +
                           std::to_string(row.size()) + " vs " + std::to_string(rows.front().size()) + " cells)");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IngestionError("'" + path.string() + "' holds no grid");
  return rows;
}

std::string IngestQa::to_json() const {
  ordered_json j;
  j["forward_fill_count"] = forward_fill_count();
  j["filled"] = ordered_json::array();
  for (const auto& f : filled) {
    j["filled"].push_back(ordered_json{{"channel", f.channel}, {"week", f.week}, {"source_week", f.source_week}});
  }
  j["degenerate_channels"] = degenerate_channels;
  return j.dump(2) + "\n";
}

IngestResult ingest_csv_rasters(const std::filesystem::path& dir, const IngestManifest& manifest) {
  const std::size_t C = manifest.channels.size();
  std::vector<std::map<std::int64_t, std::filesystem::path>> files;
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& [name, pattern] : manifest.channels) {
    files.push_back(scan_pattern(dir, name, pattern));
    if (!files.back().empty()) {
      lo = std::min(lo, files.back().begin()->first);
      hi = std::max(hi, files.back().rbegin()->first);
    }
  }
  if (manifest.first_week) lo = *manifest.first_week;
  if (manifest.last_week) hi = *manifest.last_week;
  if (lo > hi) throw IngestionError("no week files match the manifest patterns under '" + dir.string() + "'");

  IngestResult result;
  GridHeader& h = result.stack.header;
  h.week0 = manifest.week0;
  h.first_week = lo;
  h.channels = C;
  h.frame_count = static_cast<std::size_t>(hi - lo + 1);

  // raw[c][k] holds the grid of channel c at frame k.
  std::vector<std::vector<std::vector<double>>> raw(C, std::vector<std::vector<double>>(h.frame_count));
  std::string shape_source;
  for (std::size_t c = 0; c < C; ++c) {
    const std::string& name = manifest.channels[c].first;
    h.channel_names.push_back(name);
    std::int64_t last_week = 0;
    bool have = false;
    for (std::int64_t w = lo; w <= hi; ++w) {
      const std::size_t k = static_cast<std::size_t>(w - lo);
      const auto it = files[c].find(w);
      if (it == files[c].end()) {
        if (!have) {
          throw IngestionError("channel '" + name + "': week " + std::to_string(w) +
                               " is missing and there is no earlier week to fill from");
        }
        raw[c][k] = raw[c][k - 1];
        result.qa.filled.push_back({name, w, last_week});
        continue;
      }
      const auto grid = read_csv_grid(it->second);
      if (shape_source.empty()) {
        h.height = grid.size();
        h.width = grid.front().size();
        shape_source = it->second.string();
      } else if (grid.size() != h.height || grid.front().size() != h.width) {
        throw IngestionError("'" + it->second.string() + "' is " + std::to_string(grid.size()) + "x" +
                             std::to_string(grid.front().size()) + ", expected " + std::to_string(h.height) + "x" +
                             std::to_string(h.width) + " as in '" + shape_source + "'");
      }
      auto& flat = raw[c][k];
      for (const auto& row : grid) flat.insert(flat.end(), row.begin(), row.end());
      last_week = w;
      have = true;
    }
  }

  const std::size_t HW = h.height * h.width;
  for (std::size_t c = 0; c < C; ++c) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (const auto& g : raw[c])
      for (const double v : g) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
    h.channel_min.push_back(mn);
    h.channel_max.push_back(mx);
    if (mn == mx) result.qa.degenerate_channels.push_back(h.channel_names[c]);
  }
  auto& payload = result.stack.payload;
  payload.resize(h.frame_count * C * HW);
  for (std::size_t k = 0; k < h.frame_count; ++k)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p)
        payload[(k * C + c) * HW + p] = normalize_value(raw[c][k][p], h.channel_min[c], h.channel_max[c]);
  result.stack.validate();
  return result;
}

}  // namespace dynfire
