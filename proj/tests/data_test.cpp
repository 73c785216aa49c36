#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <zlib.h>

#include "dynfire/gridstack.hpp"
#include "dynfire/ingest.hpp"
#include "dynfire/png.hpp"
#include "dynfire/simulator.hpp"
#include "test_util.hpp"

using namespace dynfire;
namespace fs = std::filesystem;

namespace {

GridStack random_stack(std::uint64_t seed, std::size_t frames = 0) {
  Rng rng(seed);
  GridStack s;
  s.header.height = 1 + rng.below(9);
  s.header.width = 1 + rng.below(9);
  s.header.channels = 1 + rng.below(4);
  s.header.frame_count = frames ? frames : 1 + rng.below(12);
  s.header.first_week = static_cast<std::int64_t>(rng.below(500));
  for (std::size_t c = 0; c < s.header.channels; ++c) {
    s.header.channel_names.push_back("ch" + std::to_string(c));
    s.header.channel_min.push_back(rng.uniform(-10.0, 0.0));
    s.header.channel_max.push_back(rng.uniform(0.0, 10.0));
  }
  s.payload.resize(s.header.frame_count * s.header.frame_size());
  for (auto& v : s.payload) v = static_cast<float>(rng.uniform());
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_csv(const fs::path& p, const std::vector<std::vector<double>>& rows) {
  std::ofstream out(p);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << "\n";
  }
}

}  // namespace

// ---- GridStack container ---------------------------------------------------

TEST(GridStack, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const GridStack s = random_stack(seed);
    const auto bytes = encode_stack(s);
    ASSERT_EQ(decode_stack(bytes), s) << "seed " << seed;
    ASSERT_EQ(encode_stack(decode_stack(bytes)), bytes);
  }
}

TEST(GridStack, FileRoundTrip) {
  const fs::path dir = fresh_dir("dynfire_stack_io");
  const GridStack s = random_stack(3);
  write_stack(s, dir / "s.gstk");
  EXPECT_EQ(read_stack(dir / "s.gstk"), s);
  fs::remove_all(dir);
}

TEST(GridStack, TruncatedPayloadIsLengthMismatch) {
  auto bytes = encode_stack(random_stack(4));
  bytes.pop_back();
  try {
    decode_stack(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("payload length mismatch"), std::string::npos);
  }
}

TEST(GridStack, CorruptionsCarryByteOffsets) {
  const auto good = encode_stack(random_stack(5));
  auto bad_magic = good;
  bad_magic[2] = 'X';
  try {
    decode_stack(bad_magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto bad_json = good;
  bad_json[14] = '!';
  try {
    decode_stack(bad_json);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GE(e.offset(), 14u);
  }
  auto bad_value = good;
  const std::size_t last = bad_value.size() - 4;
  const float big = 2.0f;
  std::memcpy(bad_value.data() + last, &big, 4);
  try {
    decode_stack(bad_value);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), last);
  }
  EXPECT_THROW(decode_stack(std::vector<std::uint8_t>(good.begin(), good.begin() + 9)), FormatError);
}

TEST(GridStack, RealScalePayloadArithmetic) {
  GridStack s;
  s.header.channels = 11;
  s.header.height = 30;
  s.header.width = 30;
  s.header.frame_count = 1014;
  s.header.channel_names.assign(11, "c");
  s.header.channel_min.assign(11, 0.0);
  s.header.channel_max.assign(11, 1.0);
  EXPECT_EQ(s.header.payload_bytes(), 11ull * 30 * 30 * 1014 * 4);
  s.payload.assign(11ull * 30 * 30 * 1014, 0.25f);
  const auto bytes = encode_stack(s);
  std::uint64_t hdr = 0;
  for (int i = 0; i < 8; ++i) hdr |= static_cast<std::uint64_t>(bytes[6 + i]) << (8 * i);
  EXPECT_EQ(bytes.size() - 14 - hdr, 40154400u);
}

TEST(GridStack, NormalizationRules) {
  EXPECT_EQ(normalize_value(0.0, 0.0, 10.0), 0.0f);
  EXPECT_EQ(normalize_value(10.0, 0.0, 10.0), 1.0f);
  EXPECT_EQ(normalize_value(3.0, 3.0, 3.0), 0.5f);
}

TEST(GridStack, FingerprintTracksContent) {
  GridStack s = random_stack(6);
  const auto f = s.fingerprint();
  EXPECT_EQ(f, s.fingerprint());
  s.payload[0] = s.payload[0] == 0.0f ? 0.5f : 0.0f;
  EXPECT_NE(f, s.fingerprint());
}

TEST(Split, SeventyThirtyBoundaries) {
  const auto [a, b] = temporal_split(random_stack(7, 100));
  EXPECT_EQ(a.frames(), 70u);
  EXPECT_EQ(b.frames(), 30u);
  const auto [c, d] = temporal_split(random_stack(7, 10));
  EXPECT_EQ(c.frames(), 7u);
  EXPECT_EQ(d.frames(), 3u);
}

TEST(Split, BoundaryIsExactAndContiguous) {
  for (std::size_t n = 2; n <= 120; ++n) {
    const GridStack s = random_stack(n, n);
    const auto [train, val] = temporal_split(s);
    ASSERT_EQ(train.frames(), static_cast<std::size_t>(std::floor(0.7 * static_cast<double>(n))));
    ASSERT_EQ(train.frames() + val.frames(), n);
    ASSERT_EQ(val.header.first_week, s.header.first_week + static_cast<std::int64_t>(train.frames()));
    ASSERT_EQ(train.frame(train.frames() - 1), s.frame(train.frames() - 1));
    ASSERT_EQ(val.frame(0), s.frame(train.frames()));
  }
}

TEST(Split, EmptySideIsConfigError) {
  EXPECT_THROW(temporal_split(random_stack(8, 1)), ConfigError);
  EXPECT_THROW(temporal_split(random_stack(8, 10), 0.0), ConfigError);
  EXPECT_THROW(temporal_split(random_stack(8, 10), 1.0), ConfigError);
}

TEST(Dataset, FireDerivedFromChannelZero) {
  GridStack s = random_stack(9);
  const GridStack f = fire_from_observations(s);
  const std::size_t plane = s.header.height * s.header.width;
  for (std::size_t k = 0; k < s.frames(); ++k)
    for (std::size_t i = 0; i < plane; ++i)
      ASSERT_EQ(f.payload[k * plane + i], s.payload[k * s.header.frame_size() + i] >= 0.5f ? 1.0f : 0.0f);
}

// ---- Simulator ---------------------------------------------------------------

TEST(Simulator, NoSpreadWithoutBaseOrIgnition) {
  SimConfig c;
  c.base_spread = 0.0;
  c.ignition_rate = 0.0;
  SimWorld w = make_world(c, 3);
  for (std::size_t i = 0; i < w.cells(); i += 5) w.burning[i] = 1;
  std::vector<std::uint8_t> prev = w.burning;
  for (int k = 0; k < 60; ++k) {
    simulate_step(w, c);
    for (std::size_t i = 0; i < w.cells(); ++i) ASSERT_LE(w.burning[i], prev[i]);
    prev = w.burning;
  }
}

TEST(Simulator, SaturatedMoistureBlocksIgnition) {
  SimConfig c;
  SimWorld w = make_world(c, 4);
  w.moisture.assign(w.cells(), 1.0);
  for (std::size_t i = 0; i + 1 < w.cells(); ++i) EXPECT_EQ(spread_probability(w, c, i, i + 1), 0.0);
}

TEST(Simulator, BurnedFractionGrowsWithSpreadRate) {
  std::vector<double> means;
  for (const double base : {0.1, 0.3, 0.5}) {
    SimConfig c;
    c.base_spread = base;
    c.ignition_rate = 0.0;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      SimWorld w = make_world(c, seed);
      w.burning[w.cells() / 2 + w.width / 2] = 1;
      std::vector<std::uint8_t> ever = w.burning;
      for (int k = 0; k < 12; ++k) {
        simulate_step(w, c);
        for (std::size_t i = 0; i < w.cells(); ++i) ever[i] |= w.burning[i];
      }
      total += static_cast<double>(std::count(ever.begin(), ever.end(), 1)) / static_cast<double>(w.cells());
    }
    means.push_back(total / 500.0);
  }
  EXPECT_LT(means[0], means[1]);
  EXPECT_LT(means[1], means[2]);
}

TEST(Simulator, FuelNeverIncreasesAndIgnitionNeedsFuel) {
  SimConfig c;
  c.ignition_rate = 0.05;
  SimWorld w = make_world(c, 5);
  for (int k = 0; k < 200; ++k) {
    const auto fuel = w.fuel;
    const auto burning = w.burning;
    simulate_step(w, c);
    for (std::size_t i = 0; i < w.cells(); ++i) {
      ASSERT_LE(w.fuel[i], fuel[i]);
      if (w.burning[i] && !burning[i]) ASSERT_GT(fuel[i], 0.0);
    }
  }
}

TEST(Observe, NoiseFreeFullObservationShowsBurningExactly) {
  SimConfig c;
  SimWorld w = make_world(c, 6);
  for (int k = 0; k < 20; ++k) simulate_step(w, c);
  for (std::size_t i = 0; i < w.cells(); i += 3) w.burning[i] = 1;
  const auto f = observe(w, 0.0, 0.0, 1, c);
  for (std::size_t i = 0; i < w.cells(); ++i) ASSERT_EQ(f.grid[i], w.burning[i] ? 1.0f : 0.0f);
}

TEST(Observe, HeavyDropoutHidesMostFires) {
  SimConfig c;
  SimWorld w = make_world(c, 7);
  w.burning.assign(w.cells(), 0);
  for (std::size_t i = 0; i < w.cells(); i += 2) w.burning[i] = 1;
  std::size_t hidden = 0, total = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto f = observe(w, 0.05, 0.9, s, c);
    for (std::size_t i = 0; i < w.cells(); ++i) {
      if (!w.burning[i]) continue;
      ++total;
      hidden += f.grid[i] == 0.0f;
    }
  }
  EXPECT_GE(static_cast<double>(hidden) / static_cast<double>(total), 0.8);
}

TEST(Observe, ValuesInUnitIntervalAndFuelNeverEmitted) {
  SimConfig c;
  c.channels = 7;
  SimWorld w = make_world(c, 8);
  for (int k = 0; k < 30; ++k) simulate_step(w, c);
  const auto f = observe(w, 0.3, 0.5, 11, c);
  for (const float v : f.grid.vec()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  SimWorld other = w;
  for (auto& fu : other.fuel) fu = 1.0 - fu;
  EXPECT_EQ(observe(other, 0.3, 0.5, 11, c).grid, f.grid);
}

TEST(Observe, DropoutMustBeBelowOne) {
  SimConfig c;
  SimWorld w = make_world(c, 9);
  EXPECT_THROW(observe(w, 0.0, 1.0, 1, c), ConfigError);
}

TEST(Synthetic, FiresConcentrateInTheDrySeason) {
  double dry = 0.0, wet = 0.0;
  SimConfig c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset d = generate_dataset(c, 104, seed);
    for (std::size_t k = 0; k < d.frames(); ++k) {
      const double m = seasonal_moisture(c, d.observations.week_of(k));
      double burning = 0.0;
      const FireMap map = d.fire.fire_map(k);
      for (const float v : map.grid.vec()) burning += v;
      (m < c.moisture_mean ? dry : wet) += burning;
    }
  }
  EXPECT_GT(dry, 1.5 * wet);
}

TEST(Synthetic, MinimumLengthBoundary) {
  SimConfig c;
  EXPECT_NO_THROW(generate_dataset(c, 26, 1, 16));
  EXPECT_THROW(generate_dataset(c, 25, 1, 16), ConfigError);
}

TEST(Synthetic, SeedDeterminismAndValidity) {
  SimConfig c;
  const Dataset a = generate_dataset(c, 40, 3), b = generate_dataset(c, 40, 3);
  EXPECT_EQ(encode_stack(a.observations), encode_stack(b.observations));
  EXPECT_EQ(a.fire, b.fire);
  EXPECT_NO_THROW(a.validate());
  EXPECT_FALSE(generate_dataset(c, 40, 4).observations == a.observations);
}

// ---- CSV ingestion -------------------------------------------------------

TEST(Ingest, MinMaxNormalizationRecordsExtremes) {
  const fs::path dir = fresh_dir("dynfire_ingest_a");
  write_csv(dir / "v_0.csv", {{0, 10}, {10, 0}});
  const auto r = ingest_csv_rasters(dir, parse_manifest(R"({"channels": {"v": "v_*.csv"}})"));
  EXPECT_EQ(r.stack.payload, (std::vector<float>{0, 1, 1, 0}));
  EXPECT_EQ(r.stack.header.channel_min[0], 0.0);
  EXPECT_EQ(r.stack.header.channel_max[0], 10.0);
  fs::remove_all(dir);
}

TEST(Ingest, ConstantChannelStoresHalf) {
  const fs::path dir = fresh_dir("dynfire_ingest_b");
  write_csv(dir / "c_1.csv", {{3, 3}, {3, 3}});
  write_csv(dir / "c_2.csv", {{3, 3}, {3, 3}});
  const auto r = ingest_csv_rasters(dir, parse_manifest(R"({"channels": [{"name": "c", "pattern": "c_*.csv"}]})"));
  for (const float v : r.stack.payload) EXPECT_EQ(v, 0.5f);
  EXPECT_EQ(r.qa.degenerate_channels, (std::vector<std::string>{"c"}));
  EXPECT_EQ(r.stack.header.first_week, 1);
  fs::remove_all(dir);
}

TEST(Ingest, ForwardFillCountMatchesDeletedWeeks) {
  const fs::path dir = fresh_dir("dynfire_ingest_c");
  fs::create_directories(dir / "fire");
  fs::create_directories(dir / "temp");
  const std::vector<int> deleted = {3, 4, 9};
  for (int w = 0; w < 12; ++w) {
    write_csv(dir / "fire" / ("f_" + std::to_string(w) + ".csv"), {{double(w % 2), 0, 1}, {0, 0, 0}});
    if (std::find(deleted.begin(), deleted.end(), w) == deleted.end()) {
      write_csv(dir / "temp" / ("t_" + std::to_string(w) + ".csv"), {{double(w), 1, 2}, {3, 4, 5}});
    }
  }
  const auto m = parse_manifest(R"({"week0": "2001-01-01", "channels": {"fire": "fire/f_*.csv", "temp": "temp/t_*.csv"}})");
  const auto r = ingest_csv_rasters(dir, m);
  EXPECT_EQ(r.qa.forward_fill_count(), deleted.size());
  EXPECT_EQ(r.stack.frames(), 12u);
  EXPECT_EQ(r.stack.header.channel_names, (std::vector<std::string>{"fire", "temp"}));
  // Week 4 repeats week 2 for the temperature channel.
  const auto f2 = r.stack.frame(2), f4 = r.stack.frame(4);
  for (std::size_t i = 6; i < 12; ++i) EXPECT_EQ(f4[i], f2[i]);
  EXPECT_EQ(r.qa.filled[1].source_week, 2);
  EXPECT_NE(r.qa.to_json().find("\"forward_fill_count\": 3"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Ingest, InconsistentDimsNameTheFile) {
  const fs::path dir = fresh_dir("dynfire_ingest_d");
  write_csv(dir / "a_0.csv", {{1, 2}, {3, 4}});
  write_csv(dir / "a_1.csv", {{1, 2, 5}, {3, 4, 5}});
  try {
    ingest_csv_rasters(dir, parse_manifest(R"({"channels": {"a": "a_*.csv"}})"));
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("a_1.csv"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Ingest, MalformedInputsAreIngestionErrors) {
  const fs::path dir = fresh_dir("dynfire_ingest_e");
  {
    std::ofstream(dir / "b_0.csv") << "1,2\n3,x\n";
  }
  EXPECT_THROW(ingest_csv_rasters(dir, parse_manifest(R"({"channels": {"b": "b_*.csv"}})")), IngestionError);
  EXPECT_THROW(parse_manifest("{"), IngestionError);
  EXPECT_THROW(parse_manifest(R"({"channels": {}})"), IngestionError);
  EXPECT_THROW(ingest_csv_rasters(dir, parse_manifest(R"({"channels": {"z": "z_*.csv"}})")), IngestionError);
  fs::remove_all(dir);
}

// ---- PNG -----------------------------------------------------------------------

TEST(Png, EncodesGrayscaleThatDecodesBack) {
  Tensor<float> g({3, 4});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(i) / 11.0f;
  const auto png = encode_png_gray(g);
  const std::vector<std::uint8_t> sig = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  ASSERT_TRUE(std::equal(sig.begin(), sig.end(), png.begin()));
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(png[at]) << 24) | (std::uint32_t(png[at + 1]) << 16) | (std::uint32_t(png[at + 2]) << 8) |
           std::uint32_t(png[at + 3]);
  };
  EXPECT_EQ(be32(16), 4u);  // width
  EXPECT_EQ(be32(20), 3u);  // height
  const std::size_t idat_len = be32(33);
  ASSERT_EQ(std::string(png.begin() + 37, png.begin() + 41), "IDAT");
  std::vector<std::uint8_t> raw(3 * 5);
  uLongf raw_len = raw.size();
  ASSERT_EQ(uncompress(raw.data(), &raw_len, png.data() + 41, idat_len), Z_OK);
  ASSERT_EQ(raw_len, 15u);
  for (std::size_t y = 0; y < 3; ++y) {
    EXPECT_EQ(raw[y * 5], 0);
    for (std::size_t x = 0; x < 4; ++x)
      EXPECT_EQ(raw[y * 5 + 1 + x], static_cast<std::uint8_t>(std::lround(g[y * 4 + x] * 255.0f)));
  }
  EXPECT_THROW(encode_png_gray(Tensor<float>({2, 2, 2})), DimensionError);
}
