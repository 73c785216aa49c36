#include "dynfire/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dynfire {
namespace {

constexpr double kWeeksPerYear = 52.0;

// Smooth random field in [0,1] from a few random bumps.
std::vector<double> smooth_field(std::size_t h, std::size_t w, Rng& rng, int bumps) {
  std::vector<double> field(h * w, 0.0);
  const double scale = 0.35 * static_cast<double>(std::max(h, w));
  for (int b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double amp = rng.uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        field[y * w + x] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * scale * scale));
      }
  }
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double span = *hi - *lo;
  for (auto& v : field) v = span > 0.0 ? (v - *lo) / span : 0.5;
  return field;
}

std::vector<double> box_blur(const std::vector<double>& src, std::size_t h, std::size_t w) {
  std::vector<double> out(src.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      int n = 0;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
          acc += src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
          ++n;
        }
      out[y * w + x] = acc / n;
    }
  return out;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void update_weather(SimWorld& world, const SimConfig& c) {
  world.wind_u = c.wind_persistence * world.wind_u + c.wind_volatility * world.rng.normal();
  world.wind_v = c.wind_persistence * world.wind_v + c.wind_volatility * world.rng.normal();
  const double mag = std::hypot(world.wind_u, world.wind_v);
  if (mag > 1.0) {
    world.wind_u /= mag;
    world.wind_v /= mag;
  }
  const double seasonal = seasonal_moisture(c, world.week);
  for (std::size_t i = 0; i < world.cells(); ++i) {
    world.moisture[i] = std::clamp(seasonal + world.base_moisture[i] + c.moisture_noise * world.rng.normal(), 0.0, 1.0);
  }
}

}  // namespace

void SimConfig::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ConfigError("simulator grid dims must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0,1)");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (base_spread < 0.0 || ignition_rate < 0.0) throw ConfigError("spread and ignition rates must be non-negative");
  if (!(fuel_min >= 0.0 && fuel_min <= fuel_max && fuel_max <= 1.0)) throw ConfigError("fuel range must lie in [0,1]");
}

std::size_t SimWorld::burning_count() const {
  return static_cast<std::size_t>(std::count(burning.begin(), burning.end(), std::uint8_t{1}));
}

double seasonal_moisture(const SimConfig& c, std::int64_t week) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(week - c.wet_week) / kWeeksPerYear;
  return c.moisture_mean + c.moisture_amp * std::cos(phase);
}

SimWorld make_world(const SimConfig& c, std::uint64_t seed) {
  c.validate();
  SimWorld w;
  w.height = c.height;
  w.width = c.width;
  w.rng = Rng(seed);
  const auto fuel = smooth_field(c.height, c.width, w.rng, 4);
  const auto wet = smooth_field(c.height, c.width, w.rng, 3);
  w.fuel.resize(w.cells());
  w.base_moisture.resize(w.cells());
  for (std::size_t i = 0; i < w.cells(); ++i) {
    w.fuel[i] = c.fuel_min + (c.fuel_max - c.fuel_min) * fuel[i];
    w.base_moisture[i] = c.moisture_spatial * (2.0 * wet[i] - 1.0);
  }
  w.moisture.assign(w.cells(), 0.0);
  w.burning.assign(w.cells(), 0);
  update_weather(w, c);
  return w;
}

double spread_probability(const SimWorld& world, const SimConfig& c, std::size_t from, std::size_t to) {
  const long fy = static_cast<long>(from / world.width), fx = static_cast<long>(from % world.width);
  const long ty = static_cast<long>(to / world.width), tx = static_cast<long>(to % world.width);
  const double align = std::clamp(1.0 + world.wind_u * static_cast<double>(tx - fx) +
                                      world.wind_v * static_cast<double>(ty - fy),
                                  0.0, 2.0);
  const double p = c.base_spread * world.fuel[to] * (1.0 - world.moisture[to]) * align;
  return std::clamp(p, 0.0, 1.0);
}

void simulate_step(SimWorld& world, const SimConfig& c) {
  world.week += 1;
  update_weather(world, c);
  const std::size_t h = world.height, w = world.width;
  std::vector<std::uint8_t> ignite(world.cells(), 0);
  auto flammable = [&](std::size_t i) { return !world.burning[i] && world.fuel[i] > c.extinguish_fuel; };

  for (std::size_t i = 0; i < world.cells(); ++i) {
    if (!world.burning[i]) continue;
    const std::size_t y = i / w, x = i % w;
    const std::size_t nbrs[4] = {y > 0 ? i - w : i, y + 1 < h ? i + w : i, x > 0 ? i - 1 : i, x + 1 < w ? i + 1 : i};
    for (std::size_t n : nbrs) {
      if (n == i || !flammable(n)) continue;
      if (world.rng.bernoulli(spread_probability(world, c, i, n))) ignite[n] = 1;
    }
  }
  for (std::size_t i = 0; i < world.cells(); ++i) {
    if (!flammable(i)) continue;
    const double p = c.ignition_rate * world.fuel[i] * (1.0 - world.moisture[i]);
    if (world.rng.bernoulli(p)) ignite[i] = 1;
  }
  for (std::size_t i = 0; i < world.cells(); ++i) {
    if (!world.burning[i]) continue;
    world.fuel[i] = std::max(0.0, world.fuel[i] - c.burn_rate);
    const bool dies = world.fuel[i] < c.extinguish_fuel || world.rng.bernoulli(c.extinguish_moist * world.moisture[i]);
    if (dies) world.burning[i] = 0;
  }
  for (std::size_t i = 0; i < world.cells(); ++i)
    if (ignite[i]) world.burning[i] = 1;
}

ObservationFrame observe(const SimWorld& world, const SimConfig& c, Rng& rng) {
  const std::size_t h = world.height, w = world.width, n = world.cells();
  Tensor<float> grid({c.channels, h, w});
  auto& g = grid.vec();
  for (std::size_t i = 0; i < n; ++i) {
    double v = world.burning[i] ? 1.0 : 0.0;
    if (c.noise_sigma > 0.0) v += c.noise_sigma * rng.normal();
    if (c.dropout_p > 0.0 && rng.bernoulli(c.dropout_p)) v = 0.0;
    g[i] = clamp01(v);
  }
  const auto moist = box_blur(world.moisture, h, w);
  const double season = seasonal_moisture(c, world.week) - c.moisture_mean;
  auto noise = [&] { return c.noise_sigma > 0.0 ? c.noise_sigma * rng.normal() : 0.0; };
  for (std::size_t ch = 1; ch < c.channels; ++ch) {
    float* plane = g.data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double row = static_cast<double>(i / w) / static_cast<double>(std::max<std::size_t>(h - 1, 1));
      double v = 0.0;
      switch (ch) {
        case 1:  // soil/vegetation moisture
          v = moist[i];
          break;
        case 2:  // temperature: dry season is warm, with a north-south gradient
          v = 0.5 - 1.2 * season + 0.2 * (row - 0.5);
          break;
        case 3:
          v = 0.5 + 0.5 * world.wind_u;
          break;
        case 4:
          v = 0.5 + 0.5 * world.wind_v;
          break;
        default:  // auxiliary humidity-like covariates
          v = 0.2 + 0.6 * moist[i];
          break;
      }
      plane[i] = clamp01(v + noise());
    }
  }
  return ObservationFrame{std::move(grid), world.week};
}

ObservationFrame observe(const SimWorld& world, double noise_sigma, double dropout_p, std::uint64_t seed,
                         const SimConfig& config) {
  SimConfig c = config;
  c.noise_sigma = noise_sigma;
  c.dropout_p = dropout_p;
  c.validate();
  Rng rng(seed);
  return observe(world, c, rng);
}

FireMap ground_truth(const SimWorld& world) {
  Tensor<float> grid({world.height, world.width});
  for (std::size_t i = 0; i < world.cells(); ++i) grid[i] = world.burning[i] ? 1.0f : 0.0f;
  return FireMap{std::move(grid), FireMap::Kind::ground_truth, world.week};
}

std::vector<std::string> synthetic_channel_names(std::size_t channels) {
  static const char* base[] = {"fire", "moisture", "temperature", "wind_u", "wind_v"};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < channels; ++c) names.push_back(c < 5 ? base[c] : "aux" + std::to_string(c));
  return names;
}

Dataset generate_dataset(const SimConfig& c, std::size_t weeks, std::uint64_t seed, std::size_t window) {
  c.validate();
  if (weeks < window + 10) {
    throw ConfigError("synthetic dataset needs at least " + std::to_string(window + 10) + " weeks, got " +
                      std::to_string(weeks));
  }
  SimWorld world = make_world(c, derive_seed(seed, 0));
  Rng obs_rng(derive_seed(seed, 1));
  for (int i = 0; i < c.burn_in_weeks; ++i) simulate_step(world, c);

  Dataset d;
  GridHeader& oh = d.observations.header;
  oh.height = c.height;
  oh.width = c.width;
  oh.channels = c.channels;
  oh.frame_count = weeks;
  oh.first_week = world.week + 1;
  oh.channel_names = synthetic_channel_names(c.channels);
  oh.channel_min.assign(c.channels, 0.0);
  oh.channel_max.assign(c.channels, 1.0);
  d.fire.header = oh;
  d.fire.header.channels = 1;
  d.fire.header.channel_names = {"fire"};
  d.fire.header.channel_min = {0.0};
  d.fire.header.channel_max = {1.0};
  d.observations.payload.reserve(weeks * oh.frame_size());
  d.fire.payload.reserve(weeks * c.height * c.width);

  for (std::size_t k = 0; k < weeks; ++k) {
    simulate_step(world, c);
    const auto frame = observe(world, c, obs_rng);
    d.observations.payload.insert(d.observations.payload.end(), frame.grid.vec().begin(), frame.grid.vec().end());
    const auto truth = ground_truth(world);
    d.fire.payload.insert(d.fire.payload.end(), truth.grid.vec().begin(), truth.grid.vec().end());
  }
  return d;
}

}  // namespace dynfire
