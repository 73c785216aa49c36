#pragma once

#include <cstdint>
#include <vector>

#include "dynfire/gridstack.hpp"
#include "dynfire/rng.hpp"

namespace dynfire {

/// Parameters of the partially observed fire cellular automaton.
struct SimConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 5;

  double base_spread = 0.15;       // neighbour ignition scale
  double ignition_rate = 0.002;    // spontaneous ignition scale per cell-week
  double burn_rate = 0.001;        // fuel consumed per burning week
  double extinguish_fuel = 0.05;   // burning stops below this fuel level
  double extinguish_moist = 0.8;   // weekly extinguish probability per unit moisture
  double fuel_min = 0.2;           // initial fuel range
  double fuel_max = 1.0;
  double moisture_mean = 0.5;
  double moisture_amp = 0.3;       // seasonal amplitude
  double moisture_spatial = 0.15;  // static spatial spread
  double moisture_noise = 0.04;    // weekly noise
  int wet_week = 13;               // week of year with peak moisture
  double wind_persistence = 0.8;
  double wind_volatility = 0.3;

  double noise_sigma = 0.05;  // observation noise
  double dropout_p = 0.5;     // missed-detection probability on the fire channel

  int burn_in_weeks = 8;

  void validate() const;
};

/// Latent world state. Fuel never appears in any observation channel.
struct SimWorld {
  std::size_t height = 0;
  std::size_t width = 0;
  std::int64_t week = 0;
  std::vector<double> fuel;
  std::vector<double> moisture;
  std::vector<double> base_moisture;
  std::vector<std::uint8_t> burning;
  double wind_u = 0.0;
  double wind_v = 0.0;
  Rng rng;

  std::size_t cells() const { return height * width; }
  std::size_t burning_count() const;
};

SimWorld make_world(const SimConfig& config, std::uint64_t seed);

/// Seasonal moisture level (before spatial offset and noise) for a week.
double seasonal_moisture(const SimConfig& config, std::int64_t week);

/// Probability that burning cell `from` ignites 4-neighbour `to` this week:
/// base * fuel(to) * (1 - moisture(to)) * wind alignment, clamped to [0,1].
/// Wind alignment is 1 + wind . direction(from -> to), clamped to [0,2].
double spread_probability(const SimWorld& world, const SimConfig& config, std::size_t from, std::size_t to);

/// Advances one week: moisture and wind update, neighbour and spontaneous
/// ignition, fuel consumption and extinction.
void simulate_step(SimWorld& world, const SimConfig& config);

/// Noisy, incomplete observation of the world: channel 0 is burning
/// intensity plus noise with per-pixel dropout, later channels are climate
/// covariates. Values are clamped to [0,1].
ObservationFrame observe(const SimWorld& world, const SimConfig& config, Rng& rng);
ObservationFrame observe(const SimWorld& world, double noise_sigma, double dropout_p, std::uint64_t seed,
                         const SimConfig& config = {});

/// Noise-free binary truth: burning cells are 1.
FireMap ground_truth(const SimWorld& world);

std::vector<std::string> synthetic_channel_names(std::size_t channels);

/// Weekly observation and ground-truth stacks. Requires weeks >= window + 10
/// where window is the training window length (K + T).
Dataset generate_dataset(const SimConfig& config, std::size_t weeks, std::uint64_t seed, std::size_t window = 16);

}  // namespace dynfire
