// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-diode PV module model and deterministic normal-operation voltage
// snippets sampled at the maximum power point.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cdwf {

inline constexpr std::size_t kSampleRateHz = 30;
inline constexpr std::size_t kSnippetSeconds = 10;
inline constexpr std::size_t kSnippetLength = kSampleRateHz * kSnippetSeconds;
inline constexpr double kSensorNoiseSigma = 0.002;  // relative to the snippet's nominal level

/// Five-parameter single-diode module description (values at 1000 W/m2, 25 C).
struct DiodeParams {
  double i_ph_stc = 5.0;     // A
  double i_0 = 7.9e-8;       // A
  double n = 1.3;            // ideality factor
  double r_s = 0.2;          // ohm
  double r_sh = 300.0;       // ohm
  int n_cells = 36;
  double v_oc_approx = 25.0; // V, upper end of the MPP search interval

  /// Throws ConfigError when any invariant is violated.
  void validate() const;

  /// 36-cell "12 V class" module commonly found behind small MPPT chargers.
  static DiodeParams reference() { return {}; }
};

struct MppPoint {
  double v_mp = 0.0;
  double p_mp = 0.0;
};

/// Terminal current at voltage `v` for irradiance `g` (W/m2) and cell temperature `t` (C).
/// Solves the implicit diode equation with Newton iteration; throws NumericError on failure.
double module_current(const DiodeParams& params, double v, double g, double t);

/// P(V) = V * I(V).
double module_power(const DiodeParams& params, double v, double g, double t);

/// Maximum power point on [0, v_oc_approx] by golden-section search.
MppPoint solve_mpp(const DiodeParams& params, double g, double t);

enum class WeatherRegime { Clear, CloudyTransient, Overcast };

std::string to_string(WeatherRegime regime);

struct OperatingCondition {
  std::vector<double> irradiance;   // W/m2, one per sample
  std::vector<double> temperature;  // C, one per sample
  WeatherRegime regime = WeatherRegime::Clear;
};

struct ConditionSummary {
  WeatherRegime regime = WeatherRegime::Clear;
  double irradiance_mean = 0.0;
  double irradiance_min = 0.0;
  double irradiance_max = 0.0;
  double temperature_mean = 0.0;
};

struct NormalSnippet {
  std::uint32_t id = 0;
  std::vector<double> samples;  // volts
  ConditionSummary condition;
  std::string seed_path;
};

struct SimulatorOptions {
  std::size_t sample_rate_hz = kSampleRateHz;
  std::size_t duration_s = kSnippetSeconds;
  bool sensor_noise = true;

  void validate() const;
};

/// Irradiance / temperature profiles for snippet `id` (a pure function of its inputs).
OperatingCondition sample_condition(std::uint64_t global_seed, std::uint32_t id,
                                    const SimulatorOptions& options = {});

NormalSnippet generate_snippet(std::uint64_t global_seed, std::uint32_t id,
                               const DiodeParams& params, const SimulatorOptions& options = {});

/// Snippets 0..n-1. Output is identical for any `workers` count.
std::vector<NormalSnippet> generate_corpus(std::uint64_t global_seed, std::size_t n,
                                           const DiodeParams& params,
                                           const SimulatorOptions& options = {},
                                           std::size_t workers = 1);

}  // namespace cdwf
