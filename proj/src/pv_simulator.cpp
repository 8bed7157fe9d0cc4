// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/pv_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "cdwf/error.hpp"
#include "cdwf/rng.hpp"

namespace cdwf {
namespace {

constexpr double kBoltzmann = 1.380649e-23;
constexpr double kElectronCharge = 1.602176634e-19;
constexpr double kBandgapEv = 1.12;
constexpr double kKelvin = 273.15;
constexpr double kStcTemperature = 25.0;
constexpr double kStcIrradiance = 1000.0;
constexpr double kIscTempCoeff = 0.0005;  // relative change per C

struct CellState {
  double i_ph;
  double i_0;
  double a;  // modified ideality factor n * Ns * Vt
};

CellState cell_state(const DiodeParams& p, double g, double t) {
  const double tk = t + kKelvin;
  const double tref = kStcTemperature + kKelvin;
  const double vt = kBoltzmann * tk / kElectronCharge;
  CellState s{};
  s.i_ph = p.i_ph_stc * (g / kStcIrradiance) * (1.0 + kIscTempCoeff * (t - kStcTemperature));
  s.i_0 = p.i_0 * std::pow(tk / tref, 3.0) *
          std::exp(kBandgapEv / (p.n * kBoltzmann / kElectronCharge) * (1.0 / tref - 1.0 / tk));
  s.a = p.n * p.n_cells * vt;
  return s;
}

std::string context(double g, double t) {
  std::ostringstream os;
  os << "(g=" << g << " W/m2, t=" << t << " C)";
  return os.str();
}

}  // namespace

void DiodeParams::validate() const {
  if (!(i_ph_stc > 0 && i_0 > 0 && n > 0 && r_s > 0 && r_sh > 0 && n_cells > 0 && v_oc_approx > 0))
    throw ConfigError("diode parameters must be strictly positive");
  if (n < 1.0 || n > 2.0) throw ConfigError("ideality factor must lie in [1, 2]");
  if (!(r_sh > r_s)) throw ConfigError("shunt resistance must exceed series resistance");
}

void SimulatorOptions::validate() const {
  if (sample_rate_hz * duration_s != kSnippetLength)
    throw ConfigError("sample rate times duration must equal " + std::to_string(kSnippetLength));
}

double module_current(const DiodeParams& params, double v, double g, double t) {
  const CellState s = cell_state(params, g, t);
  // f(I) is strictly decreasing and concave in I, so Newton started at I = Iph
  // (where f <= 0 for V >= 0) converges monotonically from the right.
  double current = s.i_ph;
  for (int iter = 0; iter < 200; ++iter) {
    const double vd = v + current * params.r_s;
    const double e = std::exp(std::min(vd / s.a, 700.0));
    const double f = s.i_ph - s.i_0 * (e - 1.0) - vd / params.r_sh - current;
    const double df = -s.i_0 * e * params.r_s / s.a - params.r_s / params.r_sh - 1.0;
    const double step = f / df;
    current -= step;
    if (!std::isfinite(current)) break;
    if (std::abs(step) <= 1e-13 * std::max(1.0, std::abs(current))) return current;
  }
  throw NumericError("single-diode current solve did not converge " + context(g, t));
}

double module_power(const DiodeParams& params, double v, double g, double t) {
  return v * module_current(params, v, g, t);
}

MppPoint solve_mpp(const DiodeParams& params, double g, double t) {
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 0.0;
  double hi = params.v_oc_approx;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = module_power(params, x1, g, t);
  double f2 = module_power(params, x2, g, t);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = module_power(params, x2, g, t);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = module_power(params, x1, g, t);
    }
  }
  MppPoint mpp;
  mpp.v_mp = 0.5 * (lo + hi);
  mpp.p_mp = module_power(params, mpp.v_mp, g, t);
  if (!(mpp.p_mp > 0.0)) mpp = MppPoint{0.0, 0.0};  // P(0) = 0 dominates
  if (!std::isfinite(mpp.p_mp)) throw NumericError("non-finite MPP " + context(g, t));
  return mpp;
}

std::string to_string(WeatherRegime regime) {
  switch (regime) {
    case WeatherRegime::Clear: return "clear";
    case WeatherRegime::CloudyTransient: return "cloudy-transient";
    case WeatherRegime::Overcast: return "overcast";
  }
  return "unknown";
}

OperatingCondition sample_condition(std::uint64_t global_seed, std::uint32_t id,
                                    const SimulatorOptions& options) {
  options.validate();
  Substream rng(global_seed, id, StreamTag::Condition);
  const std::size_t n = kSnippetLength;
  const double dt = 1.0 / static_cast<double>(options.sample_rate_hz);

  OperatingCondition cond;
  const double u = rng.uniform();
  cond.regime = u < 0.5   ? WeatherRegime::Clear
                : u < 0.8 ? WeatherRegime::CloudyTransient
                          : WeatherRegime::Overcast;

  // Clear-sky sinusoid over the day; the 10 s window samples a random hour.
  const double hour = rng.uniform(7.0, 17.0);
  const double peak = rng.uniform(850.0, 1100.0);

  // Attenuation: constant for clear sky, mean-reverting random process otherwise.
  double attenuation = 1.0;
  double mean_level = 1.0;
  double theta = 0.0;
  double sigma = 0.0;
  switch (cond.regime) {
    case WeatherRegime::Clear:
      attenuation = rng.uniform(0.95, 1.0);
      mean_level = attenuation;
      theta = 0.2;
      sigma = 0.005;
      break;
    case WeatherRegime::CloudyTransient:
      attenuation = rng.uniform(0.3, 1.0);
      mean_level = rng.uniform(0.4, 0.9);
      theta = 0.4;
      sigma = 0.25;
      break;
    case WeatherRegime::Overcast:
      attenuation = rng.uniform(0.15, 0.4);
      mean_level = attenuation;
      theta = 0.2;
      sigma = 0.02;
      break;
  }

  const double ambient = rng.uniform(-5.0, 35.0);
  const double ramp = rng.uniform(-0.05, 0.05);  // C per second

  cond.irradiance.resize(n);
  cond.temperature.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double seconds = static_cast<double>(i) * dt;
    const double h = hour + seconds / 3600.0;
    const double clear_sky = peak * std::pow(std::max(0.0, std::sin(std::numbers::pi * (h - 6.0) / 12.0)), 1.15);
    cond.irradiance[i] = std::clamp(clear_sky * attenuation, 0.0, 1200.0);
    attenuation += theta * (mean_level - attenuation) * dt + sigma * std::sqrt(dt) * rng.normal();
    attenuation = std::clamp(attenuation, 0.1, 1.0);
  }
  const double g_mean =
      std::accumulate(cond.irradiance.begin(), cond.irradiance.end(), 0.0) / static_cast<double>(n);
  const double t0 = ambient + 25.0 * g_mean / kStcIrradiance;
  for (std::size_t i = 0; i < n; ++i) {
    const double seconds = static_cast<double>(i) * dt;
    cond.temperature[i] = std::clamp(t0 + ramp * seconds, -10.0, 80.0);
  }
  return cond;
}

NormalSnippet generate_snippet(std::uint64_t global_seed, std::uint32_t id,
                               const DiodeParams& params, const SimulatorOptions& options) {
  params.validate();
  const OperatingCondition cond = sample_condition(global_seed, id, options);
  const std::size_t n = cond.irradiance.size();

  NormalSnippet snip;
  snip.id = id;
  snip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    snip.samples[i] = solve_mpp(params, cond.irradiance[i], cond.temperature[i]).v_mp;
  }

  if (options.sensor_noise) {
    const double nominal =
        std::accumulate(snip.samples.begin(), snip.samples.end(), 0.0) / static_cast<double>(n);
    Substream noise(global_seed, id, StreamTag::SensorNoise);
    for (double& s : snip.samples) s = std::max(0.0, s + kSensorNoiseSigma * nominal * noise.normal());
  }

  auto [gmin, gmax] = std::minmax_element(cond.irradiance.begin(), cond.irradiance.end());
  snip.condition.regime = cond.regime;
  snip.condition.irradiance_min = *gmin;
  snip.condition.irradiance_max = *gmax;
  snip.condition.irradiance_mean =
      std::accumulate(cond.irradiance.begin(), cond.irradiance.end(), 0.0) / static_cast<double>(n);
  snip.condition.temperature_mean =
      std::accumulate(cond.temperature.begin(), cond.temperature.end(), 0.0) / static_cast<double>(n);
  snip.seed_path = std::to_string(global_seed) + "/" + std::to_string(id) + "/condition";
  return snip;
}

std::vector<NormalSnippet> generate_corpus(std::uint64_t global_seed, std::size_t n,
                                           const DiodeParams& params,
                                           const SimulatorOptions& options, std::size_t workers) {
  if (n == 0) throw ConfigError("corpus size must be at least 1");
  params.validate();
  options.validate();
  std::vector<NormalSnippet> out(n);
  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = generate_snippet(global_seed, static_cast<std::uint32_t>(i), params, options);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers)
            out[i] = generate_snippet(global_seed, static_cast<std::uint32_t>(i), params, options);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace cdwf
