// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/attack_injector.hpp"

#include <algorithm>
#include <numeric>

#include "cdwf/error.hpp"

namespace cdwf {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Bias: return "bias";
    case AttackKind::Drift: return "drift";
    case AttackKind::Spike: return "spike";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "bias") return AttackKind::Bias;
  if (name == "drift") return AttackKind::Drift;
  if (name == "spike") return AttackKind::Spike;
  throw ConfigError("unknown attack kind '" + name + "' (expected bias, drift or spike)");
}

AttackRanges AttackRanges::easy() {
  AttackRanges r;
  r.bias_min = 0.03;
  r.bias_max = 0.08;
  r.drift_min = 0.05;
  r.drift_max = 0.15;
  r.spike_mag_min = 0.10;
  r.spike_mag_max = 0.50;
  return r;
}

AttackWindow sample_window(Substream& rng, std::size_t length, std::size_t guard,
                           std::size_t min_duration) {
  if (2 * guard >= length || min_duration == 0 || min_duration > length - 2 * guard)
    throw ConfigError("attack window geometry is infeasible");
  const std::size_t span = length - 2 * guard;
  AttackWindow w;
  w.guard_samples = guard;
  w.start_idx = rng.uniform_int(guard, guard + span - min_duration);
  const std::size_t offset = w.start_idx - guard;
  const std::size_t duration = rng.uniform_int(min_duration, span - offset);
  w.end_idx = w.start_idx + duration;
  return w;
}

double nominal_level(const NormalSnippet& normal) {
  if (normal.samples.empty()) return 0.0;
  return std::accumulate(normal.samples.begin(), normal.samples.end(), 0.0) /
         static_cast<double>(normal.samples.size());
}

namespace {

bool overlaps(const std::vector<SpikeEvent>& events, std::size_t index, std::size_t width) {
  return std::any_of(events.begin(), events.end(), [&](const SpikeEvent& e) {
    return index < e.index + e.width && e.index < index + width;
  });
}

}  // namespace

AttackSpec draw_attack_spec(AttackKind kind, Substream& rng, const AttackRanges& ranges) {
  AttackSpec spec;
  spec.kind = kind;
  spec.noise_sigma = ranges.noise_sigma;
  spec.window = sample_window(rng);
  switch (kind) {
    case AttackKind::Bias:
      spec.bias_factor = rng.sign() * rng.uniform(ranges.bias_min, ranges.bias_max);
      break;
    case AttackKind::Drift:
      spec.drift_magnitude = rng.uniform(ranges.drift_min, ranges.drift_max);
      spec.drift_sign = rng.sign();
      spec.noise_sigma = 0.0;
      break;
    case AttackKind::Spike: {
      const std::size_t count = rng.uniform_int(ranges.spike_count_min, ranges.spike_count_max);
      constexpr int kMaxRetries = 100;
      for (std::size_t e = 0; e < count; ++e) {
        const std::size_t width = rng.uniform_int(1, ranges.spike_width_max);
        const double magnitude = rng.sign() * rng.uniform(ranges.spike_mag_min, ranges.spike_mag_max);
        bool placed = false;
        for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
          if (width > spec.window.length()) break;
          const std::size_t index =
              rng.uniform_int(spec.window.start_idx, spec.window.end_idx - width);
          if (!overlaps(spec.spike_events, index, width)) {
            spec.spike_events.push_back({index, width, magnitude});
            placed = true;
          }
        }
        if (!placed) throw ConfigError("attack window too short to place all spike events");
      }
      std::sort(spec.spike_events.begin(), spec.spike_events.end(),
                [](const SpikeEvent& a, const SpikeEvent& b) { return a.index < b.index; });
      break;
    }
  }
  return spec;
}

AttackedSnippet apply_attack(const NormalSnippet& normal, const AttackSpec& spec, Substream& noise_rng) {
  const AttackWindow& w = spec.window;
  if (w.end_idx > normal.samples.size() || w.start_idx >= w.end_idx)
    throw ConfigError("attack window does not fit the snippet");

  AttackedSnippet out;
  out.id = normal.id;
  out.spec = spec;
  out.samples = normal.samples;
  const double nominal = nominal_level(normal);
  const double noise_scale = spec.noise_sigma * nominal;

  switch (spec.kind) {
    case AttackKind::Bias:
      for (std::size_t i = w.start_idx; i < w.end_idx; ++i) {
        out.samples[i] = normal.samples[i] * (1.0 + spec.bias_factor);
        if (noise_scale > 0.0) out.samples[i] += noise_scale * noise_rng.normal();
      }
      break;
    case AttackKind::Drift: {
      const std::size_t len = w.length();
      for (std::size_t j = 0; j < len; ++j) {
        const double frac = len > 1 ? static_cast<double>(j) / static_cast<double>(len - 1) : 1.0;
        out.samples[w.start_idx + j] =
            normal.samples[w.start_idx + j] * (1.0 + spec.drift_sign * spec.drift_magnitude * frac);
      }
      break;
    }
    case AttackKind::Spike:
      if (noise_scale > 0.0)
        for (std::size_t i = w.start_idx; i < w.end_idx; ++i) out.samples[i] += noise_scale * noise_rng.normal();
      for (const SpikeEvent& e : spec.spike_events) {
        if (e.index < w.start_idx || e.index + e.width > w.end_idx)
          throw ConfigError("spike event lies outside the attack window");
        for (std::size_t i = e.index; i < e.index + e.width; ++i) out.samples[i] += e.magnitude * nominal;
      }
      break;
  }
  return out;
}

AttackedSnippet inject_bias(const NormalSnippet& normal, Substream& rng, const AttackRanges& ranges) {
  const AttackSpec spec = draw_attack_spec(AttackKind::Bias, rng, ranges);
  return apply_attack(normal, spec, rng);
}

AttackedSnippet inject_drift(const NormalSnippet& normal, Substream& rng, const AttackRanges& ranges) {
  const AttackSpec spec = draw_attack_spec(AttackKind::Drift, rng, ranges);
  return apply_attack(normal, spec, rng);
}

AttackedSnippet inject_spike(const NormalSnippet& normal, Substream& rng, const AttackRanges& ranges) {
  const AttackSpec spec = draw_attack_spec(AttackKind::Spike, rng, ranges);
  return apply_attack(normal, spec, rng);
}

std::pair<NormalSnippet, AttackedSnippet> make_pair(const NormalSnippet& normal, AttackKind kind,
                                                    std::uint64_t global_seed, const AttackRanges& ranges) {
  switch (kind) {
    case AttackKind::Bias: {
      Substream rng(global_seed, normal.id, StreamTag::AttackBias);
      return {normal, inject_bias(normal, rng, ranges)};
    }
    case AttackKind::Drift: {
      Substream rng(global_seed, normal.id, StreamTag::AttackDrift);
      return {normal, inject_drift(normal, rng, ranges)};
    }
    case AttackKind::Spike: {
      Substream rng(global_seed, normal.id, StreamTag::AttackSpike);
      return {normal, inject_spike(normal, rng, ranges)};
    }
  }
  throw ConfigError("invalid attack kind");
}

}  // namespace cdwf
