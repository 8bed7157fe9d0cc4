// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bias / drift / spike attacks injected into an interior window of a normal
// snippet. Samples outside the window are copied bit-for-bit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdwf/pv_simulator.hpp"
#include "cdwf/rng.hpp"

namespace cdwf {

enum class AttackKind { Bias, Drift, Spike };

std::string to_string(AttackKind kind);
/// Parses "bias" / "drift" / "spike"; throws ConfigError otherwise.
AttackKind parse_attack_kind(const std::string& name);

inline constexpr std::size_t kGuardSamples = kSampleRateHz;  // one second each side
inline constexpr std::size_t kMinAttackSamples = 60;

/// Parameter ranges for the three attack families (closed intervals).
struct AttackRanges {
  double bias_min = 0.003, bias_max = 0.008;
  double drift_min = 0.005, drift_max = 0.015;
  std::size_t spike_count_min = 3, spike_count_max = 10;
  std::size_t spike_width_max = 4;
  double spike_mag_min = 0.01, spike_mag_max = 0.20;
  double noise_sigma = kSensorNoiseSigma;

  /// Wider magnitudes used only for illustration plots.
  static AttackRanges easy();
};

struct AttackWindow {
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;  // exclusive
  std::size_t guard_samples = kGuardSamples;

  std::size_t length() const { return end_idx - start_idx; }
  bool contains(std::size_t i) const { return i >= start_idx && i < end_idx; }
};

struct SpikeEvent {
  std::size_t index = 0;
  std::size_t width = 1;
  double magnitude = 0.0;  // signed fraction of the nominal level
};

struct AttackSpec {
  AttackKind kind = AttackKind::Bias;
  AttackWindow window;
  double bias_factor = 0.0;
  double drift_magnitude = 0.0;
  int drift_sign = 1;
  std::vector<SpikeEvent> spike_events;
  double noise_sigma = kSensorNoiseSigma;  // relative to the nominal level
};

struct AttackedSnippet {
  std::uint32_t id = 0;
  std::vector<double> samples;
  AttackSpec spec;
};

/// Start uniform over feasible positions, then duration uniform over what remains.
AttackWindow sample_window(Substream& rng, std::size_t length = kSnippetLength,
                           std::size_t guard = kGuardSamples,
                           std::size_t min_duration = kMinAttackSamples);

/// Mean of the normal trace; reference scale for spike magnitudes and noise.
double nominal_level(const NormalSnippet& normal);

/// Draws the attack parameters (window included) for `kind`.
AttackSpec draw_attack_spec(AttackKind kind, Substream& rng, const AttackRanges& ranges = {});

/// Applies `spec` to `normal`; `noise_rng` feeds the additive noise terms.
AttackedSnippet apply_attack(const NormalSnippet& normal, const AttackSpec& spec, Substream& noise_rng);

AttackedSnippet inject_bias(const NormalSnippet& normal, Substream& rng, const AttackRanges& ranges = {});
AttackedSnippet inject_drift(const NormalSnippet& normal, Substream& rng, const AttackRanges& ranges = {});
AttackedSnippet inject_spike(const NormalSnippet& normal, Substream& rng, const AttackRanges& ranges = {});

/// Attacked twin drawn from substream (global_seed, normal.id, kind).
std::pair<NormalSnippet, AttackedSnippet> make_pair(const NormalSnippet& normal, AttackKind kind,
                                                    std::uint64_t global_seed,
                                                    const AttackRanges& ranges = {});

}  // namespace cdwf
