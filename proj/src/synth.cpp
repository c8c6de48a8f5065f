// Copyright 2026 The stopburst Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stopburst/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stopburst/error.hpp"
#include "stopburst/rng.hpp"

namespace stopburst::synth {

std::string_view to_string(Realization r) noexcept {
  switch (r) {
    case Realization::full_stop: return "full_stop";
    case Realization::fricativised: return "fricativised";
    case Realization::voiced_continuant: return "voiced_continuant";
  }
  return "full_stop";
}

void validate(const SynthSpec& spec) {
  if (!(spec.closure_ms > 0) || !(spec.aspiration_ms > 0) || !(spec.duration_ms > 0)) {
    throw ValidationError("synthesis durations must be positive");
  }
  if (!std::isfinite(spec.noise_snr_db)) throw ValidationError("SNR must be finite");
  if (!(spec.burst_amp > 0) || spec.burst_amp > 1.0) {
    throw ValidationError("burst amplitude must be in (0, 1]");
  }
}

namespace {

constexpr int kRate = audio::kCanonicalRate;
constexpr double kVowelPeak = 0.35;

std::size_t ms_to_samples(double ms) {
  return static_cast<std::size_t>(std::llround(ms * kRate / 1000.0));
}

// Harmonic-rich periodic source with 1/h amplitudes.
std::vector<double> periodic(std::size_t n, double f0, int harmonics, double peak, CounterRng& rng) {
  std::vector<double> phases(static_cast<std::size_t>(harmonics));
  for (auto& p : phases) p = 2.0 * std::numbers::pi * rng.uniform();
  std::vector<double> out(n, 0.0);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / kRate;
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      v += std::sin(2.0 * std::numbers::pi * f0 * h * t + phases[static_cast<std::size_t>(h - 1)]) / h;
    }
    out[i] = v;
    max_abs = std::max(max_abs, std::abs(v));
  }
  if (max_abs > 0) {
    for (auto& v : out) v *= peak / max_abs;
  }
  return out;
}

// RBJ band-pass biquad (constant 0 dB peak gain).
std::vector<double> bandpass(const std::vector<double>& x, double center_hz, double q) {
  double w0 = 2.0 * std::numbers::pi * center_hz / kRate;
  double alpha = std::sin(w0) / (2.0 * q);
  double a0 = 1.0 + alpha;
  double b0 = alpha / a0, b2 = -alpha / a0;
  double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  std::vector<double> y(x.size(), 0.0);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = b0 * x[i] + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = v;
    y[i] = v;
  }
  return y;
}

double rms(const std::vector<double>& x, std::size_t from, std::size_t to) {
  if (to <= from) return 0.0;
  double acc = 0.0;
  for (std::size_t i = from; i < to; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(to - from));
}

// Raised-cosine gain going 0 -> 1 over [0, ramp).
double ramp_in(std::size_t i, std::size_t ramp) {
  if (ramp == 0 || i >= ramp) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(ramp));
}

}  // namespace

SynthResult synthesize_stop(const SynthSpec& spec) {
  validate(spec);
  CounterRng rng(spec.seed, "synthesize_stop");
  const double burst_ms = 2.0 + 3.0 * rng.uniform();
  const double f0 = 100.0 + 50.0 * rng.uniform();
  const double core_ms = spec.closure_ms + burst_ms + spec.aspiration_ms;
  if (spec.duration_ms < core_ms + 10.0) {
    throw ValidationError("duration_ms leaves less than 10 ms of vowel context around the stop");
  }

  const std::size_t n = ms_to_samples(spec.duration_ms);
  const std::size_t lead = ms_to_samples((spec.duration_ms - core_ms) / 2.0);
  const std::size_t closure = ms_to_samples(spec.closure_ms);
  const std::size_t burst = std::max<std::size_t>(ms_to_samples(burst_ms), 1);
  const std::size_t aspiration = ms_to_samples(spec.aspiration_ms);
  const std::size_t core = closure + burst + aspiration;
  const std::size_t tail_start = std::min(n, lead + core);
  const std::size_t ramp = ms_to_samples(2.0);
  const std::size_t xfade = ms_to_samples(5.0);

  std::vector<double> vowel = periodic(n, f0, 8, kVowelPeak, rng);
  std::vector<double> clean(n, 0.0);

  // Vowel context with short ramps at the stop boundaries.
  for (std::size_t i = 0; i < lead; ++i) clean[i] = vowel[i] * ramp_in(lead - 1 - i, ramp);
  for (std::size_t i = tail_start; i < n; ++i) clean[i] = vowel[i] * ramp_in(i - tail_start, ramp);

  Burst label = Burst::absent;
  switch (spec.realization) {
    case Realization::full_stop: {
      label = Burst::present;
      // Closure stays silent apart from the additive noise below.
      std::size_t b0 = lead + closure;
      for (std::size_t i = 0; i < burst && b0 + i < n; ++i) {
        double env = std::exp(-static_cast<double>(i) / static_cast<double>(burst));
        double u = 2.0 * rng.uniform() - 1.0;
        clean[b0 + i] = spec.burst_amp * env * u;
      }
      std::size_t a0 = b0 + burst;
      for (std::size_t i = 0; i < aspiration && a0 + i < n; ++i) {
        double frac = static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(aspiration, 1));
        double amp = spec.burst_amp * (0.2 - 0.1 * frac);
        clean[a0 + i] = amp * (2.0 * rng.uniform() - 1.0);
      }
      break;
    }
    case Realization::fricativised: {
      std::vector<double> white(core + 2 * xfade);
      for (auto& v : white) v = rng.normal();
      std::vector<double> noise = bandpass(white, 2500.0 + 2000.0 * rng.uniform(), 1.2);
      double level = rms(noise, 0, noise.size());
      double target = 0.06 + 0.04 * rng.uniform();
      std::size_t from = lead >= xfade ? lead - xfade : 0;
      std::size_t to = std::min(n, tail_start + xfade);
      for (std::size_t i = from; i < to; ++i) {
        double in = ramp_in(i - from, 2 * xfade);
        double out = ramp_in(to - 1 - i, 2 * xfade);
        std::size_t k = i - from;
        double v = level > 0 ? noise[k] * target / level : 0.0;
        double gain = std::min(in, out);
        double voice = (i < lead || i >= tail_start) ? vowel[i] * (1.0 - gain) : 0.0;
        clean[i] = v * gain + voice;
      }
      break;
    }
    case Realization::voiced_continuant: {
      std::vector<double> murmur = periodic(n, f0, 2, 0.10 + 0.04 * rng.uniform(), rng);
      std::size_t from = lead >= xfade ? lead - xfade : 0;
      std::size_t to = std::min(n, tail_start + xfade);
      for (std::size_t i = from; i < to; ++i) {
        double gain = std::min(ramp_in(i - from, 2 * xfade), ramp_in(to - 1 - i, 2 * xfade));
        double voice = (i < lead || i >= tail_start) ? vowel[i] * (1.0 - gain) : 0.0;
        clean[i] = murmur[i] * gain + voice;
      }
      break;
    }
  }

  double signal_rms = rms(clean, 0, n);
  double noise_sd = signal_rms / std::pow(10.0, spec.noise_snr_db / 20.0);
  SynthResult result;
  result.burst = label;
  result.clip.sample_rate = kRate;
  result.clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.clip.samples[i] = std::clamp(clean[i] + noise_sd * rng.normal(), -1.0, 1.0);
  }
  result.stop_start = static_cast<double>(lead) / kRate;
  result.stop_end = static_cast<double>(tail_start) / kRate;
  return result;
}

SynthSpec random_spec(Realization realization, std::uint64_t seed, double snr_db) {
  CounterRng rng(seed, "synth.random_spec");
  SynthSpec spec;
  spec.realization = realization;
  spec.closure_ms = 20.0 + 60.0 * rng.uniform();
  spec.aspiration_ms = 5.0 + 25.0 * rng.uniform();
  spec.burst_amp = 0.3 + 0.7 * rng.uniform();
  spec.noise_snr_db = snr_db;
  double core = spec.closure_ms + 5.0 + spec.aspiration_ms;
  spec.duration_ms = 2.0 * core + 20.0 + 40.0 * rng.uniform();
  spec.seed = rng.next();
  return spec;
}

std::vector<LabeledClip> synthesize_set(std::size_t n_present, std::size_t n_absent,
                                        std::uint64_t seed, double snr_db) {
  CounterRng rng(seed, "synth.set");
  std::vector<Realization> plan;
  plan.reserve(n_present + n_absent);
  plan.insert(plan.end(), n_present, Realization::full_stop);
  for (std::size_t i = 0; i < n_absent; ++i) {
    plan.push_back(i % 2 == 0 ? Realization::fricativised : Realization::voiced_continuant);
  }
  rng.shuffle(plan);
  std::vector<LabeledClip> out;
  out.reserve(plan.size());
  for (Realization r : plan) {
    SynthResult s = synthesize_stop(random_spec(r, rng.next(), snr_db));
    out.push_back({std::move(s.clip), s.burst});
  }
  return out;
}

}  // namespace stopburst::synth
