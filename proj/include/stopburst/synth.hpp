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

#pragma once

#include <cstdint>
#include <vector>

#include "stopburst/audio.hpp"
#include "stopburst/token.hpp"

namespace stopburst::synth {

// The three stop realizations the generator can produce: a full closure and
// release, a fricated release with no silent gap, and an incomplete closure
// with voicing running through it.
enum class Realization { full_stop, fricativised, voiced_continuant };

std::string_view to_string(Realization r) noexcept;

struct SynthSpec {
  Realization realization = Realization::full_stop;
  double closure_ms = 40.0;
  double burst_amp = 0.8;
  double aspiration_ms = 15.0;
  double noise_snr_db = 30.0;
  // Whole clip, including the vowel context either side of the stop.
  double duration_ms = 200.0;
  std::uint64_t seed = 1;
};

// Throws ValidationError when durations are not positive, the SNR is not
// finite, or the clip leaves less than 10 ms for vowel context.
void validate(const SynthSpec& spec);

struct SynthResult {
  audio::AudioClip clip;
  Burst burst = Burst::absent;
  // Stop region inside the clip, seconds.
  double stop_start = 0.0;
  double stop_end = 0.0;
};

// 16 kHz clip: vowel, stop region, vowel, plus white noise at the requested
// SNR. full_stop gives a near-silent closure, a 2-5 ms broadband burst and
// decaying aspiration (burst present). fricativised fills the stop region
// with band-passed noise; voiced_continuant with a weak 100-150 Hz periodic
// signal (both burst absent). Deterministic in the seed.
SynthResult synthesize_stop(const SynthSpec& spec);

// Parameters drawn from the generator's working ranges: closure 20-80 ms,
// aspiration 5-30 ms, burst amplitude 0.3-1.0, vowel context longer than the
// stop region.
SynthSpec random_spec(Realization realization, std::uint64_t seed, double snr_db);

struct LabeledClip {
  audio::AudioClip clip;
  Burst burst;
};

// n_present full stops and n_absent lenited stops (alternating the two
// lenited realizations), in a seeded shuffled order.
std::vector<LabeledClip> synthesize_set(std::size_t n_present, std::size_t n_absent,
                                        std::uint64_t seed, double snr_db);

}  // namespace stopburst::synth
