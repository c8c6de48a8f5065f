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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stopburst::audio {

// Every pipeline stage works at this rate; inputs are resampled on ingest.
inline constexpr int kCanonicalRate = 16000;

// Mono waveform, samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalRate;

  double duration() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws ValidationError unless the clip is non-empty, finite, in [-1, 1]
// and has a positive rate.
void validate(const AudioClip& clip);

// RIFF/WAVE: PCM 16-bit or IEEE float 32-bit (plain or
// WAVE_FORMAT_EXTENSIBLE), one or two channels. Stereo is averaged to mono,
// integers are scaled by 1/32768 and float samples clipped to [-1, 1].
// Throws UnsupportedFormat naming the codec, ParseError for broken files.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip decode_wav(std::string_view bytes);
AudioClip read_wav(const std::filesystem::path& path);

// Sample count and rate from the header only.
struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  std::size_t frames = 0;
  double duration() const noexcept { return sample_rate > 0 ? double(frames) / sample_rate : 0.0; }
};
WavInfo probe_wav(const std::filesystem::path& path);

// Mono PCM 16-bit at the clip's rate.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Band-limited resampling with a Kaiser-windowed sinc kernel, 64 taps per
// output phase. Output length is round(n * target / source). Matching rates
// return the input unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

struct ExtractedClip {
  AudioClip clip;
  // Covered span in seconds on the source recording after clamping.
  double start = 0.0;
  double end = 0.0;
  bool clamped_start = false;
  bool clamped_end = false;
  bool clamped() const noexcept { return clamped_start || clamped_end; }
};

// Samples covering [start - context, end + context], clamped to the
// recording. Unclamped length is round((end - start + 2 context) * rate).
// Throws OutOfRange if nothing of the span lies inside the recording.
ExtractedClip extract_clip(const AudioClip& source, double start, double end, double context);

// Reads the file, resamples to kCanonicalRate, then extracts.
ExtractedClip extract_clip(const std::filesystem::path& audio_path, double start, double end,
                           double context);

// Sample range a clip would cover, without reading audio. Used to record
// clamp flags at extraction time.
struct ClipBounds {
  std::int64_t first = 0;
  std::int64_t last = 0;  // exclusive
  bool clamped_start = false;
  bool clamped_end = false;
};
ClipBounds clip_bounds(std::size_t n_samples, int sample_rate, double start, double end,
                       double context);

}  // namespace stopburst::audio
