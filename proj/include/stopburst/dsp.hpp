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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "stopburst/audio.hpp"

namespace stopburst::dsp {

// Periodic=false Hann window of the given length.
std::vector<double> hann(std::size_t length);

// Real-input DFT of a fixed length backed by FFTW. Plans are created under a
// global lock (FFTW's planner is not thread-safe); transform() itself is
// reentrant and may be called concurrently on one instance.
class RealFft {
 public:
  explicit RealFft(std::size_t length);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t length() const noexcept { return length_; }
  std::size_t bins() const noexcept { return length_ / 2 + 1; }

  // input.size() must equal length(); returns bins() coefficients.
  std::vector<std::complex<double>> transform(std::span<const double> input) const;

 private:
  std::size_t length_;
  void* plan_ = nullptr;
};

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  double time_step = 0.0;   // seconds between frame starts
  double window = 0.0;      // seconds per frame
  double freq_step = 0.0;   // Hz between bins
  int sample_rate = 0;
  double floor_db = 0.0;
  std::vector<double> db;   // row-major, frames x bins

  double at(std::size_t frame, std::size_t bin) const { return db[frame * bins + bin]; }
};

struct SpectrogramOptions {
  std::size_t window = 512;
  std::size_t hop = 160;
  double floor_db = -80.0;
};

// Hann-windowed STFT magnitudes in dB, scaled so a full-scale sinusoid peaks
// near 0 dB, floored at floor_db. Frames = floor((n - window) / hop) + 1;
// clips shorter than one window are zero-padded to a single frame.
Spectrogram spectrogram(const audio::AudioClip& clip, const SpectrogramOptions& options = {});

}  // namespace stopburst::dsp
