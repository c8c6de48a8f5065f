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

#include "stopburst/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "stopburst/error.hpp"

namespace stopburst::dsp {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffers {
  double* in;
  fftw_complex* out;
  explicit FftwBuffers(std::size_t n)
      : in(fftw_alloc_real(n)), out(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftwBuffers() {
    fftw_free(in);
    fftw_free(out);
  }
  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
};
}  // namespace

std::vector<double> hann(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  for (std::size_t i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length - 1));
  }
  return w;
}

RealFft::RealFft(std::size_t length) : length_(length) {
  if (length == 0) throw ValidationError("FFT length must be positive");
  std::lock_guard lock(planner_mutex());
  FftwBuffers scratch(length);
  plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(length), scratch.in, scratch.out, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_));
}

std::vector<std::complex<double>> RealFft::transform(std::span<const double> input) const {
  if (input.size() != length_) throw ValidationError("FFT input length mismatch");
  // fftw_alloc_* returns SIMD-aligned memory, matching the alignment the plan
  // was created with, so the new-array execute interface is valid here.
  FftwBuffers buf(length_);
  std::copy(input.begin(), input.end(), buf.in);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), buf.in, buf.out);
  std::vector<std::complex<double>> out(bins());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {buf.out[k][0], buf.out[k][1]};
  return out;
}

Spectrogram spectrogram(const audio::AudioClip& clip, const SpectrogramOptions& options) {
  if (options.window == 0 || options.hop == 0) throw ValidationError("window and hop must be positive");
  const std::size_t n = clip.samples.size();
  const std::size_t win = options.window;
  Spectrogram s;
  s.frames = n >= win ? (n - win) / options.hop + 1 : 1;
  s.bins = win / 2 + 1;
  s.sample_rate = clip.sample_rate;
  s.time_step = static_cast<double>(options.hop) / clip.sample_rate;
  s.window = static_cast<double>(win) / clip.sample_rate;
  s.freq_step = static_cast<double>(clip.sample_rate) / static_cast<double>(win);
  s.floor_db = options.floor_db;
  s.db.assign(s.frames * s.bins, options.floor_db);

  const std::vector<double> w = hann(win);
  double gain = 0.0;
  for (double v : w) gain += v;
  const double scale = 2.0 / gain;

  RealFft fft(win);
  std::vector<double> frame(win);
  for (std::size_t f = 0; f < s.frames; ++f) {
    std::size_t offset = f * options.hop;
    for (std::size_t i = 0; i < win; ++i) {
      std::size_t idx = offset + i;
      frame[i] = idx < n ? clip.samples[idx] * w[i] : 0.0;
    }
    auto spec = fft.transform(frame);
    for (std::size_t k = 0; k < s.bins; ++k) {
      double mag = std::abs(spec[k]) * scale;
      double db = mag > 0.0 ? 20.0 * std::log10(mag) : options.floor_db;
      s.db[f * s.bins + k] = std::max(db, options.floor_db);
    }
  }
  return s;
}

}  // namespace stopburst::dsp
