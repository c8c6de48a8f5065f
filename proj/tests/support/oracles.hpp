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

// Reference computations used by the tests. Everything here is written
// directly from definitions and shares no code with the library paths it
// checks.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Magnitude of bin k of the plain DFT of x.
inline double dft_magnitude(const std::vector<double>& x, std::size_t k) {
  const double n = static_cast<double>(x.size());
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double ang = -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(i) / n;
    acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
  }
  return std::abs(acc);
}

// Index of the largest-magnitude bin in [lo, hi].
inline std::size_t dominant_bin(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  double best_mag = -1;
  for (std::size_t k = lo; k <= hi; ++k) {
    double m = dft_magnitude(x, k);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  return best;
}

// RMS over consecutive non-overlapping frames.
inline std::vector<double> frame_rms(const std::vector<double>& x, std::size_t frame) {
  std::vector<double> out;
  for (std::size_t start = 0; start + frame <= x.size(); start += frame) {
    double acc = 0;
    for (std::size_t i = start; i < start + frame; ++i) acc += x[i] * x[i];
    out.push_back(std::sqrt(acc / static_cast<double>(frame)));
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline std::filesystem::path fixture_dir() { return std::filesystem::path(STOPBURST_FIXTURE_DIR); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stopburst_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
