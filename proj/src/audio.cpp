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

#include "stopburst/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "stopburst/error.hpp"

namespace stopburst::audio {

void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw ValidationError("sample rate must be positive");
  if (clip.samples.empty()) throw ValidationError("audio clip is empty");
  for (double s : clip.samples) {
    if (!std::isfinite(s) || std::abs(s) > 1.0) {
      throw ValidationError("audio sample outside [-1, 1] or not finite");
    }
  }
}

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string codec_name(std::uint16_t tag) {
  switch (tag) {
    case 0x0001: return "PCM";
    case 0x0002: return "Microsoft ADPCM";
    case 0x0003: return "IEEE float";
    case 0x0006: return "A-law";
    case 0x0007: return "mu-law";
    case 0x0011: return "IMA ADPCM";
    case 0x0055: return "MPEG Layer 3";
    case 0xFFFE: return "extensible";
    default: {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "0x%04X", tag);
      return std::string("format tag ") + buf;
    }
  }
}

struct Format {
  std::uint16_t tag = 0;
  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
};

struct Chunks {
  Format format;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
};

Chunks scan(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file", 0);
  }
  Chunks out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    std::uint32_t size = le32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t available = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || size > available) throw ParseError("truncated fmt chunk", 0);
      const std::uint8_t* f = bytes.data() + body;
      out.format.tag = le16(f);
      out.format.channels = le16(f + 2);
      out.format.sample_rate = static_cast<int>(le32(f + 4));
      out.format.bits = le16(f + 14);
      if (out.format.tag == kFormatExtensible) {
        if (size < 40) throw ParseError("truncated WAVE_FORMAT_EXTENSIBLE header", 0);
        // First two bytes of the subformat GUID carry the real format tag.
        out.format.tag = le16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      out.data = bytes.data() + body;
      // Streaming writers sometimes leave the size at 0 or 0xFFFFFFFF.
      out.data_size = (size == 0 || size > available) ? available : size;
      if (have_fmt) break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw ParseError("WAVE file has no fmt chunk", 0);
  if (out.data == nullptr) throw ParseError("WAVE file has no data chunk", 0);
  const Format& fmt = out.format;
  bool pcm16 = fmt.tag == kFormatPcm && fmt.bits == 16;
  bool float32 = fmt.tag == kFormatFloat && fmt.bits == 32;
  if (!pcm16 && !float32) {
    throw UnsupportedFormat("unsupported WAVE codec: " + codec_name(fmt.tag) + " " +
                            std::to_string(fmt.bits) + "-bit (supported: PCM 16-bit, IEEE float 32-bit)");
  }
  if (fmt.channels < 1 || fmt.channels > 2) {
    throw UnsupportedFormat("unsupported channel count " + std::to_string(fmt.channels) +
                            " (supported: 1 or 2)");
  }
  if (fmt.sample_rate <= 0) throw ParseError("WAVE sample rate must be positive", 0);
  return out;
}

double kaiser_window(double x, double beta) {
  // x in [-1, 1]
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  Chunks c = scan(bytes);
  const Format& fmt = c.format;
  std::size_t bytes_per_frame = static_cast<std::size_t>(fmt.bits / 8) * fmt.channels;
  std::size_t frames = c.data_size / bytes_per_frame;
  AudioClip clip;
  clip.sample_rate = fmt.sample_rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = c.data + i * bytes_per_frame;
    double sum = 0.0;
    for (int ch = 0; ch < fmt.channels; ++ch) {
      double v = 0.0;
      if (fmt.bits == 16) {
        v = static_cast<std::int16_t>(le16(p + 2 * ch)) / 32768.0;
      } else {
        std::uint32_t raw = le32(p + 4 * ch);
        float f = 0.0F;
        std::memcpy(&f, &raw, sizeof f);
        if (!std::isfinite(f)) throw ParseError("non-finite float sample in WAVE data", 0);
        v = std::clamp(static_cast<double>(f), -1.0, 1.0);
      }
      sum += v;
    }
    clip.samples[i] = sum / fmt.channels;
  }
  return clip;
}

AudioClip decode_wav(std::string_view bytes) {
  return decode_wav(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                                  bytes.size()));
}

namespace {
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open audio file " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}
}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  try {
    return decode_wav(std::span<const std::uint8_t>(bytes));
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

WavInfo probe_wav(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  Chunks c = scan(bytes);
  WavInfo info;
  info.sample_rate = c.format.sample_rate;
  info.channels = c.format.channels;
  info.frames = c.data_size / (static_cast<std::size_t>(c.format.bits / 8) * c.format.channels);
  return info;
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw ValidationError("sample rate must be positive");
  std::vector<std::uint8_t> out;
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto put32 = [&](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((v >> (8 * k)) & 0xFF));
  };
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.reserve(44 + data_bytes);
  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(kFormatPcm);
  put16(1);
  put32(static_cast<std::uint32_t>(clip.sample_rate));
  put32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (double s : clip.samples) {
    double q = std::round(s * 32768.0);
    auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    put16(static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ValidationError("target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  constexpr int kTaps = 64;
  constexpr int kHalf = kTaps / 2;
  constexpr double kBeta = 8.6;
  constexpr double kRolloff = 0.945;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  // Cutoff as a fraction of the source Nyquist frequency.
  const double cutoff = std::min(1.0, ratio) * kRolloff;
  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const auto n_out = static_cast<std::int64_t>(std::llround(static_cast<double>(n_in) * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<std::size_t>(n_out), 0.0);
  for (std::int64_t j = 0; j < n_out; ++j) {
    double t = static_cast<double>(j) / ratio;  // position in source samples
    auto base = static_cast<std::int64_t>(std::floor(t));
    double acc = 0.0;
    for (std::int64_t k = base - kHalf + 1; k <= base + kHalf; ++k) {
      if (k < 0 || k >= n_in) continue;
      double d = t - static_cast<double>(k);
      double x = cutoff * d;
      double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc * kaiser_window(d / kHalf, kBeta);
    }
    out.samples[static_cast<std::size_t>(j)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

ClipBounds clip_bounds(std::size_t n_samples, int sample_rate, double start, double end, double context) {
  if (!(start < end)) throw ValidationError("clip start must precede end");
  if (!(context >= 0.0)) throw ValidationError("context must be non-negative");
  ClipBounds b;
  std::int64_t first = std::llround((start - context) * sample_rate);
  std::int64_t length = std::llround((end - start + 2.0 * context) * sample_rate);
  std::int64_t last = first + length;
  auto n = static_cast<std::int64_t>(n_samples);
  if (last <= 0 || first >= n) {
    throw OutOfRange("span [" + std::to_string(start - context) + ", " + std::to_string(end + context) +
                     "] s lies outside the recording (" +
                     std::to_string(static_cast<double>(n_samples) / sample_rate) + " s)");
  }
  b.clamped_start = first < 0;
  b.clamped_end = last > n;
  b.first = std::max<std::int64_t>(first, 0);
  b.last = std::min(last, n);
  return b;
}

ExtractedClip extract_clip(const AudioClip& source, double start, double end, double context) {
  ClipBounds b = clip_bounds(source.samples.size(), source.sample_rate, start, end, context);
  ExtractedClip out;
  out.clip.sample_rate = source.sample_rate;
  out.clip.samples.assign(source.samples.begin() + b.first, source.samples.begin() + b.last);
  out.start = static_cast<double>(b.first) / source.sample_rate;
  out.end = static_cast<double>(b.last) / source.sample_rate;
  out.clamped_start = b.clamped_start;
  out.clamped_end = b.clamped_end;
  return out;
}

ExtractedClip extract_clip(const std::filesystem::path& audio_path, double start, double end,
                           double context) {
  AudioClip source = resample(read_wav(audio_path), kCanonicalRate);
  return extract_clip(source, start, end, context);
}

}  // namespace stopburst::audio
