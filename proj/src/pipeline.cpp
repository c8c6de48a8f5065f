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

#include "stopburst/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "stopburst/dataset.hpp"
#include "stopburst/error.hpp"
#include "stopburst/rng.hpp"
#include "stopburst/synth.hpp"
#include "stopburst/textgrid.hpp"

namespace stopburst::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr int kRate = audio::kCanonicalRate;
constexpr std::array<const char*, 6> kPhones = {"p", "t", "k", "b", "d", "g"};
// Recordings kept decoded at once by ClipLoader.
constexpr std::size_t kRecordingCache = 16;

double at_sample(std::size_t i) { return static_cast<double>(i) / kRate; }

std::size_t to_samples(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * kRate));
}

}  // namespace

std::vector<SynthRecording> write_synth_corpus(const fs::path& dir, const SynthCorpusOptions& options) {
  if (options.recordings == 0 || options.stops_per_recording == 0) {
    throw ValidationError("synthetic corpus needs at least one recording and one stop");
  }
  if (!(options.unknown_fraction >= 0 && options.unknown_fraction <= 1) ||
      !(options.present_fraction >= 0 && options.present_fraction <= 1)) {
    throw ValidationError("synthetic corpus fractions must be in [0, 1]");
  }
  fs::create_directories(dir);
  std::vector<SynthRecording> out;
  for (std::size_t r = 0; r < options.recordings; ++r) {
    char stem_buf[32];
    std::snprintf(stem_buf, sizeof stem_buf, "%03zu", r + 1);
    SynthRecording rec;
    rec.stem = options.stem_prefix + stem_buf;
    CounterRng rng(options.seed, "synth_corpus/" + rec.stem);

    audio::AudioClip audio;
    textgrid::IntervalTier tier{"phones", {}};
    auto add = [&](std::size_t from, std::size_t to, std::string text) {
      tier.intervals.push_back({at_sample(from), at_sample(to), std::move(text)});
    };
    std::size_t lenited = 0;
    for (std::size_t s = 0; s < options.stops_per_recording; ++s) {
      bool bare = rng.uniform() < options.unknown_fraction;
      bool present = rng.uniform() < options.present_fraction;
      std::string phone = kPhones[rng.below(kPhones.size())];
      synth::Realization real = synth::Realization::full_stop;
      if (!present) {
        real = lenited++ % 2 == 0 ? synth::Realization::fricativised : synth::Realization::voiced_continuant;
      }
      auto spec = synth::random_spec(real, rng.next(), options.snr_db);
      auto result = synth::synthesize_stop(spec);

      const std::size_t base = audio.samples.size();
      const std::size_t n = result.clip.samples.size();
      const std::size_t stop_start = base + to_samples(result.stop_start);
      const std::size_t stop_end = base + to_samples(result.stop_end);
      add(base, stop_start, "a");
      if (bare) {
        add(stop_start, stop_end, phone);
      } else if (present) {
        std::size_t closure_end = stop_start + to_samples(spec.closure_ms / 1000.0);
        add(stop_start, closure_end, "<cl>");
        add(closure_end, stop_end, phone);
      } else {
        add(stop_start, stop_end, "<cl>," + phone);
      }
      add(stop_end, base + n, "a");
      audio.samples.insert(audio.samples.end(), result.clip.samples.begin(), result.clip.samples.end());
      rec.truth.push_back(result.burst);
    }
    textgrid::TextGrid grid;
    grid.xmin = 0.0;
    grid.xmax = at_sample(audio.samples.size());
    grid.tiers.push_back(std::move(tier));
    audio::write_wav(dir / (rec.stem + ".wav"), audio);
    textgrid::write_textgrid(dir / (rec.stem + ".TextGrid"), grid);
    out.push_back(std::move(rec));
  }
  return out;
}

CorpusExtraction extract_corpus(const fs::path& dir, corpus::ExtractOptions options, double context,
                                const fs::path& manifest_dir) {
  if (!fs::is_directory(dir)) throw NotFound("corpus directory not found: " + dir.string());
  if (!(context >= 0) || !std::isfinite(context)) throw ValidationError("context must be finite and >= 0");
  std::vector<fs::path> grids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".TextGrid") grids.push_back(entry.path());
  }
  std::sort(grids.begin(), grids.end());
  if (options.corpus.empty()) {
    fs::path p = fs::absolute(dir).lexically_normal();
    if (!p.has_filename()) p = p.parent_path();  // trailing separator
    options.corpus = p.filename().empty() ? "corpus" : p.filename().string();
  }
  const std::string default_speaker = options.speaker;

  CorpusExtraction out;
  for (const auto& grid_path : grids) {
    std::string stem = grid_path.stem().string();
    fs::path wav = grid_path.parent_path() / (stem + ".wav");
    if (!fs::exists(wav)) wav = grid_path.parent_path() / (stem + ".WAV");
    if (!fs::exists(wav)) throw NotFound("no audio for " + grid_path.string() + " (expected " + stem + ".wav)");

    textgrid::TextGrid grid;
    try {
      grid = textgrid::read_textgrid(grid_path);
    } catch (const ParseError& e) {
      throw ParseError(grid_path.string(), e);
    }
    corpus::ExtractOptions file_options = options;
    file_options.speaker = default_speaker.empty() ? stem : default_speaker;
    file_options.id_prefix = stem;
    file_options.audio_path = fs::proximate(wav, manifest_dir).generic_string();
    auto extraction = corpus::extract_stop_events(grid, file_options);
    for (const auto& w : extraction.warnings) out.warnings.push_back(grid_path.filename().string() + ": " + w.message);

    auto info = audio::probe_wav(wav);
    for (auto& t : extraction.tokens) {
      auto b = audio::clip_bounds(info.frames, info.sample_rate, t.start, t.end, context);
      t.clamped = b.clamped_start || b.clamped_end;
      out.manifest.records.push_back(std::move(t));
    }
  }
  out.manifest.validate();
  return out;
}

ClipLoader::ClipLoader(fs::path audio_root, double context) : root_(std::move(audio_root)), context_(context) {}

fs::path ClipLoader::resolve(const StopToken& token) const {
  fs::path p(token.audio_path);
  return p.is_absolute() ? p : root_ / p;
}

audio::AudioClip ClipLoader::clip(const StopToken& token) {
  fs::path path = resolve(token);
  auto it = cache_.find(path);
  if (it == cache_.end()) {
    if (!fs::exists(path)) throw NotFound("audio for " + token.token_id + " not found: " + path.string());
    if (cache_.size() >= kRecordingCache) cache_.clear();
    it = cache_.emplace(path, audio::resample(audio::read_wav(path), kRate)).first;
  }
  return audio::extract_clip(it->second, token.start, token.end, context_).clip;
}

dataset::Manifest rebase_audio_paths(dataset::Manifest m, const fs::path& from_dir, const fs::path& to_dir) {
  for (auto& t : m.records) {
    fs::path p(t.audio_path);
    if (t.audio_path.empty() || p.is_absolute()) continue;
    t.audio_path = fs::proximate(from_dir / p, to_dir).generic_string();
  }
  return m;
}

baseline::BaselineModel train_baseline_from_manifest(const dataset::Manifest& m, const fs::path& audio_root,
                                                     double context, double l2, std::uint64_t seed) {
  auto labeled = dataset::labeled_only(m);
  ClipLoader loader(audio_root, context);
  std::vector<baseline::LabeledFeatures> data;
  data.reserve(labeled.records.size());
  for (const auto& t : labeled.records) {
    data.push_back({baseline::featurize(loader.clip(t)), t.burst == Burst::present ? 1 : 0});
  }
  return baseline::train_baseline(data, l2, seed);
}

dataset::Manifest predict_manifest(const dataset::Manifest& m, const ClassifierBackend& backend,
                                   const fs::path& audio_root, double context, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  dataset::Manifest out = m;
  ClipLoader loader(audio_root, context);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (!m.records[i].excluded) todo.push_back(i);
  }
  for (std::size_t from = 0; from < todo.size(); from += batch_size) {
    std::size_t to = std::min(todo.size(), from + batch_size);
    std::vector<audio::AudioClip> clips;
    clips.reserve(to - from);
    for (std::size_t k = from; k < to; ++k) clips.push_back(loader.clip(m.records[todo[k]]));
    auto probs = backend.classify_batch(clips);
    if (probs.size() != clips.size()) throw BackendFault("backend returned the wrong number of probabilities");
    for (std::size_t k = from; k < to; ++k) {
      auto& t = out.records[todo[k]];
      double p = probs[k - from];
      t.label_source = LabelSource::model;
      t.confidence = p;
      t.burst = p >= 0.5 ? Burst::present : Burst::absent;
    }
  }
  return out;
}

std::vector<eval::EvalReport> baseline_size_curve(const SizeCurveOptions& options) {
  if (options.sizes.empty()) throw ValidationError("size curve needs at least one size");
  std::size_t max_size = *std::max_element(options.sizes.begin(), options.sizes.end());
  if (max_size < 2 || options.test_size < 2) throw ValidationError("size curve sizes must be at least 2");

  CounterRng pool_rng(options.seed, "size_curve/pool");
  std::vector<baseline::LabeledFeatures> pool;
  pool.reserve(max_size);
  for (std::size_t i = 0; i < max_size; ++i) {
    synth::Realization r = synth::Realization::full_stop;
    if (i % 2 == 1) r = (i / 2) % 2 == 0 ? synth::Realization::fricativised : synth::Realization::voiced_continuant;
    auto s = synth::synthesize_stop(synth::random_spec(r, pool_rng.next(), options.snr_db));
    pool.push_back({baseline::featurize(s.clip), s.burst == Burst::present ? 1 : 0});
  }

  CounterRng test_rng(options.seed, "size_curve/test");
  auto test = synth::synthesize_set(options.test_size / 2, options.test_size - options.test_size / 2,
                                    test_rng.next(), options.snr_db);
  std::vector<baseline::FeatureVector> test_x;
  std::vector<int> test_y;
  for (const auto& c : test) {
    test_x.push_back(baseline::featurize(c.clip));
    test_y.push_back(c.burst == Burst::present ? 1 : 0);
  }

  std::vector<eval::EvalReport> out;
  for (std::size_t size : options.sizes) {
    std::span<const baseline::LabeledFeatures> train(pool.data(), size);
    auto model = baseline::train_baseline(train, options.l2, options.seed);
    std::vector<eval::Item> items;
    items.reserve(test_x.size());
    for (std::size_t i = 0; i < test_x.size(); ++i) {
      items.push_back({test_y[i], baseline::predict_features(model, test_x[i]) >= 0.5 ? 1 : 0});
    }
    out.push_back(eval::evaluate(items, options.bootstrap, "baseline", size));
  }
  return out;
}

}  // namespace stopburst::pipeline
