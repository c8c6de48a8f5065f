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

// Multi-module workflows shared by the command-line tool and the acceptance
// checks: a synthetic corpus on disk, corpus extraction with clamp flags,
// clip loading, baseline training and prediction over manifests, and the
// baseline data-size curve.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stopburst/audio.hpp"
#include "stopburst/baseline.hpp"
#include "stopburst/classifier.hpp"
#include "stopburst/corpus.hpp"
#include "stopburst/eval.hpp"
#include "stopburst/manifest.hpp"

namespace stopburst::pipeline {

// Context added either side of a token for classification (10 ms).
inline constexpr double kDefaultTrainingContext = 0.010;

struct SynthCorpusOptions {
  std::size_t recordings = 4;
  std::size_t stops_per_recording = 50;
  std::uint64_t seed = 0;
  double snr_db = 20.0;
  // Fraction of stops written as a bare phone (burst unknown).
  double unknown_fraction = 0.1;
  // Fraction of labeled stops realized with a full closure and release.
  double present_fraction = 0.5;
  std::string stem_prefix = "spk";
};

// What synth_corpus wrote, with the true realization of every stop in
// tier order (including the bare ones).
struct SynthRecording {
  std::string stem;
  std::vector<Burst> truth;
};

// Writes <stem>.wav and <stem>.TextGrid per recording into dir (created if
// needed). Each recording is a run of synthetic vowel-stop-vowel segments
// whose "phones" tier follows the closure conventions read by
// corpus::extract_stop_events: "<cl>" then the phone for a full stop, a
// fused "<cl>,<phone>" for a lenited one, the bare phone for an unlabeled
// one. Phones are drawn from {p, t, k, b, d, g}.
std::vector<SynthRecording> write_synth_corpus(const std::filesystem::path& dir, const SynthCorpusOptions& options);

struct CorpusExtraction {
  dataset::Manifest manifest;
  std::vector<std::string> warnings;  // "<file>: <message>"
};

// Every *.TextGrid under dir (sorted by name, non-recursive) with a
// same-stem .wav beside it. Speaker defaults to the file stem and token ids
// are "<stem>:<interval>". Audio paths are written relative to
// manifest_dir; clamp flags come from the recording length and `context`.
// Throws NotFound when a TextGrid has no audio.
CorpusExtraction extract_corpus(const std::filesystem::path& dir, corpus::ExtractOptions options, double context,
                                const std::filesystem::path& manifest_dir);

// Resolves token audio paths against a root and keeps resampled recordings
// in memory so tokens from one file decode it once.
class ClipLoader {
 public:
  ClipLoader(std::filesystem::path audio_root, double context);
  audio::AudioClip clip(const StopToken& token);
  std::filesystem::path resolve(const StopToken& token) const;

 private:
  std::filesystem::path root_;
  double context_;
  std::map<std::filesystem::path, audio::AudioClip> cache_;
};

// Manifest copy whose relative audio paths, read against from_dir, are
// rewritten relative to to_dir.
dataset::Manifest rebase_audio_paths(dataset::Manifest m, const std::filesystem::path& from_dir,
                                     const std::filesystem::path& to_dir);

// Features of every labeled, non-excluded token. Throws ValidationError if
// either class is missing.
baseline::BaselineModel train_baseline_from_manifest(const dataset::Manifest& m, const std::filesystem::path& audio_root,
                                                     double context, double l2, std::uint64_t seed);

// Non-excluded records get label_source = model, confidence = P(present)
// and burst = present iff confidence >= 0.5. Excluded records are copied
// unchanged.
dataset::Manifest predict_manifest(const dataset::Manifest& m, const ClassifierBackend& backend,
                                   const std::filesystem::path& audio_root, double context,
                                   std::size_t batch_size = 64);

struct SizeCurveOptions {
  std::vector<std::size_t> sizes = {50, 100, 500, 2000};
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;
  double snr_db = 20.0;
  double l2 = 1e-3;
  eval::BcaOptions bootstrap;
};

// Baseline accuracy as a function of training size on synthetic stops.
// Training sets are prefixes of one pool alternating present and absent
// stops, so they are nested and balanced; every size is scored on the same
// independent test set. One report per size, model "baseline".
std::vector<eval::EvalReport> baseline_size_curve(const SizeCurveOptions& options);

}  // namespace stopburst::pipeline
