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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stopburst/classifier.hpp"
#include "stopburst/onnx_graph.hpp"

namespace stopburst::neural {

inline constexpr int kMaxBatch = 64;
inline constexpr std::size_t kDefaultMinSamples = 400;
inline constexpr double kNormalizationEpsilon = 1e-7;
inline constexpr const char* kNormalization = "zero_mean_unit_var";

// Sidecar metadata shipped next to an exported model as JSON:
// {base_model, sample_rate, normalization, labels, run_id?, min_samples?,
//  max_samples?, padding?}.
struct ModelMetadata {
  std::string base_model;
  int sample_rate = 16000;
  std::string normalization = kNormalization;
  std::vector<std::string> labels;  // logit order, e.g. ["absent", "present"]
  std::string run_id;
  std::size_t min_samples = kDefaultMinSamples;
  std::size_t max_samples = 0;  // 0 = unbounded
  std::string padding = "zeros";
};

// The sidecar for model.onnx is model.onnx.json if present, else model.json.
std::filesystem::path sidecar_path(const std::filesystem::path& model_path);

// Throws LoadError naming the missing or invalid field.
ModelMetadata parse_metadata(const std::string& json_text);

// A validated exported classifier. Each clip runs through the graph on its
// own: normalized to zero mean / unit variance, then zero-padded only up to
// min_samples. Clips never share a padded batch tensor, so a probability
// does not depend on what else is in the batch. Nothing is serialized
// internally; the handle is immutable and classify_batch is reentrant.
class NeuralModel final : public ClassifierBackend {
 public:
  // Throws NotFound for a missing model file, LoadError for missing or
  // inconsistent metadata, unexpected input/output signatures or a failed
  // 400-sample zero probe, UnsupportedFormat for unsupported operators.
  static std::unique_ptr<NeuralModel> load(const std::filesystem::path& path);

  std::string name() const override { return "neural:" + metadata_.base_model; }
  int expected_sample_rate() const override { return metadata_.sample_rate; }

  // Throws ValidationError for clips at the wrong rate or longer than
  // max_samples, BackendFault if the model produces non-finite logits.
  std::vector<double> classify_batch(std::span<const audio::AudioClip> clips) const override;

  // Raw logits for one prepared clip, in label order.
  std::vector<double> logits(const audio::AudioClip& clip) const;

  const ModelMetadata& metadata() const noexcept { return metadata_; }
  const std::filesystem::path& model_path() const noexcept { return path_; }
  std::size_t present_index() const noexcept { return present_index_; }

  // Normalized and padded samples as fed to the graph.
  std::vector<float> prepare(const audio::AudioClip& clip) const;

 private:
  NeuralModel(std::filesystem::path path, ModelMetadata meta, onnx::Graph graph, std::size_t present_index);

  std::filesystem::path path_;
  ModelMetadata metadata_;
  onnx::Graph graph_;
  std::size_t present_index_;
};

}  // namespace stopburst::neural
