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

#include "stopburst/neural.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stopburst/error.hpp"

namespace stopburst::neural {

std::filesystem::path sidecar_path(const std::filesystem::path& model_path) {
  std::filesystem::path appended = model_path;
  appended += ".json";
  if (std::filesystem::exists(appended)) return appended;
  std::filesystem::path replaced = model_path;
  replaced.replace_extension(".json");
  return replaced;
}

ModelMetadata parse_metadata(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model metadata is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw LoadError("model metadata must be a JSON object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw LoadError(std::string("model metadata is missing '") + key + "'");
    return j[key];
  };
  ModelMetadata m;
  try {
    m.base_model = require("base_model").get<std::string>();
    m.sample_rate = require("sample_rate").get<int>();
    m.normalization = require("normalization").get<std::string>();
    m.labels = require("labels").get<std::vector<std::string>>();
    m.run_id = j.value("run_id", "");
    m.min_samples = j.value("min_samples", kDefaultMinSamples);
    m.max_samples = j.value("max_samples", std::size_t{0});
    m.padding = j.value("padding", "zeros");
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model metadata has a field of the wrong type: ") + e.what());
  }
  if (m.base_model.empty()) throw LoadError("model metadata has an empty base_model");
  if (m.sample_rate != audio::kCanonicalRate) {
    throw LoadError("model expects " + std::to_string(m.sample_rate) + " Hz input; only " +
                    std::to_string(audio::kCanonicalRate) + " Hz is supported");
  }
  if (m.normalization != kNormalization) {
    throw LoadError("model metadata declares normalization '" + m.normalization + "', backend applies '" +
                    kNormalization + "'");
  }
  if (m.padding != "zeros") throw LoadError("unsupported padding rule '" + m.padding + "'");
  if (m.min_samples == 0) throw LoadError("min_samples must be positive");
  if (m.max_samples != 0 && m.max_samples < m.min_samples) throw LoadError("max_samples is below min_samples");
  return m;
}

NeuralModel::NeuralModel(std::filesystem::path path, ModelMetadata meta, onnx::Graph graph,
                         std::size_t present_index)
    : path_(std::move(path)), metadata_(std::move(meta)), graph_(std::move(graph)), present_index_(present_index) {}

std::unique_ptr<NeuralModel> NeuralModel::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("model file not found: " + path.string());
  const auto meta_path = sidecar_path(path);
  std::ifstream in(meta_path);
  if (!in) throw LoadError("model metadata not found (looked for " + meta_path.string() + ")");
  std::stringstream buffer;
  buffer << in.rdbuf();
  ModelMetadata meta;
  try {
    meta = parse_metadata(buffer.str());
  } catch (const LoadError& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  }

  if (meta.labels.size() != 2) {
    throw LoadError("model metadata lists " + std::to_string(meta.labels.size()) +
                    " labels; a burst classifier needs exactly [\"absent\", \"present\"]");
  }
  std::size_t present = meta.labels[0] == "present" ? 0 : 1;
  if (meta.labels[present] != "present" || meta.labels[1 - present] != "absent") {
    throw LoadError("model labels must be \"absent\" and \"present\"");
  }

  onnx::Graph graph = onnx::Graph::load(path);
  if (graph.inputs().size() != 1) {
    throw LoadError("model must take exactly one input (waveform), found " + std::to_string(graph.inputs().size()));
  }
  const auto& input = graph.inputs()[0];
  if (input.dtype != onnx::DType::f32 || (input.has_shape && input.dims.size() != 2)) {
    throw LoadError("model input '" + input.name + "' must be a float tensor of shape (batch, samples)");
  }
  if (graph.outputs().size() != 1) {
    throw LoadError("model must have exactly one output (logits), found " + std::to_string(graph.outputs().size()));
  }

  std::unique_ptr<NeuralModel> model(new NeuralModel(path, std::move(meta), std::move(graph), present));
  // Probe with silence at the minimum length; also checks the output shape.
  std::vector<double> probe;
  try {
    audio::AudioClip zeros;
    zeros.samples.assign(kDefaultMinSamples, 0.0);
    probe = model->logits(zeros);
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError("model failed the zero-input probe: " + std::string(e.what()));
  }
  for (double v : probe) {
    if (!std::isfinite(v)) throw LoadError("model produced non-finite logits on the zero-input probe");
  }
  return model;
}

std::vector<float> NeuralModel::prepare(const audio::AudioClip& clip) const {
  if (clip.sample_rate != metadata_.sample_rate) {
    throw ValidationError("clip at " + std::to_string(clip.sample_rate) + " Hz; model expects " +
                          std::to_string(metadata_.sample_rate) + " Hz");
  }
  if (clip.samples.empty()) throw ValidationError("empty clip");
  if (metadata_.max_samples && clip.samples.size() > metadata_.max_samples) {
    throw ValidationError("clip of " + std::to_string(clip.samples.size()) + " samples exceeds the model maximum of " +
                          std::to_string(metadata_.max_samples));
  }
  const double n = static_cast<double>(clip.samples.size());
  double mean = 0.0;
  for (double s : clip.samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : clip.samples) var += (s - mean) * (s - mean);
  var /= n;
  const double scale = 1.0 / std::sqrt(var + kNormalizationEpsilon);
  std::vector<float> out(std::max(clip.samples.size(), metadata_.min_samples), 0.0f);
  for (std::size_t k = 0; k < clip.samples.size(); ++k) {
    out[k] = static_cast<float>((clip.samples[k] - mean) * scale);
  }
  return out;
}

std::vector<double> NeuralModel::logits(const audio::AudioClip& clip) const {
  std::vector<float> x = prepare(clip);
  const auto len = static_cast<std::int64_t>(x.size());
  std::map<std::string, onnx::Tensor> feeds;
  feeds.emplace(graph_.inputs()[0].name, onnx::Tensor::floats({1, len}, std::move(x)));
  std::vector<onnx::Tensor> out = graph_.run(feeds);
  const onnx::Tensor& y = out.at(0);
  if (y.dtype != onnx::DType::f32 || y.size() != 2 || (y.shape.size() == 2 && y.shape[0] != 1)) {
    std::string shape;
    for (auto d : y.shape) shape += (shape.empty() ? "" : ", ") + std::to_string(d);
    throw LoadError("model output has shape [" + shape + "]; expected (batch, 2) logits");
  }
  return {y.f[0], y.f[1]};
}

std::vector<double> NeuralModel::classify_batch(std::span<const audio::AudioClip> clips) const {
  std::vector<double> out;
  out.reserve(clips.size());
  // Chunks of at most kMaxBatch clips; each clip still runs on its own.
  for (std::size_t begin = 0; begin < clips.size(); begin += kMaxBatch) {
    const std::size_t end = std::min(clips.size(), begin + kMaxBatch);
    for (std::size_t k = begin; k < end; ++k) {
      std::vector<double> z;
      try {
        z = logits(clips[k]);
      } catch (const LoadError& e) {
        throw BackendFault(e.what());
      }
      if (!std::isfinite(z[0]) || !std::isfinite(z[1])) {
        throw BackendFault("model produced non-finite logits for clip " + std::to_string(k));
      }
      const double m = std::max(z[0], z[1]);
      const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
      out.push_back((present_index_ == 0 ? e0 : e1) / (e0 + e1));
    }
  }
  return out;
}

}  // namespace stopburst::neural
