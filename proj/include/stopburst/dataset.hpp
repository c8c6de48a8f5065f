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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stopburst/manifest.hpp"

namespace stopburst::dataset {

// Every operation below is a deterministic function of (input manifest,
// parameters, seed). Each draws from its own named RNG stream, and output
// records keep their input order.

// n_per_voicing voiced and n_per_voicing voiceless tokens drawn uniformly
// without replacement from labeled (present/absent), non-excluded records.
// Throws ValidationError reporting the available counts if a class is short.
Manifest sample_balanced(const Manifest& m, std::size_t n_per_voicing, std::uint64_t seed);

// Voicing-stratified partition. |train| = round(train_frac * n) and each
// voicing class is split at train_frac to within one token.
std::pair<Manifest, Manifest> split_train_test(const Manifest& m, double train_frac, std::uint64_t seed);

// Per (corpus, voicing) stratum of non-excluded records:
// min(ceil(frac * stratum size), cap) tokens.
Manifest annotation_sample(const Manifest& m, double frac, std::size_t cap, std::uint64_t seed);

// Quota for one annotation stratum; exposed so callers can report plans.
std::size_t annotation_quota(std::size_t stratum_size, double frac, std::size_t cap);

// n_total tokens with every corpus contributing at least
// min(min_per_corpus, corpus size); the rest apportioned by corpus size with
// largest-remainder rounding. Returns (validation, remainder).
std::pair<Manifest, Manifest> stratified_validation(const Manifest& m, std::size_t n_total,
                                                    std::size_t min_per_corpus, std::uint64_t seed);

// Per-corpus validation counts that stratified_validation would draw, in
// order of first appearance of each corpus.
std::vector<std::pair<std::string, std::size_t>> validation_allocation(const Manifest& m, std::size_t n_total,
                                                                       std::size_t min_per_corpus);

struct SubsetLadder {
  std::vector<std::size_t> sizes;
  // size -> token ids, in manifest order.
  std::map<std::size_t, std::vector<std::string>> subsets;
};

inline const std::vector<std::size_t> kDefaultLadderSizes = {500, 1000, 2000, 10000, 20000, 40000};

// Nested training subsets: one voicing-interleaved shuffle, each subset a
// prefix of it, so subset(a) is contained in subset(b) for a < b and every
// prefix tracks the overall voicing proportion to within one token.
SubsetLadder build_ladder(const Manifest& m, const std::vector<std::size_t>& sizes, std::uint64_t seed);

// Records of m whose ids are listed, in manifest order.
Manifest select(const Manifest& m, const std::vector<std::string>& token_ids, std::string provenance);

// Labeled (present/absent), non-excluded records.
Manifest labeled_only(const Manifest& m);

}  // namespace stopburst::dataset
