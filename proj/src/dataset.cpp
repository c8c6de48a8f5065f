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

#include "stopburst/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "stopburst/error.hpp"
#include "stopburst/rng.hpp"

namespace stopburst::dataset {

namespace {

std::string describe(std::string_view op, std::uint64_t seed, const std::string& params,
                     const Manifest& input) {
  std::string p = std::string(op) + " seed=" + std::to_string(seed);
  if (!params.empty()) p += " " + params;
  if (!input.provenance.empty()) p += " <- " + input.provenance;
  return p;
}

Manifest gather(const Manifest& m, std::vector<std::size_t> picked, std::string provenance) {
  std::sort(picked.begin(), picked.end());
  Manifest out;
  out.provenance = std::move(provenance);
  out.records.reserve(picked.size());
  for (std::size_t i : picked) out.records.push_back(m.records[i]);
  return out;
}

// Draws k of the given positions uniformly without replacement.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k, CounterRng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// Apportions the total by integer weights with largest-remainder rounding,
// never exceeding caps. Ties go to the earlier entry.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights,
                                   const std::vector<std::size_t>& caps) {
  std::vector<std::size_t> alloc(weights.size(), 0);
  std::vector<bool> active(weights.size());
  for (std::size_t c = 0; c < weights.size(); ++c) active[c] = caps[c] > 0 && weights[c] > 0;
  std::size_t remaining = total;
  while (remaining > 0) {
    unsigned __int128 w_sum = 0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
      if (active[c]) w_sum += weights[c];
    }
    if (w_sum == 0) break;
    std::vector<std::size_t> give(weights.size(), 0);
    std::vector<std::pair<unsigned __int128, std::size_t>> rema;
    std::size_t given = 0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
      if (!active[c]) continue;
      unsigned __int128 num = static_cast<unsigned __int128>(remaining) * weights[c];
      give[c] = static_cast<std::size_t>(num / w_sum);
      given += give[c];
      rema.emplace_back(num % w_sum, c);
    }
    std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; r < rema.size() && given < remaining; ++r, ++given) ++give[rema[r].second];

    std::size_t progress = 0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
      if (!active[c]) continue;
      std::size_t room = caps[c] - alloc[c];
      if (give[c] >= room) {
        give[c] = room;
        active[c] = false;
      }
      alloc[c] += give[c];
      progress += give[c];
    }
    remaining -= progress;
    if (progress == 0) break;
  }
  return alloc;
}

struct CorpusGroups {
  std::vector<std::string> names;                 // first-appearance order
  std::vector<std::vector<std::size_t>> members;  // record positions
};

CorpusGroups group_by_corpus(const Manifest& m) {
  CorpusGroups g;
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& name = m.records[i].corpus;
    auto [it, inserted] = slot.emplace(name, g.names.size());
    if (inserted) {
      g.names.push_back(name);
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
  }
  return g;
}

}  // namespace

Manifest sample_balanced(const Manifest& m, std::size_t n_per_voicing, std::uint64_t seed) {
  std::vector<std::size_t> voiced, voiceless;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (!r.labeled() || r.excluded) continue;
    (r.voicing == Voicing::voiced ? voiced : voiceless).push_back(i);
  }
  if (voiced.size() < n_per_voicing || voiceless.size() < n_per_voicing) {
    throw ValidationError("sample_balanced needs " + std::to_string(n_per_voicing) +
                          " labeled tokens per voicing class; available: voiced=" +
                          std::to_string(voiced.size()) + ", voiceless=" + std::to_string(voiceless.size()));
  }
  CounterRng rng(seed, "sample_balanced");
  auto a = draw(std::move(voiced), n_per_voicing, rng);
  auto b = draw(std::move(voiceless), n_per_voicing, rng);
  a.insert(a.end(), b.begin(), b.end());
  return gather(m, std::move(a),
                describe("sample_balanced", seed, "n_per_voicing=" + std::to_string(n_per_voicing), m));
}

std::pair<Manifest, Manifest> split_train_test(const Manifest& m, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ValidationError("train_frac must lie in (0, 1)");
  std::vector<std::size_t> classes[2];
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    classes[m.records[i].voicing == Voicing::voiced ? 0 : 1].push_back(i);
  }
  const std::size_t n = m.records.size();
  const auto total = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  std::size_t take[2];
  double frac_part[2];
  std::size_t floors = 0;
  for (int c = 0; c < 2; ++c) {
    double ideal = train_frac * static_cast<double>(classes[c].size());
    take[c] = static_cast<std::size_t>(std::floor(ideal));
    frac_part[c] = ideal - std::floor(ideal);
    floors += take[c];
  }
  std::size_t leftover = total - floors;
  int order[2] = {0, 1};
  if (frac_part[1] > frac_part[0]) std::swap(order[0], order[1]);
  for (int k = 0; k < 2 && leftover > 0; ++k) {
    int c = order[k];
    if (take[c] < classes[c].size()) {
      ++take[c];
      --leftover;
    }
  }

  CounterRng rng(seed, "split_train_test");
  std::vector<std::size_t> train, test;
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> pool = classes[c];
    rng.shuffle(pool);
    train.insert(train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take[c]));
    test.insert(test.end(), pool.begin() + static_cast<std::ptrdiff_t>(take[c]), pool.end());
  }
  std::string params = "train_frac=" + std::to_string(train_frac);
  return {gather(m, std::move(train), describe("split_train_test[train]", seed, params, m)),
          gather(m, std::move(test), describe("split_train_test[test]", seed, params, m))};
}

std::size_t annotation_quota(std::size_t stratum_size, double frac, std::size_t cap) {
  if (!(frac >= 0.0 && frac <= 1.0)) throw ValidationError("annotation fraction must lie in [0, 1]");
  // The small tolerance keeps products such as 0.05 * 200 from rounding up
  // past an exact integer.
  double ideal = frac * static_cast<double>(stratum_size);
  auto quota = static_cast<std::size_t>(std::ceil(ideal - 1e-9 * std::max(1.0, ideal)));
  return std::min({quota, cap, stratum_size});
}

Manifest annotation_sample(const Manifest& m, double frac, std::size_t cap, std::uint64_t seed) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
  std::vector<std::pair<std::string, int>> order;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (r.excluded) continue;
    auto key = std::make_pair(r.corpus, r.voicing == Voicing::voiced ? 0 : 1);
    auto [it, inserted] = strata.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(i);
  }
  CounterRng rng(seed, "annotation_sample");
  std::vector<std::size_t> picked;
  for (const auto& key : order) {
    auto& pool = strata[key];
    auto chosen = draw(pool, annotation_quota(pool.size(), frac, cap), rng);
    picked.insert(picked.end(), chosen.begin(), chosen.end());
  }
  return gather(m, std::move(picked),
                describe("annotation_sample", seed,
                         "frac=" + std::to_string(frac) + " cap=" + std::to_string(cap), m));
}

std::vector<std::pair<std::string, std::size_t>> validation_allocation(const Manifest& m, std::size_t n_total,
                                                                       std::size_t min_per_corpus) {
  CorpusGroups g = group_by_corpus(m);
  auto counts_text = [&] {
    std::string s;
    for (std::size_t c = 0; c < g.names.size(); ++c) {
      s += (c ? ", " : "") + g.names[c] + "=" + std::to_string(g.members[c].size());
    }
    return s;
  };
  if (n_total > m.records.size()) {
    throw ValidationError("validation size " + std::to_string(n_total) + " exceeds manifest size " +
                          std::to_string(m.records.size()) + " (per corpus: " + counts_text() + ")");
  }
  if (min_per_corpus * g.names.size() > n_total) {
    throw ValidationError("infeasible validation minima: " + std::to_string(min_per_corpus) + " x " +
                          std::to_string(g.names.size()) + " corpora exceeds " + std::to_string(n_total) +
                          " (per corpus: " + counts_text() + ")");
  }
  std::vector<std::size_t> base(g.names.size()), weights(g.names.size()), caps(g.names.size());
  std::size_t base_total = 0;
  for (std::size_t c = 0; c < g.names.size(); ++c) {
    weights[c] = g.members[c].size();
    base[c] = std::min(min_per_corpus, weights[c]);
    caps[c] = weights[c] - base[c];
    base_total += base[c];
  }
  auto extra = apportion(n_total - base_total, weights, caps);
  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t c = 0; c < g.names.size(); ++c) out.emplace_back(g.names[c], base[c] + extra[c]);
  return out;
}

std::pair<Manifest, Manifest> stratified_validation(const Manifest& m, std::size_t n_total,
                                                    std::size_t min_per_corpus, std::uint64_t seed) {
  auto alloc = validation_allocation(m, n_total, min_per_corpus);
  CorpusGroups g = group_by_corpus(m);
  CounterRng rng(seed, "stratified_validation");
  std::vector<std::size_t> validation;
  std::vector<bool> chosen(m.records.size(), false);
  for (std::size_t c = 0; c < g.names.size(); ++c) {
    for (std::size_t i : draw(g.members[c], alloc[c].second, rng)) {
      validation.push_back(i);
      chosen[i] = true;
    }
  }
  std::vector<std::size_t> remainder;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (!chosen[i]) remainder.push_back(i);
  }
  std::string params = "n_total=" + std::to_string(n_total) + " min_per_corpus=" + std::to_string(min_per_corpus);
  return {gather(m, std::move(validation), describe("stratified_validation[validation]", seed, params, m)),
          gather(m, std::move(remainder), describe("stratified_validation[remainder]", seed, params, m))};
}

SubsetLadder build_ladder(const Manifest& m, const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.empty()) throw ValidationError("ladder needs at least one size");
  for (std::size_t k = 1; k < sizes.size(); ++k) {
    if (sizes[k] <= sizes[k - 1]) throw ValidationError("ladder sizes must be strictly increasing");
  }
  if (sizes.back() > m.records.size()) {
    throw ValidationError("ladder size " + std::to_string(sizes.back()) + " exceeds manifest size " +
                          std::to_string(m.records.size()));
  }
  std::vector<std::size_t> classes[2];
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    classes[m.records[i].voicing == Voicing::voiced ? 0 : 1].push_back(i);
  }
  CounterRng rng(seed, "build_ladder");
  for (auto& c : classes) rng.shuffle(c);

  // Interleave the shuffled classes so every prefix follows the overall
  // voicing proportion: always take from the class furthest behind target.
  const std::size_t n = m.records.size();
  std::vector<std::size_t> order;
  order.reserve(n);
  std::size_t taken[2] = {0, 0};
  for (std::size_t k = 1; k <= n; ++k) {
    int best = -1;
    long double best_deficit = 0;
    for (int c = 0; c < 2; ++c) {
      if (taken[c] >= classes[c].size()) continue;
      long double deficit = static_cast<long double>(k) * classes[c].size() / n - taken[c];
      if (best < 0 || deficit > best_deficit) {
        best = c;
        best_deficit = deficit;
      }
    }
    order.push_back(classes[best][taken[best]++]);
  }

  SubsetLadder ladder;
  ladder.sizes = sizes;
  for (std::size_t size : sizes) {
    std::vector<std::size_t> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
    std::sort(prefix.begin(), prefix.end());
    auto& ids = ladder.subsets[size];
    ids.reserve(size);
    for (std::size_t i : prefix) ids.push_back(m.records[i].token_id);
  }
  return ladder;
}

Manifest select(const Manifest& m, const std::vector<std::string>& token_ids, std::string provenance) {
  std::unordered_set<std::string> wanted(token_ids.begin(), token_ids.end());
  Manifest out;
  out.provenance = std::move(provenance);
  for (const auto& r : m.records) {
    if (wanted.count(r.token_id)) out.records.push_back(r);
  }
  if (out.records.size() != wanted.size()) throw NotFound("some token ids are not in the manifest");
  return out;
}

Manifest labeled_only(const Manifest& m) {
  Manifest out;
  out.provenance = m.provenance;
  for (const auto& r : m.records) {
    if (r.labeled() && !r.excluded) out.records.push_back(r);
  }
  return out;
}

}  // namespace stopburst::dataset
