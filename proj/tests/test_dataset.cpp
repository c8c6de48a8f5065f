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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "stopburst/dataset.hpp"
#include "stopburst/error.hpp"
#include "stopburst/manifest.hpp"

using namespace stopburst;
using dataset::Manifest;

namespace {

struct Stratum {
  std::string corpus;
  Voicing voicing;
  std::size_t count;
  Burst burst = Burst::present;
};

Manifest make_manifest(const std::vector<Stratum>& strata) {
  Manifest m;
  m.provenance = "test";
  std::size_t id = 0;
  for (const auto& s : strata) {
    for (std::size_t i = 0; i < s.count; ++i, ++id) {
      StopToken t;
      t.token_id = "t" + std::to_string(id);
      t.corpus = s.corpus;
      t.speaker = "spk" + std::to_string(id % 7);
      t.audio_path = "a.wav";
      t.phone = s.voicing == Voicing::voiced ? "g" : "k";
      t.voicing = s.voicing;
      t.start = 0.01 * static_cast<double>(id % 1000);
      t.end = t.start + 0.05;
      t.burst = (s.burst == Burst::present && id % 3 == 0) ? Burst::absent : s.burst;
      t.label_source = LabelSource::corpus;
      m.records.push_back(t);
    }
  }
  return m;
}

std::set<std::string> ids(const Manifest& m) {
  std::set<std::string> out;
  for (const auto& r : m.records) out.insert(r.token_id);
  return out;
}

std::size_t count_if_voicing(const Manifest& m, Voicing v) {
  return static_cast<std::size_t>(
      std::count_if(m.records.begin(), m.records.end(), [&](const StopToken& t) { return t.voicing == v; }));
}

// Random manifest with several corpora of uneven size.
Manifest random_manifest(std::mt19937_64& rng, std::size_t max_total) {
  std::uniform_int_distribution<std::size_t> ncorp(1, 6), size(0, max_total / 6);
  std::vector<Stratum> strata;
  std::size_t k = ncorp(rng);
  for (std::size_t c = 0; c < k; ++c) {
    strata.push_back({"c" + std::to_string(c), Voicing::voiced, size(rng)});
    strata.push_back({"c" + std::to_string(c), Voicing::voiceless, size(rng)});
  }
  auto m = make_manifest(strata);
  std::shuffle(m.records.begin(), m.records.end(), rng);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest I/O

TEST_CASE("manifest round-trips through JSON Lines") {
  auto m = make_manifest({{"csj", Voicing::voiced, 3}, {"spade", Voicing::voiceless, 2, Burst::unknown}});
  m.records[0].confidence = 0.25;
  m.records[0].label_source = LabelSource::model;
  m.records[1].excluded = true;
  m.records[2].clamped = true;
  m.records[0].speaker = "名前 \"quoted\"";
  auto text = dataset::serialize_manifest(m);
  auto back = dataset::parse_manifest(text);
  CHECK(back.records == m.records);
  CHECK(back.provenance == m.provenance);
  CHECK(dataset::serialize_manifest(back) == text);

  auto first_record = text.substr(text.find('\n') + 1);
  first_record = first_record.substr(0, first_record.find('\n'));
  CHECK(first_record.rfind("{\"token_id\":\"t0\",\"corpus\":\"csj\",\"speaker\":", 0) == 0);
  CHECK(first_record.find("\"confidence\":0.25") != std::string::npos);

  auto dir = oracle::temp_dir("manifest");
  dataset::write_manifest(dir / "m.jsonl", m);
  CHECK(dataset::read_manifest(dir / "m.jsonl").records == m.records);
}

TEST_CASE("manifest parse errors carry line numbers") {
  auto m = make_manifest({{"c", Voicing::voiced, 3}});
  auto text = dataset::serialize_manifest(m);
  SUBCASE("broken JSON") {
    auto bad = text;
    bad.insert(bad.find('\n', bad.find('\n') + 1) + 1, "{oops\n");
    try {
      dataset::parse_manifest(bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("duplicate id") {
    auto dup = m;
    dup.records[2].token_id = "t0";
    auto parsed = dataset::parse_manifest(dataset::serialize_manifest(dup));
    CHECK_THROWS_AS(parsed.validate(), ValidationError);
    auto dir = oracle::temp_dir("manifest_dup");
    CHECK_THROWS_AS(dataset::write_manifest(dir / "m.jsonl", dup), ValidationError);
  }
  SUBCASE("bad field values") {
    auto bad = text;
    auto pos = bad.find("\"voicing\":\"voiced\"");
    bad.replace(pos, 18, "\"voicing\":\"nasal\"");
    try {
      dataset::parse_manifest(bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("unknown schema version") {
    auto bad = text;
    bad.replace(bad.find("\"schema_version\":1"), 18, "\"schema_version\":9");
    CHECK_THROWS_AS(dataset::parse_manifest(bad), ParseError);
  }
}

// ---------------------------------------------------------------------------
// sample_balanced

TEST_CASE("balanced sample of 20k per class from 189,767 tokens") {
  // Voiced and voiceless counts are arbitrary but both exceed 20k labeled.
  auto m = make_manifest({{"csj", Voicing::voiced, 80000}, {"csj", Voicing::voiceless, 109767}});
  REQUIRE(m.records.size() == 189767);
  auto s = dataset::sample_balanced(m, 20000, 1);
  CHECK(s.records.size() == 40000);
  CHECK(count_if_voicing(s, Voicing::voiced) == 20000);
  CHECK(count_if_voicing(s, Voicing::voiceless) == 20000);
  CHECK(ids(s).size() == 40000);
  CHECK(ids(dataset::sample_balanced(m, 20000, 1)) == ids(s));
  CHECK(ids(dataset::sample_balanced(m, 20000, 2)) != ids(s));
}

TEST_CASE("balanced sample edge cases") {
  auto m = make_manifest({{"c", Voicing::voiced, 10}, {"c", Voicing::voiceless, 10, Burst::unknown}});
  CHECK(dataset::sample_balanced(m, 0, 1).records.empty());
  try {
    dataset::sample_balanced(m, 5, 1);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    // Voiceless tokens are all unlabeled.
    std::string what = e.what();
    CHECK(what.find("10") != std::string::npos);
    CHECK(what.find("0") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// split_train_test

TEST_CASE("40k split at 0.8 gives 32,000 / 8,000") {
  auto m = make_manifest({{"c", Voicing::voiced, 20000}, {"c", Voicing::voiceless, 20000}});
  auto [train, test] = dataset::split_train_test(m, 0.8, 3);
  CHECK(train.records.size() == 32000);
  CHECK(test.records.size() == 8000);
  CHECK(count_if_voicing(train, Voicing::voiced) == 16000);
}

TEST_CASE("10 tokens split 4+4 / 1+1") {
  auto m = make_manifest({{"c", Voicing::voiced, 5}, {"c", Voicing::voiceless, 5}});
  auto [train, test] = dataset::split_train_test(m, 0.8, 3);
  CHECK(train.records.size() == 8);
  CHECK(test.records.size() == 2);
  CHECK(count_if_voicing(train, Voicing::voiced) == 4);
  CHECK(count_if_voicing(test, Voicing::voiced) == 1);
  CHECK_THROWS_AS(dataset::split_train_test(m, 1.0, 3), ValidationError);
  CHECK_THROWS_AS(dataset::split_train_test(m, 0.0, 3), ValidationError);
}

TEST_CASE("split is a stratified partition on random manifests") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  for (int rep = 0; rep < 100; ++rep) {
    auto m = random_manifest(rng, 1000);
    if (m.records.empty()) continue;
    double f = frac(rng);
    auto [train, test] = dataset::split_train_test(m, f, rep);
    auto a = ids(train), b = ids(test);
    std::vector<std::string> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    CHECK(both.empty());
    CHECK(a.size() + b.size() == m.records.size());
    CHECK(static_cast<long long>(a.size()) == std::llround(f * static_cast<double>(m.records.size())));
    for (Voicing v : {Voicing::voiced, Voicing::voiceless}) {
      double n = static_cast<double>(count_if_voicing(m, v));
      CHECK(std::abs(static_cast<double>(count_if_voicing(train, v)) - f * n) <= 1.0);
    }
  }
}

// ---------------------------------------------------------------------------
// annotation_sample

TEST_CASE("annotation quotas") {
  CHECK(dataset::annotation_quota(50000, 0.05, 1000) == 1000);
  CHECK(dataset::annotation_quota(200, 0.05, 1000) == 10);
  CHECK(dataset::annotation_quota(1, 0.05, 1000) == 1);
  CHECK(dataset::annotation_quota(0, 0.05, 1000) == 0);
  CHECK(dataset::annotation_quota(201, 0.05, 1000) == 11);
  CHECK(dataset::annotation_quota(20000, 0.05, 1000) == 1000);
  CHECK(dataset::annotation_quota(19999, 0.05, 1000) == 1000);
  CHECK(dataset::annotation_quota(19980, 0.05, 1000) == 999);
}

TEST_CASE("annotation sample recount matches quotas on random manifests") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    auto m = random_manifest(rng, 1000);
    if (rep % 5 == 0 && !m.records.empty()) m.records[0].excluded = true;
    auto s = dataset::annotation_sample(m, 0.05, 20, rep);
    std::map<std::pair<std::string, Voicing>, std::size_t> in, out;
    for (const auto& r : m.records) {
      if (!r.excluded) ++in[{r.corpus, r.voicing}];
    }
    for (const auto& r : s.records) {
      CHECK_FALSE(r.excluded);
      ++out[{r.corpus, r.voicing}];
    }
    for (const auto& [key, n] : in) {
      auto want = std::min<std::size_t>(static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n) - 1e-9)), 20);
      CHECK(out[key] == want);
    }
    CHECK(ids(s).size() == s.records.size());
  }
}

TEST_CASE("annotation sample keeps manifest order and is seeded") {
  auto m = make_manifest({{"a", Voicing::voiced, 300}, {"b", Voicing::voiceless, 300}});
  auto s1 = dataset::annotation_sample(m, 0.05, 1000, 5);
  auto s2 = dataset::annotation_sample(m, 0.05, 1000, 5);
  CHECK(dataset::serialize_manifest(s1) == dataset::serialize_manifest(s2));
  auto idx = m.index();
  for (std::size_t i = 1; i < s1.records.size(); ++i) {
    CHECK(idx.at(s1.records[i - 1].token_id) < idx.at(s1.records[i].token_id));
  }
  CHECK(s1.provenance.find("seed=5") != std::string::npos);
}

// ---------------------------------------------------------------------------
// stratified_validation

TEST_CASE("11k validation draw covers every corpus") {
  std::vector<Stratum> strata;
  const std::size_t sizes[] = {1000, 1000, 12000, 640, 9000, 2500, 30, 4400, 1000, 1000, 8000, 16058};
  for (std::size_t c = 0; c < 12; ++c) strata.push_back({"corpus" + std::to_string(c), Voicing(c % 2), sizes[c]});
  auto m = make_manifest(strata);
  REQUIRE(m.records.size() == 56628);
  auto [val, rest] = dataset::stratified_validation(m, 11000, 50, 4);
  CHECK(val.records.size() == 11000);
  CHECK(rest.records.size() == 56628 - 11000);
  std::map<std::string, std::size_t> per;
  for (const auto& r : val.records) ++per[r.corpus];
  CHECK(per.size() == 12);
  for (const auto& [c, n] : per) CHECK(n >= 30);
  auto a = ids(val), b = ids(rest);
  for (const auto& id : a) CHECK(b.count(id) == 0);
}

TEST_CASE("validation allocation examples") {
  auto two = make_manifest({{"x", Voicing::voiced, 300}, {"y", Voicing::voiced, 300}});
  auto alloc = dataset::validation_allocation(two, 100, 10);
  REQUIRE(alloc.size() == 2);
  CHECK(alloc[0].second == 50);
  CHECK(alloc[1].second == 50);

  auto one = make_manifest({{"solo", Voicing::voiced, 80}});
  auto [val, rest] = dataset::stratified_validation(one, 30, 5, 1);
  CHECK(val.records.size() == 30);
  CHECK(rest.records.size() == 50);

  CHECK_THROWS_AS(dataset::validation_allocation(two, 601, 0), ValidationError);
  try {
    dataset::validation_allocation(two, 10, 6);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("x=300") != std::string::npos);
  }
}

TEST_CASE("validation allocation properties on random manifests") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    auto m = random_manifest(rng, 1000);
    std::map<std::string, std::size_t> sizes;
    for (const auto& r : m.records) ++sizes[r.corpus];
    if (sizes.empty()) continue;
    std::size_t n = m.records.size();
    std::size_t min_per = std::uniform_int_distribution<std::size_t>(0, 20)(rng);
    if (min_per * sizes.size() > n) continue;
    std::size_t total = std::uniform_int_distribution<std::size_t>(min_per * sizes.size(), n)(rng);
    auto alloc = dataset::validation_allocation(m, total, min_per);
    std::size_t sum = 0, base_total = 0;
    for (const auto& [c, k] : alloc) base_total += std::min(min_per, sizes[c]);
    const double extra = static_cast<double>(total - base_total);
    bool any_capped = false;
    for (const auto& [c, k] : alloc) {
      sum += k;
      CHECK(k >= std::min(min_per, sizes[c]));
      CHECK(k <= sizes[c]);
      if (k == sizes[c]) any_capped = true;
    }
    CHECK(sum == total);
    if (!any_capped) {
      // Proportional share of the slots left after the minima, within one.
      for (const auto& [c, k] : alloc) {
        double ideal = std::min(min_per, sizes[c]) + extra * static_cast<double>(sizes[c]) / static_cast<double>(n);
        CHECK(std::abs(static_cast<double>(k) - ideal) < 1.0);
      }
    }
    auto [val, rest] = dataset::stratified_validation(m, total, min_per, rep);
    std::map<std::string, std::size_t> got;
    for (const auto& r : val.records) ++got[r.corpus];
    for (const auto& [c, k] : alloc) CHECK(got[c] == k);
    CHECK(val.records.size() + rest.records.size() == n);
  }
}

// ---------------------------------------------------------------------------
// build_ladder

TEST_CASE("ladder over 44,628 training tokens") {
  auto m = make_manifest({{"a", Voicing::voiced, 22000}, {"a", Voicing::voiceless, 22628}});
  auto ladder = dataset::build_ladder(m, dataset::kDefaultLadderSizes, 17);
  auto index = m.index();
  CHECK(ladder.sizes == dataset::kDefaultLadderSizes);
  std::set<std::string> prev;
  for (std::size_t size : ladder.sizes) {
    const auto& sub = ladder.subsets.at(size);
    CHECK(sub.size() == size);
    std::set<std::string> cur(sub.begin(), sub.end());
    CHECK(cur.size() == size);
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    auto voiced = static_cast<double>(std::count_if(sub.begin(), sub.end(), [&](const std::string& id) {
      return m.records[index.at(id)].voicing == Voicing::voiced;
    }));
    CHECK(std::abs(voiced / static_cast<double>(size) - 22000.0 / 44628.0) <= 0.02);
    prev = std::move(cur);
  }
}

TEST_CASE("ladder edge cases") {
  auto m = make_manifest({{"a", Voicing::voiced, 30}, {"a", Voicing::voiceless, 20}});
  auto full = dataset::build_ladder(m, {50}, 1);
  CHECK(std::set<std::string>(full.subsets[50].begin(), full.subsets[50].end()) == ids(m));
  CHECK_THROWS_AS(dataset::build_ladder(m, {10, 51}, 1), ValidationError);
  CHECK_THROWS_AS(dataset::build_ladder(m, {10, 10}, 1), ValidationError);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto l = dataset::build_ladder(m, {5, 10, 40}, seed);
    std::set<std::string> s5(l.subsets[5].begin(), l.subsets[5].end());
    std::set<std::string> s10(l.subsets[10].begin(), l.subsets[10].end());
    CHECK(std::includes(s10.begin(), s10.end(), s5.begin(), s5.end()));
    CHECK(l.subsets[10] == dataset::build_ladder(m, {5, 10, 40}, seed).subsets[10]);
  }
}

TEST_CASE("select and labeled_only") {
  auto m = make_manifest({{"a", Voicing::voiced, 6}, {"b", Voicing::voiceless, 4, Burst::unknown}});
  auto s = dataset::select(m, {"t3", "t1"}, "picked");
  REQUIRE(s.records.size() == 2);
  CHECK(s.records[0].token_id == "t1");
  CHECK(s.provenance == "picked");
  CHECK_THROWS_AS(dataset::select(m, {"nope"}, ""), NotFound);
  CHECK(dataset::labeled_only(m).records.size() == 6);
}

TEST_CASE("operations use separate RNG streams") {
  // Same seed, different operation: draws should not line up.
  auto m = make_manifest({{"a", Voicing::voiced, 1000}, {"a", Voicing::voiceless, 1000}});
  auto bal = dataset::sample_balanced(m, 50, 9);
  auto ann = dataset::annotation_sample(m, 0.05, 1000, 9);
  CHECK(ids(bal) != ids(ann));
}
