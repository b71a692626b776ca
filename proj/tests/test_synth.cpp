#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "sarkit/errors.hpp"
#include "sarkit/synth.hpp"

using namespace sarkit;

namespace {

std::set<std::string> vocabulary(const std::vector<Conversation>& corpus) {
  std::set<std::string> out;
  for (const auto& c : corpus) {
    for (const auto* s : c.sentences()) out.insert(s->tokens.begin(), s->tokens.end());
  }
  return out;
}

std::array<double, kNumTags> tag_frequencies(const std::vector<Conversation>& corpus) {
  std::array<double, kNumTags> f{};
  double n = 0;
  for (const auto& c : corpus) {
    for (const auto* s : c.sentences()) {
      f[static_cast<std::size_t>(*s->act)] += 1;
      n += 1;
    }
  }
  for (auto& v : f) v /= n;
  return f;
}

}  // namespace

TEST_CASE("generated corpora are well formed and seeded") {
  const SynthProfile p;
  const SynthCorpora a = synth_generate(p, 12, 7);
  const SynthCorpora b = synth_generate(p, 12, 7);
  CHECK(a.source == b.source);
  CHECK(a.target == b.target);
  CHECK(a.source.size() == 12);
  CHECK(a.target.size() == 12);
  CHECK(synth_generate(p, 12, 8).source != a.source);
  CHECK(synth_generate(p, 3, 7, 5).target.size() == 5);
  for (const auto& c : a.source) {
    CHECK(c.domain == DomainLabel::source);
    CHECK(c.fully_labeled());
    CHECK(c.sentence_count() >= p.conversation_length.min);
    CHECK(c.sentence_count() <= p.conversation_length.max);
    for (const auto* s : c.sentences()) {
      CHECK(s->tokens.size() >= p.sentence_length.min);
      CHECK(s->tokens.size() <= p.sentence_length.max);
    }
  }
  CHECK(a.source[0].id == "src-1");
  CHECK(a.target[0].id == "tgt-1");
  CHECK(a.target[0].domain == DomainLabel::target);
}

TEST_CASE("substitution rate controls the vocabulary shift") {
  SynthProfile same;
  same.substitution_rate = 0.0;
  const SynthCorpora s = synth_generate(same, 200, 3);
  CHECK(vocabulary(s.source) == vocabulary(s.target));

  SynthProfile shifted = same;
  shifted.substitution_rate = 0.5;
  const SynthCorpora t = synth_generate(shifted, 200, 3);
  const auto vs = vocabulary(t.source);
  const auto vt = vocabulary(t.target);
  std::size_t shared = 0;
  for (const auto& w : vt) shared += vs.contains(w) ? 1 : 0;
  const double kept = static_cast<double>(shared) / static_cast<double>(vt.size());
  CHECK(kept > 0.35);
  CHECK(kept < 0.65);
}

TEST_CASE("tag frequencies follow the profile") {
  SynthProfile p;
  p.target_tag_distribution = TagDistribution{0.2, 0.2, 0.2, 0.2, 0.2};
  const SynthCorpora c = synth_generate(p, 1000, 12);
  const auto fs = tag_frequencies(c.source);
  const auto ft = tag_frequencies(c.target);
  for (std::size_t k = 0; k < kNumTags; ++k) {
    CAPTURE(k);
    CHECK(std::abs(fs[k] - p.tag_distribution[k]) < 0.02);
    CHECK(std::abs(ft[k] - 0.2) < 0.02);
  }
}

TEST_CASE("the transition matrix keeps the tag law stationary") {
  SynthProfile p;
  p.stickiness = 0.6;
  const TransitionMatrix T = p.transitions(p.tag_distribution);
  for (std::size_t j = 0; j < kNumTags; ++j) {
    double pj = 0.0;
    for (std::size_t i = 0; i < kNumTags; ++i) pj += p.tag_distribution[i] * T[i][j];
    CHECK(std::abs(pj - p.tag_distribution[j]) < 1e-12);
  }
  for (const auto& row : T) {
    double s = 0.0;
    for (double v : row) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("profile validation") {
  CHECK_THROWS_AS(parse_synth_profile({{"tag_distribution", {0.5, 0.5, 0.5, 0.0, 0.0}}}), ConfigError);
  CHECK_THROWS_AS(parse_synth_profile({{"tag_distribution", {-0.1, 0.5, 0.6, 0.0, 0.0}}}), ConfigError);
  CHECK_THROWS_AS(parse_synth_profile({{"colour", 3}}), ConfigError);
  CHECK_THROWS_AS(parse_synth_profile({{"substitution_rate", 1.5}}), ConfigError);
  CHECK_THROWS_AS(parse_synth_profile({{"sentence_length", {5, 2}}}), ConfigError);
  const SynthProfile ok = parse_synth_profile({{"cue_prob", 0.7}, {"sentence_length", {2, 4}}});
  CHECK(ok.cue_prob == 0.7);
  CHECK(ok.sentence_length.max == 4);
}
