#include "sarkit/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <unordered_set>

#include "sarkit/errors.hpp"

namespace sarkit {

namespace {

constexpr double kSumTolerance = 1e-3;

const std::set<std::string, std::less<>> kProfileKeys{
    "tag_distribution", "target_tag_distribution", "stickiness",      "transition",
    "vocab_per_class",  "shared_vocab",            "cue_prob",        "sentence_length",
    "comment_length",   "conversation_length",     "speakers",        "substitution_rate"};

void check_distribution(const TagDistribution& p, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(what + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw ConfigError(what + " sums to " + std::to_string(sum) + ", expected 1");
  }
}

void check_range(const SizeRange& r, const std::string& what) {
  if (r.min == 0 || r.min > r.max) {
    throw ConfigError(what + " must satisfy 1 <= min <= max");
  }
}

TagDistribution normalized(TagDistribution p) {
  double sum = 0.0;
  for (double v : p) sum += v;
  for (double& v : p) v /= sum;
  return p;
}

TagDistribution read_distribution(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != kNumTags) {
    throw ConfigError(what + " must be an array of " + std::to_string(kNumTags) + " numbers");
  }
  TagDistribution p{};
  for (std::size_t k = 0; k < kNumTags; ++k) {
    if (!j[k].is_number()) throw ConfigError(what + " must contain numbers");
    p[k] = j[k].get<double>();
  }
  return p;
}

bool is_count(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

SizeRange read_range(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !is_count(j[0]) || !is_count(j[1])) {
    throw ConfigError(what + " must be [min, max] with non-negative integers");
  }
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

double read_number(const nlohmann::json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + " must be a number");
  return j.get<double>();
}

std::size_t read_count(const nlohmann::json& j, const std::string& what) {
  if (!is_count(j)) throw ConfigError(what + " must be a non-negative integer");
  return j.get<std::size_t>();
}

// Pronounceable letters-only words from consonant-vowel syllables.
class WordMaker {
 public:
  explicit WordMaker(std::uint64_t seed) : rng_(seed) {}

  std::string fresh() {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    for (;;) {
      std::string w;
      const std::size_t syllables = 2 + rng_.below(2);
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kConsonants[rng_.below(kConsonants.size())];
        w += kVowels[rng_.below(kVowels.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng rng_;
  std::unordered_set<std::string> used_;
};

struct Lexicon {
  std::vector<std::vector<std::string>> cue;  // per class
  std::vector<std::string> shared;
};

std::size_t draw_size(Rng& rng, const SizeRange& r) { return r.min + rng.below(r.max - r.min + 1); }

std::vector<double> as_vector(const TagDistribution& p) { return {p.begin(), p.end()}; }

Conversation generate_conversation(const SynthProfile& profile, const Lexicon& lex,
                                   const TagDistribution& pi, const TransitionMatrix& trans,
                                   DomainLabel domain, const std::string& id, Rng& rng) {
  Conversation conv;
  conv.id = id;
  conv.domain = domain;
  const std::size_t n = draw_size(rng, profile.conversation_length);
  std::size_t tag = rng.categorical(as_vector(pi));
  std::size_t made = 0;
  while (made < n) {
    Comment comment;
    comment.speaker = "user" + std::to_string(1 + rng.below(profile.speakers));
    const std::size_t m = std::min(draw_size(rng, profile.comment_length), n - made);
    for (std::size_t i = 0; i < m; ++i) {
      if (made > 0) tag = rng.categorical(as_vector(trans[tag]));
      Sentence s;
      s.act = static_cast<int>(tag);
      const std::size_t len = draw_size(rng, profile.sentence_length);
      for (std::size_t t = 0; t < len; ++t) {
        const bool cue = lex.shared.empty() || rng.bernoulli(profile.cue_prob);
        const auto& pool = cue ? lex.cue[tag] : lex.shared;
        s.tokens.push_back(pool[rng.below(pool.size())]);
      }
      for (const auto& t : s.tokens) s.text += (s.text.empty() ? "" : " ") + t;
      comment.sentences.push_back(std::move(s));
      ++made;
    }
    conv.comments.push_back(std::move(comment));
  }
  return conv;
}

}  // namespace

void SynthProfile::validate() const {
  check_distribution(tag_distribution, "tag_distribution");
  if (target_tag_distribution) check_distribution(*target_tag_distribution, "target_tag_distribution");
  if (!(stickiness >= 0.0 && stickiness < 1.0)) throw ConfigError("stickiness must lie in [0, 1)");
  if (transition) {
    for (std::size_t k = 0; k < kNumTags; ++k) {
      check_distribution((*transition)[k], "transition row " + std::to_string(k));
    }
  }
  if (vocab_per_class == 0) throw ConfigError("vocab_per_class must be >= 1");
  if (!(cue_prob >= 0.0 && cue_prob <= 1.0)) throw ConfigError("cue_prob must lie in [0, 1]");
  if (cue_prob < 1.0 && shared_vocab == 0) throw ConfigError("cue_prob < 1 needs shared_vocab >= 1");
  if (!(substitution_rate >= 0.0 && substitution_rate <= 1.0)) {
    throw ConfigError("substitution_rate must lie in [0, 1]");
  }
  if (speakers == 0) throw ConfigError("speakers must be >= 1");
  check_range(sentence_length, "sentence_length");
  check_range(comment_length, "comment_length");
  check_range(conversation_length, "conversation_length");
}

TransitionMatrix SynthProfile::transitions(const TagDistribution& pi) const {
  if (transition) {
    TransitionMatrix t = *transition;
    for (auto& row : t) row = normalized(row);
    return t;
  }
  const TagDistribution p = normalized(pi);
  TransitionMatrix t{};
  for (std::size_t i = 0; i < kNumTags; ++i) {
    for (std::size_t j = 0; j < kNumTags; ++j) {
      t[i][j] = (1.0 - stickiness) * p[j] + (i == j ? stickiness : 0.0);
    }
  }
  return t;
}

SynthProfile parse_synth_profile(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("profile must be a JSON object");
  for (const auto& item : doc.items()) {
    if (!kProfileKeys.contains(item.key())) throw ConfigError("unknown profile key \"" + item.key() + "\"");
  }
  SynthProfile p;
  if (doc.contains("tag_distribution")) {
    p.tag_distribution = read_distribution(doc["tag_distribution"], "tag_distribution");
  }
  if (doc.contains("target_tag_distribution") && !doc["target_tag_distribution"].is_null()) {
    p.target_tag_distribution =
        read_distribution(doc["target_tag_distribution"], "target_tag_distribution");
  }
  if (doc.contains("stickiness")) p.stickiness = read_number(doc["stickiness"], "stickiness");
  if (doc.contains("transition") && !doc["transition"].is_null()) {
    const auto& rows = doc["transition"];
    if (!rows.is_array() || rows.size() != kNumTags) {
      throw ConfigError("transition must be a 5 x 5 array");
    }
    TransitionMatrix t{};
    for (std::size_t k = 0; k < kNumTags; ++k) {
      t[k] = read_distribution(rows[k], "transition row " + std::to_string(k));
    }
    p.transition = t;
  }
  if (doc.contains("vocab_per_class")) p.vocab_per_class = read_count(doc["vocab_per_class"], "vocab_per_class");
  if (doc.contains("shared_vocab")) p.shared_vocab = read_count(doc["shared_vocab"], "shared_vocab");
  if (doc.contains("cue_prob")) p.cue_prob = read_number(doc["cue_prob"], "cue_prob");
  if (doc.contains("sentence_length")) p.sentence_length = read_range(doc["sentence_length"], "sentence_length");
  if (doc.contains("comment_length")) p.comment_length = read_range(doc["comment_length"], "comment_length");
  if (doc.contains("conversation_length")) {
    p.conversation_length = read_range(doc["conversation_length"], "conversation_length");
  }
  if (doc.contains("speakers")) p.speakers = read_count(doc["speakers"], "speakers");
  if (doc.contains("substitution_rate")) {
    p.substitution_rate = read_number(doc["substitution_rate"], "substitution_rate");
  }
  p.validate();
  return p;
}

SynthProfile load_synth_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile " + path.string());
  try {
    return parse_synth_profile(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("profile " + path.string() + " is not valid JSON: " + e.what());
  }
}

SynthCorpora synth_generate(const SynthProfile& profile, std::size_t n_source, std::uint64_t seed,
                            std::optional<std::size_t> n_target) {
  profile.validate();
  WordMaker words(derive_seed(seed, hash_tag("synth:words")));
  Lexicon source_lex;
  source_lex.cue.resize(kNumTags);
  for (auto& cls : source_lex.cue) {
    for (std::size_t i = 0; i < profile.vocab_per_class; ++i) cls.push_back(words.fresh());
  }
  for (std::size_t i = 0; i < profile.shared_vocab; ++i) source_lex.shared.push_back(words.fresh());

  Rng sub_rng(derive_seed(seed, hash_tag("synth:substitution")));
  const auto substitute = [&](const std::vector<std::string>& in) {
    std::vector<std::string> out;
    for (const auto& w : in) out.push_back(sub_rng.bernoulli(profile.substitution_rate) ? words.fresh() : w);
    return out;
  };
  Lexicon target_lex;
  for (const auto& cls : source_lex.cue) target_lex.cue.push_back(substitute(cls));
  target_lex.shared = substitute(source_lex.shared);

  const TagDistribution source_pi = normalized(profile.tag_distribution);
  const TagDistribution target_pi =
      normalized(profile.target_tag_distribution.value_or(profile.tag_distribution));

  SynthCorpora out;
  Rng rs(derive_seed(seed, hash_tag("synth:source")));
  const auto ts = profile.transitions(source_pi);
  for (std::size_t i = 0; i < n_source; ++i) {
    out.source.push_back(generate_conversation(profile, source_lex, source_pi, ts, DomainLabel::source,
                                               "src-" + std::to_string(i + 1), rs));
  }
  Rng rt(derive_seed(seed, hash_tag("synth:target")));
  const auto tt = profile.transitions(target_pi);
  for (std::size_t i = 0; i < n_target.value_or(n_source); ++i) {
    out.target.push_back(generate_conversation(profile, target_lex, target_pi, tt, DomainLabel::target,
                                               "tgt-" + std::to_string(i + 1), rt));
  }
  return out;
}

}  // namespace sarkit
