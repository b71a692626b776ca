#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sarkit/corpus.hpp"
#include "sarkit/output_layers.hpp"

namespace sarkit {

using TagDistribution = std::array<double, kNumTags>;
using TransitionMatrix = std::array<TagDistribution, kNumTags>;

struct SizeRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

// Recipe for a pair of synthetic corpora. Tags follow a Markov chain whose
// stationary law is the tag distribution; each token is a class cue word
// with probability cue_prob and a shared filler word otherwise. The target
// corpus swaps every lexicon word for a fresh pseudo-word with probability
// substitution_rate (decided once per word), so both domains share label
// semantics but differ in surface vocabulary.
struct SynthProfile {
  TagDistribution tag_distribution{0.0771, 0.024, 0.1471, 0.0957, 0.6562};
  std::optional<TagDistribution> target_tag_distribution;
  // Probability of repeating the previous tag; the remaining mass is drawn
  // from the tag distribution. Ignored when `transition` is given.
  double stickiness = 0.3;
  std::optional<TransitionMatrix> transition;
  std::size_t vocab_per_class = 30;
  std::size_t shared_vocab = 150;
  double cue_prob = 0.4;
  SizeRange sentence_length{3, 10};
  SizeRange comment_length{1, 3};       // sentences per comment
  SizeRange conversation_length{6, 20};  // sentences per conversation
  std::size_t speakers = 4;
  double substitution_rate = 0.0;

  void validate() const;
  // Effective tag transition matrix A[from][to] for a domain whose tag law is pi.
  TransitionMatrix transitions(const TagDistribution& pi) const;
};

SynthProfile parse_synth_profile(const nlohmann::json& doc);
SynthProfile load_synth_profile(const std::filesystem::path& path);

struct SynthCorpora {
  std::vector<Conversation> source;
  std::vector<Conversation> target;
};

// n_target defaults to n_source.
SynthCorpora synth_generate(const SynthProfile& profile, std::size_t n_source, std::uint64_t seed,
                            std::optional<std::size_t> n_target = std::nullopt);

}  // namespace sarkit
