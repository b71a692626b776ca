#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sarkit {

// Domain flag of a conversation; the discriminator predicts P(source).
enum class DomainLabel : int { target = 0, source = 1 };

std::string_view domain_name(DomainLabel d);

struct Sentence {
  std::string text;
  std::vector<std::string> tokens;
  // Tag code in 0..4, or nullopt for an unlabeled sentence.
  std::optional<int> act;

  bool operator==(const Sentence&) const = default;
};

struct Comment {
  std::string speaker;
  std::vector<Sentence> sentences;

  bool operator==(const Comment&) const = default;
};

// Ordered comments of ordered sentences; reading order is chronological.
struct Conversation {
  std::string id;
  DomainLabel domain = DomainLabel::target;
  std::vector<Comment> comments;

  std::size_t sentence_count() const;
  std::vector<const Sentence*> sentences() const;
  bool fully_labeled() const;
  bool any_labeled() const;

  bool operator==(const Conversation&) const = default;
};

struct CorpusStats {
  std::size_t conversations = 0;
  std::size_t comments = 0;
  std::size_t sentences = 0;
  std::size_t labeled_sentences = 0;
  std::size_t tokens = 0;
};

CorpusStats corpus_stats(std::span<const Conversation> corpus);

struct ParsedCorpus {
  std::vector<Conversation> conversations;
  CorpusStats stats;
  std::vector<std::string> warnings;
};

// Lowercases, maps URLs to <url> and digit runs to <number>, and splits
// punctuation off words. Runs of two or more punctuation characters (":)",
// "...", "?!") stay whole.
std::vector<std::string> preprocess_sentence(std::string_view raw);

// JSONL, one conversation per line. Sentences that preprocess to no tokens
// are dropped with a warning.
ParsedCorpus parse_corpus(std::istream& in);
ParsedCorpus parse_corpus(const std::filesystem::path& path);
Conversation parse_conversation(std::string_view json_line);

void write_corpus(std::ostream& out, std::span<const Conversation> corpus);
void write_corpus(const std::filesystem::path& path, std::span<const Conversation> corpus);
std::string serialize_conversation(const Conversation& conv);

// Consecutive chunks of at most max_len sentences. Chunk ids get a "#k"
// suffix when the conversation is split; comment boundaries are kept.
std::vector<Conversation> chunk_conversation(const Conversation& conv, std::size_t max_len = 100);
std::vector<Conversation> chunk_corpus(std::span<const Conversation> corpus,
                                       std::size_t max_len = 100);

struct Fold {
  std::vector<std::string> train, dev, test;
};

// Two-fold conversation-level cross-validation. A dev subset of
// round(dev_fraction * N) conversations is held out first and shared by
// both folds; the rest is split into equal halves (+-1) and fold 2 swaps the
// train and test halves of fold 1.
struct FoldPlan {
  std::vector<Fold> folds;
};

FoldPlan make_folds(std::span<const Conversation> corpus, std::uint64_t seed,
                    double dev_fraction = 0.1);

// Subset of `corpus` whose ids appear in `ids`, in the order of `ids`.
std::vector<Conversation> select_conversations(std::span<const Conversation> corpus,
                                               std::span<const std::string> ids);

}  // namespace sarkit
