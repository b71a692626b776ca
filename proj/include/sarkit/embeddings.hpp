#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sarkit/autodiff.hpp"

namespace sarkit {

struct Conversation;

// Token <-> index map. Indices 0..3 are reserved for <unk>, <pad>, <number>
// and <url>; the remaining entries are ordered by descending corpus
// frequency with ties broken lexicographically.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static constexpr int kNumber = 2;
  static constexpr int kUrl = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  // Rebuilds from an index-ordered token list (checkpoint loading).
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  // Index of `token`, or <unk> when absent.
  int index(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int index) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::vector<int> encode(std::span<const std::string> tokens) const;

  int add(const std::string& token);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocab(std::span<const Conversation> corpus, std::size_t min_count = 1);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t vocab_size, std::size_t dim, bool trainable = true);

  std::size_t dim() const noexcept { return matrix_.value.cols(); }
  std::size_t rows() const noexcept { return matrix_.value.rows(); }
  bool trainable() const noexcept { return matrix_.trainable; }
  void set_trainable(bool trainable) noexcept { matrix_.trainable = trainable; }

  Parameter& parameter() noexcept { return matrix_; }
  const Parameter& parameter() const noexcept { return matrix_; }

 private:
  Parameter matrix_;
};

struct PretrainedLoad {
  EmbeddingTable table;
  // Fraction of vocabulary rows (reserved tokens included) found in the file.
  double coverage = 0.0;
};

// Random U(-0.05, 0.05) rows. Each row is drawn from a stream keyed by its
// token, so a token gets the same vector whatever else is in the vocabulary.
Tensor random_embedding_rows(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);

// Rows for tokens present in the vector file are copied verbatim; every other
// row comes from random_embedding_rows.
PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t dim, std::uint64_t seed);
PretrainedLoad load_pretrained(std::istream& in, const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed);

// Rows of the table for the given indices, [n x D]; gradients scatter back
// into the touched rows only.
Var lookup(Tape& tape, EmbeddingTable& table, std::span<const int> indices);

}  // namespace sarkit
