#include "sarkit/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "sarkit/corpus.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/init.hpp"

namespace sarkit {

namespace {

constexpr const char* kReservedTokens[] = {"<unk>", "<pad>", "<number>", "<url>"};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    const std::size_t begin = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    if (pos > begin) fields.push_back(line.substr(begin, pos - begin));
  }
  return fields;
}

bool is_integer(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) add(t);
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved) throw FormatError("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (tokens[i] != kReservedTokens[i]) {
      throw FormatError("vocabulary slot " + std::to_string(i) + " must hold " +
                        kReservedTokens[i] + ", found " + tokens[i]);
    }
  }
  for (const auto& t : tokens) {
    if (index_.contains(t)) throw FormatError("duplicate vocabulary entry " + t);
    add(t);
  }
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) {
    throw ContractError("vocabulary index " + std::to_string(index) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

Vocabulary build_vocab(std::span<const Conversation> corpus, std::size_t min_count) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  if (min_count == 0) throw ConfigError("build_vocab: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& conv : corpus) {
    for (const auto& comment : conv.comments) {
      for (const auto& s : comment.sentences) {
        for (const auto& t : s.tokens) ++counts[t];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) {
    if (count >= min_count) vocab.add(token);
  }
  return vocab;
}

EmbeddingTable::EmbeddingTable(std::size_t vocab_size, std::size_t dim, bool trainable)
    : matrix_("embeddings", Tensor({vocab_size, dim}), trainable) {}

Tensor random_embedding_rows(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  Tensor m({vocab.size(), dim});
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    Rng rng(derive_seed(seed, hash_tag("embedding"), hash_tag(vocab.tokens()[r])));
    const Tensor row = uniform_init({1, dim}, rng);
    std::copy(row.values().begin(), row.values().end(), m.values().begin() + r * dim);
  }
  return m;
}

PretrainedLoad load_pretrained(std::istream& in, const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed) {
  PretrainedLoad result;
  result.table = EmbeddingTable(vocab.size(), dim);
  Tensor& m = result.table.parameter().value;
  m = random_embedding_rows(vocab, dim, seed);

  std::vector<bool> covered(vocab.size(), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 && is_integer(fields[0]) && is_integer(fields[1])) {
      continue;
    }
    if (fields.size() - 1 != dim) {
      throw FormatError("vector file line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " +
                        std::to_string(fields.size() - 1));
    }
    std::vector<double> row(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const auto f = fields[d + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), row[d]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw FormatError("vector file line " + std::to_string(line_no) +
                          ": malformed number \"" + std::string(f) + "\"");
      }
    }
    if (!vocab.contains(fields[0])) continue;
    const auto idx = static_cast<std::size_t>(vocab.index(fields[0]));
    if (covered[idx]) continue;
    covered[idx] = true;
    std::copy(row.begin(), row.end(), m.values().begin() + idx * dim);
  }
  const auto hits = std::count(covered.begin(), covered.end(), true);
  result.coverage = static_cast<double>(hits) / static_cast<double>(vocab.size());
  return result;
}

PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t dim, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open vector file " + path.string());
  return load_pretrained(in, vocab, dim, seed);
}

Var lookup(Tape& tape, EmbeddingTable& table, std::span<const int> indices) {
  return lookup(tape, table.parameter(), indices);
}

}  // namespace sarkit
