#include "sarkit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "sarkit/errors.hpp"
#include "sarkit/output_layers.hpp"
#include "sarkit/random.hpp"

namespace sarkit {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kNumberToken = "<number>";
constexpr std::string_view kUrlToken = "<url>";

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || c >= 0x80; }
bool is_space(unsigned char c) { return std::isspace(c) != 0; }

std::string_view placeholder_at(std::string_view s, std::size_t pos) {
  for (std::string_view p : {kNumberToken, kUrlToken}) {
    if (s.substr(pos, p.size()) == p) return p;
  }
  return {};
}

bool looks_like_url(std::string_view chunk) {
  static const std::regex scheme("^[a-z][a-z0-9+.\\-]*://.+");
  if (chunk.starts_with("www.") && chunk.size() > 4) return true;
  return std::regex_match(chunk.begin(), chunk.end(), scheme);
}

bool is_trailing_punct(char c) {
  return std::string_view(".,!?;:)]}\"'").find(c) != std::string_view::npos;
}

bool is_leading_punct(char c) { return std::string_view("([{\"'").find(c) != std::string_view::npos; }

void tokenize_plain(std::string_view s, std::vector<std::string>& out) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto c = static_cast<unsigned char>(s[pos]);
    if (auto ph = placeholder_at(s, pos); !ph.empty()) {
      out.emplace_back(ph);
      pos += ph.size();
    } else if (is_digit(c)) {
      while (pos < s.size() && is_digit(static_cast<unsigned char>(s[pos]))) ++pos;
      out.emplace_back(kNumberToken);
    } else if (is_letter(c)) {
      const std::size_t begin = pos;
      while (pos < s.size()) {
        const auto ch = static_cast<unsigned char>(s[pos]);
        if (is_letter(ch)) {
          ++pos;
        } else if (ch == '\'' && pos + 1 < s.size() &&
                   is_letter(static_cast<unsigned char>(s[pos + 1]))) {
          pos += 2;
        } else {
          break;
        }
      }
      out.emplace_back(s.substr(begin, pos - begin));
    } else {
      const std::size_t begin = pos;
      while (pos < s.size()) {
        const auto ch = static_cast<unsigned char>(s[pos]);
        if (is_digit(ch) || is_letter(ch) || !placeholder_at(s, pos).empty()) break;
        ++pos;
      }
      // Contiguous punctuation is one token, so ":)" and "?!" survive intact.
      out.emplace_back(s.substr(begin, pos - begin));
    }
  }
}

std::string read_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw FormatError("line " + std::to_string(line) + ": missing string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

const json& read_array(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) {
    throw FormatError("line " + std::to_string(line) + ": missing array field \"" + key + "\"");
  }
  return *it;
}

Conversation conversation_from_json(const json& j, std::size_t line,
                                    std::vector<std::string>* warnings) {
  if (!j.is_object()) throw FormatError("line " + std::to_string(line) + ": expected an object");
  Conversation conv;
  conv.id = read_string(j, "id", line);
  const std::string domain = read_string(j, "domain", line);
  if (domain == "source") {
    conv.domain = DomainLabel::source;
  } else if (domain == "target") {
    conv.domain = DomainLabel::target;
  } else {
    throw DataError("line " + std::to_string(line) + ": unknown domain \"" + domain + "\"");
  }
  for (const json& jc : read_array(j, "comments", line)) {
    if (!jc.is_object()) throw FormatError("line " + std::to_string(line) + ": bad comment");
    Comment comment;
    comment.speaker = read_string(jc, "speaker", line);
    for (const json& js : read_array(jc, "sentences", line)) {
      if (!js.is_object()) throw FormatError("line " + std::to_string(line) + ": bad sentence");
      Sentence s;
      s.text = read_string(js, "text", line);
      auto act = js.find("act");
      if (act != js.end() && !act->is_null()) {
        if (!act->is_string()) {
          throw DataError("line " + std::to_string(line) + ": act must be a string or null");
        }
        const auto name = act->get<std::string>();
        const auto code = parse_tag(name);
        if (!code) {
          throw DataError("line " + std::to_string(line) + ": unknown act \"" + name + "\"");
        }
        s.act = *code;
      }
      s.tokens = preprocess_sentence(s.text);
      if (s.tokens.empty()) {
        if (warnings != nullptr) {
          warnings->push_back("line " + std::to_string(line) + ": dropped empty sentence in " +
                              conv.id);
        }
        continue;
      }
      comment.sentences.push_back(std::move(s));
    }
    if (!comment.sentences.empty()) conv.comments.push_back(std::move(comment));
  }
  if (conv.sentence_count() == 0) {
    throw DataError("line " + std::to_string(line) + ": conversation " + conv.id +
                    " has no non-empty sentence");
  }
  return conv;
}

}  // namespace

std::string_view domain_name(DomainLabel d) {
  return d == DomainLabel::source ? "source" : "target";
}

std::size_t Conversation::sentence_count() const {
  std::size_t n = 0;
  for (const auto& c : comments) n += c.sentences.size();
  return n;
}

std::vector<const Sentence*> Conversation::sentences() const {
  std::vector<const Sentence*> out;
  for (const auto& c : comments) {
    for (const auto& s : c.sentences) out.push_back(&s);
  }
  return out;
}

bool Conversation::fully_labeled() const {
  for (const auto& c : comments) {
    for (const auto& s : c.sentences) {
      if (!s.act) return false;
    }
  }
  return true;
}

bool Conversation::any_labeled() const {
  for (const auto& c : comments) {
    for (const auto& s : c.sentences) {
      if (s.act) return true;
    }
  }
  return false;
}

CorpusStats corpus_stats(std::span<const Conversation> corpus) {
  CorpusStats st;
  st.conversations = corpus.size();
  for (const auto& conv : corpus) {
    st.comments += conv.comments.size();
    for (const auto& c : conv.comments) {
      st.sentences += c.sentences.size();
      for (const auto& s : c.sentences) {
        st.tokens += s.tokens.size();
        if (s.act) ++st.labeled_sentences;
      }
    }
  }
  return st;
}

std::vector<std::string> preprocess_sentence(std::string_view raw) {
  std::string lowered(raw);
  for (char& c : lowered) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  std::vector<std::string> out;
  std::size_t pos = 0;
  const std::string_view text = lowered;
  while (pos < text.size()) {
    while (pos < text.size() && is_space(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::size_t begin = pos;
    while (pos < text.size() && !is_space(static_cast<unsigned char>(text[pos]))) ++pos;
    std::string_view chunk = text.substr(begin, pos - begin);
    if (chunk.empty()) continue;

    std::size_t lead = 0;
    while (lead < chunk.size() && is_leading_punct(chunk[lead])) ++lead;
    std::string_view body = chunk.substr(lead);
    if (looks_like_url(body)) {
      tokenize_plain(chunk.substr(0, lead), out);
      std::size_t end = body.size();
      while (end > 0 && is_trailing_punct(body[end - 1])) --end;
      out.emplace_back(kUrlToken);
      tokenize_plain(body.substr(end), out);
    } else {
      tokenize_plain(chunk, out);
    }
  }
  return out;
}

Conversation parse_conversation(std::string_view json_line) {
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("line 1: malformed JSON: ") + e.what());
  }
  return conversation_from_json(j, 1, nullptr);
}

ParsedCorpus parse_corpus(std::istream& in) {
  ParsedCorpus result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    result.conversations.push_back(conversation_from_json(j, line_no, &result.warnings));
  }
  result.stats = corpus_stats(result.conversations);
  return result;
}

ParsedCorpus parse_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

std::string serialize_conversation(const Conversation& conv) {
  ordered_json j;
  j["id"] = conv.id;
  j["domain"] = std::string(domain_name(conv.domain));
  ordered_json comments = ordered_json::array();
  for (const auto& c : conv.comments) {
    ordered_json jc;
    jc["speaker"] = c.speaker;
    ordered_json sentences = ordered_json::array();
    for (const auto& s : c.sentences) {
      ordered_json js;
      js["text"] = s.text;
      if (s.act) {
        js["act"] = std::string(tag_name(*s.act));
      } else {
        js["act"] = nullptr;
      }
      sentences.push_back(std::move(js));
    }
    jc["sentences"] = std::move(sentences);
    comments.push_back(std::move(jc));
  }
  j["comments"] = std::move(comments);
  try {
    return j.dump();
  } catch (const ordered_json::type_error& e) {
    throw FormatError("conversation " + conv.id + " is not valid UTF-8: " + e.what());
  }
}

void write_corpus(std::ostream& out, std::span<const Conversation> corpus) {
  for (const auto& conv : corpus) out << serialize_conversation(conv) << '\n';
}

void write_corpus(const std::filesystem::path& path, std::span<const Conversation> corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
}

std::vector<Conversation> chunk_conversation(const Conversation& conv, std::size_t max_len) {
  if (max_len == 0) throw ContractError("chunk_conversation: max_len must be >= 1");
  const std::size_t total = conv.sentence_count();
  if (total <= max_len) return {conv};
  std::vector<Conversation> chunks;
  Conversation current;
  std::size_t in_chunk = 0;
  auto start_chunk = [&]() {
    current = Conversation{};
    current.id = conv.id + "#" + std::to_string(chunks.size());
    current.domain = conv.domain;
    in_chunk = 0;
  };
  start_chunk();
  for (const auto& comment : conv.comments) {
    Comment part{comment.speaker, {}};
    for (const auto& s : comment.sentences) {
      if (in_chunk == max_len) {
        if (!part.sentences.empty()) current.comments.push_back(std::move(part));
        part = Comment{comment.speaker, {}};
        chunks.push_back(std::move(current));
        start_chunk();
      }
      part.sentences.push_back(s);
      ++in_chunk;
    }
    if (!part.sentences.empty()) current.comments.push_back(std::move(part));
  }
  if (in_chunk > 0) chunks.push_back(std::move(current));
  return chunks;
}

std::vector<Conversation> chunk_corpus(std::span<const Conversation> corpus, std::size_t max_len) {
  std::vector<Conversation> out;
  for (const auto& conv : corpus) {
    auto parts = chunk_conversation(conv, max_len);
    std::move(parts.begin(), parts.end(), std::back_inserter(out));
  }
  return out;
}

FoldPlan make_folds(std::span<const Conversation> corpus, std::uint64_t seed,
                    double dev_fraction) {
  if (corpus.size() < 2) {
    throw DataError("make_folds: need at least 2 conversations, got " +
                    std::to_string(corpus.size()));
  }
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) {
    throw ConfigError("make_folds: dev_fraction must lie in [0, 1)");
  }
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& c : corpus) {
    if (!seen.insert(c.id).second) throw DataError("make_folds: duplicate conversation id " + c.id);
    ids.push_back(c.id);
  }
  Rng rng(derive_seed(seed, hash_tag("folds")));
  rng.shuffle(ids);
  const auto n_dev =
      static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(ids.size())));
  if (ids.size() - n_dev < 2) {
    throw DataError("make_folds: too few conversations left after the dev split");
  }
  const std::size_t rest = ids.size() - n_dev;
  const std::size_t n_train = (rest + 1) / 2;
  Fold first;
  first.dev.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_dev));
  first.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_dev),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_dev + n_train));
  first.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_dev + n_train), ids.end());
  Fold second{first.test, first.dev, first.train};
  return FoldPlan{{std::move(first), std::move(second)}};
}

std::vector<Conversation> select_conversations(std::span<const Conversation> corpus,
                                               std::span<const std::string> ids) {
  std::unordered_map<std::string, const Conversation*> by_id;
  for (const auto& c : corpus) by_id.emplace(c.id, &c);
  std::vector<Conversation> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown conversation id " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace sarkit
