#include <doctest.h>

#include <set>
#include <sstream>

#include "sarkit/corpus.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/random.hpp"
#include "sarkit/synth.hpp"

using namespace sarkit;

namespace {

using Tokens = std::vector<std::string>;

std::string join(const Tokens& t) {
  std::string s;
  for (const auto& x : t) s += (s.empty() ? "" : " ") + x;
  return s;
}

Conversation of_length(std::size_t n) {
  Conversation c;
  c.id = "long";
  Comment cm{"spk", {}};
  for (std::size_t i = 0; i < n; ++i) {
    cm.sentences.push_back({"s" + std::to_string(i), {"s" + std::to_string(i)}, 4});
    if (cm.sentences.size() == 7) {
      c.comments.push_back(cm);
      cm.sentences.clear();
    }
  }
  if (!cm.sentences.empty()) c.comments.push_back(cm);
  return c;
}

}  // namespace

TEST_CASE("preprocessing rules") {
  CHECK(preprocess_sentence("Visit http://x.co NOW") == Tokens{"visit", "<url>", "now"});
  CHECK(preprocess_sentence("room 42?") == Tokens{"room", "<number>", "?"});
  CHECK(preprocess_sentence("see www.example.org, ok") == Tokens{"see", "<url>", ",", "ok"});
  CHECK(preprocess_sentence("great :) really...") == Tokens{"great", ":)", "really", "..."});
  CHECK(preprocess_sentence("what?!") == Tokens{"what", "?!"});
  CHECK(preprocess_sentence("  ").empty());
}

TEST_CASE("preprocessing is idempotent") {
  const std::string alphabet = "aB3 .,?!:)(-/http://w.x wwwZ9'";
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const std::size_t len = rng.below(40);
    for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    const Tokens once = preprocess_sentence(s);
    CAPTURE(s);
    CHECK(preprocess_sentence(join(once)) == once);
  }
}

TEST_CASE("parsing") {
  std::istringstream one(
      R"({"id": "c1", "domain": "target", "comments": [{"speaker": "a", "sentences": [{"text": "Hi there", "act": "ST"}]}]})");
  const ParsedCorpus p = parse_corpus(one);
  REQUIRE(p.conversations.size() == 1);
  CHECK(p.stats.sentences == 1);
  CHECK(p.conversations[0].comments[0].sentences[0].act == 4);
  CHECK(p.conversations[0].comments[0].sentences[0].tokens == Tokens{"hi", "there"});

  std::istringstream unlabeled(
      R"({"id": "c", "domain": "source", "comments": [{"speaker": "a", "sentences": [{"text": "x", "act": null}]}]})");
  const auto u = parse_corpus(unlabeled).conversations.at(0);
  CHECK_FALSE(u.any_labeled());
  CHECK(u.domain == DomainLabel::source);

  std::istringstream bad_json("{\"id\": \"a\"}\n{oops\n");
  try {
    parse_corpus(bad_json);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
  std::istringstream second_line_bad(
      "{\"id\": \"a\", \"domain\": \"target\", \"comments\": [{\"speaker\": \"s\", \"sentences\": [{\"text\": \"x\", \"act\": \"ST\"}]}]}\n{oops\n");
  try {
    parse_corpus(second_line_bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream bad_act(
      R"({"id": "c", "domain": "target", "comments": [{"speaker": "a", "sentences": [{"text": "x", "act": "QQ"}]}]})");
  try {
    parse_corpus(bad_act);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("QQ") != std::string::npos);
  }

  std::istringstream with_empty(
      R"({"id": "c", "domain": "target", "comments": [{"speaker": "a", "sentences": [{"text": "  ", "act": "ST"}, {"text": "ok", "act": "R"}]}]})");
  const ParsedCorpus e = parse_corpus(with_empty);
  CHECK(e.conversations[0].sentence_count() == 1);
  CHECK(e.warnings.size() == 1);
}

TEST_CASE("serialization round trip") {
  SynthCorpora c = synth_generate(SynthProfile{}, 5, 3, 5);
  c.target[1].comments[0].sentences[0].act.reset();
  c.target[2].comments[0].sentences[0].text = "caf\xc3\xa9 \"quoted\" \\ back";
  c.target[2].comments[0].sentences[0].tokens = preprocess_sentence(c.target[2].comments[0].sentences[0].text);
  std::ostringstream out;
  write_corpus(out, c.target);
  const std::string text = out.str();
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.rfind("{\"id\":", 0) == 0);
  std::istringstream in(text);
  const ParsedCorpus back = parse_corpus(in);
  CHECK(back.conversations == c.target);
  std::ostringstream again;
  write_corpus(again, back.conversations);
  CHECK(again.str() == text);
}

TEST_CASE("chunking") {
  const auto short_conv = of_length(18);
  CHECK(chunk_conversation(short_conv, 100).size() == 1);
  CHECK(chunk_conversation(short_conv, 100)[0] == short_conv);

  const auto mrda_like = of_length(955);
  const auto chunks = chunk_conversation(mrda_like, 100);
  REQUIRE(chunks.size() == 10);
  for (std::size_t i = 0; i < 9; ++i) CHECK(chunks[i].sentence_count() == 100);
  CHECK(chunks[9].sentence_count() == 55);
  CHECK(chunks[0].id == "long#0");

  std::vector<std::string> flat;
  for (const auto& ch : chunks) {
    for (const auto* s : ch.sentences()) flat.push_back(s->text);
  }
  std::vector<std::string> original;
  for (const auto* s : mrda_like.sentences()) original.push_back(s->text);
  CHECK(flat == original);

  CHECK(chunk_conversation(of_length(6), 1).size() == 6);
  CHECK_THROWS_AS(chunk_conversation(short_conv, 0), ContractError);
}

TEST_CASE("two-fold plan") {
  const SynthCorpora c = synth_generate(SynthProfile{}, 44, 5, 1);
  const FoldPlan plan = make_folds(c.source, 3, 0.1);
  REQUIRE(plan.folds.size() == 2);
  CHECK(plan.folds[0].dev.size() == 4);
  CHECK(plan.folds[0].test.size() == 20);
  CHECK(plan.folds[1].test.size() == 20);
  CHECK(plan.folds[0].dev == plan.folds[1].dev);
  CHECK(plan.folds[0].train == plan.folds[1].test);
  CHECK(plan.folds[1].train == plan.folds[0].test);

  std::multiset<std::string> tested;
  for (const auto& f : plan.folds) {
    const std::set<std::string> dev(f.dev.begin(), f.dev.end());
    for (const auto& id : f.test) {
      tested.insert(id);
      CHECK_FALSE(dev.contains(id));
    }
  }
  for (const auto& conv : c.source) {
    const bool in_dev = std::count(plan.folds[0].dev.begin(), plan.folds[0].dev.end(), conv.id) > 0;
    CHECK(tested.count(conv.id) == (in_dev ? 0u : 1u));
  }
  const auto picked = select_conversations(c.source, plan.folds[0].test);
  CHECK(picked.size() == 20);
  CHECK(picked[0].id == plan.folds[0].test[0]);
  CHECK_THROWS_AS(make_folds(std::span(c.source).first(1), 3), DataError);
}
