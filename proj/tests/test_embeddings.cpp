#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "sarkit/corpus.hpp"
#include "sarkit/embeddings.hpp"
#include "sarkit/errors.hpp"

using namespace sarkit;

namespace {

Conversation one_sentence(const std::string& text) {
  Conversation c;
  c.id = "c";
  c.comments.push_back({"s", {{text, preprocess_sentence(text), 4}}});
  return c;
}

}  // namespace

TEST_CASE("vocabulary construction") {
  const std::vector<Conversation> corpus{one_sentence("a a b")};
  const Vocabulary v = build_vocab(corpus);
  REQUIRE(v.size() == Vocabulary::kReserved + 2);
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v.token(Vocabulary::kNumber) == "<number>");
  CHECK(v.token(Vocabulary::kUrl) == "<url>");
  CHECK(v.index("a") == 4);
  CHECK(v.index("b") == 5);
  CHECK(v.index("zzz") == Vocabulary::kUnk);

  const Vocabulary thresholded = build_vocab(corpus, 2);
  CHECK(thresholded.contains("a"));
  CHECK(thresholded.index("b") == Vocabulary::kUnk);

  CHECK(build_vocab(corpus) == v);
  CHECK_THROWS_AS(build_vocab(std::vector<Conversation>{}), DataError);
}

TEST_CASE("frequency ties are broken lexicographically") {
  const std::vector<Conversation> corpus{one_sentence("zeta alpha mid mid")};
  const Vocabulary v = build_vocab(corpus);
  CHECK(v.token(4) == "mid");
  CHECK(v.token(5) == "alpha");
  CHECK(v.token(6) == "zeta");
}

TEST_CASE("random rows depend only on token and seed") {
  const Vocabulary small = build_vocab(std::vector<Conversation>{one_sentence("x y")});
  const Vocabulary large = build_vocab(std::vector<Conversation>{one_sentence("q x x y r")});
  const Tensor a = random_embedding_rows(small, 6, 3);
  const Tensor b = random_embedding_rows(large, 6, 3);
  for (const char* tok : {"x", "y", "<unk>"}) {
    const auto ra = static_cast<std::size_t>(small.index(tok));
    const auto rb = static_cast<std::size_t>(large.index(tok));
    for (std::size_t c = 0; c < 6; ++c) CHECK(a.at(ra, c) == b.at(rb, c));
  }
  for (double v : a.values()) CHECK(std::abs(v) <= 0.05);
  CHECK(random_embedding_rows(small, 6, 4) != a);
}

TEST_CASE("pretrained vectors") {
  const Vocabulary v = build_vocab(std::vector<Conversation>{one_sentence("cat dog")});
  std::ostringstream file;
  for (const auto& tok : v.tokens()) file << tok << " 0.5 -1.25 3\n";
  {
    std::istringstream in(file.str());
    const PretrainedLoad full = load_pretrained(in, v, 3, 1);
    CHECK(full.coverage == 1.0);
    const Tensor& m = full.table.parameter().value;
    for (std::size_t r = 0; r < v.size(); ++r) {
      CHECK(m.at(r, 0) == 0.5);
      CHECK(m.at(r, 1) == -1.25);
      CHECK(m.at(r, 2) == 3.0);
    }
  }
  {
    std::istringstream in("");
    const PretrainedLoad none = load_pretrained(in, v, 3, 1);
    CHECK(none.coverage == 0.0);
    for (double x : none.table.parameter().value.values()) CHECK(std::abs(x) <= 0.05);
  }
  {
    std::istringstream in("2 3\ncat 1 2 3\n");
    const PretrainedLoad header = load_pretrained(in, v, 3, 1);
    CHECK(header.coverage == doctest::Approx(1.0 / static_cast<double>(v.size())));
  }
  {
    std::istringstream in("cat 1 2 3\ndog 1 2\n");
    try {
      load_pretrained(in, v, 3, 1);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  {
    std::istringstream in("cat 1 x 3\n");
    CHECK_THROWS_AS(load_pretrained(in, v, 3, 1), FormatError);
  }
}

TEST_CASE("lookup through an embedding table") {
  EmbeddingTable table(5, 3);
  Rng rng(2);
  table.parameter().value = oracle::random_tensor({5, 3}, rng);
  Tape tape;
  const std::vector<int> same{2, 2};
  const Var rows = lookup(tape, table, same);
  for (std::size_t c = 0; c < 3; ++c) CHECK(rows.value().at(0, c) == rows.value().at(1, c));

  const std::vector<int> idx{4, 0, 4};
  const Tensor w = oracle::random_tensor({3, 3}, rng);
  Parameter* p = &table.parameter();
  const double err = oracle::parameter_gradient_error(
      [&](Tape& t) { return sum(mul(tanh(lookup(t, table, idx)), t.constant(w))); }, {p});
  CHECK(err < 1e-6);

  Tape bad;
  const std::vector<int> out_of_range{-1};
  CHECK_THROWS_AS(lookup(bad, table, out_of_range), ContractError);
}
