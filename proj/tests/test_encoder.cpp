#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sarkit/encoder.hpp"
#include "sarkit/errors.hpp"

using namespace sarkit;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM over the rows of x; returns the hidden state per position.
std::vector<std::vector<double>> reference_lstm(const LstmParams& p, const Tensor& x, bool reverse) {
  const std::size_t H = p.hidden(), I = p.input_dim(), m = x.rows();
  std::vector<double> h(H, 0.0), c(H, 0.0);
  std::vector<std::vector<double>> out(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t t = reverse ? m - 1 - k : k;
    std::vector<double> a(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double s = p.bias.value[r];
      for (std::size_t j = 0; j < I; ++j) s += p.input_weights.value.at(r, j) * x.at(t, j);
      for (std::size_t j = 0; j < H; ++j) s += p.hidden_weights.value.at(r, j) * h[j];
      a[r] = s;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sig(a[j]), f = sig(a[H + j]), g = std::tanh(a[2 * H + j]), o = sig(a[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
    out[t] = h;
  }
  return out;
}

}  // namespace

TEST_CASE("lstm parameters") {
  const LstmParams p("w", 4, 3, 9);
  CHECK(p.input_weights.value.shape() == Shape{12, 4});
  CHECK(p.hidden_weights.value.shape() == Shape{12, 3});
  for (std::size_t j = 0; j < 12; ++j) CHECK(p.bias.value[j] == (j >= 3 && j < 6 ? 1.0 : 0.0));
  const LstmParams q("w", 4, 3, 9);
  CHECK(p.input_weights.value == q.input_weights.value);
}

TEST_CASE("bi-LSTM matches a plain-loop reference") {
  Rng rng(4);
  BiLstm bi("enc", 3, 2, 5);
  const Tensor x = oracle::random_tensor({4, 3}, rng);
  Tape tape;
  const Var fin = bi.encode_final(tape, tape.constant(x));
  const Var seq = bi.encode_sequence(tape, tape.constant(x));
  const auto fwd = reference_lstm(bi.forward, x, false);
  const auto bwd = reference_lstm(bi.backward, x, true);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::abs(fin.value()[j] - fwd[3][j]) < 1e-13);
    CHECK(std::abs(fin.value()[2 + j] - bwd[0][j]) < 1e-13);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(std::abs(seq.value().at(t, j) - fwd[t][j]) < 1e-13);
      CHECK(std::abs(seq.value().at(t, 2 + j) - bwd[t][j]) < 1e-13);
    }
  }
}

TEST_CASE("single token and palindromes") {
  Rng rng(6);
  BiLstm bi("enc", 3, 2, 1);
  bi.backward.input_weights.value = bi.forward.input_weights.value;
  bi.backward.hidden_weights.value = bi.forward.hidden_weights.value;
  bi.backward.bias.value = bi.forward.bias.value;
  const Tensor a = oracle::random_tensor({1, 3}, rng);
  const Tensor b = oracle::random_tensor({1, 3}, rng);
  Tape tape;
  const Var one = bi.encode_final(tape, tape.constant(a));
  CHECK(one.value()[0] == one.value()[2]);
  CHECK(one.value()[1] == one.value()[3]);
  Tensor pal({3, 3});
  for (std::size_t j = 0; j < 3; ++j) {
    pal.at(0, j) = a[j];
    pal.at(1, j) = b[j];
    pal.at(2, j) = a[j];
  }
  const Var h = bi.encode_final(tape, tape.constant(pal));
  CHECK(std::abs(h.value()[0] - h.value()[2]) < 1e-15);
  CHECK(std::abs(h.value()[1] - h.value()[3]) < 1e-15);
  CHECK_THROWS_AS(bi.encode_final(tape, tape.constant(Tensor({0, 3}))), ContractError);
}

TEST_CASE("sentence encoder gradients") {
  Rng rng(12);
  EncoderConfig cfg;
  cfg.word_hidden = 2;
  cfg.conv_hidden = 2;
  HierEncoder enc(cfg, 3, 7);
  const Tensor words = oracle::random_tensor({3, 3}, rng);
  CHECK(oracle::gradient_error([&](Tape& t, const Var& x) { return sum(enc.encode_sentence(t, x)); },
                               words) < 1e-6);
  auto params = enc.word_layers()[0].parameters();
  CHECK(oracle::parameter_gradient_error(
            [&](Tape& t) { return sum(tanh(enc.encode_sentence(t, t.constant(words)))); }, params) < 1e-6);
}

TEST_CASE("conversation encoder variants") {
  Rng rng(13);
  Rng drop(1);
  EncoderConfig cfg;
  cfg.word_hidden = 2;
  cfg.conv_hidden = 3;
  const Tensor h = oracle::random_tensor({3, 4}, rng);

  SUBCASE("H-LSTM") {
    HierEncoder enc(cfg, 5, 2);
    CHECK(enc.output_dim() == 6);
    Tape tape;
    const Var u = enc.encode_conversation(tape, tape.constant(h), Mode::eval, drop);
    CHECK(u.value().shape() == Shape{3, 6});
    // n = 1: the single row depends on h_1 alone.
    const Var u1 = enc.encode_conversation(tape, slice_rows(tape.constant(h), 0, 1), Mode::eval, drop);
    Tensor h1 = h;
    for (std::size_t j = 0; j < 4; ++j) h1.at(1, j) += 1.0;
    const Var v1 = enc.encode_conversation(tape, slice_rows(tape.constant(h1), 0, 1), Mode::eval, drop);
    CHECK(u1.value() == v1.value());
    // Order matters: swapping two sentences changes the first row.
    Tensor swapped = h;
    for (std::size_t j = 0; j < 4; ++j) std::swap(swapped.at(1, j), swapped.at(2, j));
    const Var s = enc.encode_conversation(tape, tape.constant(swapped), Mode::eval, drop);
    bool differs = false;
    for (std::size_t j = 0; j < 6; ++j) differs = differs || s.value().at(0, j) != u.value().at(0, j);
    CHECK(differs);
    CHECK_THROWS_AS(enc.encode_conversation(tape, tape.constant(Tensor({0, 4})), Mode::eval, drop),
                    ContractError);
  }
  SUBCASE("B-LSTM") {
    cfg.variant = EncoderVariant::blstm;
    HierEncoder enc(cfg, 5, 2);
    CHECK(enc.conversation_layer() == nullptr);
    Tape tape;
    CHECK(enc.encode_conversation(tape, tape.constant(h), Mode::train, drop).value() == h);
  }
  SUBCASE("S-LSTM") {
    cfg.variant = EncoderVariant::slstm;
    cfg.depth = 2;
    HierEncoder enc(cfg, 5, 2);
    CHECK(enc.word_layers().size() == 2);
    CHECK(enc.conversation_layer() == nullptr);
    cfg.depth = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  CHECK(parse_variant("B-LSTM") == EncoderVariant::blstm);
  CHECK_THROWS_AS(parse_variant("gru"), ConfigError);
}
