#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/output_layers.hpp"

using namespace sarkit;

namespace {

constexpr std::size_t K = kNumTags;

// Transitions with random finite entries wherever the lattice can use them.
Tensor random_transitions(Rng& rng, std::size_t k = K) {
  Tensor a = crf_initial_transitions(k);
  for (std::size_t from = 0; from < k + 2; ++from) {
    for (std::size_t to = 0; to < k + 2; ++to) {
      if (std::isfinite(a.at(from, to))) a.at(from, to) = rng.uniform(-1.0, 1.0);
    }
  }
  return a;
}

Tensor zero_transitions(std::size_t k = K) {
  Tensor a = crf_initial_transitions(k);
  for (double& v : a.values()) {
    if (std::isfinite(v)) v = 0.0;
  }
  return a;
}

}  // namespace

TEST_CASE("tag codebook") {
  const char* names[] = {"SU", "R", "Q", "P", "ST"};
  for (int k = 0; k < 5; ++k) {
    CHECK(tag_name(k) == names[k]);
    CHECK(parse_tag(names[k]) == k);
  }
  CHECK_FALSE(parse_tag("XX").has_value());
}

TEST_CASE("softmax classifier") {
  Rng rng(1);
  Tape tape;
  const Var U = tape.constant(oracle::random_tensor({3, 4}, rng));
  const Var zero = softmax_classify(U, tape.constant(Tensor({K, 4})));
  for (double p : zero.value().values()) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

  const Var probs = softmax_classify(U, tape.constant(oracle::random_tensor({K, 4}, rng, 3.0)));
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += probs.value().at(i, k);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  Tensor dominant({1, K});
  dominant[2] = 1e3;
  const Var d = softmax(tape.constant(dominant));
  CHECK(std::abs(d.value()[2] - 1.0) < 1e-12);
}

TEST_CASE("cross entropy") {
  Tape tape;
  const std::vector<int> y{1};
  Tensor onehot({1, K});
  onehot[1] = 1.0;
  CHECK(cross_entropy_loss(tape.constant(onehot), y).value()[0] == 0.0);
  CHECK(std::abs(cross_entropy_loss(tape.constant(Tensor({1, K}, 0.2)), y).value()[0] - std::log(5.0)) <
        1e-12);
  CHECK(std::abs(softmax_cross_entropy(tape.constant(Tensor({1, K})), y).value()[0] - std::log(5.0)) <
        1e-12);

  const std::vector<int> missing{-1};
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor({1, K})), missing), DataError);
  const std::vector<int> out_of_range{5};
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor({1, K})), out_of_range), DataError);

  Rng rng(2);
  const std::vector<int> labels{0, 4, 2};
  const Tensor logits = oracle::random_tensor({3, K}, rng, 2.0);
  CHECK(oracle::gradient_error([&](Tape&, const Var& x) { return softmax_cross_entropy(x, labels); },
                               logits) < 1e-6);
  CHECK(oracle::gradient_error([&](Tape&, const Var& x) { return cross_entropy_loss(softmax(x), labels); },
                               logits) < 1e-6);
}

TEST_CASE("CRF log partition") {
  Rng rng(3);
  const Tensor node1 = oracle::random_tensor({1, K}, rng);
  double lse = 0.0;
  for (double v : node1.values()) lse += std::exp(v);
  CHECK(std::abs(crf_log_partition(node1, zero_transitions()) - std::log(lse)) < 1e-12);
  CHECK(std::abs(crf_log_partition(Tensor({3, K}), zero_transitions()) - 3.0 * std::log(5.0)) < 1e-12);

  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    const Tensor nodes = oracle::random_tensor({n, K}, rng, 2.0);
    const Tensor trans = random_transitions(rng);
    CHECK(std::abs(crf_log_partition(nodes, trans) - oracle::brute_log_partition(nodes, trans)) < 1e-8);
  }
}

TEST_CASE("CRF sequence likelihood") {
  Rng rng(4);
  for (std::size_t n = 1; n <= 4; ++n) {
    const Tensor nodes = oracle::random_tensor({n, K}, rng, 2.0);
    const Tensor trans = random_transitions(rng);
    double total = 0.0;
    for (const auto& y : oracle::all_sequences(n, K)) {
      Tape tape;
      const double nll = crf_nll(tape.constant(nodes), tape.constant(trans), y).value()[0];
      CHECK(nll >= 0.0);
      CHECK(std::abs(crf_sequence_score(nodes, trans, y) - oracle::path_score(nodes, trans, y)) < 1e-12);
      total += std::exp(-nll);
    }
    CHECK(std::abs(total - 1.0) < 1e-8);
  }

  // One tag: a single path, so the likelihood is certain.
  const Tensor single = oracle::random_tensor({3, 1}, rng);
  Tape tape;
  const std::vector<int> zeros{0, 0, 0};
  CHECK(std::abs(crf_nll(tape.constant(single), tape.constant(random_transitions(rng, 1)), zeros).value()[0]) <
        1e-12);

  const std::vector<int> bad{0, 7};
  CHECK_THROWS_AS(crf_nll(tape.constant(Tensor({2, K})), tape.constant(zero_transitions()), bad), DataError);
}

TEST_CASE("CRF gradients") {
  Rng rng(5);
  const Tensor nodes = oracle::random_tensor({3, K}, rng);
  const Tensor trans = random_transitions(rng);
  const std::vector<int> y{2, 0, 4};
  CHECK(oracle::gradient_error([&](Tape& t, const Var& x) { return crf_nll(x, t.constant(trans), y); },
                               nodes) < 1e-6);
  CHECK(oracle::gradient_error([&](Tape& t, const Var& x) { return crf_nll(t.constant(nodes), x, y); },
                               trans) < 1e-6);
}

TEST_CASE("zero-transition CRF reduces to softmax cross entropy") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const Tensor nodes = oracle::random_tensor({n, K}, rng, 3.0);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(K));
    Tape tape;
    const double crf = crf_nll(tape.constant(nodes), tape.constant(zero_transitions()), y).value()[0];
    const double ce = softmax_cross_entropy(tape.constant(nodes), y).value()[0];
    CHECK(std::abs(crf - ce) < 1e-9);
  }
}

TEST_CASE("Viterbi") {
  Rng rng(7);
  const Tensor nodes = oracle::random_tensor({5, K}, rng);
  const ViterbiResult factored = viterbi_decode(nodes, zero_transitions());
  for (std::size_t i = 0; i < 5; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (nodes.at(i, k) > nodes.at(i, best)) best = k;
    }
    CHECK(factored.labels[i] == static_cast<int>(best));
  }

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const Tensor node = oracle::random_tensor({n, K}, rng, 2.0);
    const Tensor trans = random_transitions(rng);
    std::vector<int> best;
    double best_score = -INFINITY;
    for (const auto& y : oracle::all_sequences(n, K)) {
      const double s = oracle::path_score(node, trans, y);
      if (s > best_score) {
        best_score = s;
        best = y;
      }
    }
    const ViterbiResult v = viterbi_decode(node, trans);
    CHECK(v.labels == best);
    CHECK(std::abs(v.score - best_score) < 1e-10);
    CHECK(v.score <= crf_log_partition(node, trans));
  }

  // Ties go to the lowest code.
  const ViterbiResult tie = viterbi_decode(Tensor({2, K}), zero_transitions());
  CHECK(tie.labels == std::vector<int>{0, 0});
}
