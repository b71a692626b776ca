#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "sarkit/config.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/logging.hpp"
#include "sarkit/optim.hpp"
#include "sarkit/synth.hpp"
#include "sarkit/training.hpp"

using namespace sarkit;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 3;
  c.embedding_dim = 8;
  c.word_hidden = 4;
  c.conv_hidden = 4;
  c.disc_hidden = 4;
  c.seed = 3;
  return c;
}

EncodedConversation fake(const std::string& id, std::size_t n, bool labeled) {
  EncodedConversation c;
  c.id = id;
  for (std::size_t i = 0; i < n; ++i) {
    c.sentences.push_back({4, 5});
    c.labels.push_back(labeled ? 4 : -1);
  }
  return c;
}

std::vector<EncodedConversation> pool(const std::string& prefix, std::size_t count, bool labeled) {
  std::vector<EncodedConversation> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(fake(prefix + std::to_string(i), 2, labeled));
  return out;
}

}  // namespace

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters alone") {
    Parameter p("p", Tensor::row({1.0, -2.0}));
    p.zero_grad();
    AdamState st;
    std::vector<Parameter*> ps{&p};
    adam_update(st, ps, 0.001);
    CHECK(p.value == Tensor::row({1.0, -2.0}));
  }
  SUBCASE("first step is scale invariant") {
    Parameter a("a", Tensor::row({0.0}));
    Parameter b("b", Tensor::row({0.0}));
    a.grad = Tensor::row({0.3});
    b.grad = Tensor::row({300.0});
    AdamState st;
    std::vector<Parameter*> ps{&a, &b};
    adam_update(st, ps, 0.001);
    CHECK(std::abs(std::abs(a.value[0]) - std::abs(b.value[0])) < 1e-6);
    CHECK(std::abs(a.value[0] + 0.001) < 1e-6);
  }
  SUBCASE("steady gradient moves by lr per step") {
    Parameter p("p", Tensor::row({0.0, 0.0}));
    AdamState st;
    std::vector<Parameter*> ps{&p};
    double last = 0.0;
    for (int i = 0; i < 5000; ++i) {
      p.grad = Tensor::row({2.0, -0.5});
      last = p.value[0];
      adam_update(st, ps, 0.001);
    }
    CHECK(std::abs(std::abs(p.value[0] - last) - 0.001) < 0.01 * 0.001);
  }
  SUBCASE("state shape mismatch") {
    Parameter p("p", Tensor::row({0.0, 0.0}));
    AdamState st;
    std::vector<Parameter*> ps{&p};
    adam_update(st, ps, 0.001);
    Parameter q("q", Tensor::row({0.0, 0.0, 0.0}));
    std::vector<Parameter*> qs{&q};
    CHECK_THROWS_AS(adam_update(st, qs, 0.001), ContractError);
  }
}

TEST_CASE("sgd with momentum") {
  SUBCASE("plain step") {
    Parameter p("p", Tensor::row({1.0, 2.0}));
    p.grad = Tensor::row({0.5, -1.0});
    SgdState st;
    std::vector<Parameter*> ps{&p};
    sgd_momentum_update(st, ps, 1.0, 0.0);
    CHECK(p.value == Tensor::row({0.5, 3.0}));
  }
  SUBCASE("velocity approaches g / (1 - mu)") {
    Parameter p("p", Tensor::row({0.0}));
    SgdState st;
    std::vector<Parameter*> ps{&p};
    for (int i = 0; i < 400; ++i) {
      p.grad = Tensor::row({0.2});
      sgd_momentum_update(st, ps, 0.01, 0.9);
    }
    CHECK(std::abs(st.velocity[0][0] - 2.0) < 1e-9);
    // Without gradient the velocity decays by the momentum each step.
    const double v0 = st.velocity[0][0];
    p.grad = Tensor::row({0.0});
    sgd_momentum_update(st, ps, 0.01, 0.9);
    CHECK(std::abs(st.velocity[0][0] - 0.9 * v0) < 1e-15);
  }
  SUBCASE("shape mismatch") {
    Parameter p("p", Tensor::row({0.0}));
    p.grad = Tensor::row({1.0, 2.0});
    SgdState st;
    std::vector<Parameter*> ps{&p};
    CHECK_THROWS_AS(sgd_momentum_update(st, ps, 0.1), ContractError);
  }
}

TEST_CASE("dynamic learning rate") {
  CHECK(dynamic_lr(0.0, 0.01) == 0.01);
  CHECK(std::abs(dynamic_lr(1.0, 0.01) - 0.01 / std::pow(11.0, 0.75)) < 1e-15);
  CHECK(std::abs(dynamic_lr(1.0, 0.01) - 0.0016556) < 1e-7);
  for (int i = 0; i < 100; ++i) CHECK(dynamic_lr(i / 100.0, 0.01) > dynamic_lr((i + 1) / 100.0, 0.01));
}

TEST_CASE("global norm clipping") {
  Parameter a("a", Tensor::row({0.0, 0.0}));
  Parameter b("b", Tensor::row({0.0}));
  a.grad = Tensor::row({3.0, 0.0});
  b.grad = Tensor::row({4.0});
  std::vector<Parameter*> ps{&a, &b};
  CHECK(clip_global_norm(ps, 10.0) == 5.0);
  CHECK(a.grad[0] == 3.0);
  CHECK(clip_global_norm(ps, 1.0) == 5.0);
  CHECK(std::abs(a.grad[0] - 0.6) < 1e-15);
  CHECK(std::abs(b.grad[0] - 0.8) < 1e-15);

  // The norm does not depend on how the coordinates are ordered.
  Rng rng(5);
  Parameter big("big", Tensor({1, 4000}));
  big.grad = oracle::random_tensor({1, 4000}, rng, 1e3);
  big.grad[17] = 1e-9;
  Parameter rev("rev", Tensor({1, 4000}));
  rev.grad = big.grad;
  std::reverse(rev.grad.values().begin(), rev.grad.values().end());
  std::vector<Parameter*> p1{&big}, p2{&rev};
  CHECK(clip_global_norm(p1, 0.0) == clip_global_norm(p2, 0.0));
}

TEST_CASE("batch composition") {
  EncodedPools pools;
  pools.source = pool("s", 10, true);
  pools.target_labeled = pool("l", 4, true);
  pools.target_unlabeled = pool("u", 6, false);

  const auto count = [](const std::vector<BatchItem>& batch) {
    std::map<std::string, int> n;
    for (const auto& item : batch) {
      n[std::string(domain_name(item.domain)) + (item.labeled ? "+" : "-")]++;
    }
    return n;
  };

  auto unsup = sample_batch(pools, Regime::adapt_unsup, 4, 1);
  CHECK(count(unsup) == std::map<std::string, int>{{"source+", 2}, {"target-", 2}});

  auto semi = sample_batch(pools, Regime::adapt_semisup, 5, 1);
  CHECK(count(semi) == std::map<std::string, int>{{"source+", 2}, {"target+", 1}, {"target-", 2}});

  EncodedPools no_unlabeled = pools;
  no_unlabeled.target_unlabeled.clear();
  auto sup = sample_batch(no_unlabeled, Regime::adapt_sup, 8, 1);
  CHECK(count(sup) == std::map<std::string, int>{{"source+", 4}, {"target+", 2}, {"target-", 2}});
  for (const auto& item : sup) {
    if (!item.labeled) CHECK(item.conv->id[0] == 'l');
  }

  auto merged = sample_batch(pools, Regime::merge, 5, 1);
  CHECK(merged.size() == 5);

  BatchSampler a(pools, Regime::adapt_semisup, 5, 9), b(pools, Regime::adapt_semisup, 5, 9);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next(), y = b.next();
    for (std::size_t j = 0; j < x.size(); ++j) CHECK(x[j].conv == y[j].conv);
  }
  CHECK(a.steps_per_epoch() == 5);

  EncodedPools empty_target = pools;
  empty_target.target_unlabeled.clear();
  CHECK_THROWS_AS(sample_batch(empty_target, Regime::adapt_unsup, 4, 1), RegimeError);
  CHECK_THROWS_AS(sample_batch(pools, Regime::adapt_unsup, 1, 1), ConfigError);
}

TEST_CASE("each pass over a pool visits every conversation once") {
  EncodedPools pools;
  pools.source = pool("s", 7, true);
  BatchSampler s(pools, Regime::indomain, 7, 2);
  for (int pass = 0; pass < 3; ++pass) {
    std::map<std::string, int> seen;
    for (const auto& item : s.next()) seen[item.conv->id]++;
    CHECK(seen.size() == 7);
  }
}

TEST_CASE("target label fraction") {
  const SynthCorpora c = synth_generate(SynthProfile{}, 2, 1, 9);
  const TargetSplit half = apply_target_fraction(c.target, 0.5, 4);
  CHECK(half.labeled.size() == 5);
  CHECK(half.unlabeled.size() == 4);
  for (const auto& conv : half.unlabeled) CHECK_FALSE(conv.any_labeled());
  CHECK(apply_target_fraction(c.target, 1.0, 4).labeled.size() == 9);
  CHECK(apply_target_fraction(c.target, 0.25, 4).labeled.size() == 3);
  CHECK_THROWS_AS(apply_target_fraction(c.target, 0.0, 4), ConfigError);
  CHECK(apply_target_fraction(c.target, 0.5, 4).labeled == half.labeled);
}

TEST_CASE("config parsing") {
  const TrainConfig d = parse_train_config(nlohmann::json::object());
  CHECK(d.epochs == 30);
  CHECK(d.batch_size == 5);
  CHECK(d.adam_lr == 0.001);
  CHECK(d.momentum == 0.9);
  CHECK(d.resolved_optimizer() == OptimizerKind::adam);

  const TrainConfig a = parse_train_config({{"regime", "adapt-semisup"}, {"epochs", 4}});
  CHECK(a.regime == Regime::adapt_semisup);
  CHECK(a.resolved_optimizer() == OptimizerKind::sgd);
  CHECK(a.model_config().with_discriminator);

  CHECK_THROWS_AS(parse_train_config({{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(parse_train_config({{"epochs", "many"}}), ConfigError);
  CHECK_THROWS_AS(parse_train_config({{"regime", "magic"}}), ConfigError);
  const TrainConfig back = parse_train_config(train_config_to_json(a));
  CHECK(train_config_to_json(back) == train_config_to_json(a));
}

TEST_CASE("training bookkeeping") {
  set_warnings_enabled(false);
  const SynthCorpora c = synth_generate(SynthProfile{}, 6, 2, 3);
  TrainingData data;
  data.source = c.source;
  data.dev = c.target;
  TrainConfig cfg = tiny_config();
  TrainResult r = train(data, cfg);
  REQUIRE(r.history.size() == cfg.epochs);
  double best = -1.0;
  for (const auto& e : r.history) best = std::max(best, e.dev_macro_f1);
  CHECK(r.history[r.best_epoch].dev_macro_f1 == best);
  CHECK(r.steps == cfg.epochs * 2);

  // The selected model reproduces its recorded dev score.
  const ConfusionMatrix cm = evaluate(r.model, data.dev, cfg.max_chunk);
  CHECK(macro_f1(cm) == r.history[r.best_epoch].dev_macro_f1);

  // Hook and step cap both end training early.
  std::size_t calls = 0;
  TrainResult hooked = train(data, cfg, [&](const HistoryEntry&) { return ++calls < 2; });
  CHECK(hooked.history.size() == 2);
  TrainConfig capped = cfg;
  capped.max_steps = 3;
  CHECK(train(data, capped).steps == 3);
  set_warnings_enabled(true);
}

TEST_CASE("regime preconditions") {
  const SynthCorpora c = synth_generate(SynthProfile{}, 4, 2, 4);
  TrainingData data;
  data.source = c.source;
  data.dev = c.target;
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;

  cfg.regime = Regime::adapt_unsup;
  CHECK_THROWS_AS(train(data, cfg), RegimeError);
  data.target_labeled = c.target;
  CHECK_THROWS_AS(train(data, cfg), RegimeError);

  cfg.regime = Regime::merge;
  data.dev.clear();
  CHECK_THROWS_AS(train(data, cfg), RegimeError);

  data.dev = c.target;
  data.source[0].comments[0].sentences[0].act.reset();
  cfg.regime = Regime::indomain;
  CHECK_THROWS_AS(train(data, cfg), DataError);
}

TEST_CASE("divergence is reported with the step") {
  const SynthCorpora c = synth_generate(SynthProfile{}, 4, 2, 1);
  TrainingData data;
  data.source = c.source;
  data.dev = c.source;
  TrainConfig cfg = tiny_config();
  SarModel model = build_model(data, cfg);
  for (double& v : model.classifier().value.values()) v = std::nan("");
  try {
    train(std::move(model), data, cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("lambda pinned to zero reduces adaptation to transfer") {
  SynthProfile profile;
  profile.substitution_rate = 0.5;
  const SynthCorpora c = synth_generate(profile, 6, 8, 4);
  TrainConfig base = tiny_config();
  base.optimizer = OptimizerKind::sgd;
  base.max_steps = 6;

  TrainingData t;
  t.source = c.source;
  t.dev = c.source;
  TrainConfig tc = base;
  tc.regime = Regime::transfer;
  tc.batch_size = 2;

  TrainingData u = t;
  u.target_unlabeled = c.target;
  TrainConfig uc = base;
  uc.regime = Regime::adapt_unsup;
  uc.batch_size = 4;
  uc.fixed_lambda = 0.0;

  TrainResult a = train(t, tc);
  TrainResult b = train(u, uc);
  auto pa = a.model.parameters();
  auto pb = b.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name == "embeddings") continue;
    CAPTURE(pa[i]->name);
    CHECK(a.final_state[i] == b.final_state[i]);
  }
  const auto& va = a.model.vocab();
  const auto& vb = b.model.vocab();
  const std::size_t dim = a.final_state[0].cols();
  for (std::size_t r = 0; r < va.size(); ++r) {
    const auto rb = static_cast<std::size_t>(vb.index(va.token(static_cast<int>(r))));
    for (std::size_t col = 0; col < dim; ++col) {
      CHECK(a.final_state[0].at(r, col) == b.final_state[0].at(rb, col));
    }
  }
}
