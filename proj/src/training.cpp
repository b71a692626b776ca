#include "sarkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sarkit/errors.hpp"
#include "sarkit/logging.hpp"

namespace sarkit {

namespace {

std::vector<EncodedConversation> prepare(const Vocabulary& vocab,
                                         std::span<const Conversation> convs,
                                         std::size_t max_chunk) {
  const auto chunks = chunk_corpus(convs, max_chunk);
  return encode_corpus(vocab, chunks);
}

void require_labeled(std::span<const EncodedConversation> convs, const std::string& what) {
  std::string missing;
  std::size_t count = 0;
  for (const auto& c : convs) {
    if (c.fully_labeled()) continue;
    if (count < 10) missing += (missing.empty() ? "" : ", ") + c.id;
    ++count;
  }
  if (count > 0) {
    throw DataError(what + " contains " + std::to_string(count) +
                    " conversation(s) with unlabeled sentences: " + missing +
                    (count > 10 ? ", ..." : ""));
  }
}

template <typename T>
std::vector<T> concat_pools(std::span<const T> a, std::span<const T> b) {
  std::vector<T> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double selection_value(const HistoryEntry& e, StopMetric metric) {
  return metric == StopMetric::dev_macro_f1 ? e.dev_macro_f1 : e.dev_accuracy;
}

class Runner {
 public:
  Runner(SarModel& model, const TrainConfig& config, std::vector<HistoryEntry>& history,
         const EpochHook& on_epoch)
      : model_(model), config_(config), history_(history), on_epoch_(on_epoch) {
    adversarial_ = is_adversarial(config.regime) && model.has_discriminator();
    params_ = adversarial_ ? model.parameters() : model.task_parameters();
  }

  struct PhaseResult {
    std::size_t best_entry = 0;
    std::vector<Tensor> best_state;
  };

  // Trains for up to `epochs` epochs, evaluating on `dev` after each one.
  // With patience > 0, stops once the selection metric has not improved for
  // that many consecutive epochs.
  PhaseResult run(BatchSampler& sampler, std::span<const EncodedConversation> dev,
                  const std::string& phase, std::size_t patience) {
    adam_ = AdamState{};
    sgd_ = SgdState{};
    const OptimizerKind opt = config_.resolved_optimizer();
    const std::size_t per_epoch = sampler.steps_per_epoch();
    const double planned = static_cast<double>(config_.epochs * per_epoch);
    std::size_t phase_step = 0;
    PhaseResult result;
    bool have_best = false;
    double best_value = 0.0;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
      if (capped()) break;
      HistoryEntry entry;
      entry.epoch = epoch;
      entry.phase = phase;
      std::size_t taken = 0;
      for (std::size_t s = 0; s < per_epoch && !capped(); ++s) {
        const double p = std::min(1.0, static_cast<double>(phase_step) / planned);
        const double lambda =
            adversarial_ ? config_.fixed_lambda.value_or(lambda_schedule(p)) : 0.0;
        const double lr = opt == OptimizerKind::sgd ? dynamic_lr(p, config_.sgd_lr0) : config_.adam_lr;
        const auto batch = sampler.next();
        zero_grads(params_);
        const StepLosses losses =
            accumulate_gradients(model_, batch, lambda, adversarial_, config_.seed, steps_);
        clip_global_norm(params_, config_.clip_norm);
        if (opt == OptimizerKind::sgd) {
          sgd_momentum_update(sgd_, params_, lr, config_.momentum);
        } else {
          adam_update(adam_, params_, lr);
        }
        entry.loss_c += losses.loss_c;
        entry.loss_d += losses.loss_d;
        entry.lambda = lambda;
        entry.lr = lr;
        ++taken;
        ++phase_step;
        ++steps_;
      }
      if (taken == 0) break;
      entry.loss_c /= static_cast<double>(taken);
      entry.loss_d /= static_cast<double>(taken);
      entry.steps = steps_;
      const ConfusionMatrix cm = evaluate(model_, dev);
      entry.dev_accuracy = cm.accuracy();
      entry.dev_macro_f1 = macro_f1(cm);
      history_.push_back(entry);

      const double value = selection_value(entry, config_.early_stop_metric);
      if (!have_best || value > best_value) {
        have_best = true;
        best_value = value;
        result.best_entry = history_.size() - 1;
        result.best_state = model_.snapshot();
        stale = 0;
      } else if (patience > 0 && ++stale >= patience) {
        break;
      }
      if (on_epoch_ && !on_epoch_(entry)) break;
    }
    if (!have_best) throw StateError("training stopped before completing a single step");
    return result;
  }

  std::size_t steps() const { return steps_; }

 private:
  bool capped() const { return config_.max_steps > 0 && steps_ >= config_.max_steps; }

  SarModel& model_;
  const TrainConfig& config_;
  std::vector<HistoryEntry>& history_;
  const EpochHook& on_epoch_;
  std::vector<Parameter*> params_;
  bool adversarial_ = false;
  AdamState adam_;
  SgdState sgd_;
  std::size_t steps_ = 0;
};

}  // namespace

TargetSplit apply_target_fraction(std::span<const Conversation> target, double fraction,
                                  std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("target label fraction must lie in (0, 1]");
  }
  const std::size_t n = target.size();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, hash_tag("target_fraction")));
  rng.shuffle(order);
  std::vector<bool> labeled(n, false);
  for (std::size_t i = 0; i < std::min(keep, n); ++i) labeled[order[i]] = true;

  TargetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    if (labeled[i]) {
      out.labeled.push_back(target[i]);
      continue;
    }
    Conversation c = target[i];
    for (auto& comment : c.comments) {
      for (auto& s : comment.sentences) s.act.reset();
    }
    out.unlabeled.push_back(std::move(c));
  }
  return out;
}

const EncodedConversation* BatchSampler::Stream::draw() {
  if (pos == order.size()) {
    order.resize(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    pos = 0;
  }
  return items[order[pos++]];
}

BatchSampler::BatchSampler(const EncodedPools& pools, Regime regime, std::size_t batch_size,
                           std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const auto pointers = [](std::span<const EncodedConversation> pool) {
    std::vector<const EncodedConversation*> out;
    for (const auto& c : pool) out.push_back(&c);
    return out;
  };
  const auto add = [&](const std::string& name, std::vector<const EncodedConversation*> items,
                       std::size_t quota, DomainLabel domain, bool labeled, bool counts) {
    if (items.empty()) {
      throw RegimeError(std::string(regime_name(regime)) + " training needs a non-empty " + name +
                        " pool");
    }
    Stream s;
    s.items = std::move(items);
    s.rng = Rng(derive_seed(seed, hash_tag("batch:" + name)));
    s.quota = quota;
    s.domain = domain;
    s.labeled = labeled;
    if (counts) {
      steps_per_epoch_ = std::max(steps_per_epoch_, (s.items.size() + quota - 1) / quota);
    }
    streams_.push_back(std::move(s));
  };

  const std::size_t b = batch_size;
  switch (regime) {
    case Regime::indomain:
    case Regime::transfer:
      add("source", pointers(pools.source), b, DomainLabel::source, true, true);
      break;
    case Regime::finetune:
      add("target_labeled", pointers(pools.target_labeled), b, DomainLabel::target, true, true);
      break;
    case Regime::merge: {
      auto items = pointers(pools.source);
      for (const auto* c : pointers(pools.target_labeled)) items.push_back(c);
      add("merged", std::move(items), b, DomainLabel::source, true, true);
      break;
    }
    case Regime::adapt_unsup: {
      if (b < 2) throw ConfigError("adapt-unsup needs batch_size >= 2");
      const std::size_t qs = b / 2;
      add("source", pointers(pools.source), qs, DomainLabel::source, true, true);
      add("target_unlabeled", pointers(pools.target_unlabeled), b - qs, DomainLabel::target,
          false, true);
      break;
    }
    case Regime::adapt_semisup:
    case Regime::adapt_sup: {
      if (b < 3) throw ConfigError(std::string(regime_name(regime)) + " needs batch_size >= 3");
      const std::size_t qs = b / 2;
      const std::size_t ql = std::max<std::size_t>(1, b / 4);
      const std::size_t qu = b - qs - ql;
      add("source", pointers(pools.source), qs, DomainLabel::source, true, true);
      add("target_labeled", pointers(pools.target_labeled), ql, DomainLabel::target, true, true);
      if (!pools.target_unlabeled.empty()) {
        add("target_unlabeled", pointers(pools.target_unlabeled), qu, DomainLabel::target, false,
            true);
      } else {
        // Labeled target conversations stand in; only the domain loss reads them.
        add("target_refill", pointers(pools.target_labeled), qu, DomainLabel::target, false,
            false);
      }
      break;
    }
  }
}

std::vector<BatchItem> BatchSampler::next() {
  std::vector<BatchItem> batch;
  for (auto& s : streams_) {
    for (std::size_t i = 0; i < s.quota; ++i) batch.push_back({s.draw(), s.domain, s.labeled});
  }
  return batch;
}

std::vector<BatchItem> sample_batch(const EncodedPools& pools, Regime regime,
                                    std::size_t batch_size, std::uint64_t seed) {
  return BatchSampler(pools, regime, batch_size, seed).next();
}

StepLosses accumulate_gradients(SarModel& model, std::span<const BatchItem> batch, double lambda,
                                bool adversarial, std::uint64_t seed, std::size_t step) {
  Tape tape;
  std::vector<Var> class_terms;
  std::vector<Var> domain_terms;
  std::size_t sentences = 0;
  for (std::size_t slot = 0; slot < batch.size(); ++slot) {
    const BatchItem& item = batch[slot];
    Rng dropout_rng(derive_seed(seed, hash_tag("dropout"), step, slot));
    Var U = model.encode(tape, *item.conv, Mode::train, dropout_rng);
    if (item.labeled) {
      if (!item.conv->fully_labeled()) {
        throw DataError("conversation " + item.conv->id + " is in a labeled pool but has unlabeled sentences");
      }
      class_terms.push_back(model.classification_loss(tape, U, item.conv->labels));
    }
    if (adversarial) {
      domain_terms.push_back(model.domain_loss(tape, U, item.domain, lambda));
      sentences += U.rows();
    }
  }
  if (class_terms.empty()) throw ContractError("batch has no labeled conversation");

  const auto total = [](const std::vector<Var>& terms) {
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
  };
  Var loss_c = scale(total(class_terms), 1.0 / static_cast<double>(class_terms.size()));
  Var loss = loss_c;
  StepLosses out;
  out.loss_c = loss_c.value()[0];
  if (adversarial) {
    Var loss_d = scale(total(domain_terms), 1.0 / static_cast<double>(sentences));
    out.loss_d = loss_d.value()[0];
    loss = add(loss_c, loss_d);
  }
  if (!std::isfinite(loss.value()[0])) {
    throw DivergenceError("non-finite training loss at step " + std::to_string(step) +
                          " (classification " + std::to_string(out.loss_c) + ", domain " +
                          std::to_string(out.loss_d) + ")");
  }
  tape.backward(loss);
  if (adversarial) {
    for (Parameter* p : model.discriminator_parameters()) {
      for (double& g : p->grad.values()) g *= lambda;
    }
  }
  return out;
}

nlohmann::ordered_json history_to_json(std::span<const HistoryEntry> history) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& e : history) {
    out.push_back({{"epoch", e.epoch},
                   {"phase", e.phase},
                   {"loss_c", e.loss_c},
                   {"loss_d", e.loss_d},
                   {"dev_accuracy", e.dev_accuracy},
                   {"dev_macro_f1", e.dev_macro_f1},
                   {"lambda", e.lambda},
                   {"lr", e.lr},
                   {"steps", e.steps}});
  }
  return out;
}

Vocabulary training_vocabulary(const TrainingData& data, const TrainConfig& config) {
  std::vector<Conversation> text(data.source.begin(), data.source.end());
  const Regime r = config.regime;
  if (r != Regime::indomain && r != Regime::transfer) {
    text.insert(text.end(), data.target_labeled.begin(), data.target_labeled.end());
  }
  if (is_adversarial(r)) {
    text.insert(text.end(), data.target_unlabeled.begin(), data.target_unlabeled.end());
  }
  return build_vocab(text, config.min_count);
}

SarModel build_model(const TrainingData& data, const TrainConfig& config) {
  config.validate();
  Vocabulary vocab = training_vocabulary(data, config);
  std::optional<Tensor> vectors;
  if (!config.pretrained_embeddings.empty()) {
    auto loaded = load_pretrained(config.pretrained_embeddings, vocab, config.embedding_dim,
                                  config.seed);
    vectors = std::move(loaded.table.parameter().value);
  }
  return SarModel(config.model_config(), std::move(vocab), config.seed, std::move(vectors));
}

TrainResult train(const TrainingData& data, const TrainConfig& config, const EpochHook& on_epoch) {
  return train(build_model(data, config), data, config, on_epoch);
}

TrainResult train(SarModel model, const TrainingData& data, const TrainConfig& config,
                  const EpochHook& on_epoch) {
  config.validate();
  const Regime regime = config.regime;
  if (data.source.empty()) throw RegimeError(std::string(regime_name(regime)) + " needs source data");
  if (data.dev.empty()) throw RegimeError("a development set is required for model selection");
  if (regime == Regime::adapt_unsup && !data.target_labeled.empty()) {
    throw RegimeError("adapt-unsup must not receive labeled target conversations");
  }
  const bool needs_target_labels = regime == Regime::merge || regime == Regime::finetune ||
                                   regime == Regime::adapt_semisup || regime == Regime::adapt_sup;
  if (needs_target_labels && data.target_labeled.empty()) {
    throw RegimeError(std::string(regime_name(regime)) + " needs labeled target conversations");
  }
  if (regime == Regime::adapt_unsup && data.target_unlabeled.empty()) {
    throw RegimeError("adapt-unsup needs unlabeled target conversations");
  }

  TargetSplit split{data.target_labeled, {}};
  if (config.target_label_fraction < 1.0 && !data.target_labeled.empty()) {
    split = apply_target_fraction(data.target_labeled, config.target_label_fraction, config.seed);
  }
  const Vocabulary& vocab = model.vocab();
  EncodedPools pools;
  pools.source = prepare(vocab, data.source, config.max_chunk);
  pools.target_labeled = prepare(vocab, split.labeled, config.max_chunk);
  if (is_adversarial(regime)) {
    pools.target_unlabeled = prepare(
        vocab, concat_pools<Conversation>(data.target_unlabeled, split.unlabeled), config.max_chunk);
  }
  require_labeled(pools.source, "source pool");
  require_labeled(pools.target_labeled, "labeled target pool");
  const auto dev = prepare(vocab, data.dev, config.max_chunk);
  require_labeled(dev, "development set");

  TrainResult result;
  Runner runner(model, config, result.history, on_epoch);
  Runner::PhaseResult chosen;
  if (regime == Regime::finetune) {
    std::vector<EncodedConversation> source_train = pools.source;
    std::vector<EncodedConversation> source_dev;
    if (!data.source_dev.empty()) {
      source_dev = prepare(vocab, data.source_dev, config.max_chunk);
      require_labeled(source_dev, "source development set");
    } else {
      // Hold out a tenth of the source conversations to judge convergence.
      Rng rng(derive_seed(config.seed, hash_tag("finetune_dev")));
      rng.shuffle(source_train);
      std::size_t held = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(source_train.size())));
      if (source_train.size() >= 2) held = std::clamp<std::size_t>(held, 1, source_train.size() - 1);
      else held = 0;
      source_dev.assign(source_train.end() - static_cast<std::ptrdiff_t>(held), source_train.end());
      source_train.resize(source_train.size() - held);
      if (source_dev.empty()) source_dev = source_train;
    }
    EncodedPools phase1;
    phase1.source = std::move(source_train);
    BatchSampler s1(phase1, Regime::transfer, config.batch_size, config.seed);
    const auto first = runner.run(s1, source_dev, "source", config.patience);
    model.restore(first.best_state);
    BatchSampler s2(pools, Regime::finetune, config.batch_size, config.seed);
    const std::size_t before = result.history.size();
    chosen = runner.run(s2, dev, "target", 0);
    if (result.history.size() == before) chosen = first;
  } else {
    BatchSampler sampler(pools, regime, config.batch_size, config.seed);
    chosen = runner.run(sampler, dev, "train", 0);
  }
  result.final_state = model.snapshot();
  result.steps = runner.steps();
  result.best_epoch = chosen.best_entry;
  model.restore(chosen.best_state);
  result.model = std::move(model);
  return result;
}

ConfusionMatrix evaluate(SarModel& model, std::span<const EncodedConversation> convs) {
  require_labeled(convs, "evaluation set");
  ConfusionMatrix cm(kNumTags);
  for (const auto& conv : convs) {
    const LabelSequence pred = model.predict(conv);
    for (std::size_t i = 0; i < pred.size(); ++i) cm.add(conv.labels[i], pred[i]);
  }
  return cm;
}

ConfusionMatrix evaluate(SarModel& model, std::span<const Conversation> convs,
                         std::size_t max_chunk) {
  const auto encoded = prepare(model.vocab(), convs, max_chunk);
  return evaluate(model, encoded);
}

}  // namespace sarkit
