#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sarkit/config.hpp"
#include "sarkit/corpus.hpp"
#include "sarkit/metrics.hpp"
#include "sarkit/model.hpp"
#include "sarkit/optim.hpp"

namespace sarkit {

// Raw conversations for one training run. Which pools are read depends on
// the regime:
//   indomain, transfer   source
//   merge                source + target_labeled
//   finetune             source, then target_labeled
//   adapt-unsup          source + target_unlabeled
//   adapt-semisup/sup    source + target_labeled (+ target_unlabeled)
// `dev` drives model selection; `source_dev` is only used by fine-tuning.
struct TrainingData {
  std::vector<Conversation> source;
  std::vector<Conversation> target_labeled;
  std::vector<Conversation> target_unlabeled;
  std::vector<Conversation> dev;
  std::vector<Conversation> source_dev;
};

// Keeps ceil(fraction * n) target conversations labeled, chosen with the
// run seed; the rest lose their labels and join the unlabeled pool.
struct TargetSplit {
  std::vector<Conversation> labeled;
  std::vector<Conversation> unlabeled;
};
TargetSplit apply_target_fraction(std::span<const Conversation> target, double fraction,
                                  std::uint64_t seed);

// Training pools after chunking and vocabulary mapping.
struct EncodedPools {
  std::vector<EncodedConversation> source;
  std::vector<EncodedConversation> target_labeled;
  std::vector<EncodedConversation> target_unlabeled;
};

struct BatchItem {
  const EncodedConversation* conv = nullptr;
  DomainLabel domain = DomainLabel::source;
  bool labeled = false;  // contributes to the classification loss
};

// Draws batches as in the adversarial training loop. Each pool is an
// endless stream of reshuffled passes with its own seed, so the draws from
// one pool never depend on the size or presence of another.
class BatchSampler {
 public:
  BatchSampler(const EncodedPools& pools, Regime regime, std::size_t batch_size,
               std::uint64_t seed);

  std::vector<BatchItem> next();
  // Batches needed to visit the largest active pool once.
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }

 private:
  struct Stream {
    std::vector<const EncodedConversation*> items;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    Rng rng;
    std::size_t quota = 0;
    DomainLabel domain = DomainLabel::source;
    bool labeled = false;
    const EncodedConversation* draw();
  };
  std::vector<Stream> streams_;
  std::size_t steps_per_epoch_ = 1;
};

std::vector<BatchItem> sample_batch(const EncodedPools& pools, Regime regime,
                                    std::size_t batch_size, std::uint64_t seed);

struct StepLosses {
  double loss_c = 0.0;
  double loss_d = 0.0;
};

// One forward/backward over a batch: mean classification loss over labeled
// conversations plus mean domain loss over all sentences (through gradient
// reversal). Discriminator gradients are scaled by lambda afterwards.
// Gradients are left in the parameters; the caller clips and steps.
StepLosses accumulate_gradients(SarModel& model, std::span<const BatchItem> batch, double lambda,
                                bool adversarial, std::uint64_t seed, std::size_t step);

struct HistoryEntry {
  std::size_t epoch = 0;
  std::string phase;  // "train", or "source"/"target" when fine-tuning
  double loss_c = 0.0;
  double loss_d = 0.0;
  double dev_accuracy = 0.0;
  double dev_macro_f1 = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  std::size_t steps = 0;  // cumulative optimizer steps
};

struct TrainResult {
  SarModel model;  // restored to the selected (best dev) epoch
  std::vector<HistoryEntry> history;
  std::size_t best_epoch = 0;  // index into history
  std::vector<Tensor> final_state;  // parameters after the last step
  std::size_t steps = 0;
};

nlohmann::ordered_json history_to_json(std::span<const HistoryEntry> history);

// Vocabulary over every training pool (never the dev set).
Vocabulary training_vocabulary(const TrainingData& data, const TrainConfig& config);
SarModel build_model(const TrainingData& data, const TrainConfig& config);

// Called after every epoch's dev evaluation; returning false ends training
// early (the epoch just finished still takes part in selection).
using EpochHook = std::function<bool(const HistoryEntry&)>;

TrainResult train(const TrainingData& data, const TrainConfig& config,
                  const EpochHook& on_epoch = {});
TrainResult train(SarModel model, const TrainingData& data, const TrainConfig& config,
                  const EpochHook& on_epoch = {});

ConfusionMatrix evaluate(SarModel& model, std::span<const EncodedConversation> convs);
ConfusionMatrix evaluate(SarModel& model, std::span<const Conversation> convs,
                         std::size_t max_chunk = 100);

}  // namespace sarkit
