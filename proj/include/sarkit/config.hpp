#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sarkit/model.hpp"

namespace sarkit {

enum class Regime { indomain, transfer, merge, finetune, adapt_unsup, adapt_semisup, adapt_sup };
std::string_view regime_name(Regime r);
Regime parse_regime(std::string_view name);
bool is_adversarial(Regime r);

enum class OptimizerKind { automatic, adam, sgd };
std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

enum class StopMetric { dev_macro_f1, dev_accuracy };

struct TrainConfig {
  Regime regime = Regime::indomain;
  std::size_t epochs = 30;
  std::size_t batch_size = 5;  // conversations
  double adam_lr = 0.001;
  double sgd_lr0 = 0.01;
  double momentum = 0.9;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  double target_label_fraction = 1.0;
  StopMetric early_stop_metric = StopMetric::dev_macro_f1;

  EncoderVariant variant = EncoderVariant::hlstm;
  std::size_t depth = 2;
  OutputKind output = OutputKind::softmax;
  std::size_t embedding_dim = 300;
  std::size_t word_hidden = 100;
  std::size_t conv_hidden = 100;
  std::size_t disc_hidden = 100;
  std::size_t min_count = 1;
  std::size_t max_chunk = 100;
  bool freeze_embeddings = false;
  std::string pretrained_embeddings;  // empty: random initialization

  double clip_norm = 5.0;  // 0 disables clipping
  std::size_t patience = 5;
  // automatic: SGD with the dynamic learning rate for the adversarial
  // regimes, Adam for everything else.
  OptimizerKind optimizer = OptimizerKind::automatic;
  // Pins the adversarial coefficient instead of following the schedule.
  std::optional<double> fixed_lambda;
  // Hard cap on optimizer steps; 0 means no cap. Does not change the
  // schedules, which are laid out over the planned epochs.
  std::size_t max_steps = 0;

  void validate() const;
  OptimizerKind resolved_optimizer() const;
  ModelConfig model_config() const;
};

// Every key is optional; unknown keys and ill-typed values are rejected.
TrainConfig parse_train_config(const nlohmann::json& doc);
TrainConfig load_train_config(const std::filesystem::path& path);
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);

}  // namespace sarkit
