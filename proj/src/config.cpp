#include "sarkit/config.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "sarkit/errors.hpp"

namespace sarkit {

namespace {

constexpr std::array<std::pair<Regime, std::string_view>, 7> kRegimes{{
    {Regime::indomain, "indomain"},
    {Regime::transfer, "transfer"},
    {Regime::merge, "merge"},
    {Regime::finetune, "finetune"},
    {Regime::adapt_unsup, "adapt-unsup"},
    {Regime::adapt_semisup, "adapt-semisup"},
    {Regime::adapt_sup, "adapt-sup"},
}};

const std::set<std::string, std::less<>> kKnownKeys{
    "regime",        "epochs",        "batch_size",      "adam_lr",
    "sgd_lr0",       "momentum",      "dropout_rate",    "seed",
    "target_label_fraction",          "early_stop_metric", "variant",
    "depth",         "output",        "embedding_dim",   "word_hidden",
    "conv_hidden",   "disc_hidden",   "min_count",       "max_chunk",
    "freeze_embeddings",              "pretrained_embeddings", "clip_norm",
    "patience",      "optimizer",     "fixed_lambda",    "max_steps"};

bool is_count(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <typename T>
T get(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(std::string("config key \"") + key + "\" must be a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(std::string("config key \"") + key + "\" must be a string");
  } else if constexpr (std::is_integral_v<T>) {
    if (!is_count(v)) {
      throw ConfigError(std::string("config key \"") + key + "\" must be a non-negative integer");
    }
  } else {
    if (!v.is_number()) throw ConfigError(std::string("config key \"") + key + "\" must be a number");
  }
  return v.get<T>();
}

template <typename T>
void read(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = get<T>(doc, key);
}

}  // namespace

std::string_view regime_name(Regime r) {
  for (const auto& [value, name] : kRegimes) {
    if (value == r) return name;
  }
  return "indomain";
}

Regime parse_regime(std::string_view name) {
  for (const auto& [value, n] : kRegimes) {
    if (n == name) return value;
  }
  throw ConfigError("unknown regime \"" + std::string(name) + "\"");
}

bool is_adversarial(Regime r) {
  return r == Regime::adapt_unsup || r == Regime::adapt_semisup || r == Regime::adapt_sup;
}

std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::automatic: break;
  }
  return "auto";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "auto") return OptimizerKind::automatic;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer \"" + std::string(name) + "\" (expected auto, adam or sgd)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (regime == Regime::adapt_unsup && batch_size < 2) {
    throw ConfigError("adapt-unsup needs batch_size >= 2 (source and target halves)");
  }
  if ((regime == Regime::adapt_semisup || regime == Regime::adapt_sup) && batch_size < 3) {
    throw ConfigError(std::string(regime_name(regime)) + " needs batch_size >= 3");
  }
  if (!(adam_lr > 0.0) || !(sgd_lr0 > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(target_label_fraction > 0.0 && target_label_fraction <= 1.0)) {
    throw ConfigError("target_label_fraction must lie in (0, 1]");
  }
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (min_count == 0) throw ConfigError("min_count must be >= 1");
  if (max_chunk == 0) throw ConfigError("max_chunk must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (fixed_lambda && !std::isfinite(*fixed_lambda)) throw ConfigError("fixed_lambda must be finite");
  model_config().encoder.validate();
}

OptimizerKind TrainConfig::resolved_optimizer() const {
  if (optimizer != OptimizerKind::automatic) return optimizer;
  return is_adversarial(regime) ? OptimizerKind::sgd : OptimizerKind::adam;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.encoder.variant = variant;
  m.encoder.word_hidden = word_hidden;
  m.encoder.conv_hidden = conv_hidden;
  m.encoder.depth = depth;
  m.encoder.dropout_rate = dropout_rate;
  m.output = output;
  m.embedding_dim = embedding_dim;
  m.disc_hidden = disc_hidden;
  m.with_discriminator = is_adversarial(regime);
  m.freeze_embeddings = freeze_embeddings;
  return m;
}

TrainConfig parse_train_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : doc.items()) {
    if (!kKnownKeys.contains(item.key())) throw ConfigError("unknown config key \"" + item.key() + "\"");
  }
  TrainConfig c;
  if (doc.contains("regime")) c.regime = parse_regime(get<std::string>(doc, "regime"));
  read(doc, "epochs", c.epochs);
  read(doc, "batch_size", c.batch_size);
  read(doc, "adam_lr", c.adam_lr);
  read(doc, "sgd_lr0", c.sgd_lr0);
  read(doc, "momentum", c.momentum);
  read(doc, "dropout_rate", c.dropout_rate);
  read(doc, "seed", c.seed);
  read(doc, "target_label_fraction", c.target_label_fraction);
  if (doc.contains("early_stop_metric")) {
    const auto m = get<std::string>(doc, "early_stop_metric");
    if (m == "dev_macro_f1") c.early_stop_metric = StopMetric::dev_macro_f1;
    else if (m == "dev_accuracy") c.early_stop_metric = StopMetric::dev_accuracy;
    else throw ConfigError("unknown early_stop_metric \"" + m + "\"");
  }
  if (doc.contains("variant")) c.variant = parse_variant(get<std::string>(doc, "variant"));
  read(doc, "depth", c.depth);
  if (doc.contains("output")) c.output = parse_output(get<std::string>(doc, "output"));
  read(doc, "embedding_dim", c.embedding_dim);
  read(doc, "word_hidden", c.word_hidden);
  read(doc, "conv_hidden", c.conv_hidden);
  read(doc, "disc_hidden", c.disc_hidden);
  read(doc, "min_count", c.min_count);
  read(doc, "max_chunk", c.max_chunk);
  read(doc, "freeze_embeddings", c.freeze_embeddings);
  read(doc, "pretrained_embeddings", c.pretrained_embeddings);
  read(doc, "clip_norm", c.clip_norm);
  read(doc, "patience", c.patience);
  if (doc.contains("optimizer")) c.optimizer = parse_optimizer(get<std::string>(doc, "optimizer"));
  if (doc.contains("fixed_lambda") && !doc.at("fixed_lambda").is_null()) {
    c.fixed_lambda = get<double>(doc, "fixed_lambda");
  }
  read(doc, "max_steps", c.max_steps);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_train_config(doc);
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["regime"] = regime_name(c.regime);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["adam_lr"] = c.adam_lr;
  j["sgd_lr0"] = c.sgd_lr0;
  j["momentum"] = c.momentum;
  j["dropout_rate"] = c.dropout_rate;
  j["seed"] = c.seed;
  j["target_label_fraction"] = c.target_label_fraction;
  j["early_stop_metric"] =
      c.early_stop_metric == StopMetric::dev_macro_f1 ? "dev_macro_f1" : "dev_accuracy";
  j["variant"] = variant_name(c.variant);
  j["depth"] = c.depth;
  j["output"] = output_name(c.output);
  j["embedding_dim"] = c.embedding_dim;
  j["word_hidden"] = c.word_hidden;
  j["conv_hidden"] = c.conv_hidden;
  j["disc_hidden"] = c.disc_hidden;
  j["min_count"] = c.min_count;
  j["max_chunk"] = c.max_chunk;
  j["freeze_embeddings"] = c.freeze_embeddings;
  j["pretrained_embeddings"] = c.pretrained_embeddings;
  j["clip_norm"] = c.clip_norm;
  j["patience"] = c.patience;
  j["optimizer"] = optimizer_name(c.optimizer);
  j["fixed_lambda"] = c.fixed_lambda ? nlohmann::ordered_json(*c.fixed_lambda) : nullptr;
  j["max_steps"] = c.max_steps;
  return j;
}

}  // namespace sarkit
