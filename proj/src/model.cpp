#include "sarkit/model.hpp"

#include <algorithm>

#include "sarkit/errors.hpp"
#include "sarkit/init.hpp"

namespace sarkit {

std::string_view output_name(OutputKind kind) {
  return kind == OutputKind::crf ? "crf" : "softmax";
}

OutputKind parse_output(std::string_view name) {
  if (name == "softmax") return OutputKind::softmax;
  if (name == "crf") return OutputKind::crf;
  throw ConfigError("unknown output layer \"" + std::string(name) + "\" (expected softmax or crf)");
}

bool EncodedConversation::fully_labeled() const {
  return std::all_of(labels.begin(), labels.end(), [](int y) { return y >= 0; });
}

bool EncodedConversation::any_labeled() const {
  return std::any_of(labels.begin(), labels.end(), [](int y) { return y >= 0; });
}

EncodedConversation encode_conversation(const Vocabulary& vocab, const Conversation& conv) {
  EncodedConversation out;
  out.id = conv.id;
  out.domain = conv.domain;
  for (const Sentence* s : conv.sentences()) {
    out.sentences.push_back(vocab.encode(s->tokens));
    out.labels.push_back(s->act.value_or(-1));
  }
  return out;
}

std::vector<EncodedConversation> encode_corpus(const Vocabulary& vocab,
                                               std::span<const Conversation> corpus) {
  std::vector<EncodedConversation> out;
  out.reserve(corpus.size());
  for (const auto& conv : corpus) out.push_back(encode_conversation(vocab, conv));
  return out;
}

SarModel::SarModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed,
                   std::optional<Tensor> embeddings)
    : config_(config), vocab_(std::move(vocab)) {
  config_.encoder.validate();
  if (config_.embedding_dim == 0) throw ConfigError("embedding_dim must be >= 1");
  embeddings_ = EmbeddingTable(vocab_.size(), config_.embedding_dim, !config_.freeze_embeddings);
  if (embeddings) {
    if (embeddings->shape() != Shape{vocab_.size(), config_.embedding_dim}) {
      throw DimensionError("embedding matrix " + to_string(embeddings->shape()) +
                           " does not match vocabulary " + std::to_string(vocab_.size()) +
                           " x " + std::to_string(config_.embedding_dim));
    }
    embeddings_.parameter().value = std::move(*embeddings);
  } else {
    embeddings_.parameter().value = random_embedding_rows(vocab_, config_.embedding_dim, seed);
  }

  encoder_ = HierEncoder(config_.encoder, config_.embedding_dim, seed);
  const std::size_t u = encoder_.output_dim();
  Rng rc(derive_seed(seed, hash_tag("classifier.weights")));
  classifier_ = Parameter("classifier.weights", xavier_init({kNumTags, u}, rc));
  if (config_.output == OutputKind::crf) {
    transitions_.emplace("crf.transitions", crf_initial_transitions(kNumTags));
  }
  if (config_.with_discriminator) discriminator_.emplace(u, config_.disc_hidden, seed);
}

Var SarModel::encode(Tape& tape, const EncodedConversation& conv, Mode mode, Rng& dropout_rng) {
  if (conv.sentences.empty()) throw ContractError("conversation " + conv.id + " has no sentences");
  std::vector<Var> rows;
  rows.reserve(conv.sentences.size());
  for (const auto& ids : conv.sentences) {
    rows.push_back(encoder_.encode_sentence(tape, lookup(tape, embeddings_, ids)));
  }
  Var H = concat(rows, 0);
  Var U = encoder_.encode_conversation(tape, H, mode, dropout_rng);
  return dropout(U, config_.encoder.dropout_rate, mode, dropout_rng);
}

Var SarModel::node_scores(Tape& tape, const Var& U) {
  return linear(U, tape.parameter(classifier_));
}

Var SarModel::classification_loss(Tape& tape, const Var& U, std::span<const int> labels) {
  Var scores = node_scores(tape, U);
  if (transitions_) return crf_nll(scores, tape.parameter(*transitions_), labels);
  return softmax_cross_entropy(scores, labels);
}

Var SarModel::domain_loss(Tape& tape, const Var& U, DomainLabel domain, double lambda) {
  if (!discriminator_) throw StateError("model was built without a domain discriminator");
  return domain_bce_loss(discriminator_->forward(tape, grad_reverse(U, lambda)), domain);
}

LabelSequence SarModel::predict(const EncodedConversation& conv) {
  Tape tape;
  Rng unused(0);
  Var U = encode(tape, conv, Mode::eval, unused);
  Var scores = node_scores(tape, U);
  if (transitions_) return viterbi_decode(scores.value(), transitions_->value).labels;
  const Tensor& s = scores.value();
  LabelSequence out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.cols(); ++k) {
      if (s.at(i, k) > s.at(i, best)) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<Parameter*> SarModel::task_parameters() {
  std::vector<Parameter*> out{&embeddings_.parameter()};
  for (Parameter* p : encoder_.parameters()) out.push_back(p);
  out.push_back(&classifier_);
  if (transitions_) out.push_back(&*transitions_);
  return out;
}

std::vector<Parameter*> SarModel::discriminator_parameters() {
  if (!discriminator_) return {};
  return discriminator_->parameters();
}

std::vector<Parameter*> SarModel::parameters() {
  auto out = task_parameters();
  for (Parameter* p : discriminator_parameters()) out.push_back(p);
  return out;
}

Parameter* SarModel::find_parameter(std::string_view name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::vector<Tensor> SarModel::snapshot() {
  std::vector<Tensor> out;
  for (Parameter* p : parameters()) out.push_back(p->value);
  return out;
}

void SarModel::restore(const std::vector<Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) {
    throw ContractError("restore: expected " + std::to_string(params.size()) + " tensors, got " +
                        std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i]->value.shape()) {
      throw DimensionError("restore: " + params[i]->name + " expects " +
                           to_string(params[i]->value.shape()) + ", got " +
                           to_string(values[i].shape()));
    }
    params[i]->value = values[i];
  }
}

}  // namespace sarkit
