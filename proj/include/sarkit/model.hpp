#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sarkit/adversary.hpp"
#include "sarkit/corpus.hpp"
#include "sarkit/embeddings.hpp"
#include "sarkit/encoder.hpp"
#include "sarkit/output_layers.hpp"

namespace sarkit {

enum class OutputKind { softmax, crf };
std::string_view output_name(OutputKind kind);
OutputKind parse_output(std::string_view name);

struct ModelConfig {
  EncoderConfig encoder;
  OutputKind output = OutputKind::softmax;
  std::size_t embedding_dim = 300;
  std::size_t disc_hidden = 100;
  bool with_discriminator = false;
  bool freeze_embeddings = false;
};

// A conversation mapped through a vocabulary: token ids per sentence and a
// tag code per sentence (-1 when unlabeled).
struct EncodedConversation {
  std::string id;
  DomainLabel domain = DomainLabel::target;
  std::vector<std::vector<int>> sentences;
  LabelSequence labels;

  bool fully_labeled() const;
  bool any_labeled() const;
};

EncodedConversation encode_conversation(const Vocabulary& vocab, const Conversation& conv);
std::vector<EncodedConversation> encode_corpus(const Vocabulary& vocab,
                                               std::span<const Conversation> corpus);

// Embeddings -> hierarchical encoder -> softmax or CRF output, plus an
// optional domain discriminator reading the same sentence representations.
class SarModel {
 public:
  SarModel() = default;
  // `embeddings`, when given, must be [|vocab| x embedding_dim]; otherwise
  // rows are drawn per token from the seed.
  SarModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed,
           std::optional<Tensor> embeddings = std::nullopt);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  bool has_discriminator() const { return discriminator_.has_value(); }

  // Sentence representations U [n x |u|]. In train mode dropout is applied
  // to the sentence vectors and again to U.
  Var encode(Tape& tape, const EncodedConversation& conv, Mode mode, Rng& dropout_rng);
  // Per-sentence class scores [n x K].
  Var node_scores(Tape& tape, const Var& U);
  // Summed cross-entropy (softmax) or sequence NLL (CRF). Every sentence
  // must be labeled.
  Var classification_loss(Tape& tape, const Var& U, std::span<const int> labels);
  // Summed domain BCE of every sentence, read through a gradient reversal
  // with coefficient lambda.
  Var domain_loss(Tape& tape, const Var& U, DomainLabel domain, double lambda);

  LabelSequence predict(const EncodedConversation& conv);

  std::vector<Parameter*> parameters();
  // Everything except the discriminator: the parameters a non-adversarial
  // regime trains.
  std::vector<Parameter*> task_parameters();
  std::vector<Parameter*> discriminator_parameters();
  Parameter* find_parameter(std::string_view name);

  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& values);

  EmbeddingTable& embeddings() { return embeddings_; }
  HierEncoder& encoder() { return encoder_; }
  Parameter& classifier() { return classifier_; }
  Parameter* transitions() { return transitions_ ? &*transitions_ : nullptr; }
  Discriminator* discriminator() { return discriminator_ ? &*discriminator_ : nullptr; }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  EmbeddingTable embeddings_;
  HierEncoder encoder_;
  Parameter classifier_;  // [K x |u|]
  std::optional<Parameter> transitions_;
  std::optional<Discriminator> discriminator_;
};

}  // namespace sarkit
