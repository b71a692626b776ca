#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sarkit/autodiff.hpp"

namespace sarkit {

// Gate order in every weight block: input, forget, cell, output.
struct LstmParams {
  LstmParams() = default;
  LstmParams(const std::string& prefix, std::size_t input_dim, std::size_t hidden,
             std::uint64_t seed);

  Parameter input_weights;   // [4H x I]
  Parameter hidden_weights;  // [4H x H]
  Parameter bias;            // [4H], forget block starts at 1.0

  std::size_t input_dim() const { return input_weights.value.cols(); }
  std::size_t hidden() const { return hidden_weights.value.cols(); }
  std::vector<Parameter*> parameters();
};

struct LstmState {
  Var h;  // [1 x H]
  Var c;  // [1 x H]
};

LstmState zero_state(Tape& tape, std::size_t hidden);

// One recurrence step on a single input row x [1 x I].
LstmState lstm_cell_step(Tape& tape, LstmParams& params, const Var& x, const LstmState& state);

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(const std::string& prefix, std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  // [->z_m ; <-z_1]: each direction's state after consuming its last input.
  Var encode_final(Tape& tape, const Var& inputs);
  // Per-position [->z_t ; <-z_t], [m x 2H].
  Var encode_sequence(Tape& tape, const Var& inputs);

  std::size_t hidden() const { return forward.hidden(); }
  std::size_t output_dim() const { return 2 * forward.hidden(); }
  std::vector<Parameter*> parameters();

  LstmParams forward;
  LstmParams backward;

 private:
  // Hidden states [m x H] in position order.
  Var run(Tape& tape, LstmParams& params, const Var& inputs, bool reverse);
};

enum class EncoderVariant { hlstm, blstm, slstm };

std::string_view variant_name(EncoderVariant v);
EncoderVariant parse_variant(std::string_view name);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::hlstm;
  std::size_t word_hidden = 100;
  std::size_t conv_hidden = 100;
  // Number of stacked word-level bi-LSTM layers for the S-LSTM variant.
  std::size_t depth = 2;
  double dropout_rate = 0.5;

  void validate() const;
};

// Word-level bi-LSTM producing sentence vectors h_i and, for the
// hierarchical variant, a conversation-level bi-LSTM over (h_1 .. h_n).
class HierEncoder {
 public:
  HierEncoder() = default;
  HierEncoder(const EncoderConfig& config, std::size_t input_dim, std::uint64_t seed);

  // words: [m x D] -> h: [1 x 2*H_w]
  Var encode_sentence(Tape& tape, const Var& words);
  // sentences: [n x 2*H_w], chronological -> U: [n x output_dim()].
  // Dropout is applied to the sentence vectors before the upper layer.
  Var encode_conversation(Tape& tape, const Var& sentences, Mode mode, Rng& dropout_rng);

  const EncoderConfig& config() const { return config_; }
  std::size_t sentence_dim() const { return 2 * config_.word_hidden; }
  std::size_t output_dim() const;
  std::vector<Parameter*> parameters();

  std::vector<BiLstm>& word_layers() { return word_layers_; }
  BiLstm* conversation_layer() { return conv_layer_ ? &*conv_layer_ : nullptr; }

 private:
  EncoderConfig config_;
  std::vector<BiLstm> word_layers_;
  std::optional<BiLstm> conv_layer_;
};

}  // namespace sarkit
