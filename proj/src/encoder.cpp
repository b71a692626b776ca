#include "sarkit/encoder.hpp"

#include <algorithm>

#include "sarkit/errors.hpp"
#include "sarkit/init.hpp"

namespace sarkit {

LstmParams::LstmParams(const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                       std::uint64_t seed) {
  Rng wx(derive_seed(seed, hash_tag(prefix + ".input_weights")));
  Rng wh(derive_seed(seed, hash_tag(prefix + ".hidden_weights")));
  input_weights = Parameter(prefix + ".input_weights", xavier_init({4 * hidden, input_dim}, wx));
  hidden_weights = Parameter(prefix + ".hidden_weights", xavier_init({4 * hidden, hidden}, wh));
  Tensor b({4 * hidden}, 0.0);
  std::fill_n(b.values().begin() + static_cast<std::ptrdiff_t>(hidden), hidden, 1.0);
  bias = Parameter(prefix + ".bias", std::move(b));
}

std::vector<Parameter*> LstmParams::parameters() {
  return {&input_weights, &hidden_weights, &bias};
}

LstmState zero_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Tensor({1, hidden})), tape.constant(Tensor({1, hidden}))};
}

LstmState lstm_cell_step(Tape& tape, LstmParams& params, const Var& x, const LstmState& state) {
  if (x.cols() != params.input_dim()) {
    throw DimensionError("lstm_cell_step: input width " + std::to_string(x.cols()) +
                         " does not match " + std::to_string(params.input_dim()));
  }
  const std::size_t h = params.hidden();
  Var gates = add(linear(x, tape.parameter(params.input_weights), tape.parameter(params.bias)),
                  linear(state.h, tape.parameter(params.hidden_weights)));
  Var out = lstm_cell(gates, state.c);
  return {slice_cols(out, 0, h), slice_cols(out, h, h)};
}

BiLstm::BiLstm(const std::string& prefix, std::size_t input_dim, std::size_t hidden,
               std::uint64_t seed)
    : forward(prefix + ".fwd", input_dim, hidden, seed),
      backward(prefix + ".bwd", input_dim, hidden, seed) {}

Var BiLstm::run(Tape& tape, LstmParams& params, const Var& inputs, bool reverse) {
  const std::size_t m = inputs.rows();
  if (m == 0) throw ContractError("bi-LSTM over an empty sequence");
  if (inputs.cols() != params.input_dim()) {
    throw DimensionError("bi-LSTM input width " + std::to_string(inputs.cols()) +
                         " does not match " + std::to_string(params.input_dim()));
  }
  // Input projections for all positions in one product; the recurrence
  // itself runs inside a single fused node.
  Var projected =
      linear(inputs, tape.parameter(params.input_weights), tape.parameter(params.bias));
  return lstm_sequence(projected, tape.parameter(params.hidden_weights), reverse);
}

Var BiLstm::encode_final(Tape& tape, const Var& inputs) {
  Var fwd = run(tape, forward, inputs, false);
  Var bwd = run(tape, backward, inputs, true);
  return concat(slice_rows(fwd, fwd.rows() - 1, 1), slice_rows(bwd, 0, 1), 1);
}

Var BiLstm::encode_sequence(Tape& tape, const Var& inputs) {
  return concat(run(tape, forward, inputs, false), run(tape, backward, inputs, true), 1);
}

std::vector<Parameter*> BiLstm::parameters() {
  auto out = forward.parameters();
  auto b = backward.parameters();
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::string_view variant_name(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::hlstm: return "H-LSTM";
    case EncoderVariant::blstm: return "B-LSTM";
    case EncoderVariant::slstm: return "S-LSTM";
  }
  return "H-LSTM";
}

EncoderVariant parse_variant(std::string_view name) {
  if (name == "H-LSTM") return EncoderVariant::hlstm;
  if (name == "B-LSTM") return EncoderVariant::blstm;
  if (name == "S-LSTM") return EncoderVariant::slstm;
  throw ConfigError("unknown encoder variant \"" + std::string(name) +
                    "\" (expected H-LSTM, B-LSTM or S-LSTM)");
}

void EncoderConfig::validate() const {
  if (word_hidden == 0 || conv_hidden == 0) throw ConfigError("hidden sizes must be >= 1");
  if (variant == EncoderVariant::slstm && depth < 2) {
    throw ConfigError("S-LSTM needs depth >= 2");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
}

HierEncoder::HierEncoder(const EncoderConfig& config, std::size_t input_dim, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const std::size_t layers = config_.variant == EncoderVariant::slstm ? config_.depth : 1;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    word_layers_.emplace_back("word." + std::to_string(l), in, config_.word_hidden, seed);
    in = 2 * config_.word_hidden;
  }
  if (config_.variant == EncoderVariant::hlstm) {
    conv_layer_.emplace("conv", 2 * config_.word_hidden, config_.conv_hidden, seed);
  }
}

std::size_t HierEncoder::output_dim() const {
  return config_.variant == EncoderVariant::hlstm ? 2 * config_.conv_hidden
                                                  : 2 * config_.word_hidden;
}

Var HierEncoder::encode_sentence(Tape& tape, const Var& words) {
  if (words.rows() == 0 || words.value().size() == 0) {
    throw ContractError("encode_sentence: empty sentence");
  }
  Var x = words;
  for (std::size_t l = 0; l + 1 < word_layers_.size(); ++l) {
    x = word_layers_[l].encode_sequence(tape, x);
  }
  return word_layers_.back().encode_final(tape, x);
}

Var HierEncoder::encode_conversation(Tape& tape, const Var& sentences, Mode mode,
                                     Rng& dropout_rng) {
  if (sentences.rows() == 0 || sentences.value().size() == 0) {
    throw ContractError("encode_conversation: empty conversation");
  }
  if (!conv_layer_) return sentences;
  Var h = dropout(sentences, config_.dropout_rate, mode, dropout_rng);
  return conv_layer_->encode_sequence(tape, h);
}

std::vector<Parameter*> HierEncoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : word_layers_) {
    auto p = layer.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (conv_layer_) {
    auto p = conv_layer_->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace sarkit
