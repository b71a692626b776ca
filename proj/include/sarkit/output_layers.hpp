#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sarkit/autodiff.hpp"

namespace sarkit {

// Coarse speech-act tagset. Codes are part of the checkpoint format.
enum class ActTag : int { SU = 0, R = 1, Q = 2, P = 3, ST = 4 };

inline constexpr std::size_t kNumTags = 5;
inline constexpr std::array<std::string_view, kNumTags> kTagNames{"SU", "R", "Q", "P", "ST"};

std::string_view tag_name(int code);
std::optional<int> parse_tag(std::string_view name);

// Per-sentence tag codes; -1 marks an unlabeled sentence.
using LabelSequence = std::vector<int>;

// ---- softmax output --------------------------------------------------------

// probs[i, k] = softmax_k(W_k . u_i) for U [n x d], W [K x d].
Var softmax_classify(const Var& U, const Var& W);
// Sum over sentences of -log probs[i, y_i].
Var cross_entropy_loss(const Var& probs, std::span<const int> labels);
// Same loss evaluated from logits with a log-sum-exp; used for training.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

// ---- linear-chain CRF ------------------------------------------------------
//
// Transition matrix layout: (K+2) x (K+2), A[from][to], where index K is the
// virtual START state and K+1 the virtual STOP state. Transitions into START
// and out of STOP are -infinity and never read or updated.

inline std::size_t crf_start(std::size_t num_tags) { return num_tags; }
inline std::size_t crf_stop(std::size_t num_tags) { return num_tags + 1; }

Tensor crf_initial_transitions(std::size_t num_tags);

// log Z over START -> y_1 -> ... -> y_n -> STOP.
double crf_log_partition(const Tensor& node_scores, const Tensor& transitions);
// Unnormalized log score of one tag sequence, boundary transitions included.
double crf_sequence_score(const Tensor& node_scores, const Tensor& transitions,
                          std::span<const int> labels);

Var crf_log_partition(const Var& node_scores, const Var& transitions);
// log Z - score(y); gradients are expected minus observed feature counts.
Var crf_nll(const Var& node_scores, const Var& transitions, std::span<const int> labels);

struct ViterbiResult {
  LabelSequence labels;
  double score = 0.0;
};

// Max-product decoding; ties go to the lowest tag code.
ViterbiResult viterbi_decode(const Tensor& node_scores, const Tensor& transitions);

}  // namespace sarkit
