#include "sarkit/output_layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sarkit/errors.hpp"

namespace sarkit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

void check_labels(std::span<const int> labels, std::size_t n, std::size_t num_tags,
                  const char* where) {
  if (labels.size() != n) {
    throw DataError(std::string(where) + ": " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(n) + " sentences");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) {
      throw DataError(std::string(where) + ": sentence " + std::to_string(i) + " has no label");
    }
    if (static_cast<std::size_t>(labels[i]) >= num_tags) {
      throw DataError(std::string(where) + ": label " + std::to_string(labels[i]) +
                      " outside 0.." + std::to_string(num_tags - 1));
    }
  }
}

void check_crf_shapes(const Tensor& node_scores, const Tensor& transitions) {
  const std::size_t k = node_scores.cols();
  if (node_scores.rank() != 2 || node_scores.rows() == 0) {
    throw ContractError("crf: node scores must be a non-empty [n x K] matrix, got " +
                        to_string(node_scores.shape()));
  }
  if (transitions.shape() != Shape{k + 2, k + 2}) {
    throw DimensionError("crf: transitions " + to_string(transitions.shape()) +
                         " do not match " + std::to_string(k) + " tags");
  }
}

// Forward (alpha) and backward (beta) log-messages over the lattice.
struct Lattice {
  std::size_t n = 0, k = 0;
  std::vector<double> alpha, beta;
  double log_z = 0.0;
};

Lattice run_forward_backward(const Tensor& node, const Tensor& trans, bool with_beta) {
  Lattice lat;
  lat.n = node.rows();
  lat.k = node.cols();
  const std::size_t n = lat.n, k = lat.k;
  const std::size_t start = crf_start(k), stop = crf_stop(k);
  lat.alpha.assign(n * k, 0.0);
  std::vector<double> buf(k);
  for (std::size_t y = 0; y < k; ++y) lat.alpha[y] = trans.at(start, y) + node.at(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < k; ++y) {
      for (std::size_t prev = 0; prev < k; ++prev) {
        buf[prev] = lat.alpha[(i - 1) * k + prev] + trans.at(prev, y);
      }
      lat.alpha[i * k + y] = node.at(i, y) + log_sum_exp(buf);
    }
  }
  for (std::size_t y = 0; y < k; ++y) buf[y] = lat.alpha[(n - 1) * k + y] + trans.at(y, stop);
  lat.log_z = log_sum_exp(buf);
  if (with_beta) {
    lat.beta.assign(n * k, 0.0);
    for (std::size_t y = 0; y < k; ++y) lat.beta[(n - 1) * k + y] = trans.at(y, stop);
    for (std::size_t i = n - 1; i-- > 0;) {
      for (std::size_t y = 0; y < k; ++y) {
        for (std::size_t next = 0; next < k; ++next) {
          buf[next] = trans.at(y, next) + node.at(i + 1, next) + lat.beta[(i + 1) * k + next];
        }
        lat.beta[i * k + y] = log_sum_exp(buf);
      }
    }
  }
  return lat;
}

// Accumulates scale * (expected counts) into the node and transition
// gradients, then subtracts scale * (gold counts) when labels are given.
void accumulate_crf_grad(const Tensor& node, const Tensor& trans, const Lattice& lat,
                         std::span<const int> gold, double scale, std::span<double> dnode,
                         std::span<double> dtrans) {
  const std::size_t n = lat.n, k = lat.k, width = k + 2;
  const std::size_t start = crf_start(k), stop = crf_stop(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t y = 0; y < k; ++y) {
      const double p = std::exp(lat.alpha[i * k + y] + lat.beta[i * k + y] - lat.log_z);
      if (!dnode.empty()) dnode[i * k + y] += scale * p;
      if (!dtrans.empty()) {
        if (i == 0) dtrans[start * width + y] += scale * p;
        if (i == n - 1) dtrans[y * width + stop] += scale * p;
      }
    }
  }
  if (!dtrans.empty()) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          const double p = std::exp(lat.alpha[i * k + a] + trans.at(a, b) + node.at(i + 1, b) +
                                    lat.beta[(i + 1) * k + b] - lat.log_z);
          dtrans[a * width + b] += scale * p;
        }
      }
    }
  }
  if (gold.empty()) return;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(gold[i]);
    if (!dnode.empty()) dnode[i * k + y] -= scale;
    if (!dtrans.empty()) {
      if (i == 0) dtrans[start * width + y] -= scale;
      if (i + 1 < n) dtrans[y * width + static_cast<std::size_t>(gold[i + 1])] -= scale;
      if (i == n - 1) dtrans[y * width + stop] -= scale;
    }
  }
}

}  // namespace

std::string_view tag_name(int code) {
  if (code < 0 || static_cast<std::size_t>(code) >= kNumTags) {
    throw DataError("tag code " + std::to_string(code) + " outside 0..4");
  }
  return kTagNames[static_cast<std::size_t>(code)];
}

std::optional<int> parse_tag(std::string_view name) {
  for (std::size_t k = 0; k < kNumTags; ++k) {
    if (kTagNames[k] == name) return static_cast<int>(k);
  }
  return std::nullopt;
}

Var softmax_classify(const Var& U, const Var& W) { return softmax(linear(U, W)); }

Var cross_entropy_loss(const Var& probs, std::span<const int> labels) {
  const Tensor& p = probs.value();
  const std::size_t n = p.rows(), k = p.cols();
  check_labels(labels, n, k, "cross_entropy_loss");
  std::vector<int> gold(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss -= std::log(p.at(i, static_cast<std::size_t>(gold[i])));
  const std::size_t pi = probs.id();
  return probs.tape().record(Tensor::scalar(loss), {probs},
                             [pi, gold = std::move(gold), k](Tape& tape, std::size_t self) {
                               auto dp = tape.grad_buffer(pi);
                               if (dp.empty()) return;
                               const double g = tape.grad(self)[0];
                               const Tensor& p = tape.value(pi);
                               for (std::size_t i = 0; i < gold.size(); ++i) {
                                 const std::size_t j = i * k + static_cast<std::size_t>(gold[i]);
                                 dp[j] -= g / p[j];
                               }
                             });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), k = z.cols();
  check_labels(labels, n, k, "softmax_cross_entropy");
  std::vector<int> gold(labels.begin(), labels.end());
  std::vector<double> probs(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = z.values().subspan(i * k, k);
    const double lse = log_sum_exp(row);
    for (std::size_t c = 0; c < k; ++c) probs[i * k + c] = std::exp(row[c] - lse);
    loss += lse - row[static_cast<std::size_t>(gold[i])];
  }
  const std::size_t zi = logits.id();
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [zi, gold = std::move(gold), probs = std::move(probs), k](Tape& tape, std::size_t self) {
        auto dz = tape.grad_buffer(zi);
        if (dz.empty()) return;
        const double g = tape.grad(self)[0];
        for (std::size_t i = 0; i < gold.size(); ++i) {
          for (std::size_t c = 0; c < k; ++c) {
            const double target = static_cast<int>(c) == gold[i] ? 1.0 : 0.0;
            dz[i * k + c] += g * (probs[i * k + c] - target);
          }
        }
      });
}

Tensor crf_initial_transitions(std::size_t num_tags) {
  const std::size_t w = num_tags + 2;
  Tensor t({w, w}, 0.0);
  for (std::size_t from = 0; from < w; ++from) t.at(from, crf_start(num_tags)) = kNegInf;
  for (std::size_t to = 0; to < w; ++to) t.at(crf_stop(num_tags), to) = kNegInf;
  return t;
}

double crf_log_partition(const Tensor& node_scores, const Tensor& transitions) {
  check_crf_shapes(node_scores, transitions);
  return run_forward_backward(node_scores, transitions, false).log_z;
}

double crf_sequence_score(const Tensor& node_scores, const Tensor& transitions,
                          std::span<const int> labels) {
  check_crf_shapes(node_scores, transitions);
  const std::size_t n = node_scores.rows(), k = node_scores.cols();
  check_labels(labels, n, k, "crf_sequence_score");
  double s = transitions.at(crf_start(k), static_cast<std::size_t>(labels[0]));
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    s += node_scores.at(i, y);
    const std::size_t next = i + 1 < n ? static_cast<std::size_t>(labels[i + 1]) : crf_stop(k);
    s += transitions.at(y, next);
  }
  return s;
}

Var crf_log_partition(const Var& node_scores, const Var& transitions) {
  const Tensor& node = node_scores.value();
  const Tensor& trans = transitions.value();
  check_crf_shapes(node, trans);
  const double log_z = run_forward_backward(node, trans, false).log_z;
  const std::size_t ni = node_scores.id(), ti = transitions.id();
  return node_scores.tape().record(
      Tensor::scalar(log_z), {node_scores, transitions}, [ni, ti](Tape& tape, std::size_t self) {
        const Tensor& node = tape.value(ni);
        const Tensor& trans = tape.value(ti);
        const Lattice lat = run_forward_backward(node, trans, true);
        accumulate_crf_grad(node, trans, lat, {}, tape.grad(self)[0], tape.grad_buffer(ni),
                            tape.grad_buffer(ti));
      });
}

Var crf_nll(const Var& node_scores, const Var& transitions, std::span<const int> labels) {
  const Tensor& node = node_scores.value();
  const Tensor& trans = transitions.value();
  check_crf_shapes(node, trans);
  check_labels(labels, node.rows(), node.cols(), "crf_nll");
  const double log_z = run_forward_backward(node, trans, false).log_z;
  const double nll = log_z - crf_sequence_score(node, trans, labels);
  std::vector<int> gold(labels.begin(), labels.end());
  const std::size_t ni = node_scores.id(), ti = transitions.id();
  return node_scores.tape().record(
      Tensor::scalar(nll), {node_scores, transitions},
      [ni, ti, gold = std::move(gold)](Tape& tape, std::size_t self) {
        const Tensor& node = tape.value(ni);
        const Tensor& trans = tape.value(ti);
        const Lattice lat = run_forward_backward(node, trans, true);
        accumulate_crf_grad(node, trans, lat, gold, tape.grad(self)[0], tape.grad_buffer(ni),
                            tape.grad_buffer(ti));
      });
}

ViterbiResult viterbi_decode(const Tensor& node_scores, const Tensor& transitions) {
  check_crf_shapes(node_scores, transitions);
  const std::size_t n = node_scores.rows(), k = node_scores.cols();
  const std::size_t start = crf_start(k), stop = crf_stop(k);
  std::vector<double> delta(n * k);
  std::vector<std::size_t> back(n * k, 0);
  for (std::size_t y = 0; y < k; ++y) delta[y] = transitions.at(start, y) + node_scores.at(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < k; ++y) {
      std::size_t best = 0;
      double best_score = delta[(i - 1) * k] + transitions.at(0, y);
      for (std::size_t prev = 1; prev < k; ++prev) {
        const double s = delta[(i - 1) * k + prev] + transitions.at(prev, y);
        if (s > best_score) {
          best_score = s;
          best = prev;
        }
      }
      delta[i * k + y] = best_score + node_scores.at(i, y);
      back[i * k + y] = best;
    }
  }
  std::size_t last = 0;
  double best_score = delta[(n - 1) * k] + transitions.at(0, stop);
  for (std::size_t y = 1; y < k; ++y) {
    const double s = delta[(n - 1) * k + y] + transitions.at(y, stop);
    if (s > best_score) {
      best_score = s;
      last = y;
    }
  }
  ViterbiResult result;
  result.score = best_score;
  result.labels.assign(n, 0);
  std::size_t y = last;
  for (std::size_t i = n; i-- > 0;) {
    result.labels[i] = static_cast<int>(y);
    y = back[i * k + y];
  }
  return result;
}

}  // namespace sarkit
