#include "sarkit/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "sarkit/adversary.hpp"
#include "sarkit/autodiff.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/model.hpp"
#include "sarkit/optim.hpp"
#include "sarkit/output_layers.hpp"

namespace sarkit {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kCrfTolerance = 1e-8;
constexpr double kZeroTransitionTolerance = 1e-9;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero, so relu and log stay off their kinks.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    const double mag = rng.uniform(0.2, 1.5);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

// Contracts y against fixed random weights so every output coordinate
// contributes to the checked scalar.
Var project(Tape& tape, const Var& y, const Tensor& weights) {
  return sum(mul(y, tape.constant(weights)));
}

class Collector {
 public:
  void record(const std::string& name, double error, double tolerance, std::string detail = {}) {
    auto it = std::find_if(checks_.begin(), checks_.end(),
                           [&](const CheckResult& c) { return c.name == name; });
    if (it == checks_.end()) {
      checks_.push_back({name, 0.0, tolerance, true, {}});
      it = checks_.end() - 1;
    }
    const bool ok = error <= tolerance;  // NaN fails
    it->max_error = std::isnan(error) || std::isnan(it->max_error) ? std::numeric_limits<double>::quiet_NaN()
                                                                   : std::max(it->max_error, error);
    if (!ok && it->passed) {
      it->passed = false;
      it->detail = std::move(detail);
    }
  }

  std::vector<CheckResult> take() { return std::move(checks_); }

 private:
  std::vector<CheckResult> checks_;
};

// ---- gradient suite --------------------------------------------------------

void check_ops(Collector& out, std::uint64_t seed) {
  Rng rng(seed);
  const auto unary = [&](const std::string& name, Shape shape, bool avoid_zero,
                         const std::function<Var(const Var&)>& op) {
    const Tensor x = avoid_zero ? away_from_zero(shape, rng) : random_tensor(shape, rng);
    Tape probe;
    const Shape out_shape = op(probe.constant(x)).shape();
    const Tensor w = random_tensor(out_shape, rng);
    const double err = finite_diff_check(
        [&](Tape& tape, const Var& v) { return project(tape, op(v), w); }, x);
    out.record(name, err, kGradTolerance, "seed " + std::to_string(seed));
  };

  const Tensor b34 = random_tensor({3, 4}, rng);
  const Tensor b42 = random_tensor({4, 2}, rng);
  const Tensor row4 = random_tensor({1, 4}, rng);
  const Tensor w24 = random_tensor({2, 4}, rng);
  const Tensor bias2 = random_tensor({2}, rng);

  unary("matmul (left)", {3, 4}, false, [&](const Var& v) { return matmul(v, v.tape().constant(b42)); });
  unary("matmul (right)", {4, 2}, false, [&](const Var& v) { return matmul(v.tape().constant(b34), v); });
  unary("linear (input)", {3, 4}, false, [&](const Var& v) {
    return linear(v, v.tape().constant(w24), v.tape().constant(bias2));
  });
  unary("linear (weights)", {2, 4}, false, [&](const Var& v) {
    return linear(v.tape().constant(b34), v, v.tape().constant(bias2));
  });
  unary("linear (bias)", {2}, false, [&](const Var& v) {
    return linear(v.tape().constant(b34), v.tape().constant(w24), v);
  });
  unary("add", {3, 4}, false, [&](const Var& v) { return add(v, v.tape().constant(b34)); });
  unary("add (row broadcast)", {1, 4}, false, [&](const Var& v) { return add(v.tape().constant(b34), v); });
  unary("sub", {3, 4}, false, [&](const Var& v) { return sub(v.tape().constant(b34), v); });
  unary("mul", {3, 4}, false, [&](const Var& v) { return mul(v, v.tape().constant(b34)); });
  unary("mul (row broadcast)", {1, 4}, false, [&](const Var& v) { return mul(v.tape().constant(b34), v); });
  unary("mul (self)", {3, 4}, false, [&](const Var& v) { return mul(v, v); });
  unary("scale", {3, 4}, false, [&](const Var& v) { return scale(v, -1.7); });
  unary("sigmoid", {3, 4}, false, [&](const Var& v) { return sigmoid(scale(v, 3.0)); });
  unary("tanh", {3, 4}, false, [&](const Var& v) { return tanh(scale(v, 2.0)); });
  unary("relu", {3, 4}, true, [&](const Var& v) { return relu(v); });
  unary("log", {3, 4}, false, [&](const Var& v) {
    return log(add(mul(v, v), v.tape().constant(Tensor({3, 4}, 0.5))));
  });
  unary("softmax", {3, 4}, false, [&](const Var& v) { return softmax(scale(v, 2.0)); });
  unary("concat (rows)", {3, 4}, false, [&](const Var& v) { return concat(v, v.tape().constant(row4), 0); });
  unary("concat (cols)", {3, 4}, false, [&](const Var& v) { return concat(v.tape().constant(b34), v, 1); });
  unary("slice_rows", {3, 4}, false, [&](const Var& v) { return slice_rows(v, 1, 2); });
  unary("slice_cols", {3, 4}, false, [&](const Var& v) { return slice_cols(v, 1, 2); });
  unary("sum", {3, 4}, false, [&](const Var& v) { return scale(sum(v), 0.3); });
  unary("dropout (train)", {3, 4}, false, [&](const Var& v) {
    Rng mask(seed + 17);
    return dropout(v, 0.5, Mode::train, mask);
  });
  unary("grad_reverse (lambda = -1)", {3, 4}, false, [&](const Var& v) { return grad_reverse(v, -1.0); });

  const Tensor cell = random_tensor({1, 3}, rng);
  const Tensor gates = random_tensor({1, 12}, rng, -2.0, 2.0);
  unary("lstm_cell (gates)", {1, 12}, false, [&](const Var& v) {
    return lstm_cell(scale(v, 2.0), v.tape().constant(cell));
  });
  unary("lstm_cell (cell)", {1, 3}, false, [&](const Var& v) {
    return lstm_cell(v.tape().constant(gates), v);
  });

  const std::vector<int> labels{0, 4, 2};
  const Tensor logits = random_tensor({3, 5}, rng, -2.0, 2.0);
  out.record("softmax_cross_entropy",
             finite_diff_check([&](Tape&, const Var& v) { return softmax_cross_entropy(v, labels); }, logits),
             kGradTolerance);
  const Tensor W = random_tensor({5, 4}, rng);
  out.record("cross_entropy_loss(softmax_classify)",
             finite_diff_check([&](Tape& tape, const Var& v) {
               return cross_entropy_loss(softmax_classify(v, tape.constant(W)), labels);
             }, b34),
             kGradTolerance);

  Parameter table("table", random_tensor({6, 4}, rng));
  const std::vector<int> ids{1, 4, 1, 0};
  const Tensor w44 = random_tensor({4, 4}, rng);
  std::vector<Parameter*> table_params{&table};
  out.record("lookup",
             finite_diff_check([&](Tape& tape) { return project(tape, tanh(lookup(tape, table, ids)), w44); },
                               table_params),
             kGradTolerance);

  Tensor trans = crf_initial_transitions(kNumTags);
  for (std::size_t i = 0; i < kNumTags + 2; ++i) {
    for (std::size_t j = 0; j < kNumTags + 2; ++j) {
      if (std::isfinite(trans.at(i, j))) trans.at(i, j) = rng.uniform(-1.0, 1.0);
    }
  }
  Parameter transitions("transitions", trans);
  std::vector<Parameter*> trans_params{&transitions};
  out.record("crf_nll (node scores)",
             finite_diff_check([&](Tape& tape, const Var& v) {
               return crf_nll(v, tape.constant(trans), labels);
             }, logits),
             kGradTolerance);
  out.record("crf_nll (transitions)",
             finite_diff_check([&](Tape& tape) {
               return crf_nll(tape.constant(logits), tape.parameter(transitions), labels);
             }, trans_params),
             kGradTolerance);
  out.record("crf_log_partition",
             finite_diff_check([&](Tape& tape, const Var& v) {
               return crf_log_partition(v, tape.constant(trans));
             }, logits),
             kGradTolerance);

  Discriminator disc(4, 3, seed);
  auto disc_params = disc.parameters();
  for (DomainLabel d : {DomainLabel::source, DomainLabel::target}) {
    const std::string suffix = d == DomainLabel::source ? " (source)" : " (target)";
    out.record("domain_bce_loss through discriminator" + suffix,
               finite_diff_check([&](Tape& tape) {
                 return domain_bce_loss(disc.forward(tape, tape.constant(b34)), d);
               }, disc_params),
               kGradTolerance);
    out.record("domain_bce_loss w.r.t. features" + suffix,
               finite_diff_check([&](Tape& tape, const Var& v) {
                 return domain_bce_loss(disc.forward(tape, v), d);
               }, b34),
               kGradTolerance);
  }
}

struct TinyCase {
  std::uint64_t seed;
  std::size_t n;  // sentences
  std::size_t m;  // max tokens per sentence
};

EncodedConversation tiny_conversation(const TinyCase& c, std::size_t vocab_size) {
  Rng rng(derive_seed(c.seed, hash_tag("tiny-conversation")));
  EncodedConversation conv;
  conv.id = "tiny";
  for (std::size_t i = 0; i < c.n; ++i) {
    std::vector<int> ids;
    const std::size_t len = 1 + rng.below(c.m);
    for (std::size_t t = 0; t < len; ++t) ids.push_back(static_cast<int>(rng.below(vocab_size)));
    conv.sentences.push_back(std::move(ids));
    conv.labels.push_back(static_cast<int>(rng.below(kNumTags)));
  }
  return conv;
}

Vocabulary tiny_vocab() {
  Vocabulary v;
  for (const char* t : {"a", "b", "c", "d", "e", "f"}) v.add(t);
  return v;
}

enum class TinyLoss { softmax, crf, adversarial };

double full_model_error(const TinyCase& c, EncoderVariant variant, TinyLoss loss) {
  ModelConfig mc;
  mc.encoder.variant = variant;
  mc.encoder.word_hidden = 3;
  mc.encoder.conv_hidden = 3;
  mc.encoder.depth = 2;
  mc.encoder.dropout_rate = 0.3;
  mc.output = loss == TinyLoss::crf ? OutputKind::crf : OutputKind::softmax;
  mc.embedding_dim = 4;
  mc.disc_hidden = 3;
  mc.with_discriminator = loss == TinyLoss::adversarial;
  SarModel model(mc, tiny_vocab(), c.seed);
  if (Parameter* t = model.transitions()) {
    Rng rng(derive_seed(c.seed, hash_tag("tiny-transitions")));
    for (double& v : t->value.values()) {
      if (std::isfinite(v)) v = rng.uniform(-0.5, 0.5);
    }
  }
  const EncodedConversation conv = tiny_conversation(c, model.vocab().size());
  auto params = model.parameters();
  return finite_diff_check([&](Tape& tape) {
    Rng mask(derive_seed(c.seed, hash_tag("tiny-dropout")));
    Var U = model.encode(tape, conv, Mode::train, mask);
    Var l = model.classification_loss(tape, U, conv.labels);
    if (loss == TinyLoss::adversarial) {
      // lambda = -1 turns the reversal into the identity, so the tape must
      // reproduce the plain derivative of the summed loss.
      l = add(l, model.domain_loss(tape, U, DomainLabel::source, -1.0));
    }
    return l;
  }, params);
}

void check_models(Collector& out, std::uint64_t seed) {
  struct Variant {
    std::string name;
    EncoderVariant variant;
    TinyLoss loss;
  };
  const std::vector<Variant> variants{
      {"H-LSTM softmax loss", EncoderVariant::hlstm, TinyLoss::softmax},
      {"H-LSTM-CRF loss", EncoderVariant::hlstm, TinyLoss::crf},
      {"B-LSTM softmax loss", EncoderVariant::blstm, TinyLoss::softmax},
      {"S-LSTM softmax loss", EncoderVariant::slstm, TinyLoss::softmax},
      {"H-LSTM adversarial loss", EncoderVariant::hlstm, TinyLoss::adversarial},
  };
  for (const auto& v : variants) {
    const TinyCase full{seed, 3, 4};
    const double err = full_model_error(full, v.variant, v.loss);
    std::string detail;
    if (!(err <= kGradTolerance)) {
      // Shrink to the smallest conversation that still fails.
      detail = "seed " + std::to_string(seed) + ", n = 3, m = 4";
      bool found = false;
      for (std::size_t n = 1; n <= 3 && !found; ++n) {
        for (std::size_t m = 1; m <= 4 && !found; ++m) {
          const double e = full_model_error({seed, n, m}, v.variant, v.loss);
          if (!(e <= kGradTolerance)) {
            detail = "seed " + std::to_string(seed) + ", n = " + std::to_string(n) +
                     ", m = " + std::to_string(m) + ", error " + std::to_string(e);
            found = true;
          }
        }
      }
    }
    out.record(v.name, err, kGradTolerance, detail);
  }
}

// ---- CRF suite -------------------------------------------------------------

struct CrfInstance {
  Tensor nodes;
  Tensor transitions;
};

CrfInstance random_crf(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  CrfInstance c{random_tensor({n, kNumTags}, rng, -2.0, 2.0), crf_initial_transitions(kNumTags)};
  for (double& v : c.transitions.values()) {
    if (std::isfinite(v)) v = rng.uniform(-1.5, 1.5);
  }
  return c;
}

// Path score written out independently of the library's scorer.
double path_score(const CrfInstance& c, const std::vector<int>& y) {
  const std::size_t start = kNumTags;
  const std::size_t stop = kNumTags + 1;
  double s = c.transitions.at(start, static_cast<std::size_t>(y[0]));
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += c.nodes.at(i, static_cast<std::size_t>(y[i]));
    if (i + 1 < y.size()) s += c.transitions.at(static_cast<std::size_t>(y[i]), static_cast<std::size_t>(y[i + 1]));
  }
  return s + c.transitions.at(static_cast<std::size_t>(y.back()), stop);
}

template <typename Visit>
void for_each_sequence(std::size_t n, Visit visit) {
  std::vector<int> y(n, 0);
  for (;;) {
    visit(y);
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (++y[i] < static_cast<int>(kNumTags)) break;
      y[i] = 0;
      if (i == 0) return;
    }
  }
}

struct CrfErrors {
  double log_z = 0.0;
  bool viterbi_ok = true;
  double viterbi_score = 0.0;
  double normalization = 0.0;  // only for n <= 4
};

CrfErrors crf_errors(const CrfInstance& c) {
  const std::size_t n = c.nodes.rows();
  std::vector<double> scores;
  std::vector<int> best;
  double best_score = kNegInf;
  for_each_sequence(n, [&](const std::vector<int>& y) {
    const double s = path_score(c, y);
    scores.push_back(s);
    if (s > best_score) {  // enumeration is lexicographic, so ties keep the lowest codes
      best_score = s;
      best = y;
    }
  });
  const double mx = *std::max_element(scores.begin(), scores.end());
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - mx);
  const double log_z = mx + std::log(acc);

  CrfErrors e;
  e.log_z = std::abs(crf_log_partition(c.nodes, c.transitions) - log_z);
  const ViterbiResult v = viterbi_decode(c.nodes, c.transitions);
  e.viterbi_ok = v.labels == best;
  e.viterbi_score = std::abs(v.score - best_score);
  if (n <= 4) {
    double total = 0.0;
    for_each_sequence(n, [&](const std::vector<int>& y) {
      Tape tape;
      total += std::exp(-crf_nll(tape.constant(c.nodes), tape.constant(c.transitions), y).value()[0]);
    });
    e.normalization = std::abs(total - 1.0);
  }
  return e;
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* SuiteReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed) return &c;
  }
  return nullptr;
}

SuiteReport run_grad_suite(std::uint64_t seed, std::size_t seeds) {
  const auto t0 = Clock::now();
  Collector out;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t k = derive_seed(seed, hash_tag("grad-suite"), s);
    check_ops(out, k);
    check_models(out, k);
  }
  SuiteReport r{"grad", out.take(), 0.0};
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

SuiteReport run_crf_suite(std::uint64_t seed, std::size_t instances) {
  const auto t0 = Clock::now();
  Collector out;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::uint64_t k = derive_seed(seed, hash_tag("crf-suite"), i);
    const std::size_t n = 1 + Rng(k).below(6);
    const auto e = crf_errors(random_crf(k, n));
    const bool bad = !(e.log_z <= kCrfTolerance) || !e.viterbi_ok || !(e.viterbi_score <= kCrfTolerance) ||
                     !(e.normalization <= kCrfTolerance);
    std::string detail;
    if (bad) {
      // Same random stream, shorter sequences: report the shortest failing one.
      for (std::size_t m = 1; m <= n; ++m) {
        const auto f = crf_errors(random_crf(k, m));
        if (!(f.log_z <= kCrfTolerance) || !f.viterbi_ok || !(f.viterbi_score <= kCrfTolerance) ||
            !(f.normalization <= kCrfTolerance)) {
          detail = "instance " + std::to_string(i) + ", n = " + std::to_string(m);
          break;
        }
      }
    }
    out.record("log-partition vs enumeration", e.log_z, kCrfTolerance, detail);
    out.record("Viterbi path vs brute-force argmax", e.viterbi_ok ? 0.0 : 1.0, 0.0, detail);
    out.record("Viterbi score vs brute-force max", e.viterbi_score, kCrfTolerance, detail);
    if (n <= 4) out.record("sum of exp(-nll) over all sequences", e.normalization, kCrfTolerance, detail);

    // With all transitions zero the CRF factorizes into per-sentence softmaxes.
    CrfInstance flat = random_crf(k, n);
    for (double& v : flat.transitions.values()) {
      if (std::isfinite(v)) v = 0.0;
    }
    std::vector<int> y(n);
    Rng ly(derive_seed(k, hash_tag("labels")));
    for (int& t : y) t = static_cast<int>(ly.below(kNumTags));
    Tape tape;
    const double crf = crf_nll(tape.constant(flat.nodes), tape.constant(flat.transitions), y).value()[0];
    const double ce = softmax_cross_entropy(tape.constant(flat.nodes), y).value()[0];
    out.record("zero-transition CRF vs softmax cross-entropy", std::abs(crf - ce),
               kZeroTransitionTolerance, "instance " + std::to_string(i) + ", n = " + std::to_string(n));
  }
  SuiteReport r{"crf", out.take(), 0.0};
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

SuiteReport run_schedule_suite() {
  const auto t0 = Clock::now();
  Collector out;
  out.record("lambda(0) == 0", std::abs(lambda_schedule(0.0)), 0.0);
  const double closed = 2.0 / (1.0 + std::exp(-10.0)) - 1.0;
  out.record("lambda(1) closed form", std::abs(lambda_schedule(1.0) - closed), 1e-12);
  double worst_step = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double step = lambda_schedule(i / 1000.0) - lambda_schedule((i - 1) / 1000.0);
    if (!(step > 0.0)) worst_step = std::max(worst_step, 1.0);
  }
  out.record("lambda strictly increasing", worst_step, 0.0);

  out.record("lr(0) == lr0", std::abs(dynamic_lr(0.0, 0.01) - 0.01), 0.0);
  out.record("lr(1) closed form", std::abs(dynamic_lr(1.0, 0.01) - 0.01 / std::pow(11.0, 0.75)), 1e-15);
  double worst_lr = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    if (!(dynamic_lr(i / 1000.0, 0.01) < dynamic_lr((i - 1) / 1000.0, 0.01))) worst_lr = 1.0;
  }
  out.record("lr strictly decreasing", worst_lr, 0.0);

  // Reversal must scale the incoming gradient by exactly -lambda.
  Rng rng(7);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({3, 4}, rng);
  double worst_rev = 0.0;
  for (double lambda : {0.0, 0.25, 0.5, 1.0, lambda_schedule(0.3)}) {
    Tape plain;
    Var xp = plain.variable(x);
    plain.backward(project(plain, tanh(xp), w));
    const Tensor g = plain.grad_of(xp);
    Tape rev;
    Var xr = rev.variable(x);
    rev.backward(project(rev, tanh(grad_reverse(xr, lambda)), w));
    const Tensor gr = rev.grad_of(xr);
    for (std::size_t i = 0; i < g.size(); ++i) {
      worst_rev = std::max(worst_rev, std::abs(gr[i] - (-lambda * g[i])));
    }
  }
  out.record("grad_reverse backward == -lambda x plain gradient", worst_rev, 0.0);
  SuiteReport r{"schedule", out.take(), 0.0};
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

std::vector<SuiteReport> run_suites(std::string_view name) {
  if (name == "grad") return {run_grad_suite()};
  if (name == "crf") return {run_crf_suite()};
  if (name == "schedule") return {run_schedule_suite()};
  if (name == "all") return {run_grad_suite(), run_crf_suite(), run_schedule_suite()};
  throw ConfigError("unknown suite \"" + std::string(name) + "\" (expected grad, crf, schedule or all)");
}

std::string format_report(const SuiteReport& report) {
  std::ostringstream out;
  out << "suite " << report.suite << ": " << (report.passed() ? "PASS" : "FAIL") << " ("
      << report.checks.size() << " checks, " << report.seconds << " s)\n";
  for (const auto& c : report.checks) {
    out << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name << ": max error " << c.max_error
        << " (tolerance " << c.tolerance << ")";
    if (!c.passed && !c.detail.empty()) out << " first failure: " << c.detail;
    out << "\n";
  }
  return out.str();
}

}  // namespace sarkit
