#include "sarkit/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "sarkit/errors.hpp"
#include "sarkit/logging.hpp"

namespace sarkit {

namespace {

std::string class_label(std::size_t k, std::size_t num_classes) {
  if (num_classes == kNumTags) return std::string(kTagNames[k]);
  return std::to_string(k);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / n)};
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int gold, int pred) {
  const auto in_range = [this](int y) { return y >= 0 && static_cast<std::size_t>(y) < k_; };
  if (!in_range(gold) || !in_range(pred)) {
    throw ContractError("label pair (" + std::to_string(gold) + ", " + std::to_string(pred) +
                        ") outside 0.." + std::to_string(k_ - 1));
  }
  ++counts_[static_cast<std::size_t>(gold) * k_ + static_cast<std::size_t>(pred)];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ContractError("cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < k_; ++k) t += at(k, k);
  return t;
}

std::size_t ConfusionMatrix::gold_count(std::size_t k) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < k_; ++j) n += at(k, j);
  return n;
}

std::size_t ConfusionMatrix::predicted_count(std::size_t k) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < k_; ++i) n += at(i, k);
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) {
    warn("accuracy of an empty evaluation set is reported as 0");
    return 0.0;
  }
  return static_cast<double>(trace()) / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const LabelSequence> gold, std::span<const LabelSequence> pred,
                          std::size_t num_classes) {
  if (gold.size() != pred.size()) {
    throw ContractError("confusion: " + std::to_string(gold.size()) + " gold sequences vs " +
                        std::to_string(pred.size()) + " predicted");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t c = 0; c < gold.size(); ++c) {
    if (gold[c].size() != pred[c].size()) {
      throw ContractError("confusion: sequence " + std::to_string(c) + " has " +
                          std::to_string(gold[c].size()) + " gold labels but " +
                          std::to_string(pred[c].size()) + " predictions");
    }
    for (std::size_t i = 0; i < gold[c].size(); ++i) cm.add(gold[c][i], pred[c][i]);
  }
  return cm;
}

std::vector<ClassScores> class_scores(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out(cm.num_classes());
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    const std::size_t predicted = cm.predicted_count(k);
    const std::size_t gold = cm.gold_count(k);
    ClassScores& s = out[k];
    s.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    s.recall = gold ? tp / static_cast<double>(gold) : 0.0;
    const double pr = s.precision + s.recall;
    s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  }
  return out;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    warn("macro-F1 of an empty evaluation set is reported as 0");
    return 0.0;
  }
  double sum = 0.0;
  for (const auto& s : class_scores(cm)) sum += s.f1;
  return sum / static_cast<double>(cm.num_classes());
}

RunReport make_report(const ConfusionMatrix& cm) {
  RunReport r;
  r.n_sentences = cm.total();
  r.accuracy = cm.accuracy();
  r.macro_f1 = macro_f1(cm);
  r.per_class = class_scores(cm);
  r.per_class_std.assign(r.per_class.size(), ClassScores{});
  return r;
}

RunReport aggregate(std::span<const RunReport> reports) {
  if (reports.empty()) throw ContractError("aggregate: no reports");
  const std::size_t k = reports.front().per_class.size();
  for (const auto& r : reports) {
    if (r.per_class.size() != k) throw ContractError("aggregate: reports disagree on class count");
  }
  const auto stat = [&](auto field) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(field(r));
    return mean_std(xs);
  };

  RunReport out;
  out.n_runs = reports.size();
  for (const auto& r : reports) out.n_sentences += r.n_sentences;
  const MeanStd acc = stat([](const RunReport& r) { return r.accuracy; });
  const MeanStd f1 = stat([](const RunReport& r) { return r.macro_f1; });
  out.accuracy = acc.mean;
  out.accuracy_std = acc.std;
  out.macro_f1 = f1.mean;
  out.macro_f1_std = f1.std;
  out.per_class.resize(k);
  out.per_class_std.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const MeanStd p = stat([c](const RunReport& r) { return r.per_class[c].precision; });
    const MeanStd rc = stat([c](const RunReport& r) { return r.per_class[c].recall; });
    const MeanStd f = stat([c](const RunReport& r) { return r.per_class[c].f1; });
    out.per_class[c] = {p.mean, rc.mean, f.mean};
    out.per_class_std[c] = {p.std, rc.std, f.std};
  }
  return out;
}

nlohmann::ordered_json report_to_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["n_runs"] = report.n_runs;
  j["n_sentences"] = report.n_sentences;
  j["accuracy"] = report.accuracy;
  j["accuracy_std"] = report.accuracy_std;
  j["macro_f1"] = report.macro_f1;
  j["macro_f1_std"] = report.macro_f1_std;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& s = report.per_class[k];
    const ClassScores sd = k < report.per_class_std.size() ? report.per_class_std[k] : ClassScores{};
    classes[class_label(k, report.per_class.size())] = {
        {"precision", s.precision}, {"recall", s.recall},      {"f1", s.f1},
        {"precision_std", sd.precision}, {"recall_std", sd.recall}, {"f1_std", sd.f1}};
  }
  j["per_class"] = std::move(classes);
  return j;
}

std::string report_table(const RunReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %10s %10s %10s\n", "class", "precision", "recall", "f1");
  out << line;
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& s = report.per_class[k];
    std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %10.4f\n",
                  class_label(k, report.per_class.size()).c_str(), s.precision, s.recall, s.f1);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-8s %10.4f +- %.4f\n", "accuracy", report.accuracy,
                report.accuracy_std);
  out << line;
  std::snprintf(line, sizeof line, "%-8s %10.4f +- %.4f\n", "macro-F1", report.macro_f1,
                report.macro_f1_std);
  out << line;
  out << "runs: " << report.n_runs << ", sentences: " << report.n_sentences << "\n";
  return out.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  std::ostringstream out;
  out << "gold\\pred";
  for (std::size_t j = 0; j < k; ++j) out << ',' << class_label(j, k);
  out << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    out << class_label(i, k);
    for (std::size_t j = 0; j < k; ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace sarkit
