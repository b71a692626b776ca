#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sarkit/output_layers.hpp"

namespace sarkit {

// K x K counts; rows are gold classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = kNumTags);

  std::size_t num_classes() const noexcept { return k_; }
  std::size_t at(std::size_t gold, std::size_t pred) const { return counts_[gold * k_ + pred]; }
  void add(int gold, int pred);
  void merge(const ConfusionMatrix& other);

  std::size_t total() const;
  std::size_t trace() const;
  std::size_t gold_count(std::size_t k) const;
  std::size_t predicted_count(std::size_t k) const;
  // trace / total, or 0 (with a warning) when nothing was evaluated.
  double accuracy() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const LabelSequence> gold, std::span<const LabelSequence> pred,
                          std::size_t num_classes = kNumTags);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

std::vector<ClassScores> class_scores(const ConfusionMatrix& cm);
// Unweighted mean of per-class F1; a class with P + R = 0 scores 0.
double macro_f1(const ConfusionMatrix& cm);

// Metrics of one run, or the mean over several runs with population
// standard deviations alongside.
struct RunReport {
  std::size_t n_runs = 1;
  std::size_t n_sentences = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;
  double accuracy_std = 0.0;
  double macro_f1_std = 0.0;
  std::vector<ClassScores> per_class_std;
};

RunReport make_report(const ConfusionMatrix& cm);
RunReport aggregate(std::span<const RunReport> reports);

nlohmann::ordered_json report_to_json(const RunReport& report);
// Aligned plain-text table, one row per class plus the summary lines.
std::string report_table(const RunReport& report);
// Header row of predicted class names, then one row per gold class.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace sarkit
