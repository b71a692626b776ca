#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sarkit {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  // For a failure: the smallest configuration found that still fails.
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  const CheckResult* first_failure() const;
};

// Central finite differences against the tape for every differentiable
// operation and for full H-LSTM / H-LSTM-CRF / adversarial losses on tiny
// conversations (n <= 3 sentences, m <= 4 tokens), `seeds` seeds each.
SuiteReport run_grad_suite(std::uint64_t seed = 1, std::size_t seeds = 5);

// CRF forward algorithm and Viterbi against exhaustive enumeration over
// random instances with n <= 6 and K = 5.
SuiteReport run_crf_suite(std::uint64_t seed = 1, std::size_t instances = 100);

// Closed-form endpoints and monotonicity of the lambda and learning-rate
// schedules, plus the exact scaling of gradient reversal.
SuiteReport run_schedule_suite();

std::vector<SuiteReport> run_suites(std::string_view name);
std::string format_report(const SuiteReport& report);

}  // namespace sarkit
