#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace sarkit {

// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitUsage = 2,
  kExitDiverged = 3,
};

struct TrainArgs {
  std::string config;
  std::string train;
  std::string dev;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct AdaptArgs {
  // unsup, semisup or sup; transfer, merge and finetune run the baselines
  // on the same pools.
  std::string mode;
  std::string source;
  std::string target_labeled;
  std::string target_unlabeled;
  std::string dev;
  std::optional<double> target_fraction;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string model;
  std::string test;
  std::string report;
  std::string confusion;
};

struct PredictArgs {
  std::string model;
  std::string input;
  std::string out;
};

struct SynthArgs {
  std::string profile;
  std::size_t n = 0;
  std::optional<std::size_t> n_target;
  std::uint64_t seed = 0;
  std::string out_source;
  std::string out_target;
};

// Each command reports progress on `out`, problems on `err`, and returns
// one of the exit codes above instead of throwing.
int run_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int run_adapt(const AdaptArgs& args, std::ostream& out, std::ostream& err);
int run_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int run_predict(const PredictArgs& args, std::ostream& out, std::ostream& err);
int run_verify(const std::string& suite, std::ostream& out, std::ostream& err);
int run_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);

// Path of the JSON training history written next to a checkpoint.
std::string history_path(const std::string& checkpoint_path);

}  // namespace sarkit
