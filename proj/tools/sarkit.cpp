#include <iostream>

#include <CLI11.hpp>

#include "sarkit/app.hpp"

int main(int argc, char** argv) {
  using namespace sarkit;
  CLI::App app{"Speech act recognition in conversations: training, adaptation and evaluation"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "Train an in-domain model");
  cmd_train->add_option("--config", train.config, "Training config (JSON)")->required();
  cmd_train->add_option("--train", train.train, "Training corpus (JSONL)")->required();
  cmd_train->add_option("--dev", train.dev, "Development corpus (JSONL)")->required();
  cmd_train->add_option("--out", train.out, "Checkpoint path")->required();
  cmd_train->add_option("--seed", train.seed, "Override the config seed");

  AdaptArgs adapt;
  auto* cmd_adapt = app.add_subcommand("adapt", "Adapt from a source to a target domain");
  cmd_adapt->add_option("--mode", adapt.mode, "unsup, semisup or sup (or transfer, merge, finetune baselines)")
      ->required();
  cmd_adapt->add_option("--source", adapt.source, "Labeled source corpus")->required();
  cmd_adapt->add_option("--target-labeled", adapt.target_labeled, "Labeled target corpus");
  cmd_adapt->add_option("--target-unlabeled", adapt.target_unlabeled, "Unlabeled target corpus");
  cmd_adapt->add_option("--target-fraction", adapt.target_fraction,
                        "Fraction of labeled target conversations to keep labeled");
  cmd_adapt->add_option("--dev", adapt.dev, "Target development corpus")->required();
  cmd_adapt->add_option("--config", adapt.config, "Training config (JSON)")->required();
  cmd_adapt->add_option("--out", adapt.out, "Checkpoint path")->required();
  cmd_adapt->add_option("--seed", adapt.seed, "Override the config seed");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled corpus");
  cmd_eval->add_option("--model", eval.model, "Checkpoint")->required();
  cmd_eval->add_option("--test", eval.test, "Labeled test corpus")->required();
  cmd_eval->add_option("--report", eval.report, "Report output (JSON)")->required();
  cmd_eval->add_option("--confusion", eval.confusion, "Confusion matrix output (CSV)");

  PredictArgs predict;
  auto* cmd_predict = app.add_subcommand("predict", "Fill missing speech act labels");
  cmd_predict->add_option("--model", predict.model, "Checkpoint")->required();
  cmd_predict->add_option("--input", predict.input, "Input corpus (JSONL)")->required();
  cmd_predict->add_option("--out", predict.out, "Output corpus (JSONL)")->required();

  std::string suite = "all";
  auto* cmd_verify = app.add_subcommand("verify", "Run the numerical self-checks");
  cmd_verify->add_option("--suite", suite, "grad, crf, schedule or all")
      ->check(CLI::IsMember({"grad", "crf", "schedule", "all"}));

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate synthetic source/target corpora");
  cmd_synth->add_option("--profile", synth.profile, "Generator profile (JSON)")->required();
  cmd_synth->add_option("--n", synth.n, "Conversations per corpus")->required();
  cmd_synth->add_option("--n-target", synth.n_target, "Target conversations (default --n)");
  cmd_synth->add_option("--seed", synth.seed, "Random seed")->required();
  cmd_synth->add_option("--out-source", synth.out_source, "Source corpus output")->required();
  cmd_synth->add_option("--out-target", synth.out_target, "Target corpus output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*cmd_train) return run_train(train, std::cout, std::cerr);
  if (*cmd_adapt) return run_adapt(adapt, std::cout, std::cerr);
  if (*cmd_eval) return run_eval(eval, std::cout, std::cerr);
  if (*cmd_predict) return run_predict(predict, std::cout, std::cerr);
  if (*cmd_verify) return run_verify(suite, std::cout, std::cerr);
  if (*cmd_synth) return run_synth(synth, std::cout, std::cerr);
  return kExitUsage;
}
