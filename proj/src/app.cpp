#include "sarkit/app.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "sarkit/checkpoint.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/metrics.hpp"
#include "sarkit/synth.hpp"
#include "sarkit/training.hpp"
#include "sarkit/verify.hpp"

namespace sarkit {

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

std::vector<Conversation> read_corpus(const std::string& path, std::ostream& err) {
  if (!std::filesystem::exists(path)) throw FormatError("file not found: " + path);
  ParsedCorpus parsed = parse_corpus(std::filesystem::path(path));
  for (const auto& w : parsed.warnings) err << "warning: " << path << ": " << w << "\n";
  return std::move(parsed.conversations);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw FormatError("failed to write " + path);
}

void finish_training(TrainResult& result, const TrainConfig& config, const std::string& out_path,
                     std::ostream& out) {
  save_checkpoint(std::filesystem::path(out_path), result.model, config);
  write_text(history_path(out_path), history_to_json(result.history).dump(2) + "\n");
  const HistoryEntry& best = result.history[result.best_epoch];
  out << "best epoch " << best.epoch << " (" << best.phase << "): dev accuracy " << best.dev_accuracy
      << ", dev macro-F1 " << best.dev_macro_f1 << "\n";
  out << "wrote " << out_path << " and " << history_path(out_path) << "\n";
}

Regime adapt_regime(const std::string& mode) {
  if (mode == "unsup") return Regime::adapt_unsup;
  if (mode == "semisup") return Regime::adapt_semisup;
  if (mode == "sup") return Regime::adapt_sup;
  if (mode == "transfer") return Regime::transfer;
  if (mode == "merge") return Regime::merge;
  if (mode == "finetune") return Regime::finetune;
  throw ConfigError("unknown --mode \"" + mode +
                    "\" (expected unsup, semisup, sup, transfer, merge or finetune)");
}

}  // namespace

std::string history_path(const std::string& checkpoint_path) {
  return checkpoint_path + ".history.json";
}

int run_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.config.empty() || args.train.empty() || args.dev.empty() || args.out.empty()) {
      throw ConfigError("train needs --config, --train, --dev and --out");
    }
    TrainConfig config = load_train_config(args.config);
    if (args.seed) config.seed = *args.seed;
    if (config.regime != Regime::indomain) {
      throw ConfigError("train runs the indomain regime; use adapt for \"" +
                        std::string(regime_name(config.regime)) + "\"");
    }
    TrainingData data;
    data.source = read_corpus(args.train, err);
    data.dev = read_corpus(args.dev, err);
    TrainResult result = train(data, config);
    finish_training(result, config, args.out, out);
    return static_cast<int>(kExitOk);
  });
}

int run_adapt(const AdaptArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.mode.empty() || args.source.empty() || args.config.empty() || args.out.empty() ||
        args.dev.empty()) {
      throw ConfigError("adapt needs --mode, --source, --dev, --config and --out");
    }
    TrainConfig config = load_train_config(args.config);
    config.regime = adapt_regime(args.mode);
    if (args.seed) config.seed = *args.seed;
    if (args.target_fraction) config.target_label_fraction = *args.target_fraction;
    config.validate();

    if (config.regime == Regime::adapt_unsup && !args.target_labeled.empty()) {
      throw ConfigError("--mode unsup does not accept --target-labeled (labels would leak into "
                        "unsupervised adaptation)");
    }
    if (config.regime == Regime::adapt_unsup && args.target_unlabeled.empty()) {
      throw ConfigError("--mode unsup needs --target-unlabeled");
    }
    const bool needs_labels = config.regime != Regime::adapt_unsup && config.regime != Regime::transfer;
    if (needs_labels && args.target_labeled.empty()) {
      throw ConfigError("--mode " + args.mode + " needs --target-labeled");
    }

    TrainingData data;
    data.source = read_corpus(args.source, err);
    if (!args.target_labeled.empty()) data.target_labeled = read_corpus(args.target_labeled, err);
    if (!args.target_unlabeled.empty()) {
      data.target_unlabeled = read_corpus(args.target_unlabeled, err);
      for (auto& conv : data.target_unlabeled) {
        for (auto& comment : conv.comments) {
          for (auto& s : comment.sentences) s.act.reset();
        }
      }
    }
    data.dev = read_corpus(args.dev, err);
    if (config.target_label_fraction < 1.0 && !data.target_labeled.empty()) {
      const auto kept = static_cast<std::size_t>(
          std::ceil(config.target_label_fraction * static_cast<double>(data.target_labeled.size())));
      out << "using " << kept << " of " << data.target_labeled.size()
          << " labeled target conversations\n";
    }
    TrainResult result = train(data, config);
    finish_training(result, config, args.out, out);
    return static_cast<int>(kExitOk);
  });
}

int run_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.model.empty() || args.test.empty() || args.report.empty()) {
      throw ConfigError("eval needs --model, --test and --report");
    }
    Checkpoint ck = load_checkpoint(std::filesystem::path(args.model));
    const auto test = read_corpus(args.test, err);
    std::string unlabeled;
    for (const auto& conv : test) {
      if (!conv.fully_labeled()) unlabeled += (unlabeled.empty() ? "" : ", ") + conv.id;
    }
    if (!unlabeled.empty()) {
      throw DataError("test set has unlabeled sentences in conversation(s): " + unlabeled);
    }
    const ConfusionMatrix cm = evaluate(ck.model, test, ck.config.max_chunk);
    const RunReport report = make_report(cm);
    write_text(args.report, report_to_json(report).dump(2) + "\n");
    if (!args.confusion.empty()) write_text(args.confusion, confusion_csv(cm));
    out << report_table(report);
    return static_cast<int>(kExitOk);
  });
}

int run_predict(const PredictArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.model.empty() || args.input.empty() || args.out.empty()) {
      throw ConfigError("predict needs --model, --input and --out");
    }
    Checkpoint ck = load_checkpoint(std::filesystem::path(args.model));
    auto corpus = read_corpus(args.input, err);
    std::size_t labeled = 0;
    std::size_t agree = 0;
    std::size_t filled = 0;
    for (auto& conv : corpus) {
      std::vector<int> predicted;
      for (const auto& chunk : chunk_conversation(conv, ck.config.max_chunk)) {
        const auto p = ck.model.predict(encode_conversation(ck.model.vocab(), chunk));
        predicted.insert(predicted.end(), p.begin(), p.end());
      }
      std::size_t i = 0;
      for (auto& comment : conv.comments) {
        for (auto& s : comment.sentences) {
          const int y = predicted[i++];
          if (s.act) {
            ++labeled;
            if (*s.act == y) ++agree;
          } else {
            s.act = y;
            ++filled;
          }
        }
      }
    }
    write_corpus(std::filesystem::path(args.out), corpus);
    out << "filled " << filled << " sentence(s) in " << corpus.size() << " conversation(s)\n";
    if (labeled > 0) {
      err << "agreement with existing labels: " << agree << "/" << labeled << " ("
          << static_cast<double>(agree) / static_cast<double>(labeled) << ")\n";
    }
    return static_cast<int>(kExitOk);
  });
}

int run_verify(const std::string& suite, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto reports = run_suites(suite.empty() ? "all" : suite);
    bool ok = true;
    for (const auto& r : reports) {
      out << format_report(r);
      ok = ok && r.passed();
    }
    if (!ok) {
      for (const auto& r : reports) {
        if (const CheckResult* f = r.first_failure()) {
          err << "first failure: suite " << r.suite << ", " << f->name << " ("
              << (f->detail.empty() ? "no smaller case found" : f->detail) << ")\n";
          break;
        }
      }
    }
    return static_cast<int>(ok ? kExitOk : kExitVerifyFailed);
  });
}

int run_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.profile.empty() || args.out_source.empty() || args.out_target.empty()) {
      throw ConfigError("synth needs --profile, --n, --seed, --out-source and --out-target");
    }
    if (args.n == 0) throw ConfigError("--n must be >= 1");
    const SynthProfile profile = load_synth_profile(args.profile);
    const SynthCorpora corpora = synth_generate(profile, args.n, args.seed, args.n_target);
    write_corpus(std::filesystem::path(args.out_source), corpora.source);
    write_corpus(std::filesystem::path(args.out_target), corpora.target);
    out << "wrote " << corpora.source.size() << " source and " << corpora.target.size()
        << " target conversations\n";
    return static_cast<int>(kExitOk);
  });
}

}  // namespace sarkit
