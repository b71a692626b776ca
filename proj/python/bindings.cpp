#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sarkit/adversary.hpp"
#include "sarkit/app.hpp"
#include "sarkit/checkpoint.hpp"
#include "sarkit/corpus.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/metrics.hpp"
#include "sarkit/output_layers.hpp"
#include "sarkit/synth.hpp"
#include "sarkit/training.hpp"
#include "sarkit/verify.hpp"

namespace py = pybind11;
using namespace sarkit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Tensor({r, c}, std::vector<double>(a.data(), a.data() + r * c));
}

std::vector<Conversation> corpus_from_text(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return parse_corpus(in).conversations;
}

std::string corpus_to_text(const std::vector<Conversation>& corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return out.str();
}

// Runs a command with its console output captured. Returns (exit code, stdout, stderr).
template <typename F>
py::tuple capture(F&& run) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run(out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

std::vector<LabelSequence> to_codes(const std::vector<std::vector<std::string>>& tags) {
  std::vector<LabelSequence> out;
  for (const auto& seq : tags) {
    LabelSequence codes;
    for (const auto& t : seq) {
      const auto c = parse_tag(t);
      if (!c) throw DataError("unknown act label " + t);
      codes.push_back(*c);
    }
    out.push_back(std::move(codes));
  }
  return out;
}

class Model {
 public:
  explicit Model(const std::string& path) : ck_(load_checkpoint(std::filesystem::path(path))) {}

  // Predicted tag names per conversation of a JSONL corpus.
  std::vector<std::vector<std::string>> predict(const std::string& jsonl) {
    std::vector<std::vector<std::string>> out;
    for (const auto& conv : corpus_from_text(jsonl)) {
      std::vector<std::string> tags;
      for (const auto& chunk : chunk_conversation(conv, ck_.config.max_chunk)) {
        for (int y : ck_.model.predict(encode_conversation(ck_.model.vocab(), chunk))) {
          tags.emplace_back(tag_name(y));
        }
      }
      out.push_back(std::move(tags));
    }
    return out;
  }

  std::string evaluate(const std::string& jsonl) {
    const auto corpus = corpus_from_text(jsonl);
    return report_to_json(make_report(sarkit::evaluate(ck_.model, corpus, ck_.config.max_chunk))).dump();
  }

  std::string config() const { return train_config_to_json(ck_.config).dump(); }
  std::size_t vocab_size() const { return ck_.model.vocab().size(); }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical speech-act recognition with adversarial domain adaptation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  m.attr("TAGS") = py::make_tuple("SU", "R", "Q", "P", "ST");

  m.def("preprocess", &preprocess_sentence, py::arg("text"));
  m.def("lambda_schedule", &lambda_schedule, py::arg("progress"));

  m.def(
      "crf_log_partition",
      [](const Array& nodes, const Array& transitions) {
        return crf_log_partition(to_matrix(nodes), to_matrix(transitions));
      },
      py::arg("node_scores"), py::arg("transitions"));
  m.def(
      "viterbi",
      [](const Array& nodes, const Array& transitions) {
        const ViterbiResult r = viterbi_decode(to_matrix(nodes), to_matrix(transitions));
        return py::make_tuple(r.labels, r.score);
      },
      py::arg("node_scores"), py::arg("transitions"));
  m.def("crf_initial_transitions", [](std::size_t k) {
    const Tensor t = crf_initial_transitions(k);
    Array a({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
  });

  m.def(
      "score_json",
      [](const std::vector<std::vector<std::string>>& gold, const std::vector<std::vector<std::string>>& pred) {
        const auto g = to_codes(gold);
        const auto p = to_codes(pred);
        return report_to_json(make_report(confusion(g, p))).dump();
      },
      py::arg("gold"), py::arg("pred"));

  m.def(
      "synth",
      [](std::size_t n, std::uint64_t seed, const std::string& profile, std::optional<std::size_t> n_target) {
        const SynthCorpora c =
            synth_generate(parse_synth_profile(nlohmann::json::parse(profile)), n, seed, n_target);
        return py::make_tuple(corpus_to_text(c.source), corpus_to_text(c.target));
      },
      py::arg("n"), py::arg("seed"), py::arg("profile") = "{}", py::arg("n_target") = std::nullopt);

  m.def("normalize_corpus", [](const std::string& jsonl) { return corpus_to_text(corpus_from_text(jsonl)); });

  m.def(
      "train",
      [](const std::string& config, const std::string& train, const std::string& dev, const std::string& out,
         std::optional<std::uint64_t> seed) {
        const TrainArgs a{config, train, dev, out, seed};
        return capture([&](std::ostream& o, std::ostream& e) { return run_train(a, o, e); });
      },
      py::arg("config"), py::arg("train"), py::arg("dev"), py::arg("out"), py::arg("seed") = std::nullopt);
  m.def(
      "adapt",
      [](const std::string& mode, const std::string& source, const std::string& target_labeled,
         const std::string& target_unlabeled, const std::string& dev, const std::string& config,
         const std::string& out, std::optional<double> target_fraction, std::optional<std::uint64_t> seed) {
        const AdaptArgs a{mode, source, target_labeled, target_unlabeled, dev, target_fraction, config, out, seed};
        return capture([&](std::ostream& o, std::ostream& e) { return run_adapt(a, o, e); });
      },
      py::arg("mode"), py::arg("source"), py::arg("target_labeled") = "", py::arg("target_unlabeled") = "",
      py::arg("dev") = "", py::arg("config") = "", py::arg("out") = "", py::arg("target_fraction") = std::nullopt,
      py::arg("seed") = std::nullopt);
  m.def(
      "verify",
      [](const std::string& suite) {
        return capture([&](std::ostream& o, std::ostream& e) { return run_verify(suite, o, e); });
      },
      py::arg("suite") = "all");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def("predict", &Model::predict, py::arg("jsonl"))
      .def("evaluate_json", &Model::evaluate, py::arg("jsonl"))
      .def("config_json", &Model::config)
      .def_property_readonly("vocab_size", &Model::vocab_size);
}
