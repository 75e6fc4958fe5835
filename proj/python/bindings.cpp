#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "run_config.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/pipeline.hpp"

namespace py = pybind11;
using namespace xmlc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Tensor& t) {
  Array out({t.dim(0), t.dim(1)});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor from_array(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

Terminology terminology_of(const std::string& name) {
  if (name == "drg") return Terminology::Drg;
  if (name == "cpt") return Terminology::Cpt;
  if (name == "drugs") return Terminology::Drug;
  throw ArgumentError("unknown auxiliary terminology '" + name + "' (use drg, cpt, drugs)");
}

AuxCodes aux_from(const py::dict& d) {
  AuxCodes a;
  for (const auto& [k, v] : d) {
    a.of(terminology_of(py::cast<std::string>(k))) = py::cast<std::vector<std::string>>(v);
  }
  return a;
}

std::vector<DocumentRecord> training_docs(const std::vector<std::vector<int>>& labels,
                                          const std::vector<py::dict>& aux = {}) {
  if (!aux.empty() && aux.size() != labels.size())
    throw DimensionError("labels and aux must have one entry per document");
  std::vector<DocumentRecord> docs(labels.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].doc_id = std::to_string(i);
    docs[i].labels = labels[i];
    std::sort(docs[i].labels.begin(), docs[i].labels.end());
    docs[i].labels.erase(std::unique(docs[i].labels.begin(), docs[i].labels.end()), docs[i].labels.end());
    docs[i].split = Split::Train;
    if (!aux.empty()) docs[i].aux = aux_from(aux[i]);
  }
  return docs;
}

py::dict metrics_dict(const MetricsReport& r) {
  py::dict d;
  d["micro_f1"] = r.micro_f1;
  d["macro_f1"] = r.macro_f1;
  d["micro_auc"] = r.micro_auc;
  d["macro_auc"] = r.macro_auc;
  for (const auto& [k, v] : r.p_at_k) d[py::str("p_at_" + std::to_string(k))] = v;
  d["docs"] = r.docs;
  d["labels"] = r.labels;
  return d;
}

py::dict raw_dict(const RawDocument& doc) {
  py::dict d;
  d["doc_id"] = doc.doc_id;
  d["text"] = doc.text;
  d["labels"] = doc.labels;
  d["drg"] = doc.aux.drg;
  d["cpt"] = doc.aux.cpt;
  d["drugs"] = doc.aux.drugs;
  return d;
}

cli::RunConfig run_config(const std::map<std::string, std::string>& settings) {
  cli::RunConfig cfg;
  for (const auto& [k, v] : settings) cfg.set(k, v, "python");
  cfg.validate();
  return cfg;
}

class MaskIndex {
 public:
  MaskIndex(const std::vector<std::vector<int>>& labels, const std::vector<py::dict>& aux, std::size_t num_labels,
            double tau)
      : index_(build_mask_index(training_docs(labels, aux), num_labels, tau)) {}

  std::vector<int> candidates(const py::dict& aux) const { return make_doc_mask(aux_from(aux), index_).labels; }
  void set_tau(double tau) { index_.set_tau(tau); }

  py::dict stats(const std::vector<std::vector<int>>& labels, const std::vector<py::dict>& aux) const {
    const MaskStats s = mask_stats(index_, training_docs(labels, aux));
    py::dict d;
    d["recall"] = s.recall;
    d["mean_mask_size"] = s.mean_mask_size;
    d["mask_fraction"] = s.mask_fraction;
    return d;
  }

  // P(label | code) for one code; empty when the code was never seen.
  std::map<int, double> probabilities(const std::string& terminology, const std::string& code) const {
    std::map<int, double> out;
    if (const auto* ct = index_.find(terminology_of(terminology), code))
      for (const auto& e : ct->entries) out[e.label] = e.prob;
    return out;
  }

 private:
  AuxMaskIndex index_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label-graph and auxiliary-mask multi-label text classifier";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<StalenessError>(m, "StalenessError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  m.def(
      "preprocess", [](const std::string& text, std::size_t max_len) { return preprocess(text, max_len); },
      py::arg("text"), py::arg("max_len") = kDefaultMaxLen,
      "Clean and tokenise a note; returns the token list.");

  m.def(
      "cooccurrence",
      [](const std::vector<std::vector<int>>& labels, std::size_t num_labels, double lambda) {
        const auto g = build_cooccurrence(training_docs(labels), num_labels, lambda);
        py::dict d;
        d["adjacency"] = to_array(g.adjacency);
        d["cond_prob"] = to_array(g.cond_prob_matrix());
        return d;
      },
      py::arg("labels"), py::arg("num_labels"), py::arg("lambda_") = 1.0,
      "Label co-occurrence graph from per-document label id lists.");

  m.def(
      "propagation_matrix",
      [](const Array& adjacency, const std::string& mode) {
        return to_array(propagation_matrix(from_array(adjacency), parse_norm_mode(mode)));
      },
      py::arg("adjacency"), py::arg("mode") = "self_loop_row_norm");

  py::class_<MaskIndex>(m, "MaskIndex")
      .def(py::init<const std::vector<std::vector<int>>&, const std::vector<py::dict>&, std::size_t, double>(),
           py::arg("labels"), py::arg("aux"), py::arg("num_labels"), py::arg("tau") = kDefaultTau)
      .def("candidates", &MaskIndex::candidates, py::arg("aux"))
      .def("set_tau", &MaskIndex::set_tau, py::arg("tau"))
      .def("stats", &MaskIndex::stats, py::arg("labels"), py::arg("aux"))
      .def("probabilities", &MaskIndex::probabilities, py::arg("terminology"), py::arg("code"));

  m.def(
      "compute_metrics",
      [](const Array& scores, const std::vector<std::vector<int>>& gold, double threshold, std::vector<int> ks) {
        if (scores.ndim() != 2) throw DimensionError("scores must be a 2-d array");
        std::vector<std::vector<double>> s(static_cast<std::size_t>(scores.shape(0)));
        for (std::size_t d = 0; d < s.size(); ++d)
          s[d].assign(scores.data() + d * scores.shape(1), scores.data() + (d + 1) * scores.shape(1));
        return metrics_dict(compute_metrics(s, gold, threshold, ks));
      },
      py::arg("scores"), py::arg("gold"), py::arg("threshold") = 0.0005,
      py::arg("ks") = std::vector<int>{5, 8, 15});

  m.def(
      "generate_synthetic",
      [](std::size_t num_labels, std::size_t n_docs, std::uint64_t seed) {
        const SyntheticCorpus c = generate(planted_spec(num_labels, n_docs, seed));
        py::dict out;
        for (Split s : {Split::Train, Split::Validation, Split::Test}) {
          py::list docs;
          for (const auto& doc : c.split(s)) docs.append(raw_dict(doc));
          out[to_string(s)] = docs;
        }
        out["catalog_tsv"] = c.catalog_tsv;
        return out;
      },
      py::arg("num_labels") = 200, py::arg("n_docs") = 5000, py::arg("seed") = 1,
      "Planted synthetic corpus: train, validation and test lists of document dicts plus the catalog.");

  m.def(
      "run_synthetic",
      [](std::size_t num_labels, std::size_t n_docs, std::uint64_t seed,
         const std::map<std::string, std::string>& settings) {
        const ExperimentConfig cfg = run_config(settings).experiment();
        RunResult r;
        {
          py::gil_scoped_release release;
          const PreparedData data = prepare_synthetic(generate(planted_spec(num_labels, n_docs, seed)));
          r = run_experiment(data, cfg);
        }
        py::dict out = metrics_dict(r.test);
        out["best_epoch"] = r.training.best_epoch;
        out["epochs"] = r.training.history.size();
        return out;
      },
      py::arg("num_labels"), py::arg("n_docs"), py::arg("seed") = 1,
      py::arg("settings") = std::map<std::string, std::string>{},
      "Generate a planted corpus, train with the given configuration keys and score the test split.");

  m.def(
      "run_command",
      [](const std::string& subcommand, const std::map<std::string, std::string>& settings, bool verbose) {
        const cli::RunConfig cfg = run_config(settings);
        const cli::Manifest man = cli::run_subcommand(subcommand, cfg, verbose);
        py::dict out;
        out["config_hash"] = man.config_hash;
        out["inputs"] = man.inputs;
        out["outputs"] = man.outputs;
        return out;
      },
      py::arg("subcommand"), py::arg("settings") = std::map<std::string, std::string>{},
      py::arg("verbose") = false, "Run one pipeline stage exactly as the command-line tool does.");

  m.def("subcommands", &cli::subcommands);

  m.def("config_keys", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& k : cli::key_specs()) out.emplace_back(k.name, k.default_value, k.help);
    return out;
  });
}
