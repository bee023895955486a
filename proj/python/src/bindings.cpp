#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "entfact/cli.hpp"
#include "entfact/corpus.hpp"
#include "entfact/detector.hpp"
#include "entfact/error.hpp"
#include "entfact/eval.hpp"
#include "entfact/kgraph.hpp"
#include "entfact/manipulate.hpp"
#include "entfact/synthetic.hpp"

namespace py = pybind11;
using namespace entfact;

namespace {

std::vector<Label> to_labels(const std::vector<int>& values) {
  std::vector<Label> out;
  out.reserve(values.size());
  for (int v : values) out.push_back(v ? Label::Manipulated : Label::HumanWritten);
  return out;
}

}  // namespace

PYBIND11_MODULE(_entfact, m) {
  m.doc() = "Entity-perturbation fake news toolkit";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(error_code_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::enum_<EntityType>(m, "EntityType")
      .value("PER", EntityType::Person)
      .value("ORG", EntityType::Organization)
      .value("LOC", EntityType::Location);

  py::enum_<Label>(m, "Label")
      .value("HUMAN", Label::HumanWritten)
      .value("MANIPULATED", Label::Manipulated);

  py::class_<EntityMention>(m, "EntityMention")
      .def_readonly("surface", &EntityMention::surface)
      .def_readonly("type", &EntityMention::type)
      .def_readonly("start", &EntityMention::start)
      .def_readonly("end", &EntityMention::end)
      .def_readonly("sentence_index", &EntityMention::sentence_index);

  py::class_<Document>(m, "Document")
      .def(py::init<>())
      .def_readwrite("id", &Document::id)
      .def_readwrite("text", &Document::text)
      .def_readwrite("label", &Document::label)
      .def_readonly("mentions", &Document::mentions)
      .def_readonly("manipulated_surfaces", &Document::manipulated_surfaces)
      .def("distinct_surfaces", &Document::distinct_surfaces)
      .def("to_json", &document_to_json_line)
      .def("__repr__", [](const Document& d) { return "<Document " + d.id + ">"; });

  m.def("read_documents", [](const std::string& jsonl, const std::string& format) {
    const auto fmt = parse_corpus_format(format);
    if (!fmt) throw Error(ErrorCode::ConfigError, "unknown corpus format " + format);
    std::istringstream in(jsonl);
    return read_documents(in, *fmt);
  }, py::arg("jsonl"), py::arg("format") = "jsonl-annotated");
  m.def("load_documents", [](const std::filesystem::path& path, const std::string& format) {
    const auto fmt = parse_corpus_format(format);
    if (!fmt) throw Error(ErrorCode::ConfigError, "unknown corpus format " + format);
    return load_documents(path, *fmt);
  }, py::arg("path"), py::arg("format") = "jsonl-annotated");

  py::class_<Gazetteer>(m, "Gazetteer")
      .def(py::init<>())
      .def(py::init<std::map<std::string, EntityType>>())
      .def_static("load", &Gazetteer::load)
      .def("add", &Gazetteer::add)
      .def("lookup", &Gazetteer::lookup)
      .def("find_mentions", &Gazetteer::find_mentions);
  m.def("annotate_entities", &annotate_entities);

  m.def("apply_replacement", &apply_replacement, py::arg("doc"), py::arg("old_surface"),
        py::arg("new_surface"));

  py::class_<Triple>(m, "Triple")
      .def(py::init<std::string, std::string, std::string>())
      .def_readonly("subject", &Triple::subject)
      .def_readonly("relation", &Triple::relation)
      .def_readonly("object", &Triple::object)
      .def("__eq__", [](const Triple& a, const Triple& b) { return a == b; })
      .def("__repr__", [](const Triple& t) {
        return "Triple(" + t.subject + ", " + t.relation + ", " + t.object + ")";
      });

  m.def("parse_triples", [](const std::string& text, const std::string& format) {
    const auto fmt = parse_triple_format(format);
    if (!fmt) throw Error(ErrorCode::ConfigError, "unknown triple format " + format);
    std::istringstream in(text);
    auto r = parse_triples(in, *fmt);
    return py::make_tuple(r.triples, r.skipped_count);
  }, py::arg("text"), py::arg("format") = "ntriples",
     "Returns (triples, skipped_count).");

  py::class_<KnowledgeBase>(m, "KnowledgeBase")
      .def(py::init([](std::vector<Triple> triples) { return index_kb(std::move(triples)); }))
      .def("__len__", &KnowledgeBase::size)
      .def("covers", &KnowledgeBase::covers)
      .def("one_hop", [](const KnowledgeBase& kb, const std::string& s) { return one_hop(kb, s); });

  py::class_<FactualGraph>(m, "FactualGraph")
      .def_property_readonly("surfaces", [](const FactualGraph& g) {
        std::vector<std::string> out;
        for (const auto& n : g.nodes) out.push_back(n.surface);
        return out;
      })
      .def_property_readonly("kinds", [](const FactualGraph& g) {
        std::vector<std::string> out;
        for (const auto& n : g.nodes) out.emplace_back(node_kind_name(n.kind));
        return out;
      })
      .def_readonly("edges", &FactualGraph::edges)
      .def_readonly("doc_entity_nodes", &FactualGraph::doc_entity_nodes)
      .def_readonly("in_neighbors", &FactualGraph::in_neighbors)
      .def("to_json", &graph_to_json);
  m.def("build_factual_graph", [](const Document& d, const KnowledgeBase& kb, std::size_t cap, std::uint64_t seed) {
    return build_factual_graph(d, kb, GraphOptions{cap, seed});
  }, py::arg("doc"), py::arg("kb"), py::arg("max_triples_per_entity") = 0, py::arg("cap_seed") = 0);
  m.def("build_cooccurrence_graph", &build_cooccurrence_graph);

  m.def("gcn_forward", [](const std::vector<std::vector<int>>& neighbors, const Matrix& h1,
                          const std::vector<std::pair<Matrix, Vector>>& layers) {
    std::vector<GcnLayer> gl;
    for (const auto& [w, b] : layers) gl.push_back({w, b});
    return gcn_forward(neighbors, h1, gl);
  }, py::arg("neighbors"), py::arg("h1"), py::arg("layers"),
     "Mean-aggregation GCN; layers are (weight, bias) pairs. Returns every layer state.");

  m.def("detection_accuracy", [](const std::vector<int>& predicted, const std::vector<int>& gold) {
    return detection_accuracy(to_labels(predicted), to_labels(gold));
  });
  m.def("entity_metrics", [](const std::vector<bool>& predicted, const std::vector<bool>& gold) {
    const auto em = entity_metrics(predicted, gold);
    auto prf = [](const PrecisionRecallF1& x) {
      py::dict d;
      d["precision"] = x.precision;
      d["recall"] = x.recall;
      d["f1"] = x.f1;
      return d;
    };
    py::dict d;
    d["overall"] = prf(em.overall);
    d["overall_micro"] = prf(em.overall_micro);
    d["manipulated"] = prf(em.manipulated);
    d["not_manipulated"] = prf(em.not_manipulated);
    return d;
  });
  m.def("bootstrap_significance", [](const std::vector<int>& a, const std::vector<int>& b,
                                     const std::vector<int>& gold, std::size_t n, std::uint64_t seed) {
    return bootstrap_significance(to_labels(a), to_labels(b), to_labels(gold), n, seed);
  }, py::arg("preds_a"), py::arg("preds_b"), py::arg("gold"), py::arg("n_resamples") = 10000,
     py::arg("seed") = 0);

  m.def("make_synthetic_corpus", [](std::size_t documents, double zipf_exponent, std::uint64_t seed) {
    SyntheticOptions o;
    o.documents = documents;
    o.zipf_exponent = zipf_exponent;
    o.seed = seed;
    auto c = make_synthetic_corpus(o);
    return py::make_tuple(c.documents, c.triples);
  }, py::arg("documents") = 1000, py::arg("zipf_exponent") = 1.0, py::arg("seed") = 0,
     "Returns (documents, triples) of a seeded toy news world.");

  m.def("build_dataset", [](const std::vector<Document>& docs, const std::string& strategy,
                            std::size_t max_k, std::size_t band_size, std::uint64_t seed) {
    const auto kind = parse_strategy(strategy);
    if (!kind || *kind == StrategyKind::Generated) {
      throw Error(ErrorCode::ConfigError, "strategy must be random_most or random_least");
    }
    DatasetOptions o;
    o.strategy = {*kind, band_size, 10};
    o.max_k = max_k;
    o.seed = seed;
    const auto table = FrequencyTable::build(docs);
    auto ds = build_dataset(docs, o, table);
    return py::make_tuple(ds.train, ds.valid, ds.test);
  }, py::arg("docs"), py::arg("strategy") = "random_most", py::arg("max_k") = 1,
     py::arg("band_size") = 5000, py::arg("seed") = 0);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, "Runs one pipeline stage; returns (exit_code, stdout, stderr).");
}
