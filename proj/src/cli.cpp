#include "entfact/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "entfact/config.hpp"
#include "entfact/corpus.hpp"
#include "entfact/detector.hpp"
#include "entfact/error.hpp"
#include "entfact/eval.hpp"
#include "entfact/generator.hpp"
#include "entfact/hash.hpp"
#include "entfact/kgraph.hpp"
#include "entfact/manipulate.hpp"

namespace entfact::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Raised for problems found before a stage starts; maps to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kSplits[] = {"train", "valid", "test"};

struct Stage {
  std::string name;
  const Config& config;
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, fs::path>> inputs;
  std::vector<fs::path> outputs;

  fs::path artifact(const std::string& file) const { return out_dir / file; }

  // Inputs from earlier stages are keyed by file name, external ones by config key.
  void input(const std::string& key, const fs::path& path) { inputs.emplace_back(key, path); }
  fs::path produced(const std::string& file) {
    outputs.push_back(artifact(file));
    return outputs.back();
  }
};

std::string format_double(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.2f", v);
  return buffer;
}

double pct(double fraction) { return round2(100.0 * fraction); }

// ------------------------------------------------------------ config access

std::uint64_t master_seed(const Config& c) { return static_cast<std::uint64_t>(c.get_int("seed", 0)); }

std::uint64_t stage_seed(const Config& c, const std::string& key, std::string_view label) {
  if (c.contains(key)) return static_cast<std::uint64_t>(c.get_int(key, 0));
  return derive_seed(master_seed(c), label);
}

std::size_t get_size(const Config& c, std::string_view key, std::size_t fallback) {
  const auto v = c.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ValidationError("'" + std::string(key) + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

SplitFractions split_fractions(const Config& c) {
  SplitFractions s;
  s.train = c.get_double("split.train", s.train);
  s.valid = c.get_double("split.valid", s.valid);
  s.test = c.get_double("split.test", s.test);
  return s;
}

ReplacementStrategy strategy_from(const Config& c) {
  const auto name = c.get_string("manipulate.strategy", "random_most");
  const auto kind = parse_strategy(name);
  if (!kind) throw ValidationError("unknown manipulate.strategy '" + name + "'");
  ReplacementStrategy s;
  s.kind = *kind;
  s.band_size = get_size(c, "manipulate.band_size", s.band_size);
  s.max_attempts = get_size(c, "manipulate.max_attempts", s.max_attempts);
  return s;
}

ModelConfig model_config_from(const Config& c) {
  ModelConfig m;
  m.node_dim = get_size(c, "model.node_dim", m.node_dim);
  m.gcn_layers = get_size(c, "model.gcn_layers", m.gcn_layers);
  m.gcn_dim = get_size(c, "model.gcn_dim", m.gcn_dim);
  m.text_dim = get_size(c, "model.text_dim", m.text_dim);
  m.dropout = c.get_double("model.dropout", m.dropout);
  const auto agg = c.get_string("model.aggregation", "mean");
  const auto parsed = parse_aggregation(agg);
  if (!parsed) throw ValidationError("unknown model.aggregation '" + agg + "'");
  m.aggregation = *parsed;
  const auto nb = c.get_string("model.neighbors", "incoming");
  if (nb != "incoming" && nb != "symmetric") throw ValidationError("unknown model.neighbors '" + nb + "'");
  m.neighbors = nb == "symmetric" ? NeighborMode::Symmetric : NeighborMode::Incoming;
  m.use_graph = c.get_bool("model.use_graph", m.use_graph);
  m.entity_loss_weight = c.get_double("model.entity_loss_weight", m.entity_loss_weight);
  m.entity_positive_weight = c.get_double("model.entity_positive_weight", m.entity_positive_weight);
  m.min_node_frequency = get_size(c, "model.min_node_frequency", m.min_node_frequency);
  m.min_token_frequency = get_size(c, "model.min_token_frequency", m.min_token_frequency);
  m.embedding_init_std = c.get_double("model.embedding_init_std", m.embedding_init_std);
  if (m.gcn_layers == 0 || m.node_dim == 0 || m.gcn_dim == 0 || m.text_dim == 0) {
    throw ValidationError("model dimensions and gcn_layers must be positive");
  }
  if (m.dropout < 0.0 || m.dropout >= 1.0) throw ValidationError("model.dropout must lie in [0, 1)");
  return m;
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.batch_size = get_size(c, "train.batch_size", t.batch_size);
  t.epochs = get_size(c, "train.epochs", t.epochs);
  t.warmup_fraction = c.get_double("train.warmup_fraction", t.warmup_fraction);
  t.clip_norm = c.get_double("train.clip_norm", t.clip_norm);
  t.beta1 = c.get_double("train.beta1", t.beta1);
  t.beta2 = c.get_double("train.beta2", t.beta2);
  t.epsilon = c.get_double("train.epsilon", t.epsilon);
  t.seed = stage_seed(c, "train.seed", "train");
  if (t.batch_size == 0) throw ValidationError("train.batch_size must be positive");
  if (t.learning_rate < 0.0) throw ValidationError("train.learning_rate must be non-negative");
  if (t.warmup_fraction < 0.0 || t.warmup_fraction >= 1.0) {
    throw ValidationError("train.warmup_fraction must lie in [0, 1)");
  }
  return t;
}

fs::path input_path(const Config& c, const std::string& key, bool required) {
  const auto value = c.get_string(key, "");
  if (value.empty()) {
    if (required) throw ValidationError("missing required path '" + key + "'");
    return {};
  }
  if (!fs::exists(value)) throw ValidationError(key + " does not exist: " + value);
  return value;
}

// Everything that can be checked without doing work.
void validate(const std::string& stage, const Config& c) {
  if (c.get_string("paths.output_dir", "").empty()) throw ValidationError("missing required path 'paths.output_dir'");
  for (const char* key : {"paths.corpus", "paths.kb", "paths.gazetteer", "paths.embeddings"}) {
    input_path(c, key, false);
  }
  if (stage == "ingest") {
    input_path(c, "paths.corpus", true);
    const auto fmt = c.get_string("paths.corpus_format", "jsonl-annotated");
    const auto parsed = parse_corpus_format(fmt);
    if (!parsed) throw ValidationError("unknown paths.corpus_format '" + fmt + "'");
    if (*parsed == CorpusFormat::JsonlRaw) input_path(c, "paths.gazetteer", true);
  }
  if (stage == "build-kb") {
    input_path(c, "paths.kb", true);
    const auto fmt = c.get_string("paths.kb_format", "ntriples");
    if (!parse_triple_format(fmt)) throw ValidationError("unknown paths.kb_format '" + fmt + "'");
  }
  if (stage == "make-dataset") {
    const auto s = split_fractions(c);
    if (s.train < 0.0 || s.valid < 0.0 || s.test < 0.0 || std::abs(s.train + s.valid + s.test - 1.0) > 1e-9) {
      throw ValidationError("split fractions must be non-negative and sum to 1");
    }
    const auto strategy = strategy_from(c);
    if (get_size(c, "manipulate.max_k", 1) == 0) throw ValidationError("manipulate.max_k must be positive");
    if (strategy.kind == StrategyKind::Generated) {
      const auto kind = c.get_string("generator.kind", "ngram");
      if (kind != "ngram" && kind != "http") throw ValidationError("unknown generator.kind '" + kind + "'");
      if (kind == "http" && c.get_string("generator.endpoint", "").empty()) {
        throw ValidationError("generator.endpoint is required for generator.kind = \"http\"");
      }
    }
  }
  if (stage == "build-graphs" || stage == "train" || stage == "eval") {
    const auto flavor = c.get_string("graph.flavor", "kb");
    if (flavor != "kb" && flavor != "cooccurrence") throw ValidationError("unknown graph.flavor '" + flavor + "'");
  }
  if (stage == "train") {
    model_config_from(c);
    train_config_from(c);
  }
}

// ------------------------------------------------------------ artifacts

std::vector<Document> load_split(Stage& st, const std::string& name) {
  const auto path = st.artifact(name + ".jsonl");
  st.input(name + ".jsonl", path);
  return load_documents(path, CorpusFormat::JsonlAnnotated);
}

KnowledgeBase load_kb(Stage& st, bool required) {
  const auto path = st.artifact("kb.tsv");
  if (!fs::exists(path)) {
    if (required) throw Error(ErrorCode::UnreadableFile, "kb.tsv not found; run build-kb first");
    return {};
  }
  st.input("kb.tsv", path);
  return index_kb(parse_triples(path, TripleFormat::Tsv).triples);
}

bool kb_flavor(const Config& c) { return c.get_string("graph.flavor", "kb") == "kb"; }

GraphOptions graph_options(const Config& c) {
  GraphOptions g;
  g.max_triples_per_entity = get_size(c, "graph.triple_cap", 0);
  g.cap_seed = stage_seed(c, "graph.seed", "graph");
  g.shared_relations = c.get_bool("graph.shared_relations", false);
  return g;
}

std::vector<FactualGraph> build_graphs(const Config& c, std::span<const Document> docs, const KnowledgeBase& kb) {
  std::vector<FactualGraph> graphs;
  graphs.reserve(docs.size());
  const bool use_kb = kb_flavor(c);
  const auto options = graph_options(c);
  for (const auto& d : docs) graphs.push_back(use_kb ? build_factual_graph(d, kb, options) : build_cooccurrence_graph(d));
  return graphs;
}

std::vector<PreparedExample> prepare_all(std::span<const Document> docs, std::span<const FactualGraph> graphs,
                                         const DetectorParams& params) {
  std::vector<PreparedExample> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) out.push_back(prepare_example(docs[i], graphs[i], params));
  return out;
}

void write_json(const fs::path& path, const ojson& j) { write_file(path, j.dump(2) + "\n"); }

void write_manifest(const Stage& st) {
  ojson m;
  m["stage"] = st.name;
  m["config_hash"] = sha256_hex(st.config.canonical());
  m["seed"] = st.seed;
  ojson inputs = ojson::object();
  for (const auto& [key, path] : st.inputs) inputs[key] = sha256_file(path);
  m["input_hashes"] = std::move(inputs);
  ojson outputs = ojson::object();
  for (const auto& path : st.outputs) outputs[path.filename().string()] = sha256_file(path);
  m["output_hashes"] = std::move(outputs);
  if (st.config.get_bool("manifest.record_wall_time", false)) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    m["wall_time"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  }
  write_json(st.artifact("manifest_" + st.name + ".json"), m);
}

// ------------------------------------------------------------ stages

void run_ingest(Stage& st, std::ostream& out) {
  const auto& c = st.config;
  const auto corpus_path = input_path(c, "paths.corpus", true);
  const auto format = *parse_corpus_format(c.get_string("paths.corpus_format", "jsonl-annotated"));
  st.input("paths.corpus", corpus_path);
  auto docs = load_documents(corpus_path, format);
  const auto gaz_path = input_path(c, "paths.gazetteer", false);
  if (!gaz_path.empty()) {
    st.input("paths.gazetteer", gaz_path);
    const auto gazetteer = Gazetteer::load(gaz_path);
    // raw documents always need annotation; annotated ones keep their mentions
    if (format == CorpusFormat::JsonlRaw) {
      for (auto& d : docs) d = annotate_entities(d, gazetteer);
    }
  }
  write_documents(st.produced("corpus.annotated.jsonl"), docs);
  out << "ingested " << docs.size() << " documents\n";
}

void run_build_kb(Stage& st, std::ostream& out) {
  const auto& c = st.config;
  const auto path = input_path(c, "paths.kb", true);
  st.input("paths.kb", path);
  auto parsed = parse_triples(path, *parse_triple_format(c.get_string("paths.kb_format", "ntriples")));
  const auto kb = index_kb(std::move(parsed.triples));
  kb.write_tsv(st.produced("kb.tsv"));
  out << "indexed " << kb.size() << " triples (" << parsed.skipped_count << " malformed lines skipped)\n";
}

void run_make_dataset(Stage& st, std::ostream& out) {
  const auto& c = st.config;
  const auto corpus_path = st.artifact("corpus.annotated.jsonl");
  st.input("corpus.annotated.jsonl", corpus_path);
  const auto docs = load_documents(corpus_path, CorpusFormat::JsonlAnnotated);

  DatasetOptions options;
  options.strategy = strategy_from(c);
  options.max_k = get_size(c, "manipulate.max_k", 1);
  options.split = split_fractions(c);
  options.seed = stage_seed(c, "manipulate.seed", "make-dataset");
  const auto table = FrequencyTable::build(docs);

  std::unique_ptr<GeneratorPort> port;
  Gazetteer gazetteer;
  GenerationContext generation;
  if (options.strategy.kind == StrategyKind::Generated) {
    if (c.get_string("generator.kind", "ngram") == "http") {
      HttpGeneratorOptions h;
      h.endpoint = c.get_string("generator.endpoint");
      h.timeout = std::chrono::milliseconds(
          static_cast<std::int64_t>(1000.0 * c.get_double("generator.timeout_s", 30.0)));
      h.retries = static_cast<int>(c.get_int("generator.retries", 3));
      h.bearer_token = generator_token_from_env();
      port = std::make_unique<HttpGenerator>(h);
    } else {
      auto ngram = std::make_unique<NgramGenerator>(stage_seed(c, "generator.seed", "generator"));
      for (const auto& d : docs) ngram->train(d.text);
      port = std::move(ngram);
    }
    const auto gaz_path = input_path(c, "paths.gazetteer", false);
    if (!gaz_path.empty()) {
      st.input("paths.gazetteer", gaz_path);
      gazetteer = Gazetteer::load(gaz_path);
    } else {
      for (const auto& d : docs) {
        for (const auto& m : d.mentions) gazetteer.add(m.surface, m.type);
      }
    }
    generation.port = port.get();
    generation.gazetteer = &gazetteer;
    generation.table = &table;
    generation.max_tokens = static_cast<int>(c.get_int("generator.max_tokens", 8));
  }

  const auto dataset = build_dataset(docs, options, table, port ? &generation : nullptr);
  write_documents(st.produced("train.jsonl"), dataset.train);
  write_documents(st.produced("valid.jsonl"), dataset.valid);
  write_documents(st.produced("test.jsonl"), dataset.test);
  std::string records;
  for (const auto& r : dataset.records) records += record_to_json_line(r) + "\n";
  write_file(st.produced("manipulations.jsonl"), records);
  std::string failures;
  for (const auto& f : dataset.failures) {
    failures += ojson{{"doc_id", f.doc_id}, {"reason", f.reason}}.dump() + "\n";
  }
  write_file(st.produced("failures.jsonl"), failures);
  out << "train " << dataset.train.size() << ", valid " << dataset.valid.size() << ", test "
      << dataset.test.size() << "; " << dataset.records.size() << " replacements, "
      << dataset.failures.size() << " failures\n";
}

void run_build_graphs(Stage& st, std::ostream& out) {
  const auto& c = st.config;
  const auto kb = load_kb(st, kb_flavor(c));
  for (const char* split : kSplits) {
    const auto docs = load_split(st, split);
    const auto graphs = build_graphs(c, docs, kb);
    std::string lines;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      auto j = ojson::parse(graph_to_json(graphs[i]));
      lines += ojson{{"id", docs[i].id}, {"graph", std::move(j)}}.dump() + "\n";
    }
    write_file(st.produced(std::string("graphs_") + split + ".jsonl"), lines);
    out << split << ": " << graphs.size() << " graphs\n";
  }
}

void run_train(Stage& st, std::ostream& out) {
  const auto& c = st.config;
  const auto kb = load_kb(st, kb_flavor(c));
  const auto train_docs = load_split(st, "train");
  const auto valid_docs = load_split(st, "valid");
  const auto train_graphs = build_graphs(c, train_docs, kb);
  const auto valid_graphs = build_graphs(c, valid_docs, kb);

  const auto model = model_config_from(c);
  const auto train_config = train_config_from(c);
  auto params = init_detector(model, build_node_vocab(train_graphs, model.min_node_frequency),
                              build_token_vocab(train_docs, model.min_token_frequency),
                              stage_seed(c, "model.seed", "init"));
  const auto emb_path = input_path(c, "paths.embeddings", false);
  if (!emb_path.empty()) {
    st.input("paths.embeddings", emb_path);
    out << "loaded " << load_pretrained_embeddings(params, emb_path) << " pretrained node embeddings\n";
  }
  const auto train_set = prepare_all(train_docs, train_graphs, params);
  const auto valid_set = prepare_all(valid_docs, valid_graphs, params);
  const auto result = train(std::move(params), train_set, valid_set, train_config);

  save_checkpoint(result.params, train_config, st.produced("checkpoint.json"));
  ojson history = ojson::array();
  for (const auto& e : result.history) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_accuracy", e.valid_accuracy}});
  }
  write_json(st.produced("history.json"), ojson{{"best_epoch", result.best_epoch}, {"epochs", history}});
  out << "trained " << result.history.size() << " epochs; best epoch " << result.best_epoch << "\n";
}

ojson prf_json(const PrecisionRecallF1& m) {
  return {{"precision", pct(m.precision)}, {"recall", pct(m.recall)}, {"f1", pct(m.f1)}};
}

void run_eval(Stage& st, std::ostream& out) {
  const auto& c = st.config;
  const auto ck_path = st.artifact("checkpoint.json");
  st.input("checkpoint.json", ck_path);
  const auto checkpoint = load_checkpoint(ck_path);
  const auto kb = load_kb(st, kb_flavor(c));
  const auto test = load_split(st, "test");
  const auto graphs = build_graphs(c, test, kb);
  const auto examples = prepare_all(test, graphs, checkpoint.params);
  const auto predictions = predict_batch(examples, checkpoint.params);

  std::vector<Label> predicted, gold;
  std::vector<bool> entity_predicted, entity_gold;
  std::string lines;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& p = predictions[i];
    predicted.push_back(p.label);
    gold.push_back(test[i].label);
    ojson entities = ojson::array();
    for (std::size_t e = 0; e < examples[i].entity_surfaces.size(); ++e) {
      const bool g = examples[i].entity_labels[e] == 1;
      entity_predicted.push_back(p.entity_manipulated[e]);
      entity_gold.push_back(g);
      entities.push_back({{"surface", examples[i].entity_surfaces[e]}, {"gold", g}, {"predicted", bool(p.entity_manipulated[e])}});
    }
    lines += ojson{{"id", test[i].id},
                   {"gold", label_name(test[i].label)},
                   {"predicted", label_name(p.label)},
                   {"p_manipulated", p.article_probs(1)},
                   {"entities", std::move(entities)}}
                 .dump() +
             "\n";
  }
  write_file(st.produced("predictions.jsonl"), lines);

  const double accuracy = detection_accuracy(predicted, gold);
  const auto em = entity_metrics(entity_predicted, entity_gold);

  const auto subset = unknown_entity_subset(test, kb, stage_seed(c, "eval.seed", "eval"));
  auto subset_accuracy = [&](std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::vector<Label> sp, sg;
    for (auto idx : {a, b}) {
      for (std::size_t i : idx) {
        sp.push_back(predicted[i]);
        sg.push_back(gold[i]);
      }
    }
    return detection_accuracy(sp, sg);
  };

  ojson metrics;
  metrics["documents"] = test.size();
  metrics["entities"] = entity_gold.size();
  metrics["detection_accuracy"] = pct(accuracy);
  metrics["entity_overall"] = prf_json(em.overall);
  metrics["entity_overall_micro"] = prf_json(em.overall_micro);
  metrics["entity_manipulated"] = prf_json(em.manipulated);
  metrics["entity_not_manipulated"] = prf_json(em.not_manipulated);
  metrics["entity_counts"] = ojson{{"tp", em.counts.tp}, {"fp", em.counts.fp}, {"tn", em.counts.tn}, {"fn", em.counts.fn}};
  metrics["unknown_entity_subset"] = ojson{
      {"manipulated_documents", subset.manipulated.size()},
      {"human_documents", subset.human.size()},
      {"percent_of_test", round2(subset.percent_of_test)},
      {"percent_of_manipulated", pct(subset.fraction_of_manipulated)},
      {"accuracy_balanced", pct(subset_accuracy(subset.manipulated, subset.human))},
      {"accuracy_manipulated_only", pct(subset_accuracy(subset.manipulated, {}))}};
  write_json(st.produced("metrics.json"), metrics);

  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "detection_accuracy," << format_double(100.0 * accuracy) << "\n";
  auto prf_rows = [&](const std::string& name, const PrecisionRecallF1& m) {
    csv << name << "_precision," << format_double(100.0 * m.precision) << "\n";
    csv << name << "_recall," << format_double(100.0 * m.recall) << "\n";
    csv << name << "_f1," << format_double(100.0 * m.f1) << "\n";
  };
  prf_rows("entity_overall", em.overall);
  prf_rows("entity_overall_micro", em.overall_micro);
  prf_rows("entity_manipulated", em.manipulated);
  csv << "unknown_subset_percent_of_test," << format_double(subset.percent_of_test) << "\n";
  write_file(st.produced("metrics.csv"), csv.str());
  out << "accuracy " << format_double(100.0 * accuracy) << " on " << test.size() << " documents\n";
}

void run_stats(Stage& st, std::ostream& out) {
  const auto kb = load_kb(st, false);
  ojson splits = ojson::array();
  std::ostringstream csv;
  csv << "split,size,avg_words,pct_person,pct_organization,pct_location,entity_coverage_pct,"
         "known_manipulated_pct\n";
  for (const char* name : kSplits) {
    const auto docs = load_split(st, name);
    const auto s = dataset_stats(name, docs, kb);
    ojson j{{"split", s.name},
            {"size", s.size},
            {"avg_words", round2(s.avg_words)},
            {"pct_person", round2(s.pct_person)},
            {"pct_organization", round2(s.pct_organization)},
            {"pct_location", round2(s.pct_location)},
            {"entity_coverage_pct", round2(s.entity_coverage_pct)}};
    j["known_manipulated_pct"] = s.known_manipulated_pct ? ojson(round2(*s.known_manipulated_pct)) : ojson(nullptr);
    splits.push_back(std::move(j));
    csv << s.name << ',' << s.size << ',' << format_double(s.avg_words) << ','
        << format_double(s.pct_person) << ',' << format_double(s.pct_organization) << ','
        << format_double(s.pct_location) << ',' << format_double(s.entity_coverage_pct) << ','
        << (s.known_manipulated_pct ? format_double(*s.known_manipulated_pct) : std::string()) << "\n";
    out << name << ": " << s.size << " documents\n";
  }
  write_json(st.produced("stats.json"), ojson{{"splits", splits}});
  write_file(st.produced("stats.csv"), csv.str());
}

using StageFn = void (*)(Stage&, std::ostream&);

struct StageEntry {
  std::string name;
  StageFn run;
  const char* help;
};

const std::vector<StageEntry>& stages() {
  static const std::vector<StageEntry> table = {
      {"ingest", run_ingest, "load and annotate the corpus"},
      {"build-kb", run_build_kb, "parse the knowledge base into kb.tsv"},
      {"make-dataset", run_make_dataset, "split and manipulate documents"},
      {"build-graphs", run_build_graphs, "write per-document factual graphs"},
      {"train", run_train, "train the detector"},
      {"eval", run_eval, "score the test split"},
      {"stats", run_stats, "dataset statistics"}};
  return table;
}

// Turns leftover `--key=value` / `--key value` arguments into overrides.
void apply_overrides(const std::vector<std::string>& extras, Config& config) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) throw ValidationError("unexpected argument '" + arg + "'");
    const auto body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      config.set(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      config.set(body, extras[++i]);
    } else {
      config.set(body, "true");
    }
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entity-perturbation fake news toolkit", "entfact"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<CLI::App*> subcommands;
  for (const auto& stage : stages()) {
    auto* sub = app.add_subcommand(stage.name, stage.help);
    sub->add_option("--config", config_path, "pipeline config file")->required();
    sub->allow_extras();
    subcommands.push_back(sub);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ConfigError: " << e.what() << "\n";
    return 2;
  }

  std::size_t which = 0;
  while (!subcommands[which]->parsed()) ++which;
  const auto& [name, fn, help] = stages()[which];

  Config config;
  try {
    config = Config::load(config_path);
    apply_overrides(subcommands[which]->remaining(), config);
    validate(name, config);
  } catch (const ValidationError& e) {
    err << "ConfigError: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  }

  try {
    Stage st{name, config, config.get_string("paths.output_dir"), master_seed(config), {}, {}};
    fs::create_directories(st.out_dir);
    fn(st, out);
    write_manifest(st);
  } catch (const ValidationError& e) {
    err << "ConfigError: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "InternalError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace entfact::cli
