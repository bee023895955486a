// Acceptance suite: one PASS/FAIL line per criterion. `entfact_acceptance 5 6`
// runs a subset.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "entfact/detector.hpp"
#include "entfact/error.hpp"
#include "entfact/eval.hpp"
#include "entfact/manipulate.hpp"
#include "entfact/synthetic.hpp"
#include "entfact/text.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace entfact;
using namespace entfact::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- 1

Outcome gradient_check() {
  double worst = 0.0;
  std::size_t checked = 0, excluded = 0;
  for (double dropout : {0.0, 0.2}) {
    const auto toy = make_toy_problem(21, dropout, 4, 6, 5);
    if (toy.params.config.gcn_layers != 2) return {false, "toy model must have 2 GCN layers"};
    for (const auto& ex : toy.batch) {
      if (ex.node_rows.size() > 8) return {false, "toy graph exceeds 8 nodes"};
    }
    const auto r = finite_difference_check(toy.batch, toy.params, 5);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
    excluded += r.excluded;
  }
  return {worst < 1e-4 && checked > 0,
          fmt("max rel err %.2e over %zu coordinates (%zu excluded at ReLU kinks)", worst, checked, excluded)};
}

// ---------------------------------------------------------------- 2

Outcome gcn_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  for (int g = 0; g < 100; ++g) {
    const int n = 1 + static_cast<int>(rng.uniform_index(12));
    const auto nb = random_neighbors(n, rng.uniform01(), rng);
    const auto d0 = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    const auto d1 = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    const auto d2 = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    const Matrix h1 = random_matrix(n, d0, rng);
    const std::vector<GcnLayer> layers{{random_matrix(d1, d0, rng), random_matrix(d1, 1, rng)},
                                       {random_matrix(d2, d1, rng), random_matrix(d2, 1, rng)}};
    const auto sparse = gcn_forward(nb, h1, layers);
    const auto dense = dense_gcn_oracle(nb, h1, layers);
    for (std::size_t k = 0; k < sparse.size(); ++k) worst = std::max(worst, (sparse[k] - dense[k]).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, fmt("max abs diff %.2e over 100 graphs", worst)};
}

// ---------------------------------------------------------------- 3

// Original text with every span of `old_surface` replaced.
std::string expected_text(const Document& doc, const std::string& old_surface, const std::string& new_surface) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& m : doc.mentions) {
    if (m.surface != old_surface) continue;
    out.append(doc.text, pos, m.start - pos);
    out += new_surface;
    pos = m.end;
  }
  out.append(doc.text, pos, std::string::npos);
  return out;
}

std::size_t check_document(const Document& original, const Document& manipulated,
                           std::span<const ManipulationRecord> records, const FrequencyTable& table,
                           const Gazetteer& gazetteer, bool generated, std::size_t& generated_checked, std::vector<std::string>& log) {
  std::size_t violations = 0;
  auto fail = [&](const std::string& what) {
    ++violations;
    if (log.size() < 5) log.push_back(original.id + ": " + what);
  };
  // replay records one by one so each edit is checked against its own input
  Document current = original;
  for (const auto& r : records) {
    std::optional<EntityType> old_type;
    std::size_t occurrences = 0;
    for (const auto& m : current.mentions) {
      if (m.surface == r.original_surface) {
        old_type = m.type;
        ++occurrences;
      }
    }
    if (!old_type) {
      fail("target not in document");
      continue;
    }
    if (*old_type != r.type) fail("record type differs from mention type");
    // random and fallback proposals come from the frequency table, generated ones from the gazetteer
    const auto new_type = generated && !r.fallback_used ? gazetteer.lookup(r.replacement_surface)
                                                        : table.type_of(r.replacement_surface);
    if (!new_type || *new_type != r.type) fail("replacement not of the target type");
    if (generated && !r.fallback_used) {
      ++generated_checked;
      if (has_string_overlap(r.replacement_surface, r.original_surface)) fail("replacement overlaps target");
    }
    const auto want = expected_text(current, r.original_surface, r.replacement_surface);
    Document next = apply_replacement(current, r.original_surface, r.replacement_surface);
    if (next.text != want) fail("edit is not minimal");
    std::size_t new_count = 0;
    for (std::size_t i = 0, j = 0; i < current.mentions.size(); ++i, ++j) {
      const auto& a = current.mentions[i];
      const auto& b = next.mentions[j];
      if (b.surface == r.original_surface) fail("occurrence left unreplaced");
      if (a.surface == r.original_surface) {
        ++new_count;
        if (b.surface != r.replacement_surface || b.type != a.type) fail("replaced mention wrong");
      } else if (a.surface != b.surface || a.type != b.type) {
        fail("unrelated mention changed");
      }
      if (next.text.substr(b.start, b.end - b.start) != b.surface) fail("span does not match surface");
    }
    if (new_count != occurrences) fail("occurrence count changed");
    current = std::move(next);
  }
  if (current.text != manipulated.text) fail("replayed text differs from output");
  if (manipulated.label != Label::Manipulated) fail("output not labeled manipulated");
  return violations;
}

Outcome manipulation_invariants() {
  SyntheticOptions so;
  so.documents = 1000;
  so.seed = 33;
  const auto corpus = make_synthetic_corpus(so);
  const auto table = FrequencyTable::build(corpus.documents);
  NgramGenerator ngram(33);
  for (const auto& d : corpus.documents) ngram.train(d.text);

  std::size_t violations = 0, manipulated = 0, generated_checked = 0;
  std::vector<std::string> log;
  for (auto kind : {StrategyKind::RandomMostFrequent, StrategyKind::RandomLeastFrequent, StrategyKind::Generated}) {
    DatasetOptions options;
    options.strategy = {kind, 50, 10};
    options.max_k = 3;
    options.seed = 33;
    GenerationContext gen{&ngram, &corpus.gazetteer, &table, 8, ReplacementStrategy::most_frequent(50)};
    const bool generated = kind == StrategyKind::Generated;
    for (const auto& doc : corpus.documents) {
      std::vector<ManipulationRecord> records;
      std::string failure;
      const auto out = manipulate_document(doc, options, table, generated ? &gen : nullptr, records, &failure);
      if (!out) continue;
      ++manipulated;
      violations += check_document(doc, *out, records, table, corpus.gazetteer, generated, generated_checked, log);
    }
  }
  std::string detail = fmt("%zu violations over %zu manipulated docs (3 strategies), %zu generated proposals checked",
                           violations, manipulated, generated_checked);
  for (const auto& l : log) detail += "; " + l;
  return {violations == 0 && manipulated >= 2700, detail};
}

// ---------------------------------------------------------------- 4

Outcome table_replay() {
  const fs::path data = ENTFACT_TEST_DATA_DIR;
  const auto docs = load_documents(data / "pubnub_human.jsonl", CorpusFormat::JsonlAnnotated);
  std::string want = slurp(data / "pubnub_manipulated.txt");
  while (!want.empty() && (want.back() == '\n' || want.back() == '\r')) want.pop_back();
  const auto out = apply_replacement(docs.at(0), "Relay Ventures", "Samsung");
  return {out.text == want && out.label == Label::Manipulated,
          out.text == want ? "manipulated text matches the fixture" : "text differs: " + out.text};
}

// ---------------------------------------------------------------- 5 and 6

struct RunSetup {
  SyntheticOptions corpus;
  ReplacementStrategy strategy;
  std::size_t max_k = 1;
  bool with_kb = false;
};

struct RunResult {
  double accuracy = 0.0;
  std::vector<Label> predicted;
  std::vector<Label> gold;
};

ModelConfig desk_model(bool use_graph) {
  ModelConfig mc;
  mc.node_dim = 16;
  mc.gcn_dim = 16;
  mc.text_dim = 16;
  mc.gcn_layers = 2;
  mc.dropout = 0.1;
  mc.use_graph = use_graph;
  mc.min_node_frequency = 3;
  mc.min_token_frequency = 3;
  return mc;
}

std::vector<RunResult> train_and_test(const RunSetup& setup, std::uint64_t seed, const std::vector<ModelConfig>& models) {
  auto so = setup.corpus;
  so.seed = seed;
  const auto corpus = make_synthetic_corpus(so);
  const auto kb = index_kb(setup.with_kb ? corpus.triples : std::vector<Triple>{});
  const auto table = FrequencyTable::build(corpus.documents);
  DatasetOptions o;
  o.strategy = setup.strategy;
  o.max_k = setup.max_k;
  o.seed = seed;
  o.split = {0.5, 0.1, 0.4};
  const auto ds = build_dataset(corpus.documents, o, table);
  auto graphs = [&](const std::vector<Document>& docs) {
    std::vector<FactualGraph> g;
    for (const auto& d : docs) g.push_back(build_factual_graph(d, kb));
    return g;
  };
  const auto gtr = graphs(ds.train), gva = graphs(ds.valid), gte = graphs(ds.test);

  std::vector<RunResult> results;
  for (const auto& mc : models) {
    auto params = init_detector(mc, build_node_vocab(gtr, mc.min_node_frequency),
                                build_token_vocab(ds.train, mc.min_token_frequency), seed);
    auto prep = [&](const std::vector<Document>& d, const std::vector<FactualGraph>& g) {
      std::vector<PreparedExample> v;
      for (std::size_t i = 0; i < d.size(); ++i) v.push_back(prepare_example(d[i], g[i], params));
      return v;
    };
    const auto tr = prep(ds.train, gtr), va = prep(ds.valid, gva), te = prep(ds.test, gte);
    TrainConfig tc;
    tc.learning_rate = 5e-3;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.seed = seed;
    const auto trained = train(params, tr, va, tc);
    const auto preds = predict_batch(te, trained.params);
    RunResult r;
    for (std::size_t i = 0; i < te.size(); ++i) {
      r.predicted.push_back(preds[i].label);
      r.gold.push_back(ds.test[i].label);
    }
    r.accuracy = detection_accuracy(r.predicted, r.gold);
    results.push_back(std::move(r));
  }
  return results;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

Outcome k_effect() {
  RunSetup setup;
  setup.corpus.documents = 2000;
  setup.corpus.zipf_exponent = 1.1;
  setup.corpus.filler_sentences = 2;
  setup.corpus.min_people_per_doc = 2;
  setup.corpus.max_people_per_doc = 3;
  setup.strategy = ReplacementStrategy::least_frequent(100);
  std::vector<double> k1, k3, gaps;
  for (auto seed : kSeeds) {
    setup.max_k = 1;
    const double a1 = train_and_test(setup, seed, {desk_model(true)})[0].accuracy;
    setup.max_k = 3;
    const double a3 = train_and_test(setup, seed, {desk_model(true)})[0].accuracy;
    k1.push_back(a1);
    k3.push_back(a3);
    gaps.push_back(100.0 * (a3 - a1));
  }
  const double gap = median(gaps);
  return {gap >= 3.0, fmt("median accuracy k=1 %.2f%%, k=3 %.2f%%, median gap %.2f points", 100.0 * median(k1),
                          100.0 * median(k3), gap)};
}

Outcome knowledge_effect() {
  RunSetup setup;
  setup.corpus.documents = 2000;
  setup.corpus.zipf_exponent = 0.0;
  setup.corpus.filler_sentences = 2;
  setup.corpus.min_people_per_doc = 1;
  setup.corpus.max_people_per_doc = 3;
  setup.strategy = ReplacementStrategy::most_frequent(100000);
  setup.with_kb = true;
  std::vector<double> full, ablated, gaps;
  std::vector<Label> pa, pb, gold;
  for (auto seed : kSeeds) {
    const auto r = train_and_test(setup, seed, {desk_model(true), desk_model(false)});
    full.push_back(r[0].accuracy);
    ablated.push_back(r[1].accuracy);
    gaps.push_back(100.0 * (r[0].accuracy - r[1].accuracy));
    pa.insert(pa.end(), r[0].predicted.begin(), r[0].predicted.end());
    pb.insert(pb.end(), r[1].predicted.begin(), r[1].predicted.end());
    gold.insert(gold.end(), r[0].gold.begin(), r[0].gold.end());
  }
  const double gap = median(gaps);
  const double p = bootstrap_significance(pa, pb, gold, 10000, 6);
  return {gap >= 5.0 && p < 0.01,
          fmt("median accuracy full %.2f%%, encoder-only %.2f%%, median gap %.2f points, bootstrap p=%.4g",
              100.0 * median(full), 100.0 * median(ablated), gap, p)};
}

// ---------------------------------------------------------------- 7

Outcome metric_identities() {
  Rng rng(77);
  std::size_t bad = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    ConfusionCounts c;
    auto draw = [&] { return rng.bernoulli(0.2) ? std::size_t{0} : rng.uniform_index(30); };
    c.tp = draw();
    c.fp = draw();
    c.tn = draw();
    c.fn = draw();
    std::vector<bool> pred, gold;
    auto push = [&](std::size_t n, bool p, bool g) {
      for (std::size_t i = 0; i < n; ++i) {
        pred.push_back(p);
        gold.push_back(g);
      }
    };
    push(c.tp, true, true);
    push(c.fp, true, false);
    push(c.tn, false, false);
    push(c.fn, false, true);
    const auto m = entity_metrics(pred, gold);
    auto check = [&](const PrecisionRecallF1& x, std::size_t tp, std::size_t fp, std::size_t fn) {
      const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
      const double f = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
      return x.precision == p && x.recall == r && x.f1 == f;
    };
    const bool ok = m.counts.tp == c.tp && m.counts.fp == c.fp && m.counts.tn == c.tn && m.counts.fn == c.fn &&
                    check(m.manipulated, c.tp, c.fp, c.fn) && check(m.not_manipulated, c.tn, c.fn, c.fp);
    bad += ok ? 0 : 1;
  }
  std::vector<Label> coin, balanced;
  for (int i = 0; i < 10000; ++i) {
    balanced.push_back(i % 2 ? Label::Manipulated : Label::HumanWritten);
    coin.push_back(rng.bernoulli(0.5) ? Label::Manipulated : Label::HumanWritten);
  }
  const double acc = detection_accuracy(coin, balanced);
  return {bad == 0 && acc >= 0.48 && acc <= 0.52,
          fmt("%zu identity violations in 10000 configurations; coin-flip accuracy %.4f", bad, acc)};
}

// ---------------------------------------------------------------- 8

Outcome determinism() {
  TempDir dir("determinism");
  const auto config = write_pipeline_inputs(dir, 300, 8);
  const char* stages[] = {"ingest", "build-kb", "make-dataset", "build-graphs", "train", "eval", "stats"};
  std::vector<std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t s = 0; s < std::size(stages); ++s) {
      const auto r = run_cli({stages[s], "--config", config.string()});
      if (r.code != 0) return {false, std::string(stages[s]) + " failed: " + r.err};
      const auto manifest = slurp(dir / "out" / (std::string("manifest_") + stages[s] + ".json"));
      if (pass == 0) {
        first.push_back(manifest);
      } else if (manifest != first[s]) {
        return {false, std::string("manifest differs at stage ") + stages[s]};
      }
    }
  }
  return {true, "7 stage manifests byte-identical across two runs"};
}

// ---------------------------------------------------------------- 9

Outcome kb_conformance() {
  const auto parsed = parse_triples(fs::path(ENTFACT_TEST_DATA_DIR) / "kb_fixture.nt", TripleFormat::NTriples);
  const auto kb = index_kb(parsed.triples);
  Rng rng(9);
  std::vector<std::string> pool;
  for (const auto& t : parsed.triples) {
    pool.push_back(t.subject);
    pool.push_back(t.object);
  }
  pool.push_back("Nobody");
  std::vector<Triple> distinct;
  for (const auto& t : parsed.triples) {
    if (std::find(distinct.begin(), distinct.end(), t) == distinct.end()) distinct.push_back(t);
  }
  std::size_t mismatches = 0;
  for (int q = 0; q < 500; ++q) {
    std::string query = pool[rng.uniform_index(pool.size())];
    if (rng.bernoulli(0.2)) query = ascii_lower(query);
    std::vector<Triple> scan;
    for (const auto& t : distinct) {
      if (normalize_surface(t.subject) == normalize_surface(query)) scan.push_back(t);
    }
    auto got = one_hop(kb, query);
    auto key = [](const Triple& a, const Triple& b) {
      return std::tie(a.subject, a.relation, a.object) < std::tie(b.subject, b.relation, b.object);
    };
    std::sort(scan.begin(), scan.end(), key);
    std::sort(got.begin(), got.end(), key);
    mismatches += scan == got ? 0 : 1;
  }
  const bool ok = parsed.triples.size() == 45 && parsed.skipped_count == 5 && kb.size() == distinct.size() &&
                  mismatches == 0;
  return {ok, fmt("%zu triples, skipped_count=%zu, %zu/500 one_hop mismatches", parsed.triples.size(),
                  parsed.skipped_count, mismatches)};
}

// ---------------------------------------------------------------- 10

Outcome dataset_protocol() {
  TempDir dir("protocol");
  const auto config = write_pipeline_inputs(dir, 15000, 10);
  for (const char* stage : {"ingest", "make-dataset"}) {
    const auto r = run_cli({stage, "--config", config.string(), "--split.train=0.3333333333333333",
                            "--split.valid=0.13333333333333333", "--split.test=0.5333333333333333"});
    if (r.code != 0) return {false, std::string(stage) + " failed: " + r.err};
  }
  std::string detail;
  bool ok = true;
  const std::size_t want[] = {5000, 2000, 8000};
  const char* names[] = {"train", "valid", "test"};
  for (int s = 0; s < 3; ++s) {
    const auto docs = load_documents(dir / "out" / (std::string(names[s]) + ".jsonl"), CorpusFormat::JsonlAnnotated);
    const auto fake = std::count_if(docs.begin(), docs.end(), [](const Document& d) { return d.label == Label::Manipulated; });
    ok = ok && docs.size() == want[s] && static_cast<std::size_t>(fake) == docs.size() / 2;
    detail += fmt("%s %zu (%ld manipulated) ", names[s], docs.size(), static_cast<long>(fake));
  }
  return {ok, detail};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 10, gradient_check},
      {2, "GCN oracle equivalence", 5, gcn_oracle},
      {3, "manipulation invariants", 30, manipulation_invariants},
      {4, "replacement replay", 0, table_replay},
      {5, "accuracy rises with k", 600, k_effect},
      {6, "factual graph beats encoder-only", 900, knowledge_effect},
      {7, "metric identities", 0, metric_identities},
      {8, "pipeline determinism", 0, determinism},
      {9, "N-Triples conformance", 0, kb_conformance},
      {10, "dataset protocol", 0, dataset_protocol},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt(" (over the %.0f s limit)", c.limit_s);
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
