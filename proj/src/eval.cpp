#include "entfact/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "entfact/error.hpp"
#include "entfact/parallel.hpp"
#include "entfact/rng.hpp"
#include "entfact/text.hpp"

namespace entfact {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch, std::string(what) + ": " + std::to_string(a) + " vs " +
                                               std::to_string(b) + " items");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

PrecisionRecallF1 prf_from_counts(const ConfusionCounts& c) {
  PrecisionRecallF1 out;
  out.precision = ratio(c.tp, c.tp + c.fp);
  out.recall = ratio(c.tp, c.tp + c.fn);
  out.f1 = f1_of(out.precision, out.recall);
  return out;
}

ConfusionCounts confusion_counts(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  require_same_length(predicted.size(), gold.size(), "predictions and gold");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] && gold[i]) ++c.tp;
    else if (predicted[i]) ++c.fp;
    else if (gold[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double detection_accuracy(std::span<const Label> predicted, std::span<const Label> gold) {
  require_same_length(predicted.size(), gold.size(), "predictions and gold");
  if (gold.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i] ? 1 : 0;
  return ratio(correct, gold.size());
}

EntityMetrics entity_metrics(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  EntityMetrics m;
  m.counts = confusion_counts(predicted, gold);
  m.manipulated = prf_from_counts(m.counts);
  const ConfusionCounts flipped{m.counts.tn, m.counts.fn, m.counts.tp, m.counts.fp};
  m.not_manipulated = prf_from_counts(flipped);
  m.overall.precision = (m.manipulated.precision + m.not_manipulated.precision) / 2.0;
  m.overall.recall = (m.manipulated.recall + m.not_manipulated.recall) / 2.0;
  m.overall.f1 = (m.manipulated.f1 + m.not_manipulated.f1) / 2.0;
  const double micro = ratio(m.counts.tp + m.counts.tn, m.counts.total());
  m.overall_micro = {micro, micro, micro};
  return m;
}

double bootstrap_significance(std::span<const Label> preds_a, std::span<const Label> preds_b,
                              std::span<const Label> gold, std::size_t n_resamples,
                              std::uint64_t seed) {
  require_same_length(preds_a.size(), gold.size(), "system a and gold");
  require_same_length(preds_b.size(), gold.size(), "system b and gold");
  const std::size_t n = gold.size();
  if (n == 0 || n_resamples == 0) return 1.0;

  // per item: +1 when only a is right, -1 when only b is right
  std::vector<int> delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    delta[i] = (preds_a[i] == gold[i] ? 1 : 0) - (preds_b[i] == gold[i] ? 1 : 0);
  }
  std::vector<char> b_at_least_a(n_resamples, 0);
  parallel_for(n_resamples, [&](std::size_t r) {
    Rng rng(derive_seed(seed, "bootstrap", r));
    long long diff = 0;
    for (std::size_t i = 0; i < n; ++i) diff += delta[rng.uniform_index(n)];
    b_at_least_a[r] = diff <= 0 ? 1 : 0;
  });
  const auto hits = std::accumulate(b_at_least_a.begin(), b_at_least_a.end(), std::size_t{0});
  return ratio(hits, n_resamples);
}

UnknownEntitySubset unknown_entity_subset(std::span<const Document> test, const KnowledgeBase& kb,
                                          std::uint64_t seed) {
  UnknownEntitySubset subset;
  std::vector<std::size_t> human_pool;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& doc = test[i];
    if (doc.label != Label::Manipulated) {
      human_pool.push_back(i);
      continue;
    }
    ++subset.manipulated_total;
    const bool all_unknown = std::none_of(doc.manipulated_surfaces.begin(), doc.manipulated_surfaces.end(),
                                          [&](const std::string& s) { return kb.covers(s); });
    if (all_unknown && !doc.manipulated_surfaces.empty()) subset.manipulated.push_back(i);
  }
  Rng rng(derive_seed(seed, "unknown-subset"));
  rng.shuffle(human_pool);
  human_pool.resize(std::min(human_pool.size(), subset.manipulated.size()));
  std::sort(human_pool.begin(), human_pool.end());
  subset.human = std::move(human_pool);
  subset.percent_of_test =
      test.empty() ? 0.0 : 100.0 * static_cast<double>(subset.manipulated.size()) / static_cast<double>(test.size());
  subset.fraction_of_manipulated = ratio(subset.manipulated.size(), subset.manipulated_total);
  return subset;
}

SplitStats dataset_stats(std::string name, std::span<const Document> docs, const KnowledgeBase& kb) {
  SplitStats s;
  s.name = std::move(name);
  s.size = docs.size();
  if (docs.empty()) return s;
  std::size_t words = 0;
  std::size_t with_type[3] = {0, 0, 0};
  for (const auto& doc : docs) {
    words += count_words(doc.text);
    bool seen[3] = {false, false, false};
    for (const auto& m : doc.mentions) seen[static_cast<int>(m.type)] = true;
    for (int t = 0; t < 3; ++t) with_type[t] += seen[t] ? 1 : 0;
  }
  const double n = static_cast<double>(docs.size());
  s.avg_words = static_cast<double>(words) / n;
  s.pct_person = 100.0 * static_cast<double>(with_type[static_cast<int>(EntityType::Person)]) / n;
  s.pct_organization = 100.0 * static_cast<double>(with_type[static_cast<int>(EntityType::Organization)]) / n;
  s.pct_location = 100.0 * static_cast<double>(with_type[static_cast<int>(EntityType::Location)]) / n;
  const auto coverage = kb_coverage_stats(docs, kb);
  s.entity_coverage_pct = coverage.entity_coverage_pct;
  s.known_manipulated_pct = coverage.known_manipulated_pct;
  return s;
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

}  // namespace entfact
