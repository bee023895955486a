#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entfact/corpus.hpp"
#include "entfact/kgraph.hpp"

namespace entfact {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero denominators yield 0 for precision and recall independently.
PrecisionRecallF1 prf_from_counts(const ConfusionCounts& counts);

ConfusionCounts confusion_counts(const std::vector<bool>& predicted, const std::vector<bool>& gold);

double detection_accuracy(std::span<const Label> predicted, std::span<const Label> gold);

struct EntityMetrics {
  PrecisionRecallF1 overall;        // macro over {manipulated, not manipulated}
  PrecisionRecallF1 overall_micro;  // micro average, equals accuracy for one label per item
  PrecisionRecallF1 manipulated;
  PrecisionRecallF1 not_manipulated;
  ConfusionCounts counts;           // manipulated as the positive class
};

EntityMetrics entity_metrics(const std::vector<bool>& predicted, const std::vector<bool>& gold);

// Paired document-level bootstrap, one-sided: fraction of resamples in which
// b's accuracy is at least a's.
double bootstrap_significance(std::span<const Label> preds_a, std::span<const Label> preds_b,
                              std::span<const Label> gold, std::size_t n_resamples,
                              std::uint64_t seed);

struct UnknownEntitySubset {
  std::vector<std::size_t> manipulated;  // indices into the test set
  std::vector<std::size_t> human;        // seeded sample, same count when possible
  std::size_t manipulated_total = 0;
  double percent_of_test = 0.0;          // manipulated subset / test size * 100
  double fraction_of_manipulated = 0.0;  // manipulated subset / manipulated_total
};

// Manipulated documents whose manipulated surfaces all lack KB triples, paired
// with an equal number of randomly drawn human documents.
UnknownEntitySubset unknown_entity_subset(std::span<const Document> test, const KnowledgeBase& kb,
                                          std::uint64_t seed);

struct SplitStats {
  std::string name;
  std::size_t size = 0;
  double avg_words = 0.0;
  double pct_person = 0.0;
  double pct_organization = 0.0;
  double pct_location = 0.0;
  double entity_coverage_pct = 0.0;
  std::optional<double> known_manipulated_pct;
};

SplitStats dataset_stats(std::string name, std::span<const Document> docs, const KnowledgeBase& kb);

// Round to two decimals for reporting.
double round2(double value);

}  // namespace entfact
