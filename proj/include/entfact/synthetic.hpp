#pragma once

#include <cstdint>
#include <vector>

#include "entfact/corpus.hpp"
#include "entfact/kgraph.hpp"

namespace entfact {

// A toy news world: people work for organizations, organizations are based
// in locations. Documents restate some of these facts; the KB holds the
// world's facts. Entity popularity follows a Zipf law so that frequency
// bands are meaningful.
struct SyntheticOptions {
  std::size_t documents = 1000;
  std::size_t people = 400;
  std::size_t organizations = 200;
  std::size_t locations = 80;
  double zipf_exponent = 1.0;
  std::size_t min_people_per_doc = 1;
  std::size_t max_people_per_doc = 3;
  // Probability that a stated fact is absent from the KB (the document pairs
  // the entity with a random partner instead of the world's one).
  double unverified_fact_rate = 0.0;
  std::size_t filler_sentences = 3;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<Document> documents;  // annotated, human-written
  std::vector<Triple> triples;
  Gazetteer gazetteer;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

}  // namespace entfact
