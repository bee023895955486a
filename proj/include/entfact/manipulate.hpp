#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entfact/corpus.hpp"
#include "entfact/generator.hpp"
#include "entfact/rng.hpp"

namespace entfact {

struct RankedSurface {
  std::string surface;
  std::size_t count = 0;
};

// Per-type mention counts with rank lists ordered by (count desc, surface asc).
class FrequencyTable {
 public:
  static FrequencyTable build(std::span<const Document> docs);

  const std::vector<RankedSurface>& ranks(EntityType type) const;
  std::size_t count(std::string_view surface, EntityType type) const;
  std::optional<EntityType> type_of(std::string_view surface) const;

 private:
  std::array<std::map<std::string, std::size_t, std::less<>>, 3> counts_;
  std::array<std::vector<RankedSurface>, 3> ranks_;
};

enum class StrategyKind { RandomMostFrequent, RandomLeastFrequent, Generated };

struct ReplacementStrategy {
  StrategyKind kind = StrategyKind::RandomMostFrequent;
  std::size_t band_size = 5000;   // random strategies
  std::size_t max_attempts = 10;  // generated strategy

  static ReplacementStrategy most_frequent(std::size_t band = 5000) {
    return {StrategyKind::RandomMostFrequent, band, 10};
  }
  static ReplacementStrategy least_frequent(std::size_t band = 5000) {
    return {StrategyKind::RandomLeastFrequent, band, 10};
  }
  static ReplacementStrategy generated(std::size_t attempts = 10) {
    return {StrategyKind::Generated, 5000, attempts};
  }
};

std::string_view strategy_name(StrategyKind kind);  // random_most / random_least / generated
std::optional<StrategyKind> parse_strategy(std::string_view name);

struct ManipulationRecord {
  std::string doc_id;
  std::string original_surface;
  std::string replacement_surface;
  EntityType type = EntityType::Person;
  ReplacementStrategy strategy;
  std::size_t attempts_used = 0;
  bool fallback_used = false;
};

std::string record_to_json_line(const ManipulationRecord& record);

struct TargetEntity {
  std::string surface;
  EntityType type = EntityType::Person;
};

// Samples min(max_k, #distinct surfaces) distinct surfaces uniformly without
// replacement. Throws NoEntities for a document without mentions.
std::vector<TargetEntity> pick_target_entities(const Document& doc, std::size_t max_k, Rng& rng);

enum class Band { Top, Bottom };

// Uniform draw from the top/bottom min(band_size, n) entries of the type's
// rank list, skipping `exclude`, anything overlapping it, and `avoid`.
std::string propose_replacement_random(const FrequencyTable& table, EntityType type, Band band,
                                       std::size_t band_size, std::string_view exclude, Rng& rng,
                                       std::span<const std::string> avoid = {});

struct GeneratedProposal {
  std::string surface;
  std::size_t attempts_used = 0;
  bool fallback_used = false;
};

struct GenerationContext {
  GeneratorPort* port = nullptr;
  const Gazetteer* gazetteer = nullptr;  // entity detection on continuations
  const FrequencyTable* table = nullptr;  // fallback sampling
  int max_tokens = 8;
  ReplacementStrategy fallback = ReplacementStrategy::most_frequent();
};

// Prompt = text before the first occurrence of the target. A continuation
// is accepted when it starts with an entity of the target's type that does
// not overlap the target (and is not already a surface of the document).
// After max_attempts rejections the fallback random strategy is used.
GeneratedProposal propose_replacement_generated(const Document& doc, const TargetEntity& target,
                                                const GenerationContext& ctx,
                                                std::size_t max_attempts, Rng& rng);

// Replaces every mention whose surface equals `old_surface`, shifting later
// spans. The result is labeled Manipulated and records `new_surface`.
Document apply_replacement(const Document& doc, std::string_view old_surface,
                           std::string_view new_surface);

struct SplitFractions {
  double train = 1.0 / 3.0;
  double valid = 2.0 / 15.0;
  double test = 8.0 / 15.0;
};

struct DatasetOptions {
  ReplacementStrategy strategy;
  std::size_t max_k = 1;
  SplitFractions split;
  std::uint64_t seed = 0;
};

struct ManipulationFailure {
  std::string doc_id;
  std::string reason;
};

struct Dataset {
  std::vector<Document> train;
  std::vector<Document> valid;
  std::vector<Document> test;
  std::vector<ManipulationRecord> records;
  std::vector<ManipulationFailure> failures;
};

// Sizes of the three splits for n documents.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& split);

// Manipulates one document with up to max_k targets. Records are appended
// for every successful replacement; an empty return means the document could
// not be manipulated (reason in *failure).
std::optional<Document> manipulate_document(const Document& doc, const DatasetOptions& options,
                                            const FrequencyTable& table,
                                            const GenerationContext* generation,
                                            std::vector<ManipulationRecord>& records,
                                            std::string* failure);

// Splits first, then manipulates floor(n/2) documents of every split.
// `generation` is required for the Generated strategy.
Dataset build_dataset(std::span<const Document> docs, const DatasetOptions& options,
                      const FrequencyTable& table, const GenerationContext* generation = nullptr);

}  // namespace entfact
