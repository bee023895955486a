#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "entfact/corpus.hpp"

namespace entfact {

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;

  bool operator==(const Triple&) const = default;
  auto operator<=>(const Triple&) const = default;
};

enum class TripleFormat { NTriples, Tsv };

std::optional<TripleFormat> parse_triple_format(std::string_view name);

struct TripleParseResult {
  std::vector<Triple> triples;
  std::size_t skipped_count = 0;
};

// Malformed lines are skipped and counted. FormatError is raised only when
// more than half of the non-empty lines are malformed.
TripleParseResult parse_triples(const std::filesystem::path& path, TripleFormat format);
TripleParseResult parse_triples(std::istream& in, TripleFormat format);

// Parses a single N-Triples line; nullopt when malformed.
std::optional<Triple> parse_ntriples_line(std::string_view line);

class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }

  // Indices of triples whose normalized subject equals normalize(surface).
  std::span<const std::size_t> lookup(std::string_view surface) const;
  bool covers(std::string_view surface) const { return !lookup(surface).empty(); }

  const std::unordered_map<std::string, std::vector<std::size_t>>& index() const {
    return index_;
  }

  void write_tsv(const std::filesystem::path& path) const;

 private:
  friend KnowledgeBase index_kb(std::vector<Triple> triples);

  std::vector<Triple> triples_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

// Deduplicates (first occurrence wins) and indexes by normalized subject.
KnowledgeBase index_kb(std::vector<Triple> triples);

std::vector<Triple> one_hop(const KnowledgeBase& kb, std::string_view surface);

enum class NodeKind { Entity, Relation };

std::string_view node_kind_name(NodeKind kind);

struct GraphNode {
  int id = 0;
  NodeKind kind = NodeKind::Entity;
  std::string surface;
  int subject = -1;  // owning subject node for per-subject relation nodes, else -1

  bool operator==(const GraphNode&) const = default;
};

struct FactualGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::pair<int, int>> edges;  // sorted, unique
  std::vector<int> doc_entity_nodes;       // first-mention order
  std::vector<std::vector<int>> in_neighbors;  // ascending node id

  bool operator==(const FactualGraph&) const = default;
  std::size_t size() const { return nodes.size(); }
};

enum class NeighborMode { Incoming, Symmetric };

// Aggregation sets N(v): in-neighbors, or in- and out-neighbors merged.
std::vector<std::vector<int>> neighbor_index(const FactualGraph& graph, NeighborMode mode);

struct GraphOptions {
  std::size_t max_triples_per_entity = 0;  // 0 = no cap
  std::uint64_t cap_seed = 0;
  bool shared_relations = false;  // one relation node per relation surface
};

// One entity node per distinct document surface (isolated when the KB has no
// triples for it), a relation node per (relation, subject) and an entity
// node per object surface; edges subject->relation->object.
FactualGraph build_factual_graph(const Document& doc, const KnowledgeBase& kb,
                                 const GraphOptions& options = {});

// Entity nodes only; a pair of directed edges between entities sharing a sentence.
FactualGraph build_cooccurrence_graph(const Document& doc);

std::string graph_to_json(const FactualGraph& graph);

struct CoverageStats {
  double entity_coverage_pct = 0.0;
  std::optional<double> known_manipulated_pct;  // absent without manipulated docs
};

CoverageStats kb_coverage_stats(std::span<const Document> docs, const KnowledgeBase& kb);

}  // namespace entfact
