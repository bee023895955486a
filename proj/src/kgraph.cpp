#include "entfact/kgraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "entfact/error.hpp"
#include "entfact/rng.hpp"
#include "entfact/text.hpp"

namespace entfact {

std::optional<TripleFormat> parse_triple_format(std::string_view name) {
  if (name == "ntriples" || name == "nt") return TripleFormat::NTriples;
  if (name == "tsv") return TripleFormat::Tsv;
  return std::nullopt;
}

// ---------------------------------------------------------------- N-Triples

namespace {

void skip_blanks(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Final path or fragment segment of an IRI with '_' read as a space.
std::optional<std::string> iri_local_name(std::string_view iri) {
  const auto cut = iri.find_last_of("/#");
  std::string_view segment = cut == std::string_view::npos ? iri : iri.substr(cut + 1);
  if (segment.empty()) return std::nullopt;
  std::string out(segment);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

std::optional<std::string> parse_iri(std::string_view s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '<') return std::nullopt;
  const auto close = s.find('>', pos + 1);
  if (close == std::string_view::npos) return std::nullopt;
  const auto iri = s.substr(pos + 1, close - pos - 1);
  if (iri.find_first_of(" \t<\"") != std::string_view::npos) return std::nullopt;
  pos = close + 1;
  return iri_local_name(iri);
}

std::optional<std::string> parse_literal(std::string_view s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '"') return std::nullopt;
  std::string value;
  std::size_t i = pos + 1;
  bool closed = false;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '"') {
      closed = true;
      ++i;
      break;
    }
    if (c != '\\') {
      value.push_back(c);
      ++i;
      continue;
    }
    if (i + 1 >= s.size()) return std::nullopt;
    const char e = s[i + 1];
    i += 2;
    switch (e) {
      case 't': value.push_back('\t'); break;
      case 'n': value.push_back('\n'); break;
      case 'r': value.push_back('\r'); break;
      case 'b': value.push_back('\b'); break;
      case 'f': value.push_back('\f'); break;
      case '"': value.push_back('"'); break;
      case '\'': value.push_back('\''); break;
      case '\\': value.push_back('\\'); break;
      case 'u':
      case 'U': {
        const std::size_t digits = e == 'u' ? 4 : 8;
        if (i + digits > s.size()) return std::nullopt;
        std::uint32_t cp = 0;
        for (std::size_t k = 0; k < digits; ++k) {
          const char h = s[i + k];
          cp <<= 4;
          if (h >= '0' && h <= '9') cp |= static_cast<std::uint32_t>(h - '0');
          else if (h >= 'a' && h <= 'f') cp |= static_cast<std::uint32_t>(h - 'a' + 10);
          else if (h >= 'A' && h <= 'F') cp |= static_cast<std::uint32_t>(h - 'A' + 10);
          else return std::nullopt;
        }
        append_utf8(value, cp);
        i += digits;
        break;
      }
      default: return std::nullopt;
    }
  }
  if (!closed) return std::nullopt;
  // datatype or language tag is dropped
  if (i < s.size() && s[i] == '@') {
    ++i;
    const std::size_t tag_start = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '-')) ++i;
    if (i == tag_start) return std::nullopt;
  } else if (s.substr(i, 2) == "^^") {
    i += 2;
    std::size_t p = i;
    if (!parse_iri(s, p)) return std::nullopt;
    i = p;
  }
  pos = i;
  return value;
}

std::optional<std::string> parse_blank(std::string_view s, std::size_t& pos) {
  if (s.substr(pos, 2) != "_:") return std::nullopt;
  std::size_t i = pos + 2;
  while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
  if (i == pos + 2) return std::nullopt;
  std::string out(s.substr(pos, i - pos));
  pos = i;
  return out;
}

bool valid_field(const std::string& field) { return !normalize_surface(field).empty(); }

bool is_blank_or_comment(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

std::optional<Triple> parse_ntriples_line(std::string_view line) {
  const std::string_view s = trim(line);
  std::size_t pos = 0;
  auto subject = s.substr(0, 1) == "<" ? parse_iri(s, pos) : parse_blank(s, pos);
  if (!subject) return std::nullopt;
  skip_blanks(s, pos);
  auto relation = parse_iri(s, pos);
  if (!relation) return std::nullopt;
  skip_blanks(s, pos);
  std::optional<std::string> object;
  if (pos < s.size() && s[pos] == '<') {
    object = parse_iri(s, pos);
  } else if (pos < s.size() && s[pos] == '"') {
    object = parse_literal(s, pos);
  } else {
    object = parse_blank(s, pos);
  }
  if (!object) return std::nullopt;
  skip_blanks(s, pos);
  if (pos >= s.size() || s[pos] != '.') return std::nullopt;
  ++pos;
  skip_blanks(s, pos);
  if (pos < s.size() && s[pos] != '#') return std::nullopt;

  Triple t{std::move(*subject), std::move(*relation), std::move(*object)};
  if (!valid_field(t.subject) || !valid_field(t.relation) || !valid_field(t.object)) return std::nullopt;
  return t;
}

namespace {

std::optional<Triple> parse_tsv_line(std::string_view line) {
  const auto cols = split(line, '\t');
  if (cols.size() != 3) return std::nullopt;
  Triple t{std::string(cols[0]), std::string(cols[1]), std::string(cols[2])};
  if (!valid_field(t.subject) || !valid_field(t.relation) || !valid_field(t.object)) return std::nullopt;
  return t;
}

}  // namespace

TripleParseResult parse_triples(std::istream& in, TripleFormat format) {
  TripleParseResult result;
  std::size_t non_empty = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank_or_comment(line)) continue;
    ++non_empty;
    auto triple = format == TripleFormat::NTriples ? parse_ntriples_line(line) : parse_tsv_line(line);
    if (triple) {
      result.triples.push_back(std::move(*triple));
    } else {
      ++result.skipped_count;
    }
  }
  if (result.skipped_count * 2 > non_empty) {
    throw Error(ErrorCode::FormatError, std::to_string(result.skipped_count) + " of " +
                                            std::to_string(non_empty) +
                                            " lines are malformed; wrong format?");
  }
  return result;
}

TripleParseResult parse_triples(const std::filesystem::path& path, TripleFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  return parse_triples(in, format);
}

// ---------------------------------------------------------------- knowledge base

KnowledgeBase index_kb(std::vector<Triple> triples) {
  KnowledgeBase kb;
  std::set<Triple> seen;
  for (auto& t : triples) {
    if (!seen.insert(t).second) continue;
    kb.index_[normalize_surface(t.subject)].push_back(kb.triples_.size());
    kb.triples_.push_back(std::move(t));
  }
  return kb;
}

std::span<const std::size_t> KnowledgeBase::lookup(std::string_view surface) const {
  auto it = index_.find(normalize_surface(surface));
  if (it == index_.end()) return {};
  return it->second;
}

void KnowledgeBase::write_tsv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  for (const auto& t : triples_) out << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
}

std::vector<Triple> one_hop(const KnowledgeBase& kb, std::string_view surface) {
  std::vector<Triple> out;
  for (std::size_t i : kb.lookup(surface)) out.push_back(kb.triples()[i]);
  return out;
}

// ---------------------------------------------------------------- graphs

std::string_view node_kind_name(NodeKind kind) {
  return kind == NodeKind::Entity ? "entity" : "relation";
}

namespace {

void finish_graph(FactualGraph& g, const std::set<std::pair<int, int>>& edges) {
  g.edges.assign(edges.begin(), edges.end());
  g.in_neighbors.assign(g.nodes.size(), {});
  for (const auto& [src, dst] : g.edges) g.in_neighbors[static_cast<std::size_t>(dst)].push_back(src);
  for (auto& in : g.in_neighbors) std::sort(in.begin(), in.end());
}

}  // namespace

std::vector<std::vector<int>> neighbor_index(const FactualGraph& graph, NeighborMode mode) {
  if (mode == NeighborMode::Incoming) return graph.in_neighbors;
  std::vector<std::vector<int>> out(graph.nodes.size());
  for (const auto& [src, dst] : graph.edges) {
    out[static_cast<std::size_t>(dst)].push_back(src);
    out[static_cast<std::size_t>(src)].push_back(dst);
  }
  for (auto& n : out) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return out;
}

FactualGraph build_factual_graph(const Document& doc, const KnowledgeBase& kb,
                                 const GraphOptions& options) {
  FactualGraph g;
  std::map<std::string, int, std::less<>> entity_nodes;
  auto entity_node = [&](const std::string& surface) {
    auto [it, inserted] = entity_nodes.try_emplace(surface, static_cast<int>(g.nodes.size()));
    if (inserted) g.nodes.push_back({it->second, NodeKind::Entity, surface, -1});
    return it->second;
  };

  const auto surfaces = doc.distinct_surfaces();
  for (const auto& s : surfaces) g.doc_entity_nodes.push_back(entity_node(s));

  std::map<std::pair<std::string, int>, int> relation_nodes;
  std::set<std::pair<int, int>> edges;
  for (std::size_t e = 0; e < surfaces.size(); ++e) {
    const int subject = g.doc_entity_nodes[e];
    const auto hits = kb.lookup(surfaces[e]);
    std::vector<std::size_t> chosen(hits.begin(), hits.end());
    if (options.max_triples_per_entity > 0 && chosen.size() > options.max_triples_per_entity) {
      Rng rng(derive_seed(options.cap_seed, "cap:" + normalize_surface(surfaces[e])));
      rng.shuffle(chosen);
      chosen.resize(options.max_triples_per_entity);
      std::sort(chosen.begin(), chosen.end());
    }
    for (std::size_t idx : chosen) {
      const Triple& t = kb.triples()[idx];
      const int owner = options.shared_relations ? -1 : subject;
      auto [rel_it, inserted] =
          relation_nodes.try_emplace({t.relation, owner}, static_cast<int>(g.nodes.size()));
      if (inserted) g.nodes.push_back({rel_it->second, NodeKind::Relation, t.relation, owner});
      const int object = entity_node(t.object);
      edges.insert({subject, rel_it->second});
      edges.insert({rel_it->second, object});
    }
  }
  finish_graph(g, edges);
  return g;
}

FactualGraph build_cooccurrence_graph(const Document& doc) {
  FactualGraph g;
  std::map<std::string, int, std::less<>> ids;
  for (const auto& s : doc.distinct_surfaces()) {
    const int id = static_cast<int>(g.nodes.size());
    ids.emplace(s, id);
    g.nodes.push_back({id, NodeKind::Entity, s, -1});
    g.doc_entity_nodes.push_back(id);
  }
  std::map<std::size_t, std::set<int>> by_sentence;
  for (const auto& m : doc.mentions) by_sentence[m.sentence_index].insert(ids.at(m.surface));
  std::set<std::pair<int, int>> edges;
  for (const auto& [sentence, members] : by_sentence) {
    for (int a : members) {
      for (int b : members) {
        if (a != b) edges.insert({a, b});
      }
    }
  }
  finish_graph(g, edges);
  return g;
}

std::string graph_to_json(const FactualGraph& graph) {
  nlohmann::ordered_json j;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : graph.nodes) {
    nlohmann::ordered_json node;
    node["id"] = n.id;
    node["kind"] = node_kind_name(n.kind);
    node["surface"] = n.surface;
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [src, dst] : graph.edges) edges.push_back({src, dst});
  j["edges"] = std::move(edges);
  j["doc_entity_nodes"] = graph.doc_entity_nodes;
  return j.dump();
}

CoverageStats kb_coverage_stats(std::span<const Document> docs, const KnowledgeBase& kb) {
  CoverageStats stats;
  double coverage_sum = 0.0;
  std::size_t coverage_docs = 0;
  double known_sum = 0.0;
  std::size_t manipulated_docs = 0;
  for (const auto& doc : docs) {
    const auto surfaces = doc.distinct_surfaces();
    if (!surfaces.empty()) {
      const auto covered = std::count_if(surfaces.begin(), surfaces.end(),
                                         [&](const std::string& s) { return kb.covers(s); });
      coverage_sum += static_cast<double>(covered) / static_cast<double>(surfaces.size());
      ++coverage_docs;
    }
    if (doc.label == Label::Manipulated && !doc.manipulated_surfaces.empty()) {
      const auto known = std::count_if(doc.manipulated_surfaces.begin(), doc.manipulated_surfaces.end(),
                                       [&](const std::string& s) { return kb.covers(s); });
      known_sum += static_cast<double>(known) / static_cast<double>(doc.manipulated_surfaces.size());
      ++manipulated_docs;
    }
  }
  if (coverage_docs > 0) stats.entity_coverage_pct = 100.0 * coverage_sum / static_cast<double>(coverage_docs);
  if (manipulated_docs > 0) {
    stats.known_manipulated_pct = 100.0 * known_sum / static_cast<double>(manipulated_docs);
  }
  return stats;
}

}  // namespace entfact
