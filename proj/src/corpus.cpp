#include "entfact/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "entfact/error.hpp"
#include "entfact/text.hpp"

namespace entfact {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view entity_tag(EntityType type) {
  switch (type) {
    case EntityType::Person: return "PER";
    case EntityType::Organization: return "ORG";
    case EntityType::Location: return "LOC";
  }
  return "PER";
}

std::optional<EntityType> parse_entity_type(std::string_view tag) {
  if (tag == "PER" || tag == "Person") return EntityType::Person;
  if (tag == "ORG" || tag == "Organization") return EntityType::Organization;
  if (tag == "LOC" || tag == "Location") return EntityType::Location;
  return std::nullopt;
}

std::string_view label_name(Label label) {
  return label == Label::HumanWritten ? "human" : "manipulated";
}

std::optional<CorpusFormat> parse_corpus_format(std::string_view name) {
  if (name == "jsonl-annotated") return CorpusFormat::JsonlAnnotated;
  if (name == "jsonl-raw") return CorpusFormat::JsonlRaw;
  return std::nullopt;
}

std::vector<std::string> Document::distinct_surfaces() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& m : mentions) {
    if (seen.insert(m.surface).second) out.push_back(m.surface);
  }
  return out;
}

bool Document::has_surface(std::string_view surface) const {
  return std::any_of(mentions.begin(), mentions.end(),
                     [&](const EntityMention& m) { return m.surface == surface; });
}

std::vector<SentenceSpan> split_sentences(std::string_view text) {
  std::vector<SentenceSpan> spans;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    while (i < n && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i == n) break;
    const std::size_t start = i;
    std::size_t end = n;
    bool terminated = false;
    for (std::size_t j = start; j < n; ++j) {
      const char c = text[j];
      if ((c == '.' || c == '!' || c == '?') &&
          (j + 1 == n || is_space_byte(static_cast<unsigned char>(text[j + 1])))) {
        end = j + 1;
        terminated = true;
        break;
      }
    }
    if (!terminated) {
      while (end > start && is_space_byte(static_cast<unsigned char>(text[end - 1]))) --end;
    }
    spans.push_back({spans.size(), start, end});
    i = end;
  }
  return spans;
}

void assign_sentence_indices(Document& doc) {
  const auto spans = split_sentences(doc.text);
  for (auto& m : doc.mentions) {
    auto it = std::upper_bound(spans.begin(), spans.end(), m.start,
                               [](std::size_t pos, const SentenceSpan& s) { return pos < s.start; });
    m.sentence_index = it == spans.begin() ? 0 : std::prev(it)->index;
  }
}

std::optional<std::string> validate_document(const Document& doc) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& m = doc.mentions[i];
    if (m.start >= m.end || m.end > doc.text.size()) {
      return "mention '" + m.surface + "' has an invalid span";
    }
    if (doc.text.compare(m.start, m.end - m.start, m.surface) != 0) {
      return "mention '" + m.surface + "' does not match text at [" + std::to_string(m.start) +
             "," + std::to_string(m.end) + ")";
    }
    if (i > 0 && m.start < prev_end) return "mention '" + m.surface + "' overlaps its predecessor";
    prev_end = m.end;
  }
  for (const auto& s : doc.manipulated_surfaces) {
    if (!doc.has_surface(s)) return "manipulated surface '" + s + "' is not a mention";
  }
  if (doc.label == Label::Manipulated && doc.manipulated_surfaces.empty()) {
    return "manipulated document without manipulated surfaces";
  }
  if (doc.label == Label::HumanWritten && !doc.manipulated_surfaces.empty()) {
    return "human-written document with manipulated surfaces";
  }
  return std::nullopt;
}

namespace {

Document parse_record(const json& record, CorpusFormat format, std::size_t line) {
  if (!record.is_object()) throw MalformedRecord(line, "record is not an object");
  auto need_string = [&](const char* key) -> std::string {
    auto it = record.find(key);
    if (it == record.end()) throw MalformedRecord(line, std::string("missing field '") + key + "'");
    if (!it->is_string()) throw MalformedRecord(line, std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
  };

  Document doc;
  doc.id = need_string("id");
  doc.text = need_string("text");
  if (format == CorpusFormat::JsonlRaw) return doc;

  if (auto it = record.find("label"); it != record.end()) {
    if (*it == "human") {
      doc.label = Label::HumanWritten;
    } else if (*it == "manipulated") {
      doc.label = Label::Manipulated;
    } else {
      throw MalformedRecord(line, "unknown label");
    }
  }
  if (auto it = record.find("manipulated_surfaces"); it != record.end()) {
    if (!it->is_array()) throw MalformedRecord(line, "manipulated_surfaces is not an array");
    for (const auto& s : *it) {
      if (!s.is_string()) throw MalformedRecord(line, "manipulated surface is not a string");
      doc.manipulated_surfaces.insert(s.get<std::string>());
    }
  }

  auto mentions = record.find("mentions");
  if (mentions == record.end()) throw MalformedRecord(line, "missing field 'mentions'");
  if (!mentions->is_array()) throw MalformedRecord(line, "mentions is not an array");
  for (const auto& m : *mentions) {
    if (!m.is_object()) throw MalformedRecord(line, "mention is not an object");
    EntityMention mention;
    try {
      mention.surface = m.at("surface").get<std::string>();
      const auto tag = m.at("type").get<std::string>();
      auto type = parse_entity_type(tag);
      if (!type) throw MalformedRecord(line, "unknown entity type '" + tag + "'");
      mention.type = *type;
      const auto& start = m.at("start");
      const auto& end = m.at("end");
      if (!start.is_number_unsigned() || !end.is_number_unsigned()) {
        throw MalformedRecord(line, "mention offsets must be non-negative integers");
      }
      mention.start = start.get<std::size_t>();
      mention.end = end.get<std::size_t>();
    } catch (const json::exception& e) {
      throw MalformedRecord(line, std::string("bad mention: ") + e.what());
    }
    doc.mentions.push_back(std::move(mention));
  }
  std::stable_sort(doc.mentions.begin(), doc.mentions.end(),
                   [](const EntityMention& a, const EntityMention& b) { return a.start < b.start; });
  if (auto problem = validate_document(doc)) throw MalformedRecord(line, *problem);
  assign_sentence_indices(doc);
  return doc;
}

}  // namespace

std::vector<Document> read_documents(std::istream& in, CorpusFormat format) {
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(line_no, std::string("invalid JSON: ") + e.what());
    }
    Document doc = parse_record(record, format, line_no);
    if (!ids.insert(doc.id).second) throw MalformedRecord(line_no, "duplicate id '" + doc.id + "'");
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> load_documents(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  return read_documents(in, format);
}

std::string document_to_json_line(const Document& doc) {
  ordered_json record;
  record["id"] = doc.id;
  record["text"] = doc.text;
  record["label"] = label_name(doc.label);
  record["manipulated_surfaces"] = doc.manipulated_surfaces;
  auto mentions = ordered_json::array();
  for (const auto& m : doc.mentions) {
    ordered_json mention;
    mention["surface"] = m.surface;
    mention["type"] = entity_tag(m.type);
    mention["start"] = m.start;
    mention["end"] = m.end;
    mentions.push_back(std::move(mention));
  }
  record["mentions"] = std::move(mentions);
  return record.dump();
}

void write_documents(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& doc : docs) out << document_to_json_line(doc) << '\n';
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  write_documents(out, docs);
}

// ---------------------------------------------------------------- gazetteer

Gazetteer::Gazetteer(std::map<std::string, EntityType> entries) : entries_(std::move(entries)) {
  rebuild_index();
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  std::map<std::string, EntityType> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2 || cols[0].empty()) {
      throw MalformedRecord(line_no, "gazetteer lines need two tab-separated columns");
    }
    auto type = parse_entity_type(trim(cols[1]));
    if (!type) throw MalformedRecord(line_no, "unknown entity type '" + std::string(cols[1]) + "'");
    entries[std::string(cols[0])] = *type;
  }
  return Gazetteer(std::move(entries));
}

void Gazetteer::add(std::string surface, EntityType type) {
  if (surface.empty()) return;
  entries_[std::move(surface)] = type;
  rebuild_index();
}

std::optional<EntityType> Gazetteer::lookup(std::string_view surface) const {
  auto it = entries_.find(std::string(surface));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void Gazetteer::rebuild_index() {
  by_first_byte_.clear();
  for (const auto& [surface, type] : entries_) {
    if (surface.empty()) continue;
    by_first_byte_[static_cast<unsigned char>(surface.front())].push_back(surface);
  }
  for (auto& [byte, surfaces] : by_first_byte_) {
    std::stable_sort(surfaces.begin(), surfaces.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  }
}

std::vector<EntityMention> Gazetteer::find_mentions(std::string_view text) const {
  std::vector<EntityMention> mentions;
  const std::size_t n = text.size();
  auto word_at = [&](std::size_t pos) { return is_word_byte(static_cast<unsigned char>(text[pos])); };
  std::size_t i = 0;
  while (i < n) {
    // a match may not start in the middle of a word
    if (i > 0 && word_at(i - 1) && word_at(i)) {
      ++i;
      continue;
    }
    auto bucket = by_first_byte_.find(static_cast<unsigned char>(text[i]));
    bool matched = false;
    if (bucket != by_first_byte_.end()) {
      for (const auto& surface : bucket->second) {
        const std::size_t end = i + surface.size();
        if (end > n || text.compare(i, surface.size(), surface) != 0) continue;
        if (end < n && word_at(end - 1) && word_at(end)) continue;
        mentions.push_back({surface, entries_.at(surface), i, end, 0});
        i = end;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return mentions;
}

Document annotate_entities(const Document& doc, const Gazetteer& gazetteer) {
  Document out = doc;
  out.mentions = gazetteer.find_mentions(out.text);
  assign_sentence_indices(out);
  return out;
}

}  // namespace entfact
