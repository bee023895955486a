#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace entfact {

enum class EntityType { Person, Organization, Location };

inline constexpr EntityType kEntityTypes[] = {EntityType::Person, EntityType::Organization,
                                              EntityType::Location};

// "PER" / "ORG" / "LOC".
std::string_view entity_tag(EntityType type);

// Accepts the short tags and the long names ("Person", "Organization",
// "Location"). Anything else is rejected.
std::optional<EntityType> parse_entity_type(std::string_view tag);

struct EntityMention {
  std::string surface;
  EntityType type = EntityType::Person;
  std::size_t start = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
  std::size_t sentence_index = 0;

  bool operator==(const EntityMention&) const = default;
};

enum class Label { HumanWritten = 0, Manipulated = 1 };

std::string_view label_name(Label label);  // "human" / "manipulated"

struct Document {
  std::string id;
  std::string text;
  std::vector<EntityMention> mentions;  // sorted by start, non-overlapping
  Label label = Label::HumanWritten;
  std::set<std::string> manipulated_surfaces;

  bool operator==(const Document&) const = default;

  // Distinct mention surfaces in order of first appearance.
  std::vector<std::string> distinct_surfaces() const;
  bool has_surface(std::string_view surface) const;
};

struct SentenceSpan {
  std::size_t index = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const SentenceSpan&) const = default;
};

enum class CorpusFormat { JsonlAnnotated, JsonlRaw };

std::optional<CorpusFormat> parse_corpus_format(std::string_view name);

// Splits after '.', '!' or '?' when followed by whitespace or end of text.
// Leading whitespace is excluded from each span; trailing text without a
// terminator forms the final sentence.
std::vector<SentenceSpan> split_sentences(std::string_view text);

// Recomputes sentence_index for every mention from the document text.
void assign_sentence_indices(Document& doc);

// Checks every Document invariant; returns the first violation, if any.
std::optional<std::string> validate_document(const Document& doc);

std::vector<Document> load_documents(const std::filesystem::path& path, CorpusFormat format);
std::vector<Document> read_documents(std::istream& in, CorpusFormat format);

std::string document_to_json_line(const Document& doc);
void write_documents(std::ostream& out, const std::vector<Document>& docs);
void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs);

// Surface -> type dictionary used for desk-scale entity annotation.
class Gazetteer {
 public:
  Gazetteer() = default;
  explicit Gazetteer(std::map<std::string, EntityType> entries);

  static Gazetteer load(const std::filesystem::path& path);

  void add(std::string surface, EntityType type);
  std::optional<EntityType> lookup(std::string_view surface) const;
  const std::map<std::string, EntityType>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  // Non-overlapping, longest-match-first, left-to-right matches on word
  // boundaries. Returned mentions have sentence_index 0.
  std::vector<EntityMention> find_mentions(std::string_view text) const;

 private:
  void rebuild_index();

  std::map<std::string, EntityType> entries_;
  // first byte -> surfaces starting with it, longest first
  std::map<unsigned char, std::vector<std::string>> by_first_byte_;
};

// Returns a copy of doc with mentions found by the gazetteer (existing
// mentions are discarded).
Document annotate_entities(const Document& doc, const Gazetteer& gazetteer);

}  // namespace entfact
