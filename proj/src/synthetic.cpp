#include "entfact/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "entfact/error.hpp"
#include "entfact/rng.hpp"

namespace entfact {

namespace {

constexpr const char* kConsonants = "bdfgklmnprstvz";
constexpr const char* kVowels = "aeiou";

// Injective map from an index to a capitalized run of CV syllables.
std::string syllable_word(std::size_t index) {
  constexpr std::size_t base = 14 * 5;
  std::string word;
  std::size_t n = index + base;  // at least two syllables
  do {
    const std::size_t s = n % base;
    word.push_back(kConsonants[s / 5]);
    word.push_back(kVowels[s % 5]);
    n /= base;
  } while (n > 0);
  word[0] = static_cast<char>(word[0] - 'a' + 'A');
  return word;
}

constexpr const char* kFirstNames[] = {"Alma", "Bruno", "Carla", "Dmitri", "Elena", "Felix",
                                       "Greta", "Hugo", "Irene", "Jonas", "Klara", "Lukas",
                                       "Marta", "Nils", "Olga", "Pavel", "Rosa", "Sven"};
constexpr const char* kOrgSuffixes[] = {"Group", "Labs", "Partners", "Systems", "Holdings"};

constexpr const char* kFiller[] = {
    "the", "market", "reacted", "quickly", "to", "news", "on", "monday", "analysts", "said",
    "shares", "rose", "slightly", "after", "report", "investors", "expect", "growth", "this",
    "year", "officials", "declined", "comment", "a", "new", "plan", "was", "announced", "early",
    "week", "demand", "remained", "strong", "despite", "concerns", "over", "costs"};

std::string person_name(std::size_t i) {
  return std::string(kFirstNames[i % std::size(kFirstNames)]) + " " + syllable_word(i) + "ek";
}

std::string org_name(std::size_t i) {
  return syllable_word(i) + "ix " + kOrgSuffixes[i % std::size(kOrgSuffixes)];
}

std::string location_name(std::size_t i) { return syllable_word(i) + "ia"; }

class Zipf {
 public:
  Zipf(std::size_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = total;
    }
    for (double& c : cdf_) c /= total;
  }

  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::string filler_sentence(Rng& rng) {
  const std::size_t len = 6 + rng.uniform_index(6);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0) s.push_back(' ');
    s += kFiller[rng.uniform_index(std::size(kFiller))];
  }
  return s + ".";
}

std::string works_for_sentence(const std::string& person, const std::string& org, Rng& rng) {
  switch (rng.uniform_index(3)) {
    case 0: return person + " works for " + org + ".";
    case 1: return person + " joined " + org + " as a senior manager.";
    default: return "According to " + org + ", " + person + " leads the new team.";
  }
}

std::string based_in_sentence(const std::string& org, const std::string& location, Rng& rng) {
  switch (rng.uniform_index(2)) {
    case 0: return org + " is based in " + location + ".";
    default: return "The headquarters of " + org + " are in " + location + ".";
  }
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.people < 2 || o.organizations < 2 || o.locations < 2) {
    throw Error(ErrorCode::ConfigError, "synthetic world needs at least two entities per type");
  }
  if (o.min_people_per_doc == 0 || o.min_people_per_doc > o.max_people_per_doc ||
      o.max_people_per_doc > o.people) {
    throw Error(ErrorCode::ConfigError, "bad people-per-document range");
  }

  SyntheticCorpus corpus;
  std::vector<std::string> people, orgs, locations;
  for (std::size_t i = 0; i < o.people; ++i) people.push_back(person_name(i));
  for (std::size_t i = 0; i < o.organizations; ++i) orgs.push_back(org_name(i));
  for (std::size_t i = 0; i < o.locations; ++i) locations.push_back(location_name(i));
  for (const auto& p : people) corpus.gazetteer.add(p, EntityType::Person);
  for (const auto& g : orgs) corpus.gazetteer.add(g, EntityType::Organization);
  for (const auto& l : locations) corpus.gazetteer.add(l, EntityType::Location);

  const Zipf person_pop(o.people, o.zipf_exponent);
  const Zipf org_pop(o.organizations, o.zipf_exponent);
  const Zipf location_pop(o.locations, o.zipf_exponent);

  Rng world(derive_seed(o.seed, "synthetic:world"));
  std::vector<std::size_t> employer(o.people), base(o.organizations);
  for (auto& e : employer) e = org_pop.draw(world);
  for (auto& b : base) b = location_pop.draw(world);
  for (std::size_t p = 0; p < o.people; ++p) corpus.triples.push_back({people[p], "worksFor", orgs[employer[p]]});
  for (std::size_t g = 0; g < o.organizations; ++g) {
    corpus.triples.push_back({orgs[g], "locatedIn", locations[base[g]]});
  }

  corpus.documents.reserve(o.documents);
  for (std::size_t d = 0; d < o.documents; ++d) {
    Rng rng(derive_seed(o.seed, "synthetic:doc", d));
    const std::size_t n_people =
        o.min_people_per_doc + rng.uniform_index(o.max_people_per_doc - o.min_people_per_doc + 1);
    std::vector<std::size_t> chosen;
    while (chosen.size() < n_people) {
      const std::size_t p = person_pop.draw(rng);
      if (std::find(chosen.begin(), chosen.end(), p) == chosen.end()) chosen.push_back(p);
    }

    std::vector<std::string> sentences;
    std::set<std::size_t> described;
    for (std::size_t p : chosen) {
      std::size_t g = employer[p];
      if (rng.bernoulli(o.unverified_fact_rate)) {
        g = (g + 1 + rng.uniform_index(o.organizations - 1)) % o.organizations;
      }
      sentences.push_back(works_for_sentence(people[p], orgs[g], rng));
      if (described.insert(g).second) {
        std::size_t l = base[g];
        if (rng.bernoulli(o.unverified_fact_rate)) {
          l = (l + 1 + rng.uniform_index(o.locations - 1)) % o.locations;
        }
        sentences.push_back(based_in_sentence(orgs[g], locations[l], rng));
      }
    }
    for (std::size_t f = 0; f < o.filler_sentences; ++f) {
      const std::size_t at = rng.uniform_index(sentences.size() + 1);
      sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), filler_sentence(rng));
    }
    for (auto& s : sentences) {
      if (s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }

    Document doc;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", d);
    doc.id = id;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (i > 0) doc.text.push_back(' ');
      doc.text += sentences[i];
    }
    corpus.documents.push_back(annotate_entities(doc, corpus.gazetteer));
  }
  return corpus;
}

}  // namespace entfact
