#include "entfact/manipulate.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "entfact/error.hpp"
#include "entfact/text.hpp"

namespace entfact {

namespace {

std::size_t type_slot(EntityType type) { return static_cast<std::size_t>(type); }

}  // namespace

// ---------------------------------------------------------------- frequency table

FrequencyTable FrequencyTable::build(std::span<const Document> docs) {
  FrequencyTable table;
  for (const auto& doc : docs) {
    for (const auto& m : doc.mentions) ++table.counts_[type_slot(m.type)][m.surface];
  }
  for (std::size_t t = 0; t < 3; ++t) {
    auto& ranks = table.ranks_[t];
    ranks.reserve(table.counts_[t].size());
    for (const auto& [surface, count] : table.counts_[t]) ranks.push_back({surface, count});
    // map iteration is already surface-ascending, so a stable sort on count
    // yields (count desc, surface asc)
    std::stable_sort(ranks.begin(), ranks.end(),
                     [](const RankedSurface& a, const RankedSurface& b) { return a.count > b.count; });
  }
  return table;
}

const std::vector<RankedSurface>& FrequencyTable::ranks(EntityType type) const {
  return ranks_[type_slot(type)];
}

std::size_t FrequencyTable::count(std::string_view surface, EntityType type) const {
  const auto& counts = counts_[type_slot(type)];
  auto it = counts.find(surface);
  return it == counts.end() ? 0 : it->second;
}

std::optional<EntityType> FrequencyTable::type_of(std::string_view surface) const {
  for (EntityType type : kEntityTypes) {
    if (count(surface, type) > 0) return type;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- strategies

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::RandomMostFrequent: return "random_most";
    case StrategyKind::RandomLeastFrequent: return "random_least";
    case StrategyKind::Generated: return "generated";
  }
  return "random_most";
}

std::optional<StrategyKind> parse_strategy(std::string_view name) {
  if (name == "random_most") return StrategyKind::RandomMostFrequent;
  if (name == "random_least") return StrategyKind::RandomLeastFrequent;
  if (name == "generated") return StrategyKind::Generated;
  return std::nullopt;
}

std::string record_to_json_line(const ManipulationRecord& record) {
  nlohmann::ordered_json j;
  j["doc_id"] = record.doc_id;
  j["original_surface"] = record.original_surface;
  j["replacement_surface"] = record.replacement_surface;
  j["type"] = entity_tag(record.type);
  j["strategy"] = strategy_name(record.strategy.kind);
  if (record.strategy.kind == StrategyKind::Generated) {
    j["max_attempts"] = record.strategy.max_attempts;
  } else {
    j["band_size"] = record.strategy.band_size;
  }
  j["attempts_used"] = record.attempts_used;
  j["fallback_used"] = record.fallback_used;
  return j.dump();
}

std::vector<TargetEntity> pick_target_entities(const Document& doc, std::size_t max_k, Rng& rng) {
  if (doc.mentions.empty()) throw Error(ErrorCode::NoEntities, "document '" + doc.id + "' has no entities");
  std::vector<TargetEntity> distinct;
  for (const auto& surface : doc.distinct_surfaces()) {
    auto it = std::find_if(doc.mentions.begin(), doc.mentions.end(),
                           [&](const EntityMention& m) { return m.surface == surface; });
    distinct.push_back({surface, it->type});
  }
  const std::size_t k = std::min(max_k, distinct.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(distinct.size() - i);
    std::swap(distinct[i], distinct[j]);
  }
  distinct.resize(k);
  return distinct;
}

std::string propose_replacement_random(const FrequencyTable& table, EntityType type, Band band,
                                       std::size_t band_size, std::string_view exclude, Rng& rng,
                                       std::span<const std::string> avoid) {
  const auto& ranks = table.ranks(type);
  const std::size_t width = std::min(band_size, ranks.size());
  const std::size_t first = band == Band::Top ? 0 : ranks.size() - width;
  std::vector<const std::string*> eligible;
  eligible.reserve(width);
  for (std::size_t i = first; i < first + width; ++i) {
    const std::string& s = ranks[i].surface;
    if (s == exclude || has_string_overlap(s, exclude)) continue;
    if (std::find(avoid.begin(), avoid.end(), s) != avoid.end()) continue;
    eligible.push_back(&s);
  }
  if (eligible.empty()) {
    throw Error(ErrorCode::EmptyBand, "no eligible " + std::string(entity_tag(type)) +
                                          " replacement for '" + std::string(exclude) + "'");
  }
  return *eligible[rng.uniform_index(eligible.size())];
}

GeneratedProposal propose_replacement_generated(const Document& doc, const TargetEntity& target,
                                                const GenerationContext& ctx,
                                                std::size_t max_attempts, Rng& rng) {
  auto first = std::find_if(doc.mentions.begin(), doc.mentions.end(),
                            [&](const EntityMention& m) { return m.surface == target.surface; });
  if (first == doc.mentions.end()) {
    throw Error(ErrorCode::SurfaceNotFound, "'" + target.surface + "' is not a mention of " + doc.id);
  }
  const std::string prompt = doc.text.substr(0, first->start);
  const auto existing = doc.distinct_surfaces();

  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    const std::string continuation = ctx.port->generate(prompt, ctx.max_tokens);
    std::string_view head = continuation;
    while (!head.empty() && is_space_byte(static_cast<unsigned char>(head.front()))) head.remove_prefix(1);
    const auto found = ctx.gazetteer->find_mentions(head);
    if (found.empty() || found.front().start != 0) continue;
    const auto& candidate = found.front();
    if (candidate.type != target.type) continue;
    if (has_string_overlap(candidate.surface, target.surface)) continue;
    if (std::find(existing.begin(), existing.end(), candidate.surface) != existing.end()) continue;
    return {candidate.surface, attempt, false};
  }

  const Band band =
      ctx.fallback.kind == StrategyKind::RandomLeastFrequent ? Band::Bottom : Band::Top;
  std::string surface = propose_replacement_random(*ctx.table, target.type, band,
                                                   ctx.fallback.band_size, target.surface, rng, existing);
  return {std::move(surface), max_attempts, true};
}

Document apply_replacement(const Document& doc, std::string_view old_surface,
                           std::string_view new_surface) {
  if (!doc.has_surface(old_surface)) {
    throw Error(ErrorCode::SurfaceNotFound,
                "'" + std::string(old_surface) + "' is not a mention of " + doc.id);
  }
  if (new_surface.empty() || new_surface == old_surface) {
    throw std::invalid_argument("replacement must be non-empty and differ from the original");
  }
  Document out;
  out.id = doc.id;
  out.label = Label::Manipulated;
  out.manipulated_surfaces = doc.manipulated_surfaces;
  out.manipulated_surfaces.erase(std::string(old_surface));
  out.manipulated_surfaces.insert(std::string(new_surface));
  out.text.reserve(doc.text.size() + 64);
  out.mentions.reserve(doc.mentions.size());

  std::size_t pos = 0;
  for (const auto& m : doc.mentions) {
    out.text.append(doc.text, pos, m.start - pos);
    EntityMention moved = m;
    moved.start = out.text.size();
    if (m.surface == old_surface) moved.surface = std::string(new_surface);
    out.text += moved.surface;
    moved.end = out.text.size();
    out.mentions.push_back(std::move(moved));
    pos = m.end;
  }
  out.text.append(doc.text, pos, std::string::npos);
  assign_sentence_indices(out);
  return out;
}

// ---------------------------------------------------------------- datasets

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& split) {
  auto part = [n](double fraction) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  };
  const std::size_t train = std::min(part(split.train), n);
  const std::size_t valid = std::min(part(split.valid), n - train);
  return {train, valid, n - train - valid};
}

std::optional<Document> manipulate_document(const Document& doc, const DatasetOptions& options,
                                            const FrequencyTable& table,
                                            const GenerationContext* generation,
                                            std::vector<ManipulationRecord>& records,
                                            std::string* failure) {
  Rng rng(derive_seed(options.seed, "doc:" + doc.id));
  std::vector<TargetEntity> targets;
  try {
    targets = pick_target_entities(doc, options.max_k, rng);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoEntities) throw;
    if (failure != nullptr) *failure = "NoEntities";
    return std::nullopt;
  }

  Document current = doc;
  std::vector<ManipulationRecord> local;
  std::string last_reason;
  for (const auto& target : targets) {
    const auto avoid = current.distinct_surfaces();
    ManipulationRecord record{doc.id, target.surface, {}, target.type, options.strategy, 0, false};
    try {
      switch (options.strategy.kind) {
        case StrategyKind::RandomMostFrequent:
          record.replacement_surface = propose_replacement_random(
              table, target.type, Band::Top, options.strategy.band_size, target.surface, rng, avoid);
          break;
        case StrategyKind::RandomLeastFrequent:
          record.replacement_surface = propose_replacement_random(
              table, target.type, Band::Bottom, options.strategy.band_size, target.surface, rng, avoid);
          break;
        case StrategyKind::Generated: {
          if (generation == nullptr || generation->port == nullptr || generation->gazetteer == nullptr) {
            throw Error(ErrorCode::ConfigError, "generated strategy needs a generator and a gazetteer");
          }
          GenerationContext ctx = *generation;
          if (ctx.table == nullptr) ctx.table = &table;
          auto proposal = propose_replacement_generated(current, target, ctx,
                                                        options.strategy.max_attempts, rng);
          record.replacement_surface = std::move(proposal.surface);
          record.attempts_used = proposal.attempts_used;
          record.fallback_used = proposal.fallback_used;
          break;
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyBand) throw;
      last_reason = "EmptyBand";
      continue;
    }
    current = apply_replacement(current, target.surface, record.replacement_surface);
    local.push_back(std::move(record));
  }
  if (local.empty()) {
    if (failure != nullptr) *failure = last_reason.empty() ? "NoTargets" : last_reason;
    return std::nullopt;
  }
  records.insert(records.end(), std::make_move_iterator(local.begin()),
                 std::make_move_iterator(local.end()));
  return current;
}

Dataset build_dataset(std::span<const Document> docs, const DatasetOptions& options,
                      const FrequencyTable& table, const GenerationContext* generation) {
  const auto& f = options.split;
  if (f.train < 0 || f.valid < 0 || f.test < 0 || std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::ConfigError, "split fractions must be non-negative and sum to 1");
  }
  for (const auto& doc : docs) {
    if (doc.label != Label::HumanWritten) {
      throw Error(ErrorCode::ConfigError, "document '" + doc.id + "' is not human-written");
    }
  }
  const auto sizes = split_sizes(docs.size(), f);
  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
    throw Error(ErrorCode::InsufficientCorpus,
                std::to_string(docs.size()) + " documents leave a split empty");
  }

  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(options.seed, "split"));
  split_rng.shuffle(order);

  Dataset dataset;
  const char* names[3] = {"train", "valid", "test"};
  std::vector<Document>* outputs[3] = {&dataset.train, &dataset.valid, &dataset.test};
  std::size_t offset = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t n = sizes[s];
    std::vector<std::size_t> positions(n);
    std::iota(positions.begin(), positions.end(), 0);
    Rng pick_rng(derive_seed(options.seed, std::string("pick:") + names[s]));
    pick_rng.shuffle(positions);
    std::vector<bool> chosen(n, false);
    for (std::size_t i = 0; i < n / 2; ++i) chosen[positions[i]] = true;

    auto& out = *outputs[s];
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Document& doc = docs[order[offset + i]];
      if (!chosen[i]) {
        out.push_back(doc);
        continue;
      }
      std::string reason;
      auto manipulated = manipulate_document(doc, options, table, generation, dataset.records, &reason);
      if (manipulated) {
        out.push_back(std::move(*manipulated));
      } else {
        dataset.failures.push_back({doc.id, reason});
        out.push_back(doc);
      }
    }
    offset += n;
  }
  return dataset;
}

}  // namespace entfact
