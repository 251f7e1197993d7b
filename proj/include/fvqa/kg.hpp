#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fvqa/annotate.hpp"
#include "fvqa/corpus.hpp"

namespace fvqa::kg {

struct KnowledgeTriple {
  std::string subject;
  std::string relation;
  std::string object;

  bool operator==(const KnowledgeTriple&) const = default;
};

// Immutable after load; safe for concurrent reads.
class TripleStore {
 public:
  TripleStore() = default;
  explicit TripleStore(std::vector<KnowledgeTriple> triples);

  const std::vector<KnowledgeTriple>& triples() const { return triples_; }

  // All triples whose subject or object equals any queried entity (exact
  // match after normalization), in file order, deduplicated.
  std::vector<KnowledgeTriple> one_hop(
      std::span<const std::string> entities) const;

  bool has_entity(std::string_view entity) const;

 private:
  std::vector<KnowledgeTriple> triples_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

// Lower-cases, trims and joins internal whitespace with '_' so that surface
// forms like "Green Chutney" match KG entities like "green_chutney".
std::string normalize_entity(std::string_view name);

// One "subject; relation; object" line per triple. Lines are trimmed,
// lower-cased and deduplicated; blank lines are skipped. A line with a field
// count other than 3 is an error carrying the line number.
TripleStore load_triples(const std::filesystem::path& path);

std::vector<KnowledgeTriple> one_hop(const TripleStore& store,
                                     std::span<const std::string> entities);

// Prepends a "Knowledge:" block (one "subject; relation; object" line per
// triple) to the context. An empty triple list returns the context
// unchanged.
std::string augment_context(std::string_view context,
                            std::span<const KnowledgeTriple> triples);

// Entities to query for a sample: its fp-map items plus any store entity
// whose surface form appears in a choice text.
std::vector<std::string> entities_for_sample(
    const corpus::VQASample& sample, const annotate::FoodPositionMap& fp_map,
    const TripleStore& store);

}  // namespace fvqa::kg
