#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fvqa/backend.hpp"
#include "fvqa/corpus.hpp"
#include "json.hpp"

namespace fvqa::annotate {

// Generation knobs carried by every prompt builder.
struct GenParams {
  std::string model_name;
  double temperature = 0.1;
  int max_tokens = 512;
};

struct FoodPositionEntry {
  std::string item;      // lower-cased, trimmed dish name
  std::string position;  // free text, may be empty

  bool operator==(const FoodPositionEntry&) const = default;
};

struct FoodPositionMap {
  std::string sample_id;
  std::vector<FoodPositionEntry> entries;  // raw_text mention order
  std::string raw_text;                    // verbatim model output

  bool operator==(const FoodPositionMap&) const = default;
};

// Splits on commas outside parentheses; a trailing parenthesized phrase is
// the item's position. Exact (item, position) repeats are dropped, first
// occurrence kept. Total: degenerate inputs yield an empty list.
std::vector<FoodPositionEntry> parse_annotation(std::string_view text);

// "item (position), item, ..." or "(no items detected)" when empty.
std::string render_fp_map(const FoodPositionMap& fp_map);

backend::ChatRequest build_fp_request(const corpus::VQASample& sample,
                                      const GenParams& params);

// Issues the annotation prompt and parses the response. Zero parsed entries
// is not fatal; callers can detect it via entries.empty().
FoodPositionMap build_fp_map(const corpus::VQASample& sample,
                             backend::Backend& backend,
                             const GenParams& params);

// Batched variant; output order matches the input order.
std::vector<FoodPositionMap> annotate_corpus(
    const std::vector<corpus::VQASample>& samples, backend::Backend& backend,
    const GenParams& params);

void to_json(nlohmann::json& j, const FoodPositionEntry& entry);
void from_json(const nlohmann::json& j, FoodPositionEntry& entry);
void to_json(nlohmann::json& j, const FoodPositionMap& fp_map);
void from_json(const nlohmann::json& j, FoodPositionMap& fp_map);

}  // namespace fvqa::annotate
