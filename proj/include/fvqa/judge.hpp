#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fvqa/annotate.hpp"
#include "fvqa/backend.hpp"
#include "fvqa/chains.hpp"
#include "fvqa/corpus.hpp"
#include "json.hpp"

namespace fvqa::judge {

struct Verdict {
  std::string sample_id;
  int chain_index = 0;
  std::optional<corpus::Label> extracted_label;
  bool valid = false;  // == (extracted_label present && equals gold)
  std::string judge_raw_text;

  bool operator==(const Verdict&) const = default;
};

struct RewardValue {
  int value = 0;  // in {0, 1}

  bool operator==(const RewardValue&) const = default;
};

// Reads an answer label out of free text. Matching priority:
//   1. phrase "correct answer is X" (phrase case-insensitive);
//   2. leading "X." at the start of the text, or the whole trimmed text
//      being a single label letter;
//   3. a standalone capital label token immediately followed by the first
//      word of that label's choice text;
//   4. case-insensitive containment of exactly one choice's full text.
// The first rule that fires wins; none firing yields nullopt. Total and
// deterministic.
std::optional<corpus::Label> extract_answer_label(
    std::string_view text, const std::array<corpus::Choice, 4>& choices);

// Deterministic judging request: fp map, question, choices and the chain;
// the gold answer is withheld and temperature is forced to 0.
backend::ChatRequest build_validation_request(
    const corpus::VQASample& sample, const annotate::FoodPositionMap& fp_map,
    const chains::ReasoningChain& chain, const annotate::GenParams& params);

// Chains with zero steps are invalid without a model call.
Verdict validate_chain(const corpus::VQASample& sample,
                       const annotate::FoodPositionMap& fp_map,
                       const chains::ReasoningChain& chain, int chain_index,
                       backend::Backend& backend,
                       const annotate::GenParams& params);

// Batched validation; verdict order matches chain input order. chain_index
// counts chains per sample in input order.
std::vector<Verdict> validate_corpus(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<annotate::FoodPositionMap>& fp_maps,
    const std::vector<chains::ReasoningChain>& chain_records,
    backend::Backend& backend, const annotate::GenParams& params);

// 1 iff the verdict is valid.
RewardValue reward(const Verdict& verdict);

// (# valid) / (# total); throws std::invalid_argument on an empty list.
double validity_rate(std::span<const Verdict> verdicts);

void to_json(nlohmann::json& j, const Verdict& verdict);
void from_json(const nlohmann::json& j, Verdict& verdict);

}  // namespace fvqa::judge
