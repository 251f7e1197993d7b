#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fvqa/annotate.hpp"
#include "fvqa/backend.hpp"
#include "fvqa/corpus.hpp"
#include "json.hpp"

namespace fvqa::chains {

struct ReasoningStep {
  std::string sub_question;
  std::string sub_answer;

  bool operator==(const ReasoningStep&) const = default;
};

struct ReasoningChain {
  std::string sample_id;
  std::vector<ReasoningStep> steps;
  std::string raw_text;
  bool flagged = false;  // set when the model output yielded zero steps

  bool operator==(const ReasoningChain&) const = default;
};

// A human-authored few-shot example shipped as fixture data.
struct Exemplar {
  corpus::QuestionType question_type = corpus::QuestionType::ingredients;
  std::string question;
  std::array<corpus::Choice, 4> choices;
  corpus::Label correct_label = corpus::Label::A;
  std::string reason;
  ReasoningChain chain;
};

// Scans for alternating "Q:"/"A:" markers (case-insensitive, tolerant of
// numbering prefixes like "(i)" or "1." between steps). Each Q pairs with
// the next A; a trailing unpaired Q is dropped. Total function.
std::vector<ReasoningStep> parse_chain(std::string_view text);

// "Q: {q}\nA: {a}\n" per step; round-trips through parse_chain.
std::string serialize_steps(const std::vector<ReasoningStep>& steps);

backend::ChatRequest build_synthesis_request(
    const corpus::VQASample& sample, const annotate::FoodPositionMap& fp_map,
    const std::vector<Exemplar>& exemplars, const annotate::GenParams& params);

ReasoningChain synthesize_chain(const corpus::VQASample& sample,
                                const annotate::FoodPositionMap& fp_map,
                                const std::vector<Exemplar>& exemplars,
                                backend::Backend& backend,
                                const annotate::GenParams& params);

// chains_per_sample identical requests are issued per sample (scripted
// backends resolve them via multi-response entries; live backends sample).
// Output is sample-major in input order.
std::vector<ReasoningChain> synthesize_corpus(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<annotate::FoodPositionMap>& fp_maps,
    const std::vector<Exemplar>& exemplars, backend::Backend& backend,
    const annotate::GenParams& params, int chains_per_sample = 1);

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const ReasoningStep& step);
void from_json(const nlohmann::json& j, ReasoningStep& step);
void to_json(nlohmann::json& j, const ReasoningChain& chain);
void from_json(const nlohmann::json& j, ReasoningChain& chain);
void to_json(nlohmann::json& j, const Exemplar& exemplar);
void from_json(const nlohmann::json& j, Exemplar& exemplar);

}  // namespace fvqa::chains
