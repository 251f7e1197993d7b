#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>

#include "fvqa/corpus.hpp"

namespace fvqa::prompts {

// System prompt shared by annotation, zero-shot answering and chain
// validation.
inline constexpr std::string_view kFoodAnalystSystem =
    "You are a Visual/Language assistant model, expert in Indian Food "
    "Analysis.";

// System prompt for reasoning-chain synthesis.
inline constexpr std::string_view kReasoningSystem =
    "You are a reasoning model expert in forming structured reasoning to "
    "achieve the final result";

// Instruction for extracting the food item-position map from an image.
inline constexpr std::string_view kAnnotationInstruction =
    "Carefully examine the food plate in this image and list the names of "
    "all visible Indian food items or dishes. Do not describe or explain the "
    "items; just provide a simple, comma-separated list of their names. "
    "Ensure each item is visually distinct and identifiable, noting that "
    "some items might be present on top of others. Also specify their "
    "relative positions.";

// Template for reasoning-chain generation; placeholders {question} and
// {answer} are filled verbatim.
inline constexpr std::string_view kChainGenerationTemplate =
    "Given a multiple-choice question:{question}, and its answer: {answer}, "
    "Decompose the reasoning into a series of subquestions and subanswers. "
    "Each step should build on the previous step where applicable.";

// Template for answering a multiple-choice question.
inline constexpr std::string_view kAnswerTemplate =
    "Question: {question}; Answer Choices: {answer_choices}; correct answer "
    "out of the four given choices. Provide a clear reason for the chosen "
    "answer.";

// Replaces each "{name}" placeholder with its mapped value. Placeholders
// without a mapping are left in place.
std::string fill(std::string_view tmpl,
                 const std::map<std::string, std::string>& values);

// "A. <text> B. <text> C. <text> D. <text>"
std::string render_choices(const std::array<corpus::Choice, 4>& choices);

// "<label>. <choice text>" for the gold choice.
std::string render_gold_answer(const corpus::VQASample& sample);

}  // namespace fvqa::prompts
