#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fvqa::corpus {

enum class Label : char { A = 'A', B = 'B', C = 'C', D = 'D' };

inline constexpr std::array<Label, 4> kAllLabels = {Label::A, Label::B,
                                                    Label::C, Label::D};

char to_char(Label label);
std::optional<Label> label_from_char(char c);
std::optional<Label> label_from_string(std::string_view s);

// The 12 question categories used for stratified reporting.
enum class QuestionType {
  ingredients,
  cooking_technique,
  cultural_significance,
  taste_and_flavor_profile,
  health_and_nutrition,
  seasonality_and_locality,
  ingredient_substitutions,
  presentation_and_plating,
  fusion_and_innovation,
  cooking_science,
  allergens_and_restrictions,
  food_pairings,
};

inline constexpr int kQuestionTypeCount = 12;

const std::array<QuestionType, kQuestionTypeCount>& all_question_types();
std::string_view to_string(QuestionType type);
std::optional<QuestionType> question_type_from_string(std::string_view name);

struct Choice {
  Label label = Label::A;
  std::string text;

  bool operator==(const Choice&) const = default;
};

// One corpus record: image reference, question, four labeled choices, gold
// label, free-text reason (may be empty for prediction-style corpora),
// question type and optional knowledge-graph entity references.
struct VQASample {
  std::string id;
  std::string image_ref;
  std::string question;
  std::array<Choice, 4> choices;
  Label correct_label = Label::A;
  std::string reason;
  QuestionType question_type = QuestionType::ingredients;
  std::vector<std::string> kg_entity_refs;

  const std::string& choice_text(Label label) const;

  bool operator==(const VQASample&) const = default;
};

// Throws std::runtime_error naming the violated constraint.
void validate(const VQASample& sample);

struct DatasetSplit {
  std::array<double, 3> ratios{};  // train, validation, test
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  bool operator==(const DatasetSplit&) const = default;
};

// Loads a line-delimited corpus file, validating every record. Errors carry
// the 1-based line number. Input order is preserved.
std::vector<VQASample> load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path,
                  const std::vector<VQASample>& samples);

// Deterministic shuffle + floor(n*ratio) sizing with the remainder assigned
// to train. Ratios must be non-negative and sum to 1 within 1e-9.
DatasetSplit split_dataset(const std::vector<VQASample>& samples,
                           std::array<double, 3> ratios, std::uint64_t seed);

DatasetSplit load_split(const std::filesystem::path& path);
void save_split(const std::filesystem::path& path, const DatasetSplit& split);

void to_json(nlohmann::json& j, const Choice& choice);
void from_json(const nlohmann::json& j, Choice& choice);
void to_json(nlohmann::json& j, const VQASample& sample);
void from_json(const nlohmann::json& j, VQASample& sample);

}  // namespace fvqa::corpus
