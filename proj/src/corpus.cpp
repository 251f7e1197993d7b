#include "fvqa/corpus.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "fvqa/jsonl.hpp"

namespace fvqa::corpus {

namespace {

constexpr std::array<std::string_view, kQuestionTypeCount> kQuestionTypeNames = {
    "Ingredients",
    "Cooking technique",
    "Cultural significance",
    "Taste and flavor profile",
    "Health and nutrition",
    "Seasonality and locality",
    "Ingredient substitutions",
    "Presentation and plating",
    "Fusion and innovation",
    "Cooking science",
    "Allergens and restrictions",
    "Food pairings",
};

// mt19937_64-based Fisher-Yates; std::shuffle is avoided because its
// visitation order is not pinned by the standard and split membership must
// be stable across toolchains.
void deterministic_shuffle(std::vector<std::size_t>& indices,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(indices[i - 1], indices[j]);
  }
}

}  // namespace

char to_char(Label label) { return static_cast<char>(label); }

std::optional<Label> label_from_char(char c) {
  switch (c) {
    case 'A': return Label::A;
    case 'B': return Label::B;
    case 'C': return Label::C;
    case 'D': return Label::D;
    default: return std::nullopt;
  }
}

std::optional<Label> label_from_string(std::string_view s) {
  if (s.size() != 1) {
    return std::nullopt;
  }
  return label_from_char(s[0]);
}

const std::array<QuestionType, kQuestionTypeCount>& all_question_types() {
  static const std::array<QuestionType, kQuestionTypeCount> types = [] {
    std::array<QuestionType, kQuestionTypeCount> out{};
    for (int i = 0; i < kQuestionTypeCount; ++i) {
      out[i] = static_cast<QuestionType>(i);
    }
    return out;
  }();
  return types;
}

std::string_view to_string(QuestionType type) {
  return kQuestionTypeNames[static_cast<std::size_t>(type)];
}

std::optional<QuestionType> question_type_from_string(std::string_view name) {
  for (int i = 0; i < kQuestionTypeCount; ++i) {
    if (kQuestionTypeNames[i] == name) {
      return static_cast<QuestionType>(i);
    }
  }
  return std::nullopt;
}

const std::string& VQASample::choice_text(Label label) const {
  for (const auto& choice : choices) {
    if (choice.label == label) {
      return choice.text;
    }
  }
  throw std::runtime_error("label not present among choices");
}

void validate(const VQASample& sample) {
  if (sample.id.empty()) {
    throw std::runtime_error("empty id");
  }
  if (sample.question.empty()) {
    throw std::runtime_error("empty question");
  }
  std::set<Label> seen;
  for (const auto& choice : sample.choices) {
    if (choice.text.empty()) {
      throw std::runtime_error("empty choice text for label " +
                               std::string(1, to_char(choice.label)));
    }
    if (!seen.insert(choice.label).second) {
      throw std::runtime_error("duplicate choice label " +
                               std::string(1, to_char(choice.label)));
    }
  }
  if (seen.size() != 4) {
    throw std::runtime_error("choice labels must cover A-D exactly once");
  }
}

void to_json(nlohmann::json& j, const Choice& choice) {
  j = nlohmann::json{{"label", std::string(1, to_char(choice.label))},
                     {"text", choice.text}};
}

void from_json(const nlohmann::json& j, Choice& choice) {
  const auto label_str = j.at("label").get<std::string>();
  const auto label = label_from_string(label_str);
  if (!label) {
    throw std::runtime_error("unknown label '" + label_str + "'");
  }
  choice.label = *label;
  choice.text = j.at("text").get<std::string>();
}

void to_json(nlohmann::json& j, const VQASample& sample) {
  nlohmann::json choices = nlohmann::json::array();
  for (const auto& choice : sample.choices) {
    choices.push_back(choice);
  }
  j = nlohmann::json{
      {"id", sample.id},
      {"image_ref", sample.image_ref},
      {"question", sample.question},
      {"choices", std::move(choices)},
      {"correct_label", std::string(1, to_char(sample.correct_label))},
      {"reason", sample.reason},
      {"question_type", std::string(to_string(sample.question_type))},
      {"kg_entity_refs", sample.kg_entity_refs},
  };
}

void from_json(const nlohmann::json& j, VQASample& sample) {
  sample.id = j.at("id").get<std::string>();
  sample.image_ref = j.value("image_ref", std::string{});
  sample.question = j.at("question").get<std::string>();

  const auto& choices = j.at("choices");
  if (!choices.is_array() || choices.size() != 4) {
    throw std::runtime_error("choice count != 4");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    sample.choices[i] = choices[i].get<Choice>();
  }

  const auto gold_str = j.at("correct_label").get<std::string>();
  const auto gold = label_from_string(gold_str);
  if (!gold) {
    throw std::runtime_error("unknown label '" + gold_str + "'");
  }
  sample.correct_label = *gold;

  sample.reason = j.value("reason", std::string{});

  const auto type_str = j.at("question_type").get<std::string>();
  const auto type = question_type_from_string(type_str);
  if (!type) {
    throw std::runtime_error("unknown question_type '" + type_str + "'");
  }
  sample.question_type = *type;

  sample.kg_entity_refs =
      j.value("kg_entity_refs", std::vector<std::string>{});

  validate(sample);
}

std::vector<VQASample> load_samples(const std::filesystem::path& path) {
  auto samples = jsonl::load<VQASample>(path);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!ids.insert(samples[i].id).second) {
      throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) +
                               ": duplicate id '" + samples[i].id + "'");
    }
  }
  return samples;
}

void save_samples(const std::filesystem::path& path,
                  const std::vector<VQASample>& samples) {
  for (const auto& sample : samples) {
    validate(sample);
  }
  jsonl::save(path, samples);
}

DatasetSplit split_dataset(const std::vector<VQASample>& samples,
                           std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) {
      throw std::invalid_argument("split ratios must be non-negative");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1 within 1e-9");
  }

  const std::size_t n = samples.size();
  std::array<std::size_t, 3> sizes{};
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * ratios[i]));
  }
  // Remainder from the three floors goes to train.
  sizes[0] += n - (sizes[0] + sizes[1] + sizes[2]);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  deterministic_shuffle(order, seed);

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) {
    split.train.push_back(samples[order[cursor++]].id);
  }
  for (std::size_t i = 0; i < sizes[1]; ++i) {
    split.validation.push_back(samples[order[cursor++]].id);
  }
  for (std::size_t i = 0; i < sizes[2]; ++i) {
    split.test.push_back(samples[order[cursor++]].id);
  }
  return split;
}

DatasetSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  nlohmann::json j;
  in >> j;
  DatasetSplit split;
  const auto ratios = j.at("ratios").get<std::vector<double>>();
  if (ratios.size() != 3) {
    throw std::runtime_error("split file must carry exactly 3 ratios");
  }
  std::copy(ratios.begin(), ratios.end(), split.ratios.begin());
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train = j.at("train").get<std::vector<std::string>>();
  split.validation = j.at("validation").get<std::vector<std::string>>();
  split.test = j.at("test").get<std::vector<std::string>>();
  return split;
}

void save_split(const std::filesystem::path& path, const DatasetSplit& split) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("unwritable path " + path.string());
  }
  nlohmann::json j{
      {"ratios", split.ratios},
      {"seed", split.seed},
      {"train", split.train},
      {"validation", split.validation},
      {"test", split.test},
  };
  out << j.dump() << '\n';
}

}  // namespace fvqa::corpus
