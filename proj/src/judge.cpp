#include "fvqa/judge.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

#include "fvqa/prompts.hpp"

namespace fvqa::judge {

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

bool is_label_char_upper(char c) { return c >= 'A' && c <= 'D'; }

bool is_label_char_any(char c) {
  return is_label_char_upper(c) ||
         is_label_char_upper(static_cast<char>(
             std::toupper(static_cast<unsigned char>(c))));
}

corpus::Label label_of(char c) {
  return *corpus::label_from_char(
      static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
}

// Rule 1: the phrase "correct answer is X" (phrase case-insensitive).
std::optional<corpus::Label> match_phrase(std::string_view text) {
  static constexpr std::string_view kPhrase = "correct answer is";
  const std::string lowered = to_lower(text);
  std::size_t from = 0;
  while (true) {
    const std::size_t hit = lowered.find(kPhrase, from);
    if (hit == std::string::npos) {
      return std::nullopt;
    }
    std::size_t i = hit + kPhrase.size();
    while (i < text.size() &&
           (std::isspace(static_cast<unsigned char>(text[i])) ||
            text[i] == ':' || text[i] == '"' || text[i] == '\'')) {
      ++i;
    }
    if (i < text.size() && is_label_char_any(text[i]) &&
        (i + 1 == text.size() ||
         !std::isalnum(static_cast<unsigned char>(text[i + 1])))) {
      return label_of(text[i]);
    }
    from = hit + kPhrase.size();
  }
}

// Rule 2: leading "X." at the start, or the whole trimmed text is one
// label letter.
std::optional<corpus::Label> match_leading(std::string_view text) {
  const std::string_view trimmed = trim_view(text);
  if (trimmed.size() >= 2 && is_label_char_upper(trimmed[0]) &&
      trimmed[1] == '.') {
    return label_of(trimmed[0]);
  }
  if (trimmed.size() == 1 && is_label_char_any(trimmed[0])) {
    return label_of(trimmed[0]);
  }
  return std::nullopt;
}

std::string first_word(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isalnum(static_cast<unsigned char>(s[i]))) {
    ++i;
  }
  return to_lower(s.substr(0, i));
}

bool is_separator(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == ':' ||
         c == ')' || c == '(' || c == ',' || c == '-';
}

// Rule 3: standalone capital label token followed by that choice's leading
// word.
std::optional<corpus::Label> match_adjacent(
    std::string_view text, const std::array<corpus::Choice, 4>& choices) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_label_char_upper(text[i])) {
      continue;
    }
    const bool left_ok =
        i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
    const bool right_ok =
        i + 1 == text.size() ||
        !std::isalnum(static_cast<unsigned char>(text[i + 1]));
    if (!left_ok || !right_ok) {
      continue;
    }
    const corpus::Label label = label_of(text[i]);
    std::string expected;
    for (const auto& choice : choices) {
      if (choice.label == label) {
        expected = first_word(choice.text);
        break;
      }
    }
    if (expected.empty()) {
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && is_separator(text[j])) {
      ++j;
    }
    if (j + expected.size() > text.size()) {
      continue;
    }
    const std::string got = to_lower(text.substr(j, expected.size()));
    const std::size_t after = j + expected.size();
    const bool word_boundary =
        after == text.size() ||
        !std::isalnum(static_cast<unsigned char>(text[after]));
    if (got == expected && word_boundary) {
      return label;
    }
  }
  return std::nullopt;
}

// Rule 4: exactly one choice's full text occurs (case-insensitive).
std::optional<corpus::Label> match_containment(
    std::string_view text, const std::array<corpus::Choice, 4>& choices) {
  const std::string lowered = to_lower(text);
  std::optional<corpus::Label> found;
  for (const auto& choice : choices) {
    if (choice.text.empty()) {
      continue;
    }
    if (lowered.find(to_lower(choice.text)) != std::string::npos) {
      if (found) {
        return std::nullopt;  // ambiguous
      }
      found = choice.label;
    }
  }
  return found;
}

}  // namespace

std::optional<corpus::Label> extract_answer_label(
    std::string_view text, const std::array<corpus::Choice, 4>& choices) {
  if (auto label = match_phrase(text)) {
    return label;
  }
  if (auto label = match_leading(text)) {
    return label;
  }
  if (auto label = match_adjacent(text, choices)) {
    return label;
  }
  return match_containment(text, choices);
}

backend::ChatRequest build_validation_request(
    const corpus::VQASample& sample, const annotate::FoodPositionMap& fp_map,
    const chains::ReasoningChain& chain, const annotate::GenParams& params) {
  std::string user =
      "Food items and positions: " + annotate::render_fp_map(fp_map) + "\n";
  user += prompts::fill(
      prompts::kAnswerTemplate,
      {{"question", sample.question},
       {"answer_choices", prompts::render_choices(sample.choices)}});
  user += "\nReasoning chain:\n" + chains::serialize_steps(chain.steps);

  return backend::ChatRequest{
      .model_name = params.model_name,
      .system_text = std::string(prompts::kFoodAnalystSystem),
      .user_text = std::move(user),
      .image_ref = {},
      .temperature = 0.0,  // single deterministic attempt
      .max_tokens = params.max_tokens,
  };
}

Verdict validate_chain(const corpus::VQASample& sample,
                       const annotate::FoodPositionMap& fp_map,
                       const chains::ReasoningChain& chain, int chain_index,
                       backend::Backend& backend,
                       const annotate::GenParams& params) {
  Verdict verdict;
  verdict.sample_id = sample.id;
  verdict.chain_index = chain_index;
  if (chain.steps.empty()) {
    return verdict;  // invalid without a model call
  }
  const auto outcome =
      backend.complete(build_validation_request(sample, fp_map, chain, params));
  if (!outcome.ok) {
    throw std::runtime_error("validation failed for sample " + sample.id +
                             ": " + outcome.error);
  }
  verdict.judge_raw_text = outcome.response.text;
  verdict.extracted_label =
      extract_answer_label(outcome.response.text, sample.choices);
  verdict.valid = verdict.extracted_label.has_value() &&
                  *verdict.extracted_label == sample.correct_label;
  return verdict;
}

std::vector<Verdict> validate_corpus(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<annotate::FoodPositionMap>& fp_maps,
    const std::vector<chains::ReasoningChain>& chain_records,
    backend::Backend& backend, const annotate::GenParams& params) {
  std::unordered_map<std::string, const corpus::VQASample*> sample_by_id;
  for (const auto& sample : samples) {
    sample_by_id.emplace(sample.id, &sample);
  }
  std::unordered_map<std::string, const annotate::FoodPositionMap*> fp_by_id;
  for (const auto& fp_map : fp_maps) {
    fp_by_id.emplace(fp_map.sample_id, &fp_map);
  }

  std::vector<Verdict> verdicts(chain_records.size());
  std::vector<backend::ChatRequest> requests;
  std::vector<std::size_t> request_slots;
  std::unordered_map<std::string, int> index_within_sample;

  for (std::size_t i = 0; i < chain_records.size(); ++i) {
    const auto& chain = chain_records[i];
    const auto sit = sample_by_id.find(chain.sample_id);
    if (sit == sample_by_id.end()) {
      throw std::runtime_error("chain references unknown sample '" +
                               chain.sample_id + "'");
    }
    const int chain_index = index_within_sample[chain.sample_id]++;
    verdicts[i].sample_id = chain.sample_id;
    verdicts[i].chain_index = chain_index;
    if (chain.steps.empty()) {
      continue;  // stays invalid, no request issued
    }
    const auto fit = fp_by_id.find(chain.sample_id);
    const annotate::FoodPositionMap empty{chain.sample_id, {}, {}};
    const auto& fp_map = fit != fp_by_id.end() ? *fit->second : empty;
    requests.push_back(
        build_validation_request(*sit->second, fp_map, chain, params));
    request_slots.push_back(i);
  }

  if (!requests.empty()) {
    const auto outcomes = backend.complete_batch(requests);
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
      const std::size_t i = request_slots[r];
      const auto& chain = chain_records[i];
      if (!outcomes[r].ok) {
        throw std::runtime_error("validation failed for sample " +
                                 chain.sample_id + ": " + outcomes[r].error);
      }
      const auto& sample = *sample_by_id.at(chain.sample_id);
      verdicts[i].judge_raw_text = outcomes[r].response.text;
      verdicts[i].extracted_label =
          extract_answer_label(outcomes[r].response.text, sample.choices);
      verdicts[i].valid = verdicts[i].extracted_label.has_value() &&
                          *verdicts[i].extracted_label == sample.correct_label;
    }
  }
  return verdicts;
}

RewardValue reward(const Verdict& verdict) {
  return RewardValue{verdict.valid ? 1 : 0};
}

double validity_rate(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) {
    throw std::invalid_argument("validity_rate requires a non-empty list");
  }
  std::size_t valid = 0;
  for (const auto& verdict : verdicts) {
    valid += verdict.valid ? 1 : 0;
  }
  return static_cast<double>(valid) / static_cast<double>(verdicts.size());
}

void to_json(nlohmann::json& j, const Verdict& verdict) {
  j = nlohmann::json{
      {"sample_id", verdict.sample_id},
      {"chain_index", verdict.chain_index},
      {"valid", verdict.valid},
      {"judge_raw_text", verdict.judge_raw_text},
  };
  if (verdict.extracted_label) {
    j["extracted_label"] =
        std::string(1, corpus::to_char(*verdict.extracted_label));
  } else {
    j["extracted_label"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, Verdict& verdict) {
  verdict.sample_id = j.at("sample_id").get<std::string>();
  verdict.chain_index = j.at("chain_index").get<int>();
  verdict.valid = j.at("valid").get<bool>();
  verdict.judge_raw_text = j.value("judge_raw_text", std::string{});
  verdict.extracted_label.reset();
  if (j.contains("extracted_label") && !j.at("extracted_label").is_null()) {
    const auto label_str = j.at("extracted_label").get<std::string>();
    const auto label = corpus::label_from_string(label_str);
    if (!label) {
      throw std::runtime_error("unknown label '" + label_str + "'");
    }
    verdict.extracted_label = *label;
  }
}

}  // namespace fvqa::judge
