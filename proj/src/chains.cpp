#include "fvqa/chains.hpp"

#include <cctype>
#include <stdexcept>
#include <unordered_map>

#include "fvqa/jsonl.hpp"
#include "fvqa/prompts.hpp"

namespace fvqa::chains {

namespace {

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

bool is_roman_lower(char c) {
  return c == 'i' || c == 'v' || c == 'x' || c == 'l';
}

// Drops one trailing enumeration token such as "(ii)", "(2)", "(a)" or "3."
// left behind by numbered chains; applied only to segments that end at the
// next marker.
std::string strip_enumeration_suffix(std::string content) {
  content = trim(content);
  if (content.empty()) {
    return content;
  }
  if (content.back() == ')') {
    const auto open = content.rfind('(');
    if (open != std::string::npos) {
      const std::string_view inside =
          std::string_view(content).substr(open + 1, content.size() - open - 2);
      bool all_digits = !inside.empty();
      bool all_roman = !inside.empty();
      for (char c : inside) {
        all_digits = all_digits && std::isdigit(static_cast<unsigned char>(c));
        all_roman = all_roman && is_roman_lower(static_cast<char>(
                                     std::tolower(static_cast<unsigned char>(c))));
      }
      const bool single_letter =
          inside.size() == 1 && std::isalpha(static_cast<unsigned char>(inside[0]));
      const bool boundary =
          open == 0 ||
          std::isspace(static_cast<unsigned char>(content[open - 1]));
      if (inside.size() <= 4 && boundary &&
          (all_digits || all_roman || single_letter)) {
        return trim(std::string_view(content).substr(0, open));
      }
    }
  } else if (content.back() == '.') {
    std::size_t i = content.size() - 1;
    std::size_t digits = 0;
    while (i > 0 && std::isdigit(static_cast<unsigned char>(content[i - 1]))) {
      --i;
      ++digits;
    }
    const bool boundary =
        i == 0 || std::isspace(static_cast<unsigned char>(content[i - 1]));
    if (digits >= 1 && digits <= 3 && boundary) {
      return trim(std::string_view(content).substr(0, i));
    }
  }
  return content;
}

struct Marker {
  std::size_t pos = 0;            // index of the marker letter
  bool is_question = false;
  std::size_t content_start = 0;  // first char after ':'
};

std::vector<Marker> scan_markers(std::string_view text) {
  std::vector<Marker> markers;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    const bool is_q = c == 'Q' || c == 'q';
    const bool is_a = c == 'A' || c == 'a';
    if ((is_q || is_a) && text[i + 1] == ':' &&
        (i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1])))) {
      markers.push_back(Marker{i, is_q, i + 2});
    }
  }
  return markers;
}

}  // namespace

std::vector<ReasoningStep> parse_chain(std::string_view text) {
  const auto markers = scan_markers(text);
  std::vector<ReasoningStep> steps;
  std::string pending_question;
  bool have_pending = false;

  for (std::size_t k = 0; k < markers.size(); ++k) {
    const std::size_t end =
        k + 1 < markers.size() ? markers[k + 1].pos : text.size();
    std::string content =
        trim(text.substr(markers[k].content_start,
                         end - markers[k].content_start));
    if (k + 1 < markers.size()) {
      content = strip_enumeration_suffix(std::move(content));
    }
    if (markers[k].is_question) {
      // A newer Q supersedes an unanswered one.
      pending_question = std::move(content);
      have_pending = !pending_question.empty();
    } else {
      if (have_pending && !content.empty()) {
        steps.push_back(ReasoningStep{std::move(pending_question),
                                      std::move(content)});
      }
      pending_question.clear();
      have_pending = false;
    }
  }
  return steps;
}

std::string serialize_steps(const std::vector<ReasoningStep>& steps) {
  std::string out;
  for (const auto& step : steps) {
    out += "Q: " + step.sub_question + "\nA: " + step.sub_answer + "\n";
  }
  return out;
}

backend::ChatRequest build_synthesis_request(
    const corpus::VQASample& sample, const annotate::FoodPositionMap& fp_map,
    const std::vector<Exemplar>& exemplars,
    const annotate::GenParams& params) {
  if (exemplars.empty()) {
    throw std::invalid_argument("at least one exemplar is required");
  }

  std::string user =
      "You are given solved exemplars with step-wise reasoning chains:\n\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto& exemplar = exemplars[i];
    user += "Exemplar " + std::to_string(i + 1) + " (" +
            std::string(corpus::to_string(exemplar.question_type)) + "):\n";
    user += "Question: " + exemplar.question + "\n";
    user += "Answer Choices: " + prompts::render_choices(exemplar.choices) +
            "\n";
    user += "Answer: ";
    user += corpus::to_char(exemplar.correct_label);
    user += ". ";
    for (const auto& choice : exemplar.choices) {
      if (choice.label == exemplar.correct_label) {
        user += choice.text;
        break;
      }
    }
    user += "\nReason: " + exemplar.reason + "\n";
    user += "Reasoning chain:\n" + serialize_steps(exemplar.chain.steps) + "\n";
  }

  user += "Food items and positions: " + annotate::render_fp_map(fp_map) +
          "\n\n";
  user += prompts::fill(
      prompts::kChainGenerationTemplate,
      {{"question", sample.question + "; Answer Choices: " +
                        prompts::render_choices(sample.choices)},
       {"answer", prompts::render_gold_answer(sample)}});
  user += "\nReason: " + sample.reason;

  return backend::ChatRequest{
      .model_name = params.model_name,
      .system_text = std::string(prompts::kReasoningSystem),
      .user_text = std::move(user),
      .image_ref = {},
      .temperature = params.temperature,
      .max_tokens = params.max_tokens,
  };
}

ReasoningChain synthesize_chain(const corpus::VQASample& sample,
                                const annotate::FoodPositionMap& fp_map,
                                const std::vector<Exemplar>& exemplars,
                                backend::Backend& backend,
                                const annotate::GenParams& params) {
  const auto outcome =
      backend.complete(build_synthesis_request(sample, fp_map, exemplars, params));
  if (!outcome.ok) {
    throw std::runtime_error("synthesis failed for sample " + sample.id +
                             ": " + outcome.error);
  }
  ReasoningChain chain;
  chain.sample_id = sample.id;
  chain.raw_text = outcome.response.text;
  chain.steps = parse_chain(outcome.response.text);
  chain.flagged = chain.steps.empty();
  return chain;
}

std::vector<ReasoningChain> synthesize_corpus(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<annotate::FoodPositionMap>& fp_maps,
    const std::vector<Exemplar>& exemplars, backend::Backend& backend,
    const annotate::GenParams& params, int chains_per_sample) {
  if (chains_per_sample < 1) {
    throw std::invalid_argument("chains_per_sample must be >= 1");
  }
  if (samples.empty()) {
    return {};
  }

  std::unordered_map<std::string, const annotate::FoodPositionMap*> by_id;
  for (const auto& fp_map : fp_maps) {
    by_id.emplace(fp_map.sample_id, &fp_map);
  }

  std::vector<backend::ChatRequest> requests;
  requests.reserve(samples.size() * static_cast<std::size_t>(chains_per_sample));
  for (const auto& sample : samples) {
    const auto it = by_id.find(sample.id);
    const annotate::FoodPositionMap empty{sample.id, {}, {}};
    const auto& fp_map = it != by_id.end() ? *it->second : empty;
    const auto request =
        build_synthesis_request(sample, fp_map, exemplars, params);
    for (int j = 0; j < chains_per_sample; ++j) {
      requests.push_back(request);
    }
  }

  const auto outcomes = backend.complete_batch(requests);

  std::vector<ReasoningChain> chains;
  chains.reserve(requests.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (int j = 0; j < chains_per_sample; ++j) {
      const auto& outcome =
          outcomes[s * static_cast<std::size_t>(chains_per_sample) +
                   static_cast<std::size_t>(j)];
      if (!outcome.ok) {
        throw std::runtime_error("synthesis failed for sample " +
                                 samples[s].id + ": " + outcome.error);
      }
      ReasoningChain chain;
      chain.sample_id = samples[s].id;
      chain.raw_text = outcome.response.text;
      chain.steps = parse_chain(outcome.response.text);
      chain.flagged = chain.steps.empty();
      chains.push_back(std::move(chain));
    }
  }
  return chains;
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path) {
  auto exemplars = jsonl::load<Exemplar>(path);
  if (exemplars.empty()) {
    throw std::runtime_error("exemplar file " + path.string() + " is empty");
  }
  for (const auto& exemplar : exemplars) {
    if (exemplar.chain.steps.empty()) {
      throw std::runtime_error("exemplar '" + exemplar.chain.sample_id +
                               "' has an empty reasoning chain");
    }
  }
  return exemplars;
}

void to_json(nlohmann::json& j, const ReasoningStep& step) {
  j = nlohmann::json{{"sub_question", step.sub_question},
                     {"sub_answer", step.sub_answer}};
}

void from_json(const nlohmann::json& j, ReasoningStep& step) {
  step.sub_question = j.at("sub_question").get<std::string>();
  step.sub_answer = j.at("sub_answer").get<std::string>();
}

void to_json(nlohmann::json& j, const ReasoningChain& chain) {
  j = nlohmann::json{{"sample_id", chain.sample_id},
                     {"steps", chain.steps},
                     {"raw_text", chain.raw_text},
                     {"flagged", chain.flagged}};
}

void from_json(const nlohmann::json& j, ReasoningChain& chain) {
  chain.sample_id = j.at("sample_id").get<std::string>();
  chain.steps = j.at("steps").get<std::vector<ReasoningStep>>();
  chain.raw_text = j.value("raw_text", std::string{});
  chain.flagged = j.value("flagged", chain.steps.empty());
}

void to_json(nlohmann::json& j, const Exemplar& exemplar) {
  j = nlohmann::json{
      {"sample_id", exemplar.chain.sample_id},
      {"question_type",
       std::string(corpus::to_string(exemplar.question_type))},
      {"question", exemplar.question},
      {"choices", exemplar.choices},
      {"correct_label",
       std::string(1, corpus::to_char(exemplar.correct_label))},
      {"reason", exemplar.reason},
      {"steps", exemplar.chain.steps},
      {"raw_text", exemplar.chain.raw_text},
      {"flagged", exemplar.chain.flagged},
  };
}

void from_json(const nlohmann::json& j, Exemplar& exemplar) {
  const auto type_str = j.at("question_type").get<std::string>();
  const auto type = corpus::question_type_from_string(type_str);
  if (!type) {
    throw std::runtime_error("unknown question_type '" + type_str + "'");
  }
  exemplar.question_type = *type;
  exemplar.question = j.at("question").get<std::string>();

  const auto& choices = j.at("choices");
  if (!choices.is_array() || choices.size() != 4) {
    throw std::runtime_error("choice count != 4");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    exemplar.choices[i] = choices[i].get<corpus::Choice>();
  }

  const auto gold_str = j.at("correct_label").get<std::string>();
  const auto gold = corpus::label_from_string(gold_str);
  if (!gold) {
    throw std::runtime_error("unknown label '" + gold_str + "'");
  }
  exemplar.correct_label = *gold;
  exemplar.reason = j.value("reason", std::string{});

  exemplar.chain.sample_id = j.at("sample_id").get<std::string>();
  exemplar.chain.steps = j.at("steps").get<std::vector<ReasoningStep>>();
  exemplar.chain.raw_text =
      j.value("raw_text", serialize_steps(exemplar.chain.steps));
  exemplar.chain.flagged = false;
}

}  // namespace fvqa::chains
