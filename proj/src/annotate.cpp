#include "fvqa/annotate.hpp"

#include <cctype>
#include <set>
#include <stdexcept>

#include "fvqa/prompts.hpp"

namespace fvqa::annotate {

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

std::string to_lower(std::string s) {
  for (char& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

// Splits a trailing balanced "(...)" group off the segment, if present.
void split_position(std::string_view segment, std::string& item,
                    std::string& position) {
  item = trim(segment);
  position.clear();
  if (item.empty() || item.back() != ')') {
    return;
  }
  int depth = 0;
  for (std::size_t i = item.size(); i-- > 0;) {
    if (item[i] == ')') {
      ++depth;
    } else if (item[i] == '(') {
      --depth;
      if (depth == 0) {
        position = trim(std::string_view(item).substr(i + 1, item.size() - i - 2));
        item = trim(std::string_view(item).substr(0, i));
        return;
      }
    }
  }
}

}  // namespace

std::vector<FoodPositionEntry> parse_annotation(std::string_view text) {
  std::vector<FoodPositionEntry> entries;
  std::set<std::pair<std::string, std::string>> seen;

  std::size_t start = 0;
  int depth = 0;
  const auto flush = [&](std::size_t end) {
    std::string item;
    std::string position;
    split_position(text.substr(start, end - start), item, position);
    item = to_lower(item);
    if (!item.empty() && seen.emplace(item, position).second) {
      entries.push_back(FoodPositionEntry{item, position});
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '(') {
      ++depth;
    } else if (c == ')') {
      depth = std::max(0, depth - 1);
    } else if (c == ',' && depth == 0) {
      flush(i);
      start = i + 1;
    }
  }
  flush(text.size());
  return entries;
}

std::string render_fp_map(const FoodPositionMap& fp_map) {
  if (fp_map.entries.empty()) {
    return "(no items detected)";
  }
  std::string out;
  for (const auto& entry : fp_map.entries) {
    if (!out.empty()) {
      out += ", ";
    }
    out += entry.item;
    if (!entry.position.empty()) {
      out += " (" + entry.position + ")";
    }
  }
  return out;
}

backend::ChatRequest build_fp_request(const corpus::VQASample& sample,
                                      const GenParams& params) {
  if (sample.image_ref.empty()) {
    throw std::invalid_argument("sample " + sample.id + " has no image_ref");
  }
  return backend::ChatRequest{
      .model_name = params.model_name,
      .system_text = std::string(prompts::kFoodAnalystSystem),
      .user_text = std::string(prompts::kAnnotationInstruction),
      .image_ref = sample.image_ref,
      .temperature = params.temperature,
      .max_tokens = params.max_tokens,
  };
}

FoodPositionMap build_fp_map(const corpus::VQASample& sample,
                             backend::Backend& backend,
                             const GenParams& params) {
  const auto outcome = backend.complete(build_fp_request(sample, params));
  if (!outcome.ok) {
    throw std::runtime_error("annotation failed for sample " + sample.id +
                             ": " + outcome.error);
  }
  FoodPositionMap fp_map;
  fp_map.sample_id = sample.id;
  fp_map.raw_text = outcome.response.text;
  fp_map.entries = parse_annotation(outcome.response.text);
  return fp_map;
}

std::vector<FoodPositionMap> annotate_corpus(
    const std::vector<corpus::VQASample>& samples, backend::Backend& backend,
    const GenParams& params) {
  if (samples.empty()) {
    return {};
  }
  std::vector<backend::ChatRequest> requests;
  requests.reserve(samples.size());
  for (const auto& sample : samples) {
    requests.push_back(build_fp_request(sample, params));
  }
  const auto outcomes = backend.complete_batch(requests);

  std::vector<FoodPositionMap> maps;
  maps.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!outcomes[i].ok) {
      throw std::runtime_error("annotation failed for sample " +
                               samples[i].id + ": " + outcomes[i].error);
    }
    FoodPositionMap fp_map;
    fp_map.sample_id = samples[i].id;
    fp_map.raw_text = outcomes[i].response.text;
    fp_map.entries = parse_annotation(outcomes[i].response.text);
    maps.push_back(std::move(fp_map));
  }
  return maps;
}

void to_json(nlohmann::json& j, const FoodPositionEntry& entry) {
  j = nlohmann::json{{"item", entry.item}, {"position", entry.position}};
}

void from_json(const nlohmann::json& j, FoodPositionEntry& entry) {
  entry.item = j.at("item").get<std::string>();
  entry.position = j.value("position", std::string{});
}

void to_json(nlohmann::json& j, const FoodPositionMap& fp_map) {
  j = nlohmann::json{{"sample_id", fp_map.sample_id},
                     {"entries", fp_map.entries},
                     {"raw_text", fp_map.raw_text}};
}

void from_json(const nlohmann::json& j, FoodPositionMap& fp_map) {
  fp_map.sample_id = j.at("sample_id").get<std::string>();
  fp_map.entries = j.at("entries").get<std::vector<FoodPositionEntry>>();
  fp_map.raw_text = j.value("raw_text", std::string{});
}

}  // namespace fvqa::annotate
