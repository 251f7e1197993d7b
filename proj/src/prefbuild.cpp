#include "fvqa/prefbuild.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "fvqa/prompts.hpp"

namespace fvqa::prefbuild {

namespace {

using FpIndex =
    std::unordered_map<std::string, const annotate::FoodPositionMap*>;

FpIndex index_fp_maps(const std::vector<annotate::FoodPositionMap>& fp_maps) {
  FpIndex index;
  for (const auto& fp_map : fp_maps) {
    index.emplace(fp_map.sample_id, &fp_map);
  }
  return index;
}

const annotate::FoodPositionMap& fp_for(const FpIndex& index,
                                        const std::string& sample_id,
                                        annotate::FoodPositionMap& scratch) {
  const auto it = index.find(sample_id);
  if (it != index.end()) {
    return *it->second;
  }
  scratch = annotate::FoodPositionMap{sample_id, {}, {}};
  return scratch;
}

std::vector<kg::KnowledgeTriple> triples_for(const corpus::VQASample& sample,
                                             const annotate::FoodPositionMap& fp_map,
                                             KgMode kg_mode,
                                             const kg::TripleStore* store) {
  if (kg_mode == KgMode::none) {
    return {};
  }
  if (store == nullptr) {
    throw std::invalid_argument("kg_mode one_hop requires a triple store");
  }
  const auto entities = kg::entities_for_sample(sample, fp_map, *store);
  return store->one_hop(entities);
}

// Scored chains grouped per sample id, synthesis order preserved.
std::map<std::string, std::vector<const ScoredChain*>> group_by_sample(
    const std::vector<ScoredChain>& scored) {
  std::map<std::string, std::vector<const ScoredChain*>> groups;
  for (const auto& chain : scored) {
    groups[chain.chain.sample_id].push_back(&chain);
  }
  return groups;
}

}  // namespace

std::string_view to_string(KgMode mode) {
  return mode == KgMode::none ? "none" : "one_hop";
}

std::optional<KgMode> kg_mode_from_string(std::string_view name) {
  if (name == "none") {
    return KgMode::none;
  }
  if (name == "one_hop") {
    return KgMode::one_hop;
  }
  return std::nullopt;
}

std::vector<ScoredChain> score_chains(
    const std::vector<chains::ReasoningChain>& chain_records,
    const std::vector<judge::Verdict>& verdicts) {
  std::map<std::pair<std::string, int>, int> reward_by_key;
  for (const auto& verdict : verdicts) {
    reward_by_key[{verdict.sample_id, verdict.chain_index}] =
        judge::reward(verdict).value;
  }

  std::vector<ScoredChain> scored;
  scored.reserve(chain_records.size());
  std::unordered_map<std::string, int> index_within_sample;
  for (const auto& chain : chain_records) {
    const int chain_index = index_within_sample[chain.sample_id]++;
    const auto it = reward_by_key.find({chain.sample_id, chain_index});
    if (it == reward_by_key.end()) {
      throw std::runtime_error("missing verdict for sample '" +
                               chain.sample_id + "' chain " +
                               std::to_string(chain_index));
    }
    scored.push_back(ScoredChain{chain, chain_index, it->second});
  }
  return scored;
}

std::string build_prompt_text(const corpus::VQASample& sample,
                              const annotate::FoodPositionMap& fp_map,
                              std::span<const kg::KnowledgeTriple> triples) {
  std::string prompt =
      "Food items and positions: " + annotate::render_fp_map(fp_map) + "\n";
  prompt += prompts::fill(
      prompts::kAnswerTemplate,
      {{"question", sample.question},
       {"answer_choices", prompts::render_choices(sample.choices)}});
  return kg::augment_context(prompt, triples);
}

std::vector<SFTRecord> build_sft_records(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<ScoredChain>& scored,
    const std::vector<annotate::FoodPositionMap>& fp_maps, KgMode kg_mode,
    const kg::TripleStore* store) {
  const auto fp_index = index_fp_maps(fp_maps);
  const auto by_sample = group_by_sample(scored);

  std::vector<SFTRecord> records;
  for (const auto& sample : samples) {
    const auto it = by_sample.find(sample.id);
    if (it == by_sample.end()) {
      continue;
    }
    annotate::FoodPositionMap scratch;
    const auto& fp_map = fp_for(fp_index, sample.id, scratch);
    const auto triples = triples_for(sample, fp_map, kg_mode, store);
    const std::string prompt = build_prompt_text(sample, fp_map, triples);
    for (const ScoredChain* chain : it->second) {
      if (chain->reward != 1) {
        continue;
      }
      SFTRecord record;
      record.sample_id = sample.id;
      record.prompt_text = prompt;
      record.target_text = chains::serialize_steps(chain->chain.steps) +
                           "Answer: " + corpus::to_char(sample.correct_label);
      records.push_back(std::move(record));
    }
  }
  return records;
}

std::vector<BaselineRecord> build_baseline_records(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<annotate::FoodPositionMap>& fp_maps, KgMode kg_mode,
    const kg::TripleStore* store) {
  const auto fp_index = index_fp_maps(fp_maps);
  std::vector<BaselineRecord> records;
  records.reserve(samples.size());
  for (const auto& sample : samples) {
    annotate::FoodPositionMap scratch;
    const auto& fp_map = fp_for(fp_index, sample.id, scratch);
    const auto triples = triples_for(sample, fp_map, kg_mode, store);

    BaselineRecord record;
    record.sample_id = sample.id;
    record.prompt_text = build_prompt_text(sample, fp_map, triples);
    record.target_text = std::string(1, corpus::to_char(sample.correct_label)) +
                         ". " + sample.choice_text(sample.correct_label);
    if (!sample.reason.empty()) {
      record.target_text += "\nReason: " + sample.reason;
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<PreferencePair> build_dpo_pairs(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<ScoredChain>& scored,
    const std::vector<annotate::FoodPositionMap>& fp_maps, int pairing_cap,
    KgMode kg_mode, const kg::TripleStore* store) {
  if (pairing_cap < 1) {
    throw std::invalid_argument("pairing_cap must be positive");
  }
  const auto fp_index = index_fp_maps(fp_maps);
  const auto by_sample = group_by_sample(scored);

  std::vector<PreferencePair> pairs;
  for (const auto& sample : samples) {
    const auto it = by_sample.find(sample.id);
    if (it == by_sample.end()) {
      continue;
    }
    std::vector<const ScoredChain*> chosen;
    std::vector<const ScoredChain*> rejected;
    for (const ScoredChain* chain : it->second) {
      (chain->reward == 1 ? chosen : rejected).push_back(chain);
    }
    if (chosen.empty() || rejected.empty()) {
      continue;  // missing polarity
    }
    annotate::FoodPositionMap scratch;
    const auto& fp_map = fp_for(fp_index, sample.id, scratch);
    const auto triples = triples_for(sample, fp_map, kg_mode, store);
    const std::string context = build_prompt_text(sample, fp_map, triples);

    int emitted = 0;
    for (const ScoredChain* pos : chosen) {
      for (const ScoredChain* neg : rejected) {
        if (emitted >= pairing_cap) {
          break;
        }
        pairs.push_back(
            PreferencePair{sample.id, context, pos->chain, neg->chain});
        ++emitted;
      }
      if (emitted >= pairing_cap) {
        break;
      }
    }
  }
  return pairs;
}

GroupBuildResult build_grpo_groups(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<ScoredChain>& scored,
    const std::vector<annotate::FoodPositionMap>& fp_maps, int group_size,
    KgMode kg_mode, const kg::TripleStore* store) {
  if (group_size < 2) {
    throw std::invalid_argument("group size must be >= 2");
  }
  const auto fp_index = index_fp_maps(fp_maps);
  const auto by_sample = group_by_sample(scored);

  GroupBuildResult result;
  for (const auto& sample : samples) {
    const auto it = by_sample.find(sample.id);
    if (it == by_sample.end()) {
      continue;
    }
    if (it->second.size() < static_cast<std::size_t>(group_size)) {
      result.skipped.push_back(sample.id);
      continue;
    }
    annotate::FoodPositionMap scratch;
    const auto& fp_map = fp_for(fp_index, sample.id, scratch);
    const auto triples = triples_for(sample, fp_map, kg_mode, store);

    PreferenceGroup group;
    group.sample_id = sample.id;
    group.context_text = build_prompt_text(sample, fp_map, triples);
    for (int i = 0; i < group_size; ++i) {
      group.chains.push_back(it->second[static_cast<std::size_t>(i)]->chain);
      group.rewards.push_back(it->second[static_cast<std::size_t>(i)]->reward);
    }
    result.groups.push_back(std::move(group));
  }
  return result;
}

std::optional<corpus::Label> target_tail_label(
    std::string_view target_text,
    const std::array<corpus::Choice, 4>& choices) {
  static constexpr std::string_view kMarker = "Answer:";
  const std::size_t pos = target_text.rfind(kMarker);
  if (pos == std::string_view::npos) {
    return std::nullopt;
  }
  return judge::extract_answer_label(target_text.substr(pos + kMarker.size()),
                                     choices);
}

std::string_view to_string(ConfigStage stage) {
  switch (stage) {
    case ConfigStage::sft_llm: return "sft-llm";
    case ConfigStage::sft_vlm: return "sft-vlm";
    case ConfigStage::dpo: return "dpo";
    case ConfigStage::grpo: return "grpo";
    case ConfigStage::baseline: return "baseline";
  }
  return "sft-llm";
}

std::optional<ConfigStage> config_stage_from_string(std::string_view name) {
  if (name == "sft-llm") return ConfigStage::sft_llm;
  if (name == "sft-vlm") return ConfigStage::sft_vlm;
  if (name == "dpo") return ConfigStage::dpo;
  if (name == "grpo") return ConfigStage::grpo;
  if (name == "baseline") return ConfigStage::baseline;
  return std::nullopt;
}

std::optional<std::string> TrainingConfig::get(std::string_view key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) {
      return v;
    }
  }
  return std::nullopt;
}

TrainingConfig emit_training_config(ConfigStage stage) {
  TrainingConfig config;
  config.stage = stage;
  switch (stage) {
    case ConfigStage::sft_llm:
      config.entries = {{"lr", "1e-5"},     {"batch", "4"},
                        {"max_seq", "1024"}, {"lora_rank", "16"},
                        {"dropout", "0.1"}};
      break;
    case ConfigStage::sft_vlm:
      config.entries = {{"lr", "2e-5"},
                        {"batch", "4"},
                        {"grad_accum", "4"},
                        {"max_seq", "1024"}};
      break;
    case ConfigStage::dpo:
      config.entries = {{"batch", "8"},
                        {"max_seq", "1024"},
                        {"epochs", "3"},
                        {"beta", "0.1"}};
      break;
    case ConfigStage::grpo:
      config.entries = {{"m", "4"},
                        {"grad_clip", "1.0"},
                        {"schedule", "linear-decay"},
                        {"lr", "1e-6"},
                        {"epochs", "3"}};
      break;
    case ConfigStage::baseline:
      config.entries = {{"bf16", "true"},       {"epochs", "3"},
                        {"eval_batch", "4"},    {"train_batch", "8"},
                        {"grad_accum", "8"},    {"lr", "2e-5"},
                        {"weight_decay", "0"},  {"warmup_ratio", "0.03"},
                        {"scheduler", "cosine"}};
      break;
  }
  return config;
}

std::string render_training_config(const TrainingConfig& config) {
  std::string out = "stage = " + std::string(to_string(config.stage)) + "\n";
  for (const auto& [key, value] : config.entries) {
    out += key + " = " + value + "\n";
  }
  return out;
}

void save_training_config(const std::filesystem::path& path,
                          const TrainingConfig& config) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("unwritable path " + path.string());
  }
  out << render_training_config(config);
}

void to_json(nlohmann::json& j, const SFTRecord& record) {
  j = nlohmann::json{{"sample_id", record.sample_id},
                     {"prompt_text", record.prompt_text},
                     {"target_text", record.target_text}};
}

void from_json(const nlohmann::json& j, SFTRecord& record) {
  record.sample_id = j.at("sample_id").get<std::string>();
  record.prompt_text = j.at("prompt_text").get<std::string>();
  record.target_text = j.at("target_text").get<std::string>();
}

void to_json(nlohmann::json& j, const BaselineRecord& record) {
  j = nlohmann::json{{"sample_id", record.sample_id},
                     {"prompt_text", record.prompt_text},
                     {"target_text", record.target_text}};
}

void from_json(const nlohmann::json& j, BaselineRecord& record) {
  record.sample_id = j.at("sample_id").get<std::string>();
  record.prompt_text = j.at("prompt_text").get<std::string>();
  record.target_text = j.at("target_text").get<std::string>();
}

void to_json(nlohmann::json& j, const PreferencePair& pair) {
  j = nlohmann::json{{"sample_id", pair.sample_id},
                     {"context_text", pair.context_text},
                     {"chosen", pair.chosen},
                     {"rejected", pair.rejected}};
}

void from_json(const nlohmann::json& j, PreferencePair& pair) {
  pair.sample_id = j.at("sample_id").get<std::string>();
  pair.context_text = j.at("context_text").get<std::string>();
  pair.chosen = j.at("chosen").get<chains::ReasoningChain>();
  pair.rejected = j.at("rejected").get<chains::ReasoningChain>();
}

void to_json(nlohmann::json& j, const PreferenceGroup& group) {
  j = nlohmann::json{{"sample_id", group.sample_id},
                     {"context_text", group.context_text},
                     {"chains", group.chains},
                     {"rewards", group.rewards}};
}

void from_json(const nlohmann::json& j, PreferenceGroup& group) {
  group.sample_id = j.at("sample_id").get<std::string>();
  group.context_text = j.at("context_text").get<std::string>();
  group.chains = j.at("chains").get<std::vector<chains::ReasoningChain>>();
  group.rewards = j.at("rewards").get<std::vector<int>>();
  if (group.chains.size() != group.rewards.size()) {
    throw std::runtime_error("group chains/rewards length mismatch");
  }
}

}  // namespace fvqa::prefbuild
