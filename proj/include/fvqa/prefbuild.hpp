#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fvqa/annotate.hpp"
#include "fvqa/chains.hpp"
#include "fvqa/corpus.hpp"
#include "fvqa/judge.hpp"
#include "fvqa/kg.hpp"
#include "json.hpp"

namespace fvqa::prefbuild {

enum class KgMode { none, one_hop };

std::string_view to_string(KgMode mode);
std::optional<KgMode> kg_mode_from_string(std::string_view name);

struct SFTRecord {
  std::string sample_id;
  std::string prompt_text;
  std::string target_text;  // serialized chain + "Answer: <label>"

  bool operator==(const SFTRecord&) const = default;
};

struct BaselineRecord {
  std::string sample_id;
  std::string prompt_text;
  std::string target_text;  // "<label>. <choice text>" followed by the reason

  bool operator==(const BaselineRecord&) const = default;
};

struct PreferencePair {
  std::string sample_id;
  std::string context_text;
  chains::ReasoningChain chosen;    // reward 1
  chains::ReasoningChain rejected;  // reward 0

  bool operator==(const PreferencePair&) const = default;
};

struct PreferenceGroup {
  std::string sample_id;
  std::string context_text;
  std::vector<chains::ReasoningChain> chains;
  std::vector<int> rewards;  // aligned, values in {0, 1}

  bool operator==(const PreferenceGroup&) const = default;
};

// A chain joined with its verdict-derived reward.
struct ScoredChain {
  chains::ReasoningChain chain;
  int chain_index = 0;
  int reward = 0;
};

// Pairs each chain with its verdict. Throws when a chain has no verdict.
// Chain indices count per sample in input order, matching validate_corpus.
std::vector<ScoredChain> score_chains(
    const std::vector<chains::ReasoningChain>& chain_records,
    const std::vector<judge::Verdict>& verdicts);

// The conditioning context shared by SFT records, preference pairs and
// groups: optional knowledge block, fp-map line, then the answer prompt.
std::string build_prompt_text(const corpus::VQASample& sample,
                              const annotate::FoodPositionMap& fp_map,
                              std::span<const kg::KnowledgeTriple> triples);

// One record per valid chain; invalid chains are excluded. kg_mode one_hop
// requires a store and prepends the retrieved triples to the prompt.
std::vector<SFTRecord> build_sft_records(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<ScoredChain>& scored,
    const std::vector<annotate::FoodPositionMap>& fp_maps, KgMode kg_mode,
    const kg::TripleStore* store = nullptr);

// One record per sample; targets the gold answer plus the corpus reason.
std::vector<BaselineRecord> build_baseline_records(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<annotate::FoodPositionMap>& fp_maps, KgMode kg_mode,
    const kg::TripleStore* store = nullptr);

// Per sample: cross product of (reward-1 x reward-0) chains in (chosen
// index, rejected index) lexicographic order, truncated to pairing_cap.
std::vector<PreferencePair> build_dpo_pairs(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<ScoredChain>& scored,
    const std::vector<annotate::FoodPositionMap>& fp_maps, int pairing_cap,
    KgMode kg_mode = KgMode::none, const kg::TripleStore* store = nullptr);

struct GroupBuildResult {
  std::vector<PreferenceGroup> groups;
  std::vector<std::string> skipped;  // sample ids with fewer than m chains
};

// Per sample with >= m chains: the first m in synthesis order.
GroupBuildResult build_grpo_groups(
    const std::vector<corpus::VQASample>& samples,
    const std::vector<ScoredChain>& scored,
    const std::vector<annotate::FoodPositionMap>& fp_maps, int group_size,
    KgMode kg_mode = KgMode::none, const kg::TripleStore* store = nullptr);

// The text after the final "Answer:" marker, for checking SFT targets.
std::optional<corpus::Label> target_tail_label(
    std::string_view target_text, const std::array<corpus::Choice, 4>& choices);

enum class ConfigStage { sft_llm, sft_vlm, dpo, grpo, baseline };

std::string_view to_string(ConfigStage stage);
std::optional<ConfigStage> config_stage_from_string(std::string_view name);

struct TrainingConfig {
  ConfigStage stage = ConfigStage::sft_llm;
  std::vector<std::pair<std::string, std::string>> entries;  // ordered

  std::optional<std::string> get(std::string_view key) const;
};

// Hyperparameter records for external trainers, one fixed key set per stage.
TrainingConfig emit_training_config(ConfigStage stage);

// Flat "key = value" lines, stage first.
std::string render_training_config(const TrainingConfig& config);
void save_training_config(const std::filesystem::path& path,
                          const TrainingConfig& config);

void to_json(nlohmann::json& j, const SFTRecord& record);
void from_json(const nlohmann::json& j, SFTRecord& record);
void to_json(nlohmann::json& j, const BaselineRecord& record);
void from_json(const nlohmann::json& j, BaselineRecord& record);
void to_json(nlohmann::json& j, const PreferencePair& pair);
void from_json(const nlohmann::json& j, PreferencePair& pair);
void to_json(nlohmann::json& j, const PreferenceGroup& group);
void from_json(const nlohmann::json& j, PreferenceGroup& group);

}  // namespace fvqa::prefbuild
