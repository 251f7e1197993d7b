#include <limits>
#include <map>
#include <random>

#include "doctest.h"
#include "fvqa/jsonl.hpp"
#include "fvqa/prefbuild.hpp"
#include "helpers.hpp"

using namespace fvqa;
using corpus::Label;
using prefbuild::KgMode;
using prefbuild::ScoredChain;

namespace {

chains::ReasoningChain make_chain(const std::string& sample_id,
                                  const std::string& tag) {
  chains::ReasoningChain chain;
  chain.sample_id = sample_id;
  chain.steps = {{"What is the color of Turmeric? (" + tag + ")",
                  "Bright yellow."},
                 {"Which chutney shows it?",
                  "The tomato, onion, and raw mango one."}};
  chain.raw_text = chains::serialize_steps(chain.steps);
  return chain;
}

ScoredChain scored(const std::string& sample_id, int index, int reward) {
  return ScoredChain{make_chain(sample_id, "c" + std::to_string(index)), index,
                     reward};
}

std::vector<annotate::FoodPositionMap> fp_for(
    const std::vector<corpus::VQASample>& samples) {
  std::vector<annotate::FoodPositionMap> maps;
  for (const auto& sample : samples) {
    maps.push_back({sample.id, {{"uttapam", "center"}}, "uttapam (center)"});
  }
  return maps;
}

}  // namespace

TEST_CASE("score_chains joins chains with verdicts by (sample, index)") {
  const auto c1 = make_chain("s1", "first");
  const auto c2 = make_chain("s1", "second");
  judge::Verdict v1{"s1", 0, Label::C, true, "C"};
  judge::Verdict v2{"s1", 1, Label::A, false, "A"};
  const auto scored_chains = prefbuild::score_chains({c1, c2}, {v1, v2});
  REQUIRE(scored_chains.size() == 2);
  CHECK(scored_chains[0].reward == 1);
  CHECK(scored_chains[1].reward == 0);
  CHECK(scored_chains[1].chain_index == 1);
}

TEST_CASE("score_chains demands a verdict for every chain") {
  const auto c1 = make_chain("s1", "first");
  const auto c2 = make_chain("s1", "second");
  judge::Verdict v1{"s1", 0, Label::C, true, "C"};
  CHECK_THROWS_WITH_AS(prefbuild::score_chains({c1, c2}, {v1}),
                       doctest::Contains("missing verdict"),
                       std::runtime_error);
}

TEST_CASE("build_sft_records keeps only valid chains") {
  const auto samples = testutil::make_corpus(2);
  const auto fp_maps = fp_for(samples);
  std::vector<ScoredChain> chains_with_rewards;
  // 10 chains over two samples, 6 valid
  for (int i = 0; i < 5; ++i) {
    chains_with_rewards.push_back(scored(samples[0].id, i, i < 3 ? 1 : 0));
    chains_with_rewards.push_back(scored(samples[1].id, i, i < 3 ? 1 : 0));
  }
  const auto records = prefbuild::build_sft_records(
      samples, chains_with_rewards, fp_maps, KgMode::none);
  CHECK(records.size() == 6);
}

TEST_CASE("sft targets end with the gold answer and re-extract to it") {
  const auto sample = testutil::make_sample("sft-1", Label::C);
  const auto fp_maps = fp_for({sample});
  const auto records = prefbuild::build_sft_records(
      {sample}, {scored(sample.id, 0, 1)}, fp_maps, KgMode::none);
  REQUIRE(records.size() == 1);
  const auto& target = records[0].target_text;
  CHECK(target.substr(target.size() - 9) == "Answer: C");
  CHECK(prefbuild::target_tail_label(target, sample.choices) == Label::C);
  // prompt carries map, question and choices
  CHECK(records[0].prompt_text.find("uttapam (center)") != std::string::npos);
  CHECK(records[0].prompt_text.find(sample.question) != std::string::npos);
  CHECK(records[0].prompt_text.find("Answer Choices: A. ") !=
        std::string::npos);
}

TEST_CASE("kg one_hop mode prepends matched triple lines to the prompt") {
  const auto store = kg::load_triples(std::filesystem::path(FVQA_DATA_DIR) /
                                      "green_chutney_triples.txt");
  auto sample = testutil::make_sample("sft-kg", Label::C);
  std::vector<annotate::FoodPositionMap> fp_maps{
      {sample.id, {{"green chutney", "left"}}, "green chutney (left)"}};
  const auto records = prefbuild::build_sft_records(
      {sample}, {scored(sample.id, 0, 1)}, fp_maps, KgMode::one_hop, &store);
  REQUIRE(records.size() == 1);
  CHECK(records[0].prompt_text.rfind("Knowledge:", 0) == 0);
  CHECK(records[0].prompt_text.find(
            "green_chutney; has ingredient; coriander") != std::string::npos);
  CHECK(records[0].prompt_text.find(
            "green_chutney; has ingredient; cumin") != std::string::npos);

  CHECK_THROWS_AS(
      prefbuild::build_sft_records({sample}, {scored(sample.id, 0, 1)},
                                   fp_maps, KgMode::one_hop, nullptr),
      std::invalid_argument);
}

TEST_CASE("dpo pairs: cross product, truncation, and missing polarity") {
  const auto sample = testutil::make_sample("dpo-1", Label::C);
  const auto fp_maps = fp_for({sample});
  // chains 0,1 valid; 2,3,4 invalid
  std::vector<ScoredChain> chains_with_rewards;
  for (int i = 0; i < 5; ++i) {
    chains_with_rewards.push_back(scored(sample.id, i, i < 2 ? 1 : 0));
  }

  SUBCASE("2 valid x 3 invalid with a loose cap yields 6 pairs") {
    const auto pairs = prefbuild::build_dpo_pairs({sample}, chains_with_rewards,
                                                  fp_maps, 10);
    REQUIRE(pairs.size() == 6);
    for (const auto& pair : pairs) {
      CHECK(pair.sample_id == sample.id);
    }
    // lexicographic (chosen, rejected) order by synthesis index
    CHECK(pairs[0].chosen.raw_text == chains_with_rewards[0].chain.raw_text);
    CHECK(pairs[0].rejected.raw_text == chains_with_rewards[2].chain.raw_text);
    CHECK(pairs[1].rejected.raw_text == chains_with_rewards[3].chain.raw_text);
    CHECK(pairs[3].chosen.raw_text == chains_with_rewards[1].chain.raw_text);
  }

  SUBCASE("cap 2 keeps the first two pairs in lexicographic order") {
    const auto pairs = prefbuild::build_dpo_pairs({sample}, chains_with_rewards,
                                                  fp_maps, 2);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].chosen.raw_text == chains_with_rewards[0].chain.raw_text);
    CHECK(pairs[0].rejected.raw_text == chains_with_rewards[2].chain.raw_text);
    CHECK(pairs[1].chosen.raw_text == chains_with_rewards[0].chain.raw_text);
    CHECK(pairs[1].rejected.raw_text == chains_with_rewards[3].chain.raw_text);
  }

  SUBCASE("all chains valid yields no pairs") {
    for (auto& chain : chains_with_rewards) {
      chain.reward = 1;
    }
    CHECK(prefbuild::build_dpo_pairs({sample}, chains_with_rewards, fp_maps, 10)
              .empty());
  }

  SUBCASE("pairing_cap must be positive") {
    CHECK_THROWS_AS(prefbuild::build_dpo_pairs({sample}, chains_with_rewards,
                                               fp_maps, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("every emitted pair satisfies the (1,0) reward polarity") {
  const auto samples = testutil::make_corpus(4);
  const auto fp_maps = fp_for(samples);
  std::vector<ScoredChain> chains_with_rewards;
  std::mt19937_64 rng(11);
  std::map<std::string, std::map<std::string, int>> reward_by_raw;
  for (const auto& sample : samples) {
    for (int i = 0; i < 4; ++i) {
      const int reward = static_cast<int>(rng() % 2);
      auto item = scored(sample.id, i, reward);
      reward_by_raw[sample.id][item.chain.raw_text] = reward;
      chains_with_rewards.push_back(std::move(item));
    }
  }
  const auto pairs = prefbuild::build_dpo_pairs(
      samples, chains_with_rewards, fp_maps, std::numeric_limits<int>::max());
  for (const auto& pair : pairs) {
    CHECK(reward_by_raw[pair.sample_id][pair.chosen.raw_text] == 1);
    CHECK(reward_by_raw[pair.sample_id][pair.rejected.raw_text] == 0);
  }
}

TEST_CASE("grpo groups take the first m chains in synthesis order") {
  const auto samples = testutil::make_corpus(3);
  const auto fp_maps = fp_for(samples);
  std::vector<ScoredChain> chains_with_rewards;
  // sample 0: 4 chains rewards [1,0,0,1]; sample 1: 3 chains; sample 2: 5
  const int rewards0[] = {1, 0, 0, 1};
  for (int i = 0; i < 4; ++i) {
    chains_with_rewards.push_back(scored(samples[0].id, i, rewards0[i]));
  }
  for (int i = 0; i < 3; ++i) {
    chains_with_rewards.push_back(scored(samples[1].id, i, 1));
  }
  for (int i = 0; i < 5; ++i) {
    chains_with_rewards.push_back(scored(samples[2].id, i, i % 2));
  }

  const auto result = prefbuild::build_grpo_groups(samples, chains_with_rewards,
                                                   fp_maps, 4);
  REQUIRE(result.groups.size() == 2);
  CHECK(result.skipped == std::vector<std::string>{samples[1].id});

  CHECK(result.groups[0].sample_id == samples[0].id);
  CHECK(result.groups[0].rewards == std::vector<int>{1, 0, 0, 1});
  REQUIRE(result.groups[1].chains.size() == 4);  // first 4 of 5
  CHECK(result.groups[1].chains[3].raw_text ==
        make_chain(samples[2].id, "c3").raw_text);

  CHECK_THROWS_AS(
      prefbuild::build_grpo_groups(samples, chains_with_rewards, fp_maps, 1),
      std::invalid_argument);
}

TEST_CASE("builders are deterministic given input order") {
  const auto samples = testutil::make_corpus(3);
  const auto fp_maps = fp_for(samples);
  std::vector<ScoredChain> chains_with_rewards;
  for (const auto& sample : samples) {
    for (int i = 0; i < 4; ++i) {
      chains_with_rewards.push_back(scored(sample.id, i, i % 2));
    }
  }
  const auto pairs_a =
      prefbuild::build_dpo_pairs(samples, chains_with_rewards, fp_maps, 4);
  const auto pairs_b =
      prefbuild::build_dpo_pairs(samples, chains_with_rewards, fp_maps, 4);
  CHECK(pairs_a == pairs_b);
  const auto groups_a =
      prefbuild::build_grpo_groups(samples, chains_with_rewards, fp_maps, 4);
  const auto groups_b =
      prefbuild::build_grpo_groups(samples, chains_with_rewards, fp_maps, 4);
  CHECK(groups_a.groups == groups_b.groups);
}

TEST_CASE("baseline records target the gold answer plus the reason") {
  const auto sample = testutil::make_sample("base-1", Label::C);
  const auto fp_maps = fp_for({sample});
  const auto records =
      prefbuild::build_baseline_records({sample}, fp_maps, KgMode::none);
  REQUIRE(records.size() == 1);
  CHECK(records[0].target_text.rfind(
            "C. Tomato, onion, and raw mango chutney", 0) == 0);
  CHECK(records[0].target_text.find(sample.reason) != std::string::npos);
}

TEST_CASE("emit_training_config pins the per-stage hyperparameters") {
  using prefbuild::ConfigStage;

  const auto sft_llm = prefbuild::emit_training_config(ConfigStage::sft_llm);
  CHECK(sft_llm.get("lr") == "1e-5");
  CHECK(sft_llm.get("batch") == "4");
  CHECK(sft_llm.get("max_seq") == "1024");
  CHECK(sft_llm.get("lora_rank") == "16");
  CHECK(sft_llm.get("dropout") == "0.1");

  const auto sft_vlm = prefbuild::emit_training_config(ConfigStage::sft_vlm);
  CHECK(sft_vlm.get("lr") == "2e-5");
  CHECK(sft_vlm.get("grad_accum") == "4");
  CHECK(sft_vlm.get("batch") == "4");
  CHECK(sft_vlm.get("max_seq") == "1024");

  const auto dpo = prefbuild::emit_training_config(ConfigStage::dpo);
  CHECK(dpo.get("batch") == "8");
  CHECK(dpo.get("max_seq") == "1024");
  CHECK(dpo.get("epochs") == "3");
  CHECK(dpo.get("beta") == "0.1");  // default, surfaced so runs are explicit

  const auto grpo = prefbuild::emit_training_config(ConfigStage::grpo);
  CHECK(grpo.get("m") == "4");
  CHECK(grpo.get("grad_clip") == "1.0");
  CHECK(grpo.get("schedule") == "linear-decay");
  CHECK(grpo.get("lr") == "1e-6");
  CHECK(grpo.get("epochs") == "3");

  const auto baseline = prefbuild::emit_training_config(ConfigStage::baseline);
  CHECK(baseline.get("bf16") == "true");
  CHECK(baseline.get("epochs") == "3");
  CHECK(baseline.get("eval_batch") == "4");
  CHECK(baseline.get("train_batch") == "8");
  CHECK(baseline.get("grad_accum") == "8");
  CHECK(baseline.get("lr") == "2e-5");
  CHECK(baseline.get("weight_decay") == "0");
  CHECK(baseline.get("warmup_ratio") == "0.03");
  CHECK(baseline.get("scheduler") == "cosine");

  CHECK(!prefbuild::config_stage_from_string("rlhf"));
}

TEST_CASE("training config renders as flat key-value lines") {
  const auto config =
      prefbuild::emit_training_config(prefbuild::ConfigStage::grpo);
  const auto text = prefbuild::render_training_config(config);
  CHECK(text.rfind("stage = grpo\n", 0) == 0);
  CHECK(text.find("\nm = 4\n") != std::string::npos);
  CHECK(text.find("\ngrad_clip = 1.0\n") != std::string::npos);
}

TEST_CASE("pref records round-trip through jsonl") {
  testutil::TempDir tmp;
  const auto sample = testutil::make_sample("rt-1", Label::C);
  const auto fp_maps = fp_for({sample});
  std::vector<ScoredChain> chains_with_rewards{scored(sample.id, 0, 1),
                                               scored(sample.id, 1, 0)};
  const auto pairs =
      prefbuild::build_dpo_pairs({sample}, chains_with_rewards, fp_maps, 4);
  jsonl::save(tmp.file("pairs.jsonl"), pairs);
  CHECK(jsonl::load<prefbuild::PreferencePair>(tmp.file("pairs.jsonl")) ==
        pairs);

  const auto groups = prefbuild::build_grpo_groups(
      {sample}, chains_with_rewards, fp_maps, 2);
  jsonl::save(tmp.file("groups.jsonl"), groups.groups);
  CHECK(jsonl::load<prefbuild::PreferenceGroup>(tmp.file("groups.jsonl")) ==
        groups.groups);

  const auto records = prefbuild::build_sft_records(
      {sample}, chains_with_rewards, fp_maps, KgMode::none);
  jsonl::save(tmp.file("sft.jsonl"), records);
  CHECK(jsonl::load<prefbuild::SFTRecord>(tmp.file("sft.jsonl")) == records);
}
