#include "fvqa/pipeline.hpp"

#include <iostream>

#include "fvqa/jsonl.hpp"
#include "fvqa/manifest.hpp"

namespace fvqa::pipeline {

namespace {

std::vector<std::pair<std::string, std::string>> backend_params(
    const runconfig::BackendSettings& settings) {
  return {
      {"endpoint", settings.profile.endpoint},
      {"model_name", settings.params.model_name},
      {"max_in_flight", std::to_string(settings.profile.max_in_flight)},
      {"retry_limit", std::to_string(settings.profile.retry_limit)},
      {"temperature", std::to_string(settings.params.temperature)},
      {"max_tokens", std::to_string(settings.params.max_tokens)},
  };
}

const kg::TripleStore* load_store_if(const std::optional<fs::path>& kg_path,
                                     prefbuild::KgMode kg_mode,
                                     std::optional<kg::TripleStore>& slot) {
  if (kg_mode == prefbuild::KgMode::none) {
    return nullptr;
  }
  if (!kg_path) {
    throw runconfig::ConfigError(
        "config error at 'kg': kg_mode one_hop requires a kg path");
  }
  slot = kg::load_triples(*kg_path);
  return &*slot;
}

}  // namespace

void run_annotate(const AnnotateOptions& options) {
  const auto samples = corpus::load_samples(options.corpus);
  const auto backend = backend::make_backend(options.backend.profile);
  const auto fp_maps =
      annotate::annotate_corpus(samples, *backend, options.backend.params);

  std::size_t empty_maps = 0;
  for (const auto& fp_map : fp_maps) {
    if (fp_map.entries.empty()) {
      ++empty_maps;
    }
  }
  if (empty_maps > 0) {
    std::cerr << "warning: " << empty_maps
              << " sample(s) produced an empty item-position map\n";
  }

  jsonl::save(options.out, fp_maps);
  manifest::write_manifest(options.out, "annotate",
                           {{"corpus", options.corpus}},
                           backend_params(options.backend));
  std::cout << "annotated " << fp_maps.size() << " sample(s) -> "
            << options.out.string() << "\n";
}

void run_synthesize(const SynthesizeOptions& options) {
  const auto samples = corpus::load_samples(options.corpus);
  const auto fp_maps =
      jsonl::load<annotate::FoodPositionMap>(options.fp_maps);
  const auto exemplars = chains::load_exemplars(options.exemplars);
  const auto backend = backend::make_backend(options.backend.profile);

  const auto chain_records = chains::synthesize_corpus(
      samples, fp_maps, exemplars, *backend, options.backend.params,
      options.chains_per_sample);

  std::size_t flagged = 0;
  for (const auto& chain : chain_records) {
    if (chain.flagged) {
      ++flagged;
    }
  }
  if (flagged > 0) {
    std::cerr << "warning: " << flagged << " chain(s) flagged unparseable\n";
  }

  jsonl::save(options.out, chain_records);
  auto params = backend_params(options.backend);
  params.emplace_back("chains_per_sample",
                      std::to_string(options.chains_per_sample));
  manifest::write_manifest(options.out, "synthesize",
                           {{"corpus", options.corpus},
                            {"fp_maps", options.fp_maps},
                            {"exemplars", options.exemplars}},
                           params);
  std::cout << "synthesized " << chain_records.size() << " chain(s) -> "
            << options.out.string() << "\n";
}

void run_validate(const ValidateOptions& options) {
  const auto samples = corpus::load_samples(options.corpus);
  const auto fp_maps =
      jsonl::load<annotate::FoodPositionMap>(options.fp_maps);
  const auto chain_records =
      jsonl::load<chains::ReasoningChain>(options.chains);
  const auto backend = backend::make_backend(options.backend.profile);

  const auto verdicts = judge::validate_corpus(
      samples, fp_maps, chain_records, *backend, options.backend.params);

  jsonl::save(options.out, verdicts);
  manifest::write_manifest(options.out, "validate",
                           {{"corpus", options.corpus},
                            {"fp_maps", options.fp_maps},
                            {"chains", options.chains}},
                           backend_params(options.backend));

  std::size_t valid = 0;
  for (const auto& verdict : verdicts) {
    valid += verdict.valid ? 1 : 0;
  }
  std::cout << "valid " << valid << "/" << verdicts.size();
  if (!verdicts.empty()) {
    std::cout << " (rate " << judge::validity_rate(verdicts) << ")";
  }
  std::cout << " -> " << options.out.string() << "\n";
}

void run_build_sft(const BuildSftOptions& options) {
  const auto samples = corpus::load_samples(options.corpus);
  const auto fp_maps =
      jsonl::load<annotate::FoodPositionMap>(options.fp_maps);
  const auto chain_records =
      jsonl::load<chains::ReasoningChain>(options.chains);
  const auto verdicts = jsonl::load<judge::Verdict>(options.verdicts);
  const auto scored = prefbuild::score_chains(chain_records, verdicts);

  std::optional<kg::TripleStore> store_slot;
  const kg::TripleStore* store =
      load_store_if(options.kg, options.kg_mode, store_slot);

  const auto records = prefbuild::build_sft_records(
      samples, scored, fp_maps, options.kg_mode, store);
  jsonl::save(options.out, records);

  std::vector<std::pair<std::string, fs::path>> inputs = {
      {"corpus", options.corpus},
      {"fp_maps", options.fp_maps},
      {"chains", options.chains},
      {"verdicts", options.verdicts}};
  if (options.kg) {
    inputs.emplace_back("kg", *options.kg);
  }
  manifest::write_manifest(
      options.out, "build-sft", inputs,
      {{"kg_mode", std::string(prefbuild::to_string(options.kg_mode))}});
  std::cout << "built " << records.size() << " sft record(s) -> "
            << options.out.string() << "\n";

  if (options.baseline_out) {
    const auto baseline = prefbuild::build_baseline_records(
        samples, fp_maps, options.kg_mode, store);
    jsonl::save(*options.baseline_out, baseline);
    manifest::write_manifest(
        *options.baseline_out, "build-baseline", inputs,
        {{"kg_mode", std::string(prefbuild::to_string(options.kg_mode))}});
    std::cout << "built " << baseline.size() << " baseline record(s) -> "
              << options.baseline_out->string() << "\n";
  }
}

void run_build_prefs(const BuildPrefsOptions& options) {
  if (options.mode != "dpo" && options.mode != "grpo") {
    throw runconfig::ConfigError(
        "config error at 'mode': expected dpo or grpo, got '" + options.mode +
        "'");
  }
  const auto samples = corpus::load_samples(options.corpus);
  const auto fp_maps =
      jsonl::load<annotate::FoodPositionMap>(options.fp_maps);
  const auto chain_records =
      jsonl::load<chains::ReasoningChain>(options.chains);
  const auto verdicts = jsonl::load<judge::Verdict>(options.verdicts);
  const auto scored = prefbuild::score_chains(chain_records, verdicts);

  std::optional<kg::TripleStore> store_slot;
  const kg::TripleStore* store =
      load_store_if(options.kg, options.kg_mode, store_slot);

  std::vector<std::pair<std::string, fs::path>> inputs = {
      {"corpus", options.corpus},
      {"fp_maps", options.fp_maps},
      {"chains", options.chains},
      {"verdicts", options.verdicts}};
  if (options.kg) {
    inputs.emplace_back("kg", *options.kg);
  }

  if (options.mode == "dpo") {
    const auto pairs = prefbuild::build_dpo_pairs(
        samples, scored, fp_maps, options.pairing_cap, options.kg_mode, store);
    jsonl::save(options.out, pairs);
    manifest::write_manifest(
        options.out, "build-prefs", inputs,
        {{"mode", "dpo"},
         {"pairing_cap", std::to_string(options.pairing_cap)},
         {"kg_mode", std::string(prefbuild::to_string(options.kg_mode))}});
    std::cout << "built " << pairs.size() << " preference pair(s) -> "
              << options.out.string() << "\n";
  } else {
    const auto result = prefbuild::build_grpo_groups(
        samples, scored, fp_maps, options.group_size, options.kg_mode, store);
    for (const auto& sample_id : result.skipped) {
      std::cerr << "warning: sample " << sample_id << " has fewer than "
                << options.group_size << " chains; skipped\n";
    }
    jsonl::save(options.out, result.groups);
    manifest::write_manifest(
        options.out, "build-prefs", inputs,
        {{"mode", "grpo"},
         {"group_size", std::to_string(options.group_size)},
         {"skipped", std::to_string(result.skipped.size())},
         {"kg_mode", std::string(prefbuild::to_string(options.kg_mode))}});
    std::cout << "built " << result.groups.size() << " group(s) -> "
              << options.out.string() << "\n";
  }
}

void run_emit_config(const EmitConfigOptions& options) {
  const auto config = prefbuild::emit_training_config(options.stage);
  prefbuild::save_training_config(options.out, config);
  manifest::write_manifest(
      options.out, "emit-config", {},
      {{"stage", std::string(prefbuild::to_string(options.stage))}});
  std::cout << "emitted " << prefbuild::to_string(options.stage)
            << " config -> " << options.out.string() << "\n";
}

void run_train_toy(const TrainToyOptions& options) {
  optim::TrainConfig config;
  config.steps = options.steps;
  config.seed = options.seed;
  config.lr = options.lr;
  config.grad_clip = options.grad_clip;
  if (options.schedule == "linear-decay") {
    config.schedule = optim::LrSchedule::linear_decay;
  } else if (options.schedule == "constant") {
    config.schedule = optim::LrSchedule::constant;
  } else {
    throw runconfig::ConfigError(
        "config error at 'schedule': expected linear-decay or constant");
  }

  constexpr int kVocab = 4;
  constexpr int kContexts = 32;
  const auto task = optim::SyntheticTask::make(kVocab, kContexts, options.seed);
  auto policy = optim::ToyPolicy::uniform(kVocab, kContexts);

  optim::TrainResult result;
  std::string summary;
  if (options.stage == "sft") {
    const auto targets = optim::make_sft_targets(task);
    result = optim::train_toy_sft(std::move(policy), targets, config);
    summary = "final nll " + std::to_string(result.history.steps.back().loss);
  } else if (options.stage == "dpo") {
    const auto pairs = optim::make_dpo_pairs(task, 50, options.seed);
    result = optim::train_toy_dpo(std::move(policy), pairs, config);
    summary = "preferred fraction " +
              std::to_string(result.history.steps.back().mean_reward);
  } else if (options.stage == "grpo") {
    result = optim::train_toy_grpo(std::move(policy), task, config);
    summary =
        "final accuracy " + std::to_string(task.accuracy(result.policy));
  } else {
    throw runconfig::ConfigError(
        "config error at 'stage': expected sft, dpo or grpo, got '" +
        options.stage + "'");
  }

  optim::save_history_csv(options.out, result.history);
  manifest::write_manifest(options.out, "train-toy", {},
                           {{"stage", options.stage},
                            {"steps", std::to_string(options.steps)},
                            {"seed", std::to_string(options.seed)},
                            {"lr", std::to_string(options.lr)},
                            {"grad_clip", std::to_string(options.grad_clip)},
                            {"schedule", options.schedule}});
  std::cout << "trained toy " << options.stage << ", " << summary << " -> "
            << options.out.string() << "\n";
}

std::string run_evaluate(const EvaluateOptions& options) {
  const auto samples = corpus::load_samples(options.corpus);
  const auto predictions = eval::load_predictions(options.predictions);
  const auto report = eval::evaluate(predictions, samples, options.run_name);

  std::string rendered = eval::render_report(report, options.format);
  if (options.baseline_report) {
    const auto baseline = eval::load_report(*options.baseline_report);
    rendered += "\n" + eval::render_report(eval::compare(baseline, report),
                                           options.format);
  }
  std::cout << rendered;

  if (options.out_report) {
    eval::save_report(*options.out_report, report);
    std::vector<std::pair<std::string, fs::path>> inputs = {
        {"corpus", options.corpus}, {"predictions", options.predictions}};
    if (options.baseline_report) {
      inputs.emplace_back("baseline", *options.baseline_report);
    }
    if (options.kg) {
      inputs.emplace_back("kg", *options.kg);
    }
    manifest::write_manifest(
        *options.out_report, "evaluate", inputs,
        {{"run_name", options.run_name},
         {"kg_mode", std::string(prefbuild::to_string(options.kg_mode))}});
  }
  return rendered;
}

std::string run_report(const ReportOptions& options) {
  const auto report = eval::load_report(options.in_report);
  std::string rendered = eval::render_report(report, options.format);
  if (options.baseline_report) {
    const auto baseline = eval::load_report(*options.baseline_report);
    rendered += "\n" + eval::render_report(eval::compare(baseline, report),
                                           options.format);
  }
  std::cout << rendered;
  return rendered;
}

}  // namespace fvqa::pipeline
