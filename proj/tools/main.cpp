#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fvqa/pipeline.hpp"
#include "fvqa/runconfig.hpp"
#include "fvqa/version.hpp"

namespace {

using fvqa::runconfig::ConfigError;
using fvqa::runconfig::KvConfig;

// Flags override config-file values; credentials come only from the
// environment variable named by <section>.auth_ref.
struct CommonArgs {
  std::string config_path;

  KvConfig load() const {
    if (config_path.empty()) {
      return {};
    }
    return KvConfig::parse_file(config_path);
  }
};

std::string require(const std::string& flag_value, const KvConfig& config,
                    const std::string& key) {
  if (!flag_value.empty()) {
    return flag_value;
  }
  if (const auto value = config.get(key); value && !value->empty()) {
    return *value;
  }
  throw ConfigError("config error at '" + key +
                    "': required (set the flag or config key)");
}

std::string pick(const std::string& flag_value, const KvConfig& config,
                 const std::string& key, const std::string& fallback) {
  if (!flag_value.empty()) {
    return flag_value;
  }
  return config.get_or(key, fallback);
}

fvqa::runconfig::BackendSettings backend_from(const KvConfig& config,
                                              const std::string& section,
                                              const std::string& endpoint_flag,
                                              const std::string& model_flag) {
  // resolve_backend reads from a config view only, so fold flags in.
  std::string text;
  for (const auto& [key, value] : config.values()) {
    text += key + " = " + value + "\n";
  }
  if (!endpoint_flag.empty()) {
    text += section + ".endpoint = " + endpoint_flag + "\n";
  }
  if (!model_flag.empty()) {
    text += section + ".model_name = " + model_flag + "\n";
  }
  return fvqa::runconfig::resolve_backend(KvConfig::parse_string(text),
                                          section);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Food-VQA reasoning-chain data toolkit"};
  app.set_version_flag("--version", fvqa::kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // --config may follow the subcommand

  CommonArgs common;
  app.add_option("--config", common.config_path,
                 "Flat key = value config file")
      ->configurable(false);

  // annotate
  auto* annotate_cmd =
      app.add_subcommand("annotate", "Extract food item-position maps");
  std::string an_corpus, an_out, an_endpoint, an_model;
  annotate_cmd->add_option("--corpus", an_corpus, "Corpus jsonl");
  annotate_cmd->add_option("--out", an_out, "Output fp-map jsonl");
  annotate_cmd->add_option("--endpoint", an_endpoint, "Backend endpoint");
  annotate_cmd->add_option("--model", an_model, "Model name");

  // synthesize
  auto* synth_cmd =
      app.add_subcommand("synthesize", "Synthesize reasoning chains");
  std::string sy_corpus, sy_fp, sy_exemplars, sy_out, sy_endpoint, sy_model;
  int sy_chains_per_sample = 0;
  synth_cmd->add_option("--corpus", sy_corpus, "Corpus jsonl");
  synth_cmd->add_option("--fp-maps", sy_fp, "fp-map jsonl");
  synth_cmd->add_option("--exemplars", sy_exemplars, "Exemplar jsonl");
  synth_cmd->add_option("--out", sy_out, "Output chains jsonl");
  synth_cmd->add_option("--chains-per-sample", sy_chains_per_sample,
                        "Chains synthesized per sample");
  synth_cmd->add_option("--endpoint", sy_endpoint, "Backend endpoint");
  synth_cmd->add_option("--model", sy_model, "Model name");

  // validate
  auto* validate_cmd =
      app.add_subcommand("validate", "Judge chains against gold answers");
  std::string va_corpus, va_fp, va_chains, va_out, va_endpoint, va_model;
  validate_cmd->add_option("--corpus", va_corpus, "Corpus jsonl");
  validate_cmd->add_option("--fp-maps", va_fp, "fp-map jsonl");
  validate_cmd->add_option("--chains", va_chains, "Chains jsonl");
  validate_cmd->add_option("--out", va_out, "Output verdicts jsonl");
  validate_cmd->add_option("--endpoint", va_endpoint, "Backend endpoint");
  validate_cmd->add_option("--model", va_model, "Model name");

  // build-sft
  auto* sft_cmd = app.add_subcommand("build-sft", "Assemble SFT records");
  std::string bs_corpus, bs_fp, bs_chains, bs_verdicts, bs_out, bs_baseline;
  std::string bs_kg, bs_kg_mode;
  sft_cmd->add_option("--corpus", bs_corpus, "Corpus jsonl");
  sft_cmd->add_option("--fp-maps", bs_fp, "fp-map jsonl");
  sft_cmd->add_option("--chains", bs_chains, "Chains jsonl");
  sft_cmd->add_option("--verdicts", bs_verdicts, "Verdicts jsonl");
  sft_cmd->add_option("--out", bs_out, "Output sft jsonl");
  sft_cmd->add_option("--baseline-out", bs_baseline,
                      "Also emit answer+reason baseline records");
  sft_cmd->add_option("--kg", bs_kg, "Knowledge triple file");
  sft_cmd->add_option("--kg-mode", bs_kg_mode, "none or one_hop");

  // build-prefs
  auto* prefs_cmd =
      app.add_subcommand("build-prefs", "Assemble DPO pairs or GRPO groups");
  std::string bp_mode, bp_corpus, bp_fp, bp_chains, bp_verdicts, bp_out;
  std::string bp_kg, bp_kg_mode;
  int bp_cap = 0, bp_group = 0;
  prefs_cmd->add_option("--mode", bp_mode, "dpo or grpo");
  prefs_cmd->add_option("--corpus", bp_corpus, "Corpus jsonl");
  prefs_cmd->add_option("--fp-maps", bp_fp, "fp-map jsonl");
  prefs_cmd->add_option("--chains", bp_chains, "Chains jsonl");
  prefs_cmd->add_option("--verdicts", bp_verdicts, "Verdicts jsonl");
  prefs_cmd->add_option("--out", bp_out, "Output jsonl");
  prefs_cmd->add_option("--pairing-cap", bp_cap, "Max DPO pairs per sample");
  prefs_cmd->add_option("--group-size", bp_group, "GRPO group size m");
  prefs_cmd->add_option("--kg", bp_kg, "Knowledge triple file");
  prefs_cmd->add_option("--kg-mode", bp_kg_mode, "none or one_hop");

  // emit-config
  auto* emit_cmd =
      app.add_subcommand("emit-config", "Emit an external-trainer config");
  std::string ec_stage, ec_out;
  emit_cmd->add_option("--stage", ec_stage,
                       "sft-llm, sft-vlm, dpo, grpo or baseline");
  emit_cmd->add_option("--out", ec_out, "Output key-value file");

  // train-toy
  auto* toy_cmd =
      app.add_subcommand("train-toy", "Train the toy policy on a synthetic task");
  std::string tt_stage, tt_schedule, tt_out;
  int tt_steps = 0;
  std::uint64_t tt_seed = 0;
  bool tt_seed_set = false;
  double tt_lr = -1.0, tt_clip = -1.0;
  toy_cmd->add_option("--stage", tt_stage, "sft, dpo or grpo");
  toy_cmd->add_option("--steps", tt_steps, "Training steps");
  toy_cmd
      ->add_option_function<std::uint64_t>(
          "--seed",
          [&](std::uint64_t value) {
            tt_seed = value;
            tt_seed_set = true;
          },
          "RNG seed")
      ->expected(1);
  toy_cmd->add_option("--lr", tt_lr, "Initial learning rate");
  toy_cmd->add_option("--clip", tt_clip, "Global-norm gradient clip");
  toy_cmd->add_option("--schedule", tt_schedule, "linear-decay or constant");
  toy_cmd->add_option("--out", tt_out, "History csv path");

  // evaluate
  auto* eval_cmd =
      app.add_subcommand("evaluate", "Score predictions against gold labels");
  std::string ev_corpus, ev_pred, ev_baseline, ev_format, ev_out, ev_name;
  std::string ev_kg, ev_kg_mode;
  eval_cmd->add_option("--corpus", ev_corpus, "Corpus jsonl");
  eval_cmd->add_option("--pred", ev_pred, "Predictions jsonl");
  eval_cmd->add_option("--baseline", ev_baseline, "Baseline report json");
  eval_cmd->add_option("--format", ev_format, "markdown or csv");
  eval_cmd->add_option("--out", ev_out, "Report json output");
  eval_cmd->add_option("--run-name", ev_name, "Run label");
  eval_cmd->add_option("--kg", ev_kg, "Knowledge triple file (recorded)");
  eval_cmd->add_option("--kg-mode", ev_kg_mode, "none or one_hop (recorded)");

  // report
  auto* report_cmd =
      app.add_subcommand("report", "Render a saved evaluation report");
  std::string rp_in, rp_baseline, rp_format;
  report_cmd->add_option("--in", rp_in, "Report json");
  report_cmd->add_option("--baseline", rp_baseline, "Baseline report json");
  report_cmd->add_option("--format", rp_format, "markdown or csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage/config errors exit 2
  }

  try {
    const KvConfig config = common.load();

    if (annotate_cmd->parsed()) {
      fvqa::pipeline::AnnotateOptions options;
      options.corpus = require(an_corpus, config, "corpus");
      options.out = require(an_out, config, "fp_maps");
      options.backend =
          backend_from(config, "annotator", an_endpoint, an_model);
      fvqa::pipeline::run_annotate(options);
    } else if (synth_cmd->parsed()) {
      fvqa::pipeline::SynthesizeOptions options;
      options.corpus = require(sy_corpus, config, "corpus");
      options.fp_maps = require(sy_fp, config, "fp_maps");
      options.exemplars = require(sy_exemplars, config, "exemplars");
      options.out = require(sy_out, config, "chains");
      options.chains_per_sample =
          sy_chains_per_sample > 0
              ? sy_chains_per_sample
              : config.get_int("synthesize.chains_per_sample", 1);
      options.backend =
          backend_from(config, "synthesizer", sy_endpoint, sy_model);
      fvqa::pipeline::run_synthesize(options);
    } else if (validate_cmd->parsed()) {
      fvqa::pipeline::ValidateOptions options;
      options.corpus = require(va_corpus, config, "corpus");
      options.fp_maps = require(va_fp, config, "fp_maps");
      options.chains = require(va_chains, config, "chains");
      options.out = require(va_out, config, "verdicts");
      options.backend = backend_from(config, "judge", va_endpoint, va_model);
      fvqa::pipeline::run_validate(options);
    } else if (sft_cmd->parsed()) {
      fvqa::pipeline::BuildSftOptions options;
      options.corpus = require(bs_corpus, config, "corpus");
      options.fp_maps = require(bs_fp, config, "fp_maps");
      options.chains = require(bs_chains, config, "chains");
      options.verdicts = require(bs_verdicts, config, "verdicts");
      options.out = require(bs_out, config, "sft_out");
      if (!bs_baseline.empty()) {
        options.baseline_out = bs_baseline;
      }
      const std::string kg_mode = pick(bs_kg_mode, config, "kg_mode", "none");
      const auto mode = fvqa::prefbuild::kg_mode_from_string(kg_mode);
      if (!mode) {
        throw ConfigError("config error at 'kg_mode': expected none or "
                          "one_hop, got '" + kg_mode + "'");
      }
      options.kg_mode = *mode;
      const std::string kg_path = pick(bs_kg, config, "kg", "");
      if (!kg_path.empty()) {
        options.kg = kg_path;
      }
      fvqa::pipeline::run_build_sft(options);
    } else if (prefs_cmd->parsed()) {
      fvqa::pipeline::BuildPrefsOptions options;
      options.mode = require(bp_mode, config, "prefs.mode");
      options.corpus = require(bp_corpus, config, "corpus");
      options.fp_maps = require(bp_fp, config, "fp_maps");
      options.chains = require(bp_chains, config, "chains");
      options.verdicts = require(bp_verdicts, config, "verdicts");
      options.out = require(bp_out, config, "prefs_out");
      options.pairing_cap =
          bp_cap > 0 ? bp_cap : config.get_int("prefs.pairing_cap", 4);
      options.group_size =
          bp_group > 0 ? bp_group : config.get_int("prefs.group_size", 4);
      const std::string kg_mode = pick(bp_kg_mode, config, "kg_mode", "none");
      const auto mode = fvqa::prefbuild::kg_mode_from_string(kg_mode);
      if (!mode) {
        throw ConfigError("config error at 'kg_mode': expected none or "
                          "one_hop, got '" + kg_mode + "'");
      }
      options.kg_mode = *mode;
      const std::string kg_path = pick(bp_kg, config, "kg", "");
      if (!kg_path.empty()) {
        options.kg = kg_path;
      }
      fvqa::pipeline::run_build_prefs(options);
    } else if (emit_cmd->parsed()) {
      fvqa::pipeline::EmitConfigOptions options;
      const std::string stage = require(ec_stage, config, "emit.stage");
      const auto parsed = fvqa::prefbuild::config_stage_from_string(stage);
      if (!parsed) {
        throw ConfigError("config error at 'stage': unknown stage '" + stage +
                          "'");
      }
      options.stage = *parsed;
      options.out = pick(ec_out, config, "emit.out", stage + ".config");
      fvqa::pipeline::run_emit_config(options);
    } else if (toy_cmd->parsed()) {
      fvqa::pipeline::TrainToyOptions options;
      options.stage = require(tt_stage, config, "toy.stage");
      options.steps =
          tt_steps > 0 ? tt_steps : config.get_int("toy.steps", 500);
      options.seed = tt_seed_set
                         ? tt_seed
                         : static_cast<std::uint64_t>(
                               config.get_int("toy.seed", 0));
      options.lr = tt_lr >= 0.0 ? tt_lr : config.get_double("toy.lr", 0.5);
      options.grad_clip =
          tt_clip >= 0.0 ? tt_clip : config.get_double("toy.grad_clip", 1.0);
      options.schedule =
          pick(tt_schedule, config, "toy.schedule", "linear-decay");
      options.out =
          pick(tt_out, config, "toy.out", "toy-" + options.stage + ".csv");
      fvqa::pipeline::run_train_toy(options);
    } else if (eval_cmd->parsed()) {
      fvqa::pipeline::EvaluateOptions options;
      options.corpus = require(ev_corpus, config, "corpus");
      options.predictions = require(ev_pred, config, "predictions");
      if (!ev_baseline.empty()) {
        options.baseline_report = ev_baseline;
      }
      const std::string format = pick(ev_format, config, "format", "markdown");
      const auto parsed = fvqa::eval::table_format_from_string(format);
      if (!parsed) {
        throw ConfigError("config error at 'format': expected markdown or "
                          "csv, got '" + format + "'");
      }
      options.format = *parsed;
      if (!ev_out.empty()) {
        options.out_report = ev_out;
      }
      options.run_name = ev_name.empty() ? "run" : ev_name;
      const std::string eval_kg_mode =
          pick(ev_kg_mode, config, "kg_mode", "none");
      const auto parsed_kg_mode =
          fvqa::prefbuild::kg_mode_from_string(eval_kg_mode);
      if (!parsed_kg_mode) {
        throw ConfigError("config error at 'kg_mode': expected none or "
                          "one_hop, got '" + eval_kg_mode + "'");
      }
      options.kg_mode = *parsed_kg_mode;
      const std::string eval_kg_path = pick(ev_kg, config, "kg", "");
      if (!eval_kg_path.empty()) {
        options.kg = eval_kg_path;
      }
      fvqa::pipeline::run_evaluate(options);
    } else if (report_cmd->parsed()) {
      fvqa::pipeline::ReportOptions options;
      options.in_report = require(rp_in, config, "report.in");
      if (!rp_baseline.empty()) {
        options.baseline_report = rp_baseline;
      }
      const std::string format = pick(rp_format, config, "format", "markdown");
      const auto parsed = fvqa::eval::table_format_from_string(format);
      if (!parsed) {
        throw ConfigError("config error at 'format': expected markdown or "
                          "csv, got '" + format + "'");
      }
      options.format = *parsed;
      fvqa::pipeline::run_report(options);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
