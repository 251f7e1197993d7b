#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fvqa/eval.hpp"
#include "fvqa/optim.hpp"
#include "fvqa/prefbuild.hpp"
#include "fvqa/runconfig.hpp"

namespace fvqa::pipeline {

namespace fs = std::filesystem;

// Each stage writes its output file(s) plus a sibling run manifest.

struct AnnotateOptions {
  fs::path corpus;
  fs::path out;
  runconfig::BackendSettings backend;
};
void run_annotate(const AnnotateOptions& options);

struct SynthesizeOptions {
  fs::path corpus;
  fs::path fp_maps;
  fs::path exemplars;
  fs::path out;
  int chains_per_sample = 1;
  runconfig::BackendSettings backend;
};
void run_synthesize(const SynthesizeOptions& options);

struct ValidateOptions {
  fs::path corpus;
  fs::path fp_maps;
  fs::path chains;
  fs::path out;
  runconfig::BackendSettings backend;
};
void run_validate(const ValidateOptions& options);

struct BuildSftOptions {
  fs::path corpus;
  fs::path fp_maps;
  fs::path chains;
  fs::path verdicts;
  fs::path out;
  std::optional<fs::path> baseline_out;
  prefbuild::KgMode kg_mode = prefbuild::KgMode::none;
  std::optional<fs::path> kg;
};
void run_build_sft(const BuildSftOptions& options);

struct BuildPrefsOptions {
  std::string mode;  // "dpo" or "grpo"
  fs::path corpus;
  fs::path fp_maps;
  fs::path chains;
  fs::path verdicts;
  fs::path out;
  int pairing_cap = 4;
  int group_size = 4;
  prefbuild::KgMode kg_mode = prefbuild::KgMode::none;
  std::optional<fs::path> kg;
};
void run_build_prefs(const BuildPrefsOptions& options);

struct EmitConfigOptions {
  prefbuild::ConfigStage stage = prefbuild::ConfigStage::sft_llm;
  fs::path out;
};
void run_emit_config(const EmitConfigOptions& options);

struct TrainToyOptions {
  std::string stage;  // "sft", "dpo" or "grpo"
  int steps = 500;
  std::uint64_t seed = 0;
  double lr = 0.5;
  double grad_clip = 1.0;
  std::string schedule = "linear-decay";  // or "constant"
  fs::path out;                           // history csv
};
void run_train_toy(const TrainToyOptions& options);

struct EvaluateOptions {
  fs::path corpus;
  fs::path predictions;
  std::optional<fs::path> baseline_report;
  eval::TableFormat format = eval::TableFormat::markdown;
  std::optional<fs::path> out_report;
  std::string run_name = "run";
  // Scoring is label-exact either way; the kg flags are recorded in the run
  // manifest so KG-augmented prediction runs stay distinguishable.
  prefbuild::KgMode kg_mode = prefbuild::KgMode::none;
  std::optional<fs::path> kg;
};
// Returns the rendered table(s) that were printed.
std::string run_evaluate(const EvaluateOptions& options);

struct ReportOptions {
  fs::path in_report;
  std::optional<fs::path> baseline_report;
  eval::TableFormat format = eval::TableFormat::markdown;
};
std::string run_report(const ReportOptions& options);

}  // namespace fvqa::pipeline
