#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fvqa/corpus.hpp"
#include "json.hpp"

namespace fvqa::eval {

struct Prediction {
  std::string sample_id;
  std::optional<corpus::Label> predicted_label;
  std::string response_text;  // used to recover a label when absent

  bool operator==(const Prediction&) const = default;
};

struct TypeStats {
  double accuracy = 0.0;
  int count = 0;

  bool operator==(const TypeStats&) const = default;
};

struct EvalReport {
  std::string run_name;
  double overall_accuracy = 0.0;
  std::map<corpus::QuestionType, TypeStats> per_type;  // types present only
  int unanswered = 0;
  int total = 0;

  bool operator==(const EvalReport&) const = default;
};

// Exact label match over the whole corpus. Missing predictions and absent
// labels count wrong and increment unanswered. Absent predicted_label is
// recomputed from response_text. Unknown or duplicate prediction ids throw.
EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<corpus::VQASample>& samples,
                    const std::string& run_name = {});

struct DeltaRow {
  std::string name;  // question type display name or "Overall"
  double points = 0.0;

  bool operator==(const DeltaRow&) const = default;
};

struct DeltaReport {
  std::string run_a;
  std::string run_b;
  std::vector<DeltaRow> rows;  // per-type in enum order, then Overall
};

// Per-type and overall deltas (b - a) * 100 in percentage points. Requires
// identical type sets and counts.
DeltaReport compare(const EvalReport& a, const EvalReport& b);

// Signed, 1-2 decimals: +19.82, +13.0, -3.1.
std::string format_delta_points(double points);

struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

enum class TableFormat { markdown, csv };

std::optional<TableFormat> table_format_from_string(std::string_view name);

// Deterministic, column-stable rendering. An empty table renders header
// only.
std::string render_table(const TextTable& table, TableFormat format);

// Accuracies as percentages with 2 decimals; per-type rows in enum order,
// then Overall and Unanswered.
TextTable report_table(const EvalReport& report);
TextTable delta_table(const DeltaReport& delta);

std::string render_report(const EvalReport& report, TableFormat format);
std::string render_report(const DeltaReport& delta, TableFormat format);

std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::filesystem::path& path,
                      const std::vector<Prediction>& predictions);

EvalReport load_report(const std::filesystem::path& path);
void save_report(const std::filesystem::path& path, const EvalReport& report);

void to_json(nlohmann::json& j, const Prediction& prediction);
void from_json(const nlohmann::json& j, Prediction& prediction);
void to_json(nlohmann::json& j, const EvalReport& report);
void from_json(const nlohmann::json& j, EvalReport& report);

}  // namespace fvqa::eval
