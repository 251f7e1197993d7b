#include "fvqa/eval.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "fvqa/judge.hpp"
#include "fvqa/jsonl.hpp"

namespace fvqa::eval {

namespace {

std::string percent2(double fraction) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", fraction * 100.0);
  return buffer;
}

std::string csv_cell(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) {
    return cell;
  }
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<corpus::VQASample>& samples,
                    const std::string& run_name) {
  std::unordered_map<std::string, const corpus::VQASample*> by_id;
  for (const auto& sample : samples) {
    by_id.emplace(sample.id, &sample);
  }

  std::unordered_map<std::string, const Prediction*> pred_by_id;
  for (const auto& prediction : predictions) {
    if (by_id.find(prediction.sample_id) == by_id.end()) {
      throw std::runtime_error("prediction for unknown sample id '" +
                               prediction.sample_id + "'");
    }
    if (!pred_by_id.emplace(prediction.sample_id, &prediction).second) {
      throw std::runtime_error("duplicate prediction for sample id '" +
                               prediction.sample_id + "'");
    }
  }

  struct Tally {
    int count = 0;
    int correct = 0;
  };
  std::map<corpus::QuestionType, Tally> tallies;
  int correct_total = 0;
  int unanswered = 0;

  for (const auto& sample : samples) {
    auto& tally = tallies[sample.question_type];
    ++tally.count;

    std::optional<corpus::Label> label;
    const auto it = pred_by_id.find(sample.id);
    if (it != pred_by_id.end()) {
      label = it->second->predicted_label;
      if (!label) {
        label = judge::extract_answer_label(it->second->response_text,
                                            sample.choices);
      }
    }
    if (!label) {
      ++unanswered;  // counts wrong
      continue;
    }
    if (*label == sample.correct_label) {
      ++tally.correct;
      ++correct_total;
    }
  }

  EvalReport report;
  report.run_name = run_name;
  report.total = static_cast<int>(samples.size());
  report.unanswered = unanswered;
  report.overall_accuracy =
      samples.empty() ? 0.0
                      : static_cast<double>(correct_total) /
                            static_cast<double>(samples.size());
  for (const auto& [type, tally] : tallies) {
    report.per_type[type] =
        TypeStats{static_cast<double>(tally.correct) /
                      static_cast<double>(tally.count),
                  tally.count};
  }
  return report;
}

DeltaReport compare(const EvalReport& a, const EvalReport& b) {
  if (a.per_type.size() != b.per_type.size()) {
    throw std::runtime_error("mismatched type sets");
  }
  for (const auto& [type, stats] : a.per_type) {
    const auto it = b.per_type.find(type);
    if (it == b.per_type.end()) {
      throw std::runtime_error("mismatched type sets: " +
                               std::string(corpus::to_string(type)));
    }
    if (it->second.count != stats.count) {
      throw std::runtime_error("mismatched counts for " +
                               std::string(corpus::to_string(type)));
    }
  }

  DeltaReport delta;
  delta.run_a = a.run_name;
  delta.run_b = b.run_name;
  for (const auto& [type, stats] : a.per_type) {
    delta.rows.push_back(
        DeltaRow{std::string(corpus::to_string(type)),
                 (b.per_type.at(type).accuracy - stats.accuracy) * 100.0});
  }
  delta.rows.push_back(
      DeltaRow{"Overall", (b.overall_accuracy - a.overall_accuracy) * 100.0});
  return delta;
}

std::string format_delta_points(double points) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%+.2f", points);
  std::string out = buffer;
  if (out.back() == '0') {
    out.pop_back();  // 2 decimals, trailing zero dropped: +13.0, +19.82
  }
  return out;
}

std::optional<TableFormat> table_format_from_string(std::string_view name) {
  if (name == "markdown") {
    return TableFormat::markdown;
  }
  if (name == "csv") {
    return TableFormat::csv;
  }
  return std::nullopt;
}

std::string render_table(const TextTable& table, TableFormat format) {
  std::string out;
  if (format == TableFormat::markdown) {
    out += "|";
    for (const auto& cell : table.header) {
      out += " " + cell + " |";
    }
    out += "\n|";
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      out += " --- |";
    }
    out += "\n";
    for (const auto& row : table.rows) {
      out += "|";
      for (const auto& cell : row) {
        out += " " + cell + " |";
      }
      out += "\n";
    }
  } else {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      if (i > 0) {
        out += ",";
      }
      out += csv_cell(table.header[i]);
    }
    out += "\n";
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) {
          out += ",";
        }
        out += csv_cell(row[i]);
      }
      out += "\n";
    }
  }
  return out;
}

TextTable report_table(const EvalReport& report) {
  TextTable table;
  table.header = {"Question Type", "Accuracy (%)", "Count"};
  for (const auto& [type, stats] : report.per_type) {
    table.rows.push_back({std::string(corpus::to_string(type)),
                          percent2(stats.accuracy),
                          std::to_string(stats.count)});
  }
  if (report.total > 0) {
    table.rows.push_back({"Overall", percent2(report.overall_accuracy),
                          std::to_string(report.total)});
    table.rows.push_back(
        {"Unanswered", "", std::to_string(report.unanswered)});
  }
  return table;
}

TextTable delta_table(const DeltaReport& delta) {
  TextTable table;
  table.header = {"Question Type", "Delta (points)"};
  for (const auto& row : delta.rows) {
    table.rows.push_back({row.name, format_delta_points(row.points)});
  }
  return table;
}

std::string render_report(const EvalReport& report, TableFormat format) {
  return render_table(report_table(report), format);
}

std::string render_report(const DeltaReport& delta, TableFormat format) {
  return render_table(delta_table(delta), format);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  return jsonl::load<Prediction>(path);
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<Prediction>& predictions) {
  jsonl::save(path, predictions);
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  nlohmann::json j;
  in >> j;
  return j.get<EvalReport>();
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("unwritable path " + path.string());
  }
  out << nlohmann::json(report).dump(2) << '\n';
}

void to_json(nlohmann::json& j, const Prediction& prediction) {
  j = nlohmann::json{{"sample_id", prediction.sample_id},
                     {"response_text", prediction.response_text}};
  if (prediction.predicted_label) {
    j["predicted_label"] =
        std::string(1, corpus::to_char(*prediction.predicted_label));
  } else {
    j["predicted_label"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, Prediction& prediction) {
  prediction.sample_id = j.at("sample_id").get<std::string>();
  prediction.response_text = j.value("response_text", std::string{});
  prediction.predicted_label.reset();
  if (j.contains("predicted_label") && !j.at("predicted_label").is_null()) {
    const auto label_str = j.at("predicted_label").get<std::string>();
    const auto label = corpus::label_from_string(label_str);
    if (!label) {
      throw std::runtime_error("unknown label '" + label_str + "'");
    }
    prediction.predicted_label = *label;
  }
}

void to_json(nlohmann::json& j, const EvalReport& report) {
  nlohmann::json per_type = nlohmann::json::array();
  for (const auto& [type, stats] : report.per_type) {
    per_type.push_back({{"type", std::string(corpus::to_string(type))},
                        {"accuracy", stats.accuracy},
                        {"count", stats.count}});
  }
  j = nlohmann::json{{"run_name", report.run_name},
                     {"overall_accuracy", report.overall_accuracy},
                     {"per_type", std::move(per_type)},
                     {"unanswered", report.unanswered},
                     {"total", report.total}};
}

void from_json(const nlohmann::json& j, EvalReport& report) {
  report.run_name = j.value("run_name", std::string{});
  report.overall_accuracy = j.at("overall_accuracy").get<double>();
  report.unanswered = j.at("unanswered").get<int>();
  report.total = j.at("total").get<int>();
  report.per_type.clear();
  for (const auto& row : j.at("per_type")) {
    const auto type_str = row.at("type").get<std::string>();
    const auto type = corpus::question_type_from_string(type_str);
    if (!type) {
      throw std::runtime_error("unknown question_type '" + type_str + "'");
    }
    report.per_type[*type] = TypeStats{row.at("accuracy").get<double>(),
                                       row.at("count").get<int>()};
  }
}

}  // namespace fvqa::eval
