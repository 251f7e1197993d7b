#include <algorithm>
#include <random>

#include "doctest.h"
#include "fvqa/eval.hpp"
#include "fvqa/jsonl.hpp"
#include "helpers.hpp"

using namespace fvqa;
using corpus::Label;
using corpus::QuestionType;
using eval::Prediction;

namespace {

Prediction predict(const std::string& id, std::optional<Label> label,
                   std::string text = {}) {
  return Prediction{id, label, std::move(text)};
}

// 60 samples over 3 types with a known correctness pattern.
struct Fixture {
  std::vector<corpus::VQASample> samples;
  std::vector<Prediction> predictions;
  // per-type planned (count, correct)
  std::map<QuestionType, std::pair<int, int>> plan;
  int absent = 0;
};

Fixture make_sixty_sample_fixture() {
  Fixture fixture;
  const std::array<QuestionType, 3> types{QuestionType::ingredients,
                                          QuestionType::cooking_technique,
                                          QuestionType::food_pairings};
  const std::array<int, 3> counts{20, 25, 15};
  const std::array<int, 3> correct{13, 20, 9};
  int id = 0;
  for (std::size_t t = 0; t < types.size(); ++t) {
    fixture.plan[types[t]] = {counts[t], correct[t]};
    for (int i = 0; i < counts[t]; ++i) {
      auto sample = testutil::make_sample(
          "e" + std::to_string(id++), corpus::kAllLabels[i % 4], types[t]);
      const bool is_correct = i < correct[t];
      std::optional<Label> label;
      if (is_correct) {
        label = sample.correct_label;
      } else if (i % 5 == 4) {
        label = std::nullopt;  // unanswerable output, counts wrong
        ++fixture.absent;
      } else {
        label = corpus::kAllLabels[(i + 1) % 4];
      }
      fixture.predictions.push_back(predict(sample.id, label));
      fixture.samples.push_back(std::move(sample));
    }
  }
  return fixture;
}

}  // namespace

TEST_CASE("evaluate: 7 of 10 correct") {
  auto samples = testutil::make_corpus(10);
  std::vector<Prediction> predictions;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto gold = samples[i].correct_label;
    const auto wrong =
        corpus::kAllLabels[(static_cast<std::size_t>(corpus::to_char(gold)) -
                            'A' + 1) %
                           4];
    predictions.push_back(predict(samples[i].id, i < 7 ? gold : wrong));
  }
  const auto report = eval::evaluate(predictions, samples, "seven");
  CHECK(report.overall_accuracy == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(report.total == 10);
  CHECK(report.unanswered == 0);
}

TEST_CASE("evaluate: all predictions absent") {
  const auto samples = testutil::make_corpus(6);
  std::vector<Prediction> predictions;
  for (const auto& sample : samples) {
    predictions.push_back(predict(sample.id, std::nullopt, "no idea"));
  }
  const auto report = eval::evaluate(predictions, samples);
  CHECK(report.overall_accuracy == 0.0);
  CHECK(report.unanswered == 6);
}

TEST_CASE("evaluate: missing predictions count wrong and unanswered") {
  const auto samples = testutil::make_corpus(4);
  const std::vector<Prediction> predictions{
      predict(samples[0].id, samples[0].correct_label)};
  const auto report = eval::evaluate(predictions, samples);
  CHECK(report.overall_accuracy == doctest::Approx(0.25));
  CHECK(report.unanswered == 3);
}

TEST_CASE("evaluate recovers labels from response text when absent") {
  const auto samples = testutil::make_corpus(1);
  const std::vector<Prediction> predictions{predict(
      samples[0].id, std::nullopt,
      std::string("The correct answer is ") +
          corpus::to_char(samples[0].correct_label))};
  const auto report = eval::evaluate(predictions, samples);
  CHECK(report.overall_accuracy == 1.0);
  CHECK(report.unanswered == 0);
}

TEST_CASE("evaluate rejects unknown and duplicate prediction ids") {
  const auto samples = testutil::make_corpus(2);
  CHECK_THROWS_WITH_AS(
      eval::evaluate({predict("ghost", Label::A)}, samples),
      doctest::Contains("unknown sample id"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      eval::evaluate({predict(samples[0].id, Label::A),
                      predict(samples[0].id, Label::B)},
                     samples),
      doctest::Contains("duplicate prediction"), std::runtime_error);
}

TEST_CASE("evaluate matches a brute-force recount on the 60-sample fixture") {
  const auto fixture = make_sixty_sample_fixture();
  const auto report =
      eval::evaluate(fixture.predictions, fixture.samples, "fixture");

  // brute-force recount straight off the fixture arrays
  std::map<QuestionType, std::pair<int, int>> recount;  // count, correct
  int correct_total = 0;
  for (std::size_t i = 0; i < fixture.samples.size(); ++i) {
    const auto& sample = fixture.samples[i];
    auto& [count, correct] = recount[sample.question_type];
    ++count;
    const auto& prediction = fixture.predictions[i];
    if (prediction.predicted_label &&
        *prediction.predicted_label == sample.correct_label) {
      ++correct;
      ++correct_total;
    }
  }

  REQUIRE(report.per_type.size() == 3);
  for (const auto& [type, stats] : report.per_type) {
    const auto& [count, correct] = recount.at(type);
    CHECK(stats.count == count);
    CHECK(stats.accuracy ==
          doctest::Approx(static_cast<double>(correct) / count)
              .epsilon(1e-12));
  }
  CHECK(report.overall_accuracy ==
        doctest::Approx(static_cast<double>(correct_total) / 60.0)
            .epsilon(1e-12));
  CHECK(report.total == 60);
  CHECK(report.unanswered == fixture.absent);

  // planned values hold exactly
  CHECK(report.per_type.at(QuestionType::ingredients).accuracy ==
        doctest::Approx(13.0 / 20.0));
  CHECK(report.per_type.at(QuestionType::cooking_technique).accuracy ==
        doctest::Approx(20.0 / 25.0));
  CHECK(report.per_type.at(QuestionType::food_pairings).accuracy ==
        doctest::Approx(9.0 / 15.0));
}

TEST_CASE("evaluate is permutation-invariant in predictions") {
  auto fixture = make_sixty_sample_fixture();
  const auto before =
      eval::evaluate(fixture.predictions, fixture.samples, "p");
  std::mt19937_64 rng(77);
  std::shuffle(fixture.predictions.begin(), fixture.predictions.end(), rng);
  const auto after = eval::evaluate(fixture.predictions, fixture.samples, "p");
  CHECK(before == after);
}

TEST_CASE("overall accuracy equals the count-weighted mean of type "
          "accuracies") {
  const auto fixture = make_sixty_sample_fixture();
  const auto report =
      eval::evaluate(fixture.predictions, fixture.samples, "w");
  double weighted = 0.0;
  int total = 0;
  for (const auto& [type, stats] : report.per_type) {
    weighted += stats.accuracy * stats.count;
    total += stats.count;
  }
  CHECK(total == report.total);
  CHECK(std::abs(report.overall_accuracy - weighted / total) <= 1e-12);
}

TEST_CASE("compare reproduces the reported deltas") {
  // overall: 51.30% zero-shot to 71.12% -> +19.82 points
  eval::EvalReport a;
  a.run_name = "zero-shot";
  a.overall_accuracy = 0.5130;
  a.per_type[QuestionType::ingredients] = {0.5130, 1000};
  a.total = 1000;
  eval::EvalReport b = a;
  b.run_name = "dpo";
  b.overall_accuracy = 0.7112;
  b.per_type[QuestionType::ingredients] = {0.7112, 1000};

  const auto delta = eval::compare(a, b);
  REQUIRE(delta.rows.size() == 2);
  CHECK(delta.rows.back().name == "Overall");
  CHECK(eval::format_delta_points(delta.rows.back().points) == "+19.82");

  // single type: 58.5% -> 71.5% is +13.0
  eval::EvalReport c;
  c.overall_accuracy = 0.585;
  c.per_type[QuestionType::ingredient_substitutions] = {0.585, 200};
  c.total = 200;
  eval::EvalReport d = c;
  d.overall_accuracy = 0.715;
  d.per_type[QuestionType::ingredient_substitutions] = {0.715, 200};
  const auto delta2 = eval::compare(c, d);
  CHECK(eval::format_delta_points(delta2.rows[0].points) == "+13.0");
}

TEST_CASE("compare of identical reports is identically zero") {
  const auto fixture = make_sixty_sample_fixture();
  const auto report =
      eval::evaluate(fixture.predictions, fixture.samples, "same");
  const auto delta = eval::compare(report, report);
  for (const auto& row : delta.rows) {
    CHECK(row.points == 0.0);
    CHECK(eval::format_delta_points(row.points) == "+0.0");
  }
}

TEST_CASE("compare rejects mismatched type sets") {
  eval::EvalReport a;
  a.per_type[QuestionType::ingredients] = {0.5, 10};
  eval::EvalReport b;
  b.per_type[QuestionType::cooking_science] = {0.5, 10};
  CHECK_THROWS_WITH_AS(eval::compare(a, b), doctest::Contains("mismatched"),
                       std::runtime_error);
}

TEST_CASE("format_delta_points renders signed 1-2 decimals") {
  CHECK(eval::format_delta_points(19.82) == "+19.82");
  CHECK(eval::format_delta_points(13.0000000000001) == "+13.0");
  CHECK(eval::format_delta_points(12.8) == "+12.8");
  CHECK(eval::format_delta_points(-3.1) == "-3.1");
  CHECK(eval::format_delta_points(0.0) == "+0.0");
}

TEST_CASE("render_table: header-only when empty, one line per row in csv") {
  eval::TextTable empty;
  empty.header = {"Question Type", "Accuracy (%)", "Count"};
  CHECK(eval::render_table(empty, eval::TableFormat::csv) ==
        "Question Type,Accuracy (%),Count\n");
  const auto markdown = eval::render_table(empty, eval::TableFormat::markdown);
  CHECK(markdown == "| Question Type | Accuracy (%) | Count |\n"
                    "| --- | --- | --- |\n");

  eval::TextTable one;
  one.header = {"Question Type", "Accuracy (%)"};
  one.rows = {{"Ingredients", "61.20"}};
  CHECK(eval::render_table(one, eval::TableFormat::csv) ==
        "Question Type,Accuracy (%)\nIngredients,61.20\n");
}

TEST_CASE("report rendering matches the golden layout") {
  eval::EvalReport report;
  report.run_name = "golden";
  report.total = 40;
  report.unanswered = 2;
  report.per_type[QuestionType::ingredients] = {0.615, 20};
  report.per_type[QuestionType::food_pairings] = {0.75, 20};
  report.overall_accuracy = (0.615 * 20 + 0.75 * 20) / 40.0;

  // golden produced once from a hand-checked run
  const std::string golden_md =
      "| Question Type | Accuracy (%) | Count |\n"
      "| --- | --- | --- |\n"
      "| Ingredients | 61.50 | 20 |\n"
      "| Food pairings | 75.00 | 20 |\n"
      "| Overall | 68.25 | 40 |\n"
      "| Unanswered |  | 2 |\n";
  CHECK(eval::render_report(report, eval::TableFormat::markdown) == golden_md);

  const std::string golden_csv =
      "Question Type,Accuracy (%),Count\n"
      "Ingredients,61.50,20\n"
      "Food pairings,75.00,20\n"
      "Overall,68.25,40\n"
      "Unanswered,,2\n";
  CHECK(eval::render_report(report, eval::TableFormat::csv) == golden_csv);
}

TEST_CASE("reports and predictions round-trip through files") {
  testutil::TempDir tmp;
  const auto fixture = make_sixty_sample_fixture();
  const auto report =
      eval::evaluate(fixture.predictions, fixture.samples, "rt");
  eval::save_report(tmp.file("report.json"), report);
  CHECK(eval::load_report(tmp.file("report.json")) == report);

  eval::save_predictions(tmp.file("pred.jsonl"), fixture.predictions);
  CHECK(eval::load_predictions(tmp.file("pred.jsonl")) == fixture.predictions);
}
