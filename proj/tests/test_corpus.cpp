#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "fvqa/corpus.hpp"
#include "fvqa/jsonl.hpp"
#include "helpers.hpp"

using namespace fvqa;
using testutil::TempDir;

namespace {

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& line : lines) {
    out << line << "\n";
  }
}

std::string turmeric_line(const std::string& id) {
  nlohmann::json j = testutil::make_sample(id);
  return j.dump();
}

}  // namespace

TEST_CASE("load_samples parses a valid record") {
  TempDir tmp;
  write_lines(tmp.file("corpus.jsonl"), {turmeric_line("q1")});
  const auto samples = corpus::load_samples(tmp.file("corpus.jsonl"));
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].question ==
        "Which chutney is made with turmeric as an ingredient?");
  CHECK(samples[0].correct_label == corpus::Label::C);
  CHECK(samples[0].choice_text(corpus::Label::C) ==
        "Tomato, onion, and raw mango chutney");
}

TEST_CASE("load_samples on an empty file yields an empty list") {
  TempDir tmp;
  write_lines(tmp.file("corpus.jsonl"), {});
  CHECK(corpus::load_samples(tmp.file("corpus.jsonl")).empty());
}

TEST_CASE("load_samples rejects a record with three choices") {
  TempDir tmp;
  nlohmann::json j = testutil::make_sample("q1");
  j["choices"].erase(3);
  write_lines(tmp.file("corpus.jsonl"), {turmeric_line("q0"), j.dump()});
  CHECK_THROWS_WITH_AS(corpus::load_samples(tmp.file("corpus.jsonl")),
                       doctest::Contains(":2: choice count != 4"),
                       std::runtime_error);
}

TEST_CASE("load_samples rejects unknown labels and question types") {
  TempDir tmp;
  nlohmann::json bad_label = testutil::make_sample("q1");
  bad_label["correct_label"] = "E";
  write_lines(tmp.file("a.jsonl"), {bad_label.dump()});
  CHECK_THROWS_WITH_AS(corpus::load_samples(tmp.file("a.jsonl")),
                       doctest::Contains("unknown label"), std::runtime_error);

  nlohmann::json bad_type = testutil::make_sample("q1");
  bad_type["question_type"] = "Recipes";
  write_lines(tmp.file("b.jsonl"), {bad_type.dump()});
  CHECK_THROWS_WITH_AS(corpus::load_samples(tmp.file("b.jsonl")),
                       doctest::Contains("unknown question_type"),
                       std::runtime_error);
}

TEST_CASE("load_samples rejects duplicate ids") {
  TempDir tmp;
  write_lines(tmp.file("corpus.jsonl"),
              {turmeric_line("q1"), turmeric_line("q1")});
  CHECK_THROWS_WITH_AS(corpus::load_samples(tmp.file("corpus.jsonl")),
                       doctest::Contains("duplicate id"), std::runtime_error);
}

TEST_CASE("load_samples reports malformed json with its line number") {
  TempDir tmp;
  write_lines(tmp.file("corpus.jsonl"), {turmeric_line("q1"), "{not json"});
  CHECK_THROWS_WITH_AS(corpus::load_samples(tmp.file("corpus.jsonl")),
                       doctest::Contains(":2: malformed record"),
                       std::runtime_error);
}

TEST_CASE("split_dataset: exact division") {
  const auto samples = testutil::make_corpus(100);
  const auto split = corpus::split_dataset(samples, {0.7, 0.1, 0.2}, 42);
  CHECK(split.train.size() == 70);
  CHECK(split.validation.size() == 10);
  CHECK(split.test.size() == 20);
}

TEST_CASE("split_dataset: 16700 samples, floor plus remainder to train") {
  // Hand application of the stated rule in IEEE doubles:
  // floor(16700*0.7)=11689, floor(16700*0.1)=1670, floor(16700*0.2)=3340,
  // remainder 1 assigned to train.
  const auto samples = testutil::make_corpus(16700);
  const auto split = corpus::split_dataset(samples, {0.7, 0.1, 0.2}, 1);
  CHECK(split.train.size() == 11690);
  CHECK(split.validation.size() == 1670);
  CHECK(split.test.size() == 3340);
}

TEST_CASE("split_dataset is deterministic for a fixed seed") {
  const auto samples = testutil::make_corpus(137);
  const auto a = corpus::split_dataset(samples, {0.7, 0.1, 0.2}, 9001);
  const auto b = corpus::split_dataset(samples, {0.7, 0.1, 0.2}, 9001);
  CHECK(a == b);
  const auto c = corpus::split_dataset(samples, {0.7, 0.1, 0.2}, 9002);
  CHECK(a.train != c.train);
}

TEST_CASE("split_dataset rejects bad ratios") {
  const auto samples = testutil::make_corpus(10);
  CHECK_THROWS_AS(corpus::split_dataset(samples, {0.7, 0.1, 0.1}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(corpus::split_dataset(samples, {-0.1, 0.6, 0.5}, 0),
                  std::invalid_argument);
}

TEST_CASE("split_dataset partition property over random sizes and seeds") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng() % 200);
    const auto samples = testutil::make_corpus(n);
    const double a = static_cast<double>(rng() % 100) / 100.0;
    const double b = (1.0 - a) * static_cast<double>(rng() % 100) / 100.0;
    const std::array<double, 3> ratios{a, b, 1.0 - a - b};
    const auto split = corpus::split_dataset(samples, ratios, rng());

    std::set<std::string> all;
    all.insert(split.train.begin(), split.train.end());
    all.insert(split.validation.begin(), split.validation.end());
    all.insert(split.test.begin(), split.test.end());
    CHECK(all.size() ==
          split.train.size() + split.validation.size() + split.test.size());
    CHECK(all.size() == static_cast<std::size_t>(n));
    for (const auto& sample : samples) {
      CHECK(all.count(sample.id) == 1);
    }
  }
}

TEST_CASE("sample round-trip including non-ASCII dish names") {
  TempDir tmp;
  auto sample =
      testutil::make_sample("medu-1", corpus::Label::B,
                            corpus::QuestionType::ingredient_substitutions);
  sample.question = "What could replace the medu vada or rasgullā (रसगुल्ला)?";
  sample.choices[1].text = "मेदु वडा with sambar";
  sample.reason = "rasgulla is spongy; मेदु वडा is crispy";
  corpus::save_samples(tmp.file("one.jsonl"), {sample});
  const auto loaded = corpus::load_samples(tmp.file("one.jsonl"));
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == sample);
}

TEST_CASE("empty list round-trips") {
  TempDir tmp;
  corpus::save_samples(tmp.file("none.jsonl"), {});
  CHECK(corpus::load_samples(tmp.file("none.jsonl")).empty());
}

TEST_CASE("split file round-trips") {
  TempDir tmp;
  const auto samples = testutil::make_corpus(23);
  const auto split = corpus::split_dataset(samples, {0.7, 0.1, 0.2}, 5);
  corpus::save_split(tmp.file("split.json"), split);
  CHECK(corpus::load_split(tmp.file("split.json")) == split);
}

TEST_CASE("question type names cover exactly the 12 categories") {
  std::set<std::string> names;
  for (const auto type : corpus::all_question_types()) {
    names.insert(std::string(corpus::to_string(type)));
    CHECK(corpus::question_type_from_string(corpus::to_string(type)) == type);
  }
  CHECK(names.size() == 12);
  CHECK(names.count("Ingredients") == 1);
  CHECK(names.count("Cooking technique") == 1);
  CHECK(names.count("Allergens and restrictions") == 1);
  CHECK(!corpus::question_type_from_string("ingredients"));  // case-sensitive
}
