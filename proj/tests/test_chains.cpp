#include <random>
#include <set>

#include "doctest.h"
#include "fvqa/chains.hpp"
#include "fvqa/jsonl.hpp"
#include "fvqa/prompts.hpp"
#include "helpers.hpp"

using namespace fvqa;
using chains::ReasoningStep;

namespace {

const annotate::GenParams kParams{"reasoner-model", 0.6, 1024};

annotate::FoodPositionMap plate_map(const std::string& sample_id) {
  return annotate::FoodPositionMap{
      sample_id,
      {{"uttapam", "center"}, {"green chutney", "left"}},
      "uttapam (center), green chutney (left)"};
}

// Exhaustive marker scan over a fixture string: collects "Q:"/"A:" marker
// offsets by brute force and pairs them, mirroring the stated grammar.
std::vector<ReasoningStep> oracle_scan(const std::string& text) {
  struct M {
    std::size_t pos;
    bool q;
  };
  std::vector<M> markers;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if ((c == 'Q' || c == 'q' || c == 'A' || c == 'a') && text[i + 1] == ':') {
      if (i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]))) {
        markers.push_back({i, c == 'Q' || c == 'q'});
      }
    }
  }
  auto clean = [](std::string s, bool strip_enum) {
    auto trim = [](std::string& t) {
      while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front())))
        t.erase(t.begin());
      while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back())))
        t.pop_back();
    };
    trim(s);
    if (strip_enum && !s.empty()) {
      if (s.back() == ')') {
        const auto open = s.rfind('(');
        if (open != std::string::npos && s.size() - open <= 6) {
          s = s.substr(0, open);
          trim(s);
        }
      } else if (s.back() == '.') {
        std::size_t i = s.size() - 1;
        while (i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) --i;
        if (i < s.size() - 1 &&
            (i == 0 || std::isspace(static_cast<unsigned char>(s[i - 1])))) {
          s = s.substr(0, i);
          trim(s);
        }
      }
    }
    return s;
  };
  std::vector<ReasoningStep> steps;
  std::string pending;
  bool have_pending = false;
  for (std::size_t k = 0; k < markers.size(); ++k) {
    const std::size_t end =
        k + 1 < markers.size() ? markers[k + 1].pos : text.size();
    const std::string content = clean(
        text.substr(markers[k].pos + 2, end - markers[k].pos - 2),
        k + 1 < markers.size());
    if (markers[k].q) {
      pending = content;
      have_pending = !pending.empty();
    } else {
      if (have_pending && !content.empty()) {
        steps.push_back(ReasoningStep{pending, content});
      }
      have_pending = false;
    }
  }
  return steps;
}

}  // namespace

TEST_CASE("parse_chain: two paratha steps") {
  const auto steps = chains::parse_chain(
      "Q: What is a paratha? A: Paratha is an Indian flat bread made of "
      "wheat-flour, that is pan-fried with ghee or oil. Q: What is the "
      "texture of parathas? A: Parathas are generally crispy on the outside "
      "and soft on the inside.");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].sub_question == "What is a paratha?");
  CHECK(steps[1].sub_question == "What is the texture of parathas?");
  CHECK(steps[1].sub_answer.find("crispy") != std::string::npos);
}

TEST_CASE("parse_chain: empty text yields no steps") {
  CHECK(chains::parse_chain("").empty());
  CHECK(chains::parse_chain("no reasoning").empty());
}

TEST_CASE("parse_chain strips numbering prefixes, checked against the "
          "token-scan oracle") {
  const std::string text = "(i) Q: x? A: y. (ii) Q: z? A: w.";
  const auto steps = chains::parse_chain(text);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0] == ReasoningStep{"x?", "y."});
  CHECK(steps[1] == ReasoningStep{"z?", "w."});
  CHECK(steps == oracle_scan(text));

  const std::string numbered = "1. Q: first? A: one. 2. Q: second? A: two.";
  CHECK(chains::parse_chain(numbered) == oracle_scan(numbered));
  CHECK(chains::parse_chain(numbered).size() == 2);
}

TEST_CASE("parse_chain is total on arbitrary text") {
  std::mt19937_64 rng(515);
  const std::string alphabet = "Qa: ?.AqxZ(1)\ni";
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const std::size_t len = rng() % 60;
    for (std::size_t i = 0; i < len; ++i) {
      text += alphabet[rng() % alphabet.size()];
    }
    std::vector<ReasoningStep> steps;
    CHECK_NOTHROW(steps = chains::parse_chain(text));
    for (const auto& step : steps) {
      CHECK(!step.sub_question.empty());
      CHECK(!step.sub_answer.empty());
    }
  }
}

TEST_CASE("parse_chain drops a trailing unpaired question") {
  const auto steps =
      chains::parse_chain("Q: first? A: answered. Q: dangling?");
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].sub_question == "first?");
}

TEST_CASE("parse_chain is case-insensitive on markers") {
  const auto steps = chains::parse_chain("q: lower? a: case.");
  REQUIRE(steps.size() == 1);
  CHECK(steps[0] == ReasoningStep{"lower?", "case."});
}

TEST_CASE("parse_chain ignores marker-like text inside words") {
  // "SODA:" ends in "A:" but is preceded by an alphanumeric char.
  const auto steps = chains::parse_chain("Q: what is SODA: a drink? A: yes.");
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].sub_question == "what is SODA: a drink?");
}

TEST_CASE("serialize/parse round-trip on random chains") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> words = {
      "idli",  "dosa",   "masala", "crispy", "flavor",
      "spice", "paneer", "boiled", "sweet",  "lentil"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ReasoningStep> steps;
    const std::size_t n = 1 + rng() % 5;
    for (std::size_t s = 0; s < n; ++s) {
      auto text = [&] {
        std::string out;
        const std::size_t k = 1 + rng() % 6;
        for (std::size_t w = 0; w < k; ++w) {
          if (!out.empty()) out += ' ';
          out += words[rng() % words.size()];
        }
        return out;
      };
      steps.push_back(ReasoningStep{text() + "?", text() + "."});
    }
    CHECK(chains::parse_chain(chains::serialize_steps(steps)) == steps);
  }
}

TEST_CASE("synthesis prompt carries exemplars, map, question and answer in "
          "order") {
  auto sample = testutil::make_sample("syn-1");
  sample.question = "Which sweet pairs best with the masala chai shown here?";
  const auto exemplars =
      chains::load_exemplars(std::filesystem::path(FVQA_DATA_DIR) /
                             "exemplars.jsonl");
  REQUIRE(exemplars.size() == 10);

  const auto request = chains::build_synthesis_request(
      sample, plate_map(sample.id), exemplars, kParams);
  CHECK(request.system_text == prompts::kReasoningSystem);
  const std::string& user = request.user_text;

  // filled template, gold answer C
  CHECK(user.find("and its answer: C.") != std::string::npos);
  CHECK(user.find("Decompose the reasoning into a series of subquestions "
                  "and subanswers.") != std::string::npos);
  CHECK(user.find(sample.question) != std::string::npos);

  // all ten exemplars in fixture order
  std::size_t last = 0;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto pos = user.find("Exemplar " + std::to_string(i + 1) + " (");
    REQUIRE(pos != std::string::npos);
    CHECK(pos > last);
    last = pos;
  }
  // exemplar block comes before the map, map before the question
  const auto map_pos = user.find("Food items and positions: uttapam (center)");
  REQUIRE(map_pos != std::string::npos);
  CHECK(map_pos > last);
  CHECK(user.find(sample.question) > map_pos);
  // reason is carried after the template
  CHECK(user.rfind("Reason: " + sample.reason) > map_pos);
}

TEST_CASE("empty fp map renders the no-items marker in the prompt") {
  const auto sample = testutil::make_sample("syn-2");
  const auto exemplars = chains::load_exemplars(
      std::filesystem::path(FVQA_DATA_DIR) / "exemplars.jsonl");
  const annotate::FoodPositionMap empty{sample.id, {}, ""};
  const auto request =
      chains::build_synthesis_request(sample, empty, exemplars, kParams);
  CHECK(request.user_text.find("(no items detected)") != std::string::npos);
}

TEST_CASE("build_synthesis_request requires exemplars") {
  const auto sample = testutil::make_sample("syn-3");
  CHECK_THROWS_AS(chains::build_synthesis_request(sample, plate_map(sample.id),
                                                  {}, kParams),
                  std::invalid_argument);
}

TEST_CASE("synthesize_chain parses scripted turmeric steps") {
  const auto sample = testutil::make_sample("syn-4");
  const auto exemplars = chains::load_exemplars(
      std::filesystem::path(FVQA_DATA_DIR) / "exemplars.jsonl");
  const auto fp_map = plate_map(sample.id);
  const auto request =
      chains::build_synthesis_request(sample, fp_map, exemplars, kParams);

  SUBCASE("three steps") {
    auto scripted = backend::script_register(
        {{backend::fingerprint(request),
          {"Q: What is turmeric? A: A spice. Q: What is the color of "
           "Turmeric? A: Bright yellow. Q: Which chutney shows it? A: The "
           "tomato, onion, and raw mango one."}}});
    const auto chain =
        chains::synthesize_chain(sample, fp_map, exemplars, *scripted, kParams);
    CHECK(chain.steps.size() == 3);
    CHECK(!chain.flagged);
    CHECK(chain.sample_id == "syn-4");
  }

  SUBCASE("unparseable response is flagged, not fatal") {
    auto scripted = backend::script_register(
        {{backend::fingerprint(request), {"no reasoning"}}});
    const auto chain =
        chains::synthesize_chain(sample, fp_map, exemplars, *scripted, kParams);
    CHECK(chain.steps.empty());
    CHECK(chain.flagged);
    CHECK(chain.raw_text == "no reasoning");
  }

  SUBCASE("four steps") {
    auto scripted = backend::script_register(
        {{backend::fingerprint(request),
          {"Q: What is the typical taste of green chillies? A: Spicy. Q: "
           "Where are they? A: On the plate. Q: Fresh? A: Yes. Q: Effect? A: "
           "Fiery kick."}}});
    const auto chain =
        chains::synthesize_chain(sample, fp_map, exemplars, *scripted, kParams);
    CHECK(chain.steps.size() == 4);
  }
}

TEST_CASE("synthesize_corpus is deterministic and sample-major") {
  const auto samples = testutil::make_corpus(3);
  const auto exemplars = chains::load_exemplars(
      std::filesystem::path(FVQA_DATA_DIR) / "exemplars.jsonl");
  std::vector<annotate::FoodPositionMap> fp_maps;
  backend::Script script;
  for (const auto& sample : samples) {
    fp_maps.push_back(plate_map(sample.id));
    const auto request = chains::build_synthesis_request(
        sample, fp_maps.back(), exemplars, kParams);
    script.emplace_back(
        backend::fingerprint(request),
        std::vector<std::string>{
            "Q: one for " + sample.id + "? A: yes.",
            "Q: two for " + sample.id + "? A: also."});
  }
  auto run = [&] {
    auto scripted = backend::script_register(script);
    return chains::synthesize_corpus(samples, fp_maps, exemplars, *scripted,
                                     kParams, 2);
  };
  const auto first = run();
  REQUIRE(first.size() == 6);
  CHECK(first[0].sample_id == samples[0].id);
  CHECK(first[1].sample_id == samples[0].id);
  CHECK(first[0].steps[0].sub_question == "one for s00?");
  CHECK(first[1].steps[0].sub_question == "two for s00?");
  CHECK(first == run());
}

TEST_CASE("exemplar fixtures cover one exemplar per covered question type") {
  const auto exemplars = chains::load_exemplars(
      std::filesystem::path(FVQA_DATA_DIR) / "exemplars.jsonl");
  REQUIRE(exemplars.size() == 10);
  std::set<corpus::QuestionType> covered;
  for (const auto& exemplar : exemplars) {
    CHECK(!exemplar.chain.steps.empty());
    covered.insert(exemplar.question_type);
  }
  CHECK(covered.size() == 10);  // ten distinct types across the fixtures
  CHECK(covered.count(corpus::QuestionType::ingredients) == 1);
  CHECK(covered.count(corpus::QuestionType::allergens_and_restrictions) == 1);
}

TEST_CASE("chain records round-trip through jsonl") {
  testutil::TempDir tmp;
  chains::ReasoningChain chain;
  chain.sample_id = "rt-1";
  chain.steps = {{"why?", "because."}};
  chain.raw_text = "Q: why? A: because.";
  chain.flagged = false;
  jsonl::save(tmp.file("chains.jsonl"),
              std::vector<chains::ReasoningChain>{chain});
  const auto loaded =
      jsonl::load<chains::ReasoningChain>(tmp.file("chains.jsonl"));
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == chain);
}
