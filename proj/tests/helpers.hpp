#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "fvqa/corpus.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Scratch directory under the system temp root, removed on destruction.
struct TempDir {
  fs::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("fvqa-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  fs::path file(const std::string& name) const { return path / name; }
};

inline fvqa::corpus::VQASample make_sample(
    const std::string& id, fvqa::corpus::Label gold = fvqa::corpus::Label::C,
    fvqa::corpus::QuestionType type =
        fvqa::corpus::QuestionType::ingredients) {
  fvqa::corpus::VQASample sample;
  sample.id = id;
  sample.image_ref = "images/" + id + ".jpg";
  sample.question = "Which chutney is made with turmeric as an ingredient?";
  sample.choices = {fvqa::corpus::Choice{fvqa::corpus::Label::A,
                                         "Coconut chutney"},
                    fvqa::corpus::Choice{fvqa::corpus::Label::B,
                                         "Green chutney"},
                    fvqa::corpus::Choice{fvqa::corpus::Label::C,
                                         "Tomato, onion, and raw mango chutney"},
                    fvqa::corpus::Choice{fvqa::corpus::Label::D,
                                         "Healthy green tomato chutney"}};
  sample.correct_label = gold;
  sample.reason = "Only one of the chutneys contains turmeric.";
  sample.question_type = type;
  return sample;
}

inline std::vector<fvqa::corpus::VQASample> make_corpus(int n) {
  using fvqa::corpus::Label;
  using fvqa::corpus::QuestionType;
  std::vector<fvqa::corpus::VQASample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto sample = make_sample(
        "s" + std::string(i < 10 ? "0" : "") + std::to_string(i),
        fvqa::corpus::kAllLabels[static_cast<std::size_t>(i) % 4],
        static_cast<QuestionType>(i % fvqa::corpus::kQuestionTypeCount));
    sample.question = "Fixture question " + std::to_string(i) +
                      " about dish " + std::to_string(i) + "?";
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace testutil
