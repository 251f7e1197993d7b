#include "fvqa/prompts.hpp"

namespace fvqa::prompts {

std::string fill(std::string_view tmpl,
                 const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 1, close - open - 1));
    const auto it = values.find(name);
    if (it != values.end()) {
      out.append(it->second);
    } else {
      out.append(tmpl.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  return out;
}

std::string render_choices(const std::array<corpus::Choice, 4>& choices) {
  std::string out;
  for (const auto& choice : choices) {
    if (!out.empty()) {
      out += ' ';
    }
    out += corpus::to_char(choice.label);
    out += ". ";
    out += choice.text;
  }
  return out;
}

std::string render_gold_answer(const corpus::VQASample& sample) {
  std::string out(1, corpus::to_char(sample.correct_label));
  out += ". ";
  out += sample.choice_text(sample.correct_label);
  return out;
}

}  // namespace fvqa::prompts
