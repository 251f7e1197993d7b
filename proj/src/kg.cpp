#include "fvqa/kg.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

namespace fvqa::kg {

namespace {

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

std::string to_lower(std::string s) {
  for (char& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

// "entity" surface form with '_' replaced by spaces, for matching against
// free text.
std::string surface_form(std::string_view entity) {
  std::string out(entity);
  for (char& c : out) {
    if (c == '_') {
      c = ' ';
    }
  }
  return out;
}

bool contains_word_bounded(const std::string& haystack_lower,
                           const std::string& needle_lower) {
  if (needle_lower.empty()) {
    return false;
  }
  std::size_t from = 0;
  while (true) {
    const std::size_t hit = haystack_lower.find(needle_lower, from);
    if (hit == std::string::npos) {
      return false;
    }
    const bool left_ok =
        hit == 0 ||
        !std::isalnum(static_cast<unsigned char>(haystack_lower[hit - 1]));
    const std::size_t after = hit + needle_lower.size();
    const bool right_ok =
        after == haystack_lower.size() ||
        !std::isalnum(static_cast<unsigned char>(haystack_lower[after]));
    if (left_ok && right_ok) {
      return true;
    }
    from = hit + 1;
  }
}

}  // namespace

std::string normalize_entity(std::string_view name) {
  const std::string trimmed = to_lower(trim(name));
  std::string out;
  out.reserve(trimmed.size());
  bool in_space = false;
  for (char c : trimmed) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) {
      out += '_';
    }
    in_space = false;
    out += c;
  }
  return out;
}

TripleStore::TripleStore(std::vector<KnowledgeTriple> triples)
    : triples_(std::move(triples)) {
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    index_[triples_[i].subject].push_back(i);
    if (triples_[i].object != triples_[i].subject) {
      index_[triples_[i].object].push_back(i);
    }
  }
}

bool TripleStore::has_entity(std::string_view entity) const {
  return index_.find(std::string(entity)) != index_.end();
}

std::vector<KnowledgeTriple> TripleStore::one_hop(
    std::span<const std::string> entities) const {
  std::set<std::size_t> positions;
  for (const auto& entity : entities) {
    const auto it = index_.find(normalize_entity(entity));
    if (it == index_.end()) {
      continue;
    }
    positions.insert(it->second.begin(), it->second.end());
  }
  std::vector<KnowledgeTriple> out;
  out.reserve(positions.size());
  for (std::size_t pos : positions) {  // ascending = file order
    out.push_back(triples_[pos]);
  }
  return out;
}

TripleStore load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<KnowledgeTriple> triples;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t semi = line.find(';', start);
      if (semi == std::string::npos) {
        fields.push_back(trim(std::string_view(line).substr(start)));
        break;
      }
      fields.push_back(trim(std::string_view(line).substr(start, semi - start)));
      start = semi + 1;
    }
    if (fields.size() != 3) {
      throw std::runtime_error(
          path.string() + ":" + std::to_string(line_no) +
          ": expected 3 semicolon-separated fields, got " +
          std::to_string(fields.size()));
    }
    KnowledgeTriple triple{to_lower(fields[0]), to_lower(fields[1]),
                           to_lower(fields[2])};
    if (triple.subject.empty() || triple.relation.empty() ||
        triple.object.empty()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": empty field in triple");
    }
    const std::string key =
        triple.subject + ";" + triple.relation + ";" + triple.object;
    if (seen.insert(key).second) {
      triples.push_back(std::move(triple));
    }
  }
  return TripleStore(std::move(triples));
}

std::vector<KnowledgeTriple> one_hop(const TripleStore& store,
                                     std::span<const std::string> entities) {
  return store.one_hop(entities);
}

std::string augment_context(std::string_view context,
                            std::span<const KnowledgeTriple> triples) {
  if (triples.empty()) {
    return std::string(context);
  }
  std::string out = "Knowledge:\n";
  for (const auto& triple : triples) {
    out += triple.subject + "; " + triple.relation + "; " + triple.object +
           "\n";
  }
  out += context;
  return out;
}

std::vector<std::string> entities_for_sample(
    const corpus::VQASample& sample, const annotate::FoodPositionMap& fp_map,
    const TripleStore& store) {
  std::vector<std::string> entities;
  std::set<std::string> seen;
  const auto push = [&](std::string entity) {
    if (!entity.empty() && seen.insert(entity).second) {
      entities.push_back(std::move(entity));
    }
  };

  for (const auto& entry : fp_map.entries) {
    push(normalize_entity(entry.item));
  }
  for (const auto& ref : sample.kg_entity_refs) {
    push(normalize_entity(ref));
  }

  std::vector<std::string> choice_texts;
  for (const auto& choice : sample.choices) {
    choice_texts.push_back(to_lower(choice.text));
  }
  // Store entities are scanned in file order so results stay deterministic.
  std::set<std::string> store_entities_done;
  for (const auto& triple : store.triples()) {
    for (const std::string* entity : {&triple.subject, &triple.object}) {
      if (!store_entities_done.insert(*entity).second) {
        continue;
      }
      const std::string needle = to_lower(surface_form(*entity));
      for (const auto& text : choice_texts) {
        if (contains_word_bounded(text, needle)) {
          push(*entity);
          break;
        }
      }
    }
  }
  return entities;
}

}  // namespace fvqa::kg
