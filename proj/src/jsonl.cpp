#include "fvqa/jsonl.hpp"

#include <fstream>

namespace fvqa::jsonl {

std::vector<nlohmann::json> read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
  }
  return rows;
}

void write_file(const std::filesystem::path& path,
                const std::vector<nlohmann::json>& records) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("unwritable path " + path.string());
  }
  for (const auto& record : records) {
    out << record.dump() << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

}  // namespace fvqa::jsonl
