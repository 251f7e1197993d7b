#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fvqa::jsonl {

// One JSON object per line. Parse errors carry "<path>:<line>:".
std::vector<nlohmann::json> read_file(const std::filesystem::path& path);

// Writes one compact JSON object per line, creating parent directories.
void write_file(const std::filesystem::path& path,
                const std::vector<nlohmann::json>& records);

template <typename T>
std::vector<T> load(const std::filesystem::path& path) {
  const auto rows = read_file(path);
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(rows[i].template get<T>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) +
                               ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void save(const std::filesystem::path& path, const std::vector<T>& records) {
  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& record : records) {
    rows.push_back(nlohmann::json(record));
  }
  write_file(path, rows);
}

}  // namespace fvqa::jsonl
