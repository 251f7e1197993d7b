#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fvqa::manifest {

// FNV-1a over a file's bytes, as 16 hex chars.
std::string fnv64_file(const std::filesystem::path& path);

// Writes "<output>.manifest.json" describing the stage, tool version, input
// files (path + content hash) and the resolved parameters. Contains no
// timestamps so repeated runs are byte-identical.
void write_manifest(
    const std::filesystem::path& output, const std::string& stage,
    const std::vector<std::pair<std::string, std::filesystem::path>>& inputs,
    const std::vector<std::pair<std::string, std::string>>& params);

}  // namespace fvqa::manifest
